//! Mode registry and covariance-state queries.
//!
//! Quadrature layout: mode `j` owns rows `2j` (x) and `2j+1` (p), with
//! x = (m + m†)/√2 and p = (m − m†)/(i√2). Vacuum has variance 1/2 in
//! every quadrature, so a balanced two-mode quadrature has variance 1/4.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::real::Real;

/// Reserved label for the cavity mode.
pub const CAVITY_LABEL: &str = "cavity";

/// Maximum relative asymmetry tolerated before a matrix is rejected as
/// non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// How a spin ensemble couples to the cavity: `Regular` is the excitation
/// exchange b†c + bc†, `Inverted` the pair creation a†c† + ac that an
/// inverted population produces under the harmonic approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeKind {
    Regular,
    Inverted,
}

/// One bosonic mode: a collective spin excitation or the cavity itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeDescriptor<T: Real = f64> {
    pub label: String,
    pub kind: ModeKind,
    /// Coupling rate to the cavity; zero for the cavity's own entry.
    pub coupling: T,
    /// Detuning from the rotating-frame reference frequency.
    pub detuning: T,
}

/// A set of spin modes plus one cavity mode, in a frame rotating at the
/// reference spin frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSystem<T: Real = f64> {
    modes: Vec<ModeDescriptor<T>>,
    cavity_index: usize,
    kappa: T,
    delta_c: T,
}

/// Row index of mode `j`'s x quadrature.
pub const fn x_index(mode: usize) -> usize {
    2 * mode
}

/// Row index of mode `j`'s p quadrature.
pub const fn p_index(mode: usize) -> usize {
    2 * mode + 1
}

impl<T: Real> ModeSystem<T> {
    /// Builds a system from spin descriptors; the cavity is appended as the
    /// last mode. `kappa` is the cavity field decay rate, `delta_c` the
    /// cavity detuning from the reference frequency.
    pub fn new(spins: Vec<ModeDescriptor<T>>, kappa: T, delta_c: T) -> Result<Self> {
        if !(kappa >= T::zero()) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be finite and non-negative, got {}",
                kappa.approx_f64()
            )));
        }
        if !delta_c.is_finite() {
            return Err(Error::InvalidParameter("delta_c must be finite".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &spins {
            if s.label == CAVITY_LABEL {
                return Err(Error::DuplicateLabel(CAVITY_LABEL.into()));
            }
            if !seen.insert(s.label.clone()) {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
            if !(s.coupling >= T::zero()) || !s.coupling.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "coupling of `{}` must be finite and non-negative",
                    s.label
                )));
            }
            if !s.detuning.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "detuning of `{}` must be finite",
                    s.label
                )));
            }
        }
        let cavity_index = spins.len();
        let mut modes = spins;
        modes.push(ModeDescriptor {
            label: CAVITY_LABEL.into(),
            kind: ModeKind::Regular,
            coupling: T::zero(),
            detuning: delta_c,
        });
        Ok(Self { modes, cavity_index, kappa, delta_c })
    }

    /// The three-mode system of the homogeneous model: one inverted ensemble
    /// `a`, one regular ensemble `b`, both resonant in the rotating frame,
    /// and a cavity detuned by `delta`.
    pub fn homogeneous(g_a: T, g_b: T, kappa: T, delta: T) -> Result<Self> {
        Self::new(
            vec![
                ModeDescriptor {
                    label: "a".into(),
                    kind: ModeKind::Inverted,
                    coupling: g_a,
                    detuning: T::zero(),
                },
                ModeDescriptor {
                    label: "b".into(),
                    kind: ModeKind::Regular,
                    coupling: g_b,
                    detuning: T::zero(),
                },
            ],
            kappa,
            delta,
        )
    }

    pub fn modes(&self) -> &[ModeDescriptor<T>] {
        &self.modes
    }

    pub fn cavity_index(&self) -> usize {
        self.cavity_index
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn delta_c(&self) -> T {
        self.delta_c
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Number of quadrature rows, 2 per mode.
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    /// Spin modes with their indices, cavity excluded.
    pub fn spins(&self) -> impl Iterator<Item = (usize, &ModeDescriptor<T>)> {
        let cavity = self.cavity_index;
        self.modes.iter().enumerate().filter(move |(j, _)| *j != cavity)
    }

    /// Replaces the mode kinds wholesale; used by the pulse transform.
    pub(crate) fn with_kinds(&self, kinds: Vec<ModeKind>) -> Self {
        let mut out = self.clone();
        for (m, k) in out.modes.iter_mut().zip(kinds) {
            m.kind = k;
        }
        out
    }
}

/// Symmetric covariance matrix of the quadrature vector at one instant.
#[derive(Clone, Debug)]
pub struct CovarianceState<T: Real = f64> {
    pub time: T,
    pub sigma: DMatrix<T>,
}

impl<T: Real> CovarianceState<T> {
    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.dim() / 2
    }

    /// Forces exact symmetry; called after every integration update.
    pub fn symmetrize(&mut self) {
        let n = self.sigma.nrows();
        let half = T::lit(0.5);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (self.sigma[(i, j)] + self.sigma[(j, i)]) * half;
                self.sigma[(i, j)] = v;
                self.sigma[(j, i)] = v;
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.sigma.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Rejects matrices whose asymmetry exceeds `SYMMETRY_TOL` relative to
    /// the largest entry (with a floor of 1 for near-zero matrices).
    pub fn check_symmetric(&self) -> Result<()> {
        let n = self.sigma.nrows();
        if self.sigma.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.sigma.ncols() });
        }
        let mut asym = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((self.sigma[(i, j)] - self.sigma[(j, i)]).abs());
            }
        }
        let scale = self.max_abs().max(T::one());
        if asym > T::lit(SYMMETRY_TOL) * scale {
            return Err(Error::NotSymmetric { max_asymmetry: asym.approx_f64() });
        }
        Ok(())
    }
}

/// Linear form X = Σ c_i R_i over the quadrature vector.
#[derive(Clone, Debug)]
pub struct QuadratureSpec<T: Real = f64> {
    pub coefficients: DVector<T>,
}

impl<T: Real> QuadratureSpec<T> {
    pub fn new(coefficients: DVector<T>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "quadrature coefficients must be finite".into(),
            ));
        }
        Ok(Self { coefficients })
    }
}

/// Vacuum covariance: Σ = I/2 at t = 0.
pub fn vacuum_state<T: Real>(system: &ModeSystem<T>) -> CovarianceState<T> {
    CovarianceState {
        time: T::zero(),
        sigma: DMatrix::identity(system.dim(), system.dim()) * T::lit(0.5),
    }
}

/// The joint quadrature X(θ) = ½[cos θ (x₁ + x₂) − sin θ (p₁ + p₂)].
pub fn two_mode_quadrature<T: Real>(
    system: &ModeSystem<T>,
    label_1: &str,
    label_2: &str,
    theta: T,
) -> Result<QuadratureSpec<T>> {
    let j1 = system.mode_index(label_1)?;
    let j2 = system.mode_index(label_2)?;
    let half = T::lit(0.5);
    let (c, s) = (theta.cos() * half, theta.sin() * half);
    let mut v = DVector::zeros(system.dim());
    v[x_index(j1)] += c;
    v[x_index(j2)] += c;
    v[p_index(j1)] -= s;
    v[p_index(j2)] -= s;
    QuadratureSpec::new(v)
}

/// Var X = cᵀ Σ c.
pub fn quadrature_variance<T: Real>(
    state: &CovarianceState<T>,
    spec: &QuadratureSpec<T>,
) -> Result<T> {
    if spec.coefficients.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: spec.coefficients.len(),
        });
    }
    Ok((&state.sigma * &spec.coefficients).dot(&spec.coefficients))
}

/// ⟨m†m⟩ = (Σ_xx + Σ_pp − 1)/2 for the labelled mode.
pub fn mean_excitation<T: Real>(
    state: &CovarianceState<T>,
    system: &ModeSystem<T>,
    label: &str,
) -> Result<T> {
    let j = system.mode_index(label)?;
    if state.dim() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: state.dim() });
    }
    let (xx, pp) = (state.sigma[(x_index(j), x_index(j))], state.sigma[(p_index(j), p_index(j))]);
    Ok((xx + pp - T::one()) * T::lit(0.5))
}

/// The symplectic form Ω = ⊕ [[0, 1], [−1, 0]], one block per mode.
pub fn symplectic_form<T: Real>(n_modes: usize) -> DMatrix<T> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for j in 0..n_modes {
        omega[(x_index(j), p_index(j))] = T::one();
        omega[(p_index(j), x_index(j))] = -T::one();
    }
    omega
}

/// Symplectic spectrum of Σ, ascending. Physical states have every value
/// ≥ 1/2; pure Gaussian states sit exactly at 1/2.
///
/// The eigenvalues of ΩΣ come in ±iν pairs, so the moduli are sorted and
/// adjacent pairs averaged.
pub fn symplectic_eigenvalues<T: Real>(state: &CovarianceState<T>) -> Result<Vec<T>> {
    state.check_symmetric()?;
    let n_modes = state.n_modes();
    let m = symplectic_form::<T>(n_modes) * &state.sigma;
    let eig: Vec<Complex<T>> = m.complex_eigenvalues().iter().copied().collect();
    let mut moduli: Vec<T> = eig.iter().map(|z| z.norm_sqr().sqrt()).collect();
    moduli.sort_by(|a, b| a.partial_cmp(b).expect("finite moduli"));
    let half = T::lit(0.5);
    Ok((0..n_modes)
        .map(|k| (moduli[2 * k] + moduli[2 * k + 1]) * half)
        .collect())
}

/// Per-ensemble excitation-fraction report for the harmonic approximation.
#[derive(Clone, Debug)]
pub struct HpReport<T: Real = f64> {
    /// ⟨n⟩ / N for each requested ensemble.
    pub ratios: BTreeMap<String, T>,
    /// True when any ratio exceeds 0.1.
    pub flagged: bool,
}

/// Checks how far each ensemble has strayed from the low-excitation regime
/// the bosonic description assumes. `populations` maps ensemble labels to
/// their spin counts N.
pub fn hp_validity<T: Real>(
    state: &CovarianceState<T>,
    system: &ModeSystem<T>,
    populations: &BTreeMap<String, u64>,
) -> Result<HpReport<T>> {
    let mut ratios = BTreeMap::new();
    let mut flagged = false;
    for (label, n_spins) in populations {
        if *n_spins == 0 {
            return Err(Error::InvalidParameter(format!(
                "population of `{label}` must be positive"
            )));
        }
        let n = mean_excitation(state, system, label)?;
        let ratio = n / T::from_u64(*n_spins).expect("population fits the scalar");
        if ratio > T::lit(0.1) {
            flagged = true;
        }
        ratios.insert(label.clone(), ratio);
    }
    Ok(HpReport { ratios, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn demo() -> ModeSystem {
        ModeSystem::homogeneous(4.5, 5.0, 1.0, 75.0).unwrap()
    }

    #[test]
    fn homogeneous_layout() {
        let sys = demo();
        assert_eq!(sys.n_modes(), 3);
        assert_eq!(sys.cavity_index(), 2);
        assert_eq!(sys.mode_index("a").unwrap(), 0);
        assert_eq!(sys.mode_index("b").unwrap(), 1);
        assert_eq!(sys.mode_index("cavity").unwrap(), 2);
        assert!(matches!(sys.modes()[0].kind, ModeKind::Inverted));
        assert!(matches!(sys.modes()[1].kind, ModeKind::Regular));
        assert_eq!(sys.modes()[2].coupling, 0.0);
        assert_eq!(sys.modes()[2].detuning, 75.0);
    }

    #[test]
    fn label_validation() {
        let dup = ModeSystem::new(
            vec![
                ModeDescriptor { label: "s".into(), kind: ModeKind::Regular, coupling: 1.0, detuning: 0.0 },
                ModeDescriptor { label: "s".into(), kind: ModeKind::Regular, coupling: 1.0, detuning: 0.0 },
            ],
            1.0,
            0.0,
        );
        assert!(matches!(dup, Err(Error::DuplicateLabel(_))));
        let reserved = ModeSystem::new(
            vec![ModeDescriptor {
                label: "cavity".into(),
                kind: ModeKind::Regular,
                coupling: 1.0,
                detuning: 0.0,
            }],
            1.0,
            0.0,
        );
        assert!(matches!(reserved, Err(Error::DuplicateLabel(_))));
        assert!(matches!(
            ModeSystem::homogeneous(1.0, 1.0, -1.0, 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn vacuum_is_half_identity() {
        let sys = demo();
        let state = vacuum_state(&sys);
        assert_eq!(state.dim(), 6);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert_eq!(state.sigma[(i, j)], want);
            }
        }
    }

    #[test]
    fn two_mode_quadrature_coefficients() {
        let sys = demo();
        let x0 = two_mode_quadrature(&sys, "a", "b", 0.0).unwrap();
        assert_eq!(x0.coefficients.as_slice(), &[0.5, 0.0, 0.5, 0.0, 0.0, 0.0]);
        let xq = two_mode_quadrature(&sys, "a", "b", std::f64::consts::FRAC_PI_2).unwrap();
        assert_relative_eq!(xq.coefficients[1], -0.5);
        assert_relative_eq!(xq.coefficients[3], -0.5);
        assert!(xq.coefficients[0].abs() < 1e-16);
        assert!(matches!(
            two_mode_quadrature(&sys, "a", "nope", 0.0),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn vacuum_two_mode_variance_is_quarter() {
        let sys = demo();
        let state = vacuum_state(&sys);
        for k in 0..8 {
            let theta = 0.25 * k as f64;
            let spec = two_mode_quadrature(&sys, "a", "b", theta).unwrap();
            assert_relative_eq!(
                quadrature_variance(&state, &spec).unwrap(),
                0.25,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn variance_dimension_check() {
        let sys = demo();
        let state = vacuum_state(&sys);
        let bad = QuadratureSpec::new(nalgebra::dvector![1.0, 0.0]).unwrap();
        assert!(matches!(
            quadrature_variance(&state, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_excitation_counts_symmetric_moments() {
        let sys = demo();
        let mut state = vacuum_state(&sys);
        assert_eq!(mean_excitation(&state, &sys, "a").unwrap(), 0.0);
        // One excitation: Σ_xx = Σ_pp = 3/2.
        state.sigma[(0, 0)] = 1.5;
        state.sigma[(1, 1)] = 1.5;
        assert_relative_eq!(mean_excitation(&state, &sys, "a").unwrap(), 1.0);
        assert_eq!(mean_excitation(&state, &sys, "b").unwrap(), 0.0);
    }

    #[test]
    fn symplectic_spectrum_of_vacuum_and_thermal() {
        let sys = demo();
        let mut state = vacuum_state(&sys);
        let nu = symplectic_eigenvalues(&state).unwrap();
        assert_eq!(nu.len(), 3);
        for v in &nu {
            assert_relative_eq!(*v, 0.5, max_relative = 1e-12);
        }
        // Thermal mode a with n = 1/2: Σ block = diag(1, 1) → ν = 1.
        state.sigma[(0, 0)] = 1.0;
        state.sigma[(1, 1)] = 1.0;
        let nu = symplectic_eigenvalues(&state).unwrap();
        assert_relative_eq!(nu[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(nu[2], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn symplectic_rejects_asymmetry() {
        let sys = demo();
        let mut state = vacuum_state(&sys);
        state.sigma[(0, 1)] = 1e-3;
        assert!(matches!(
            symplectic_eigenvalues(&state),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn squeezed_state_uncertainty_product() {
        // Single-mode squeezed covariance diag(e^{2r}, e^{-2r})/2: both
        // symplectic values 1/2, product of orthogonal variances 1/4.
        let r: f64 = 0.8;
        let state = CovarianceState {
            time: 0.0,
            sigma: DMatrix::from_diagonal(&nalgebra::dvector![
                0.5 * (2.0 * r).exp(),
                0.5 * (-2.0 * r).exp()
            ]),
        };
        let nu = symplectic_eigenvalues(&state).unwrap();
        assert_relative_eq!(nu[0], 0.5, max_relative = 1e-12);
        let prod = state.sigma[(0, 0)] * state.sigma[(1, 1)];
        assert_relative_eq!(prod, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn hp_report_flags_large_fractions() {
        let sys = demo();
        let mut state = vacuum_state(&sys);
        state.sigma[(0, 0)] = 21.5;
        state.sigma[(1, 1)] = 21.5; // ⟨n_a⟩ = 21
        let pops = BTreeMap::from([("a".to_string(), 1000u64), ("b".to_string(), 1000u64)]);
        let rep = hp_validity(&state, &sys, &pops).unwrap();
        assert!(!rep.flagged);
        assert_relative_eq!(rep.ratios["a"], 0.021, max_relative = 1e-12);
        let pops = BTreeMap::from([("a".to_string(), 100u64)]);
        let rep = hp_validity(&state, &sys, &pops).unwrap();
        assert!(rep.flagged);
        assert!(matches!(
            hp_validity(&state, &sys, &BTreeMap::from([("q".to_string(), 5u64)])),
            Err(Error::UnknownLabel(_))
        ));
    }
}
