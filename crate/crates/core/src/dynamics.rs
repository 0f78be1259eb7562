//! Drift/diffusion assembly and covariance propagation.
//!
//! The quadrature vector R obeys dR/dt = A R + noise, so the covariance
//! follows dΣ/dt = AΣ + ΣAᵀ + D with D = κ on the cavity block only
//! (vacuum input). An inverted ensemble couples through the pair-creation
//! form and enters A with the opposite relative signs of a regular one.

use nalgebra::{Complex, ComplexField, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{discrete_propagator, dominant_eigenvalue, solve_lyapunov};
use crate::model::{
    p_index, x_index, CovarianceState, ModeKind, ModeSystem, QuadratureSpec,
};
use crate::real::Real;

/// Covariance magnitude beyond which integration aborts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Real-part threshold separating damped/marginal/growing eigenvalues.
pub const STABILITY_TOL: f64 = 1e-12;

/// The linear system dΣ/dt = drift·Σ + Σ·driftᵀ + diffusion.
#[derive(Clone, Debug)]
pub struct DriftDiffusion<T: Real = f64> {
    pub drift: DMatrix<T>,
    pub diffusion: DMatrix<T>,
    /// Fastest rate in the generator; the RK4 step bound is 0.01 / rate_scale.
    pub rate_scale: T,
}

impl<T: Real> DriftDiffusion<T> {
    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    /// Largest RK4 step accepted by `evolve`.
    pub fn step_bound(&self) -> T {
        if self.rate_scale > T::zero() {
            T::lit(0.01) / self.rate_scale
        } else {
            T::lit(f64::INFINITY)
        }
    }
}

/// Sampled covariance history.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real = f64> {
    pub times: Vec<T>,
    pub states: Vec<CovarianceState<T>>,
}

/// Location of a variance minimum along a trajectory.
#[derive(Clone, Copy, Debug)]
pub struct MinVariance<T: Real = f64> {
    pub index: usize,
    pub time: T,
    pub value: T,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &CovarianceState<T> {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn variance_series(&self, spec: &QuadratureSpec<T>) -> Result<Vec<T>> {
        self.states
            .iter()
            .map(|s| crate::model::quadrature_variance(s, spec))
            .collect()
    }

    pub fn min_variance(&self, spec: &QuadratureSpec<T>) -> Result<MinVariance<T>> {
        let series = self.variance_series(spec)?;
        let (index, value) = series
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite variances"))
            .ok_or_else(|| Error::Numerical("empty trajectory".into()))?;
        Ok(MinVariance { index, time: self.times[index], value: *value })
    }
}

/// Assembles the quadrature drift and diffusion for a mode system.
pub fn build_drift_diffusion<T: Real>(system: &ModeSystem<T>) -> DriftDiffusion<T> {
    let n = system.dim();
    let mut a = DMatrix::zeros(n, n);
    let cav = system.cavity_index();
    let (xc, pc) = (x_index(cav), p_index(cav));
    let kappa = system.kappa();
    let delta_c = system.delta_c();

    a[(xc, xc)] = -kappa;
    a[(xc, pc)] = delta_c;
    a[(pc, xc)] = -delta_c;
    a[(pc, pc)] = -kappa;

    let mut rho = kappa.max(delta_c.abs());
    for (j, m) in system.spins() {
        let (xj, pj) = (x_index(j), p_index(j));
        let g = m.coupling;
        let dj = m.detuning;
        rho = rho.max(g).max(dj.abs());
        match m.kind {
            // ȧ = iΔ_j a − i g c†
            ModeKind::Inverted => {
                a[(xj, pj)] = -dj;
                a[(xj, pc)] = -g;
                a[(pj, xj)] = dj;
                a[(pj, xc)] = -g;
                a[(xc, pj)] -= g;
                a[(pc, xj)] -= g;
            }
            // ḃ = −iΔ_j b − i g c
            ModeKind::Regular => {
                a[(xj, pj)] = dj;
                a[(xj, pc)] = g;
                a[(pj, xj)] = -dj;
                a[(pj, xc)] = -g;
                a[(xc, pj)] += g;
                a[(pc, xj)] -= g;
            }
        }
    }

    let mut d = DMatrix::zeros(n, n);
    d[(xc, xc)] = kappa;
    d[(pc, pc)] = kappa;

    DriftDiffusion { drift: a, diffusion: d, rate_scale: rho }
}

fn diverged_error<T: Real>(dd: &DriftDiffusion<T>, t: T, magnitude: T) -> Error {
    let lam = dominant_eigenvalue(&dd.drift);
    Error::Diverged {
        t: t.approx_f64(),
        magnitude: magnitude.approx_f64(),
        re: lam.re.approx_f64(),
        im: lam.im.approx_f64(),
    }
}

fn check_evolve_inputs<T: Real>(
    dd: &DriftDiffusion<T>,
    initial: &CovarianceState<T>,
    t_end: T,
    dt: T,
) -> Result<()> {
    initial.check_symmetric()?;
    if initial.dim() != dd.dim() {
        return Err(Error::DimensionMismatch { expected: dd.dim(), got: initial.dim() });
    }
    if !(t_end > T::zero()) || !t_end.is_finite() {
        return Err(Error::InvalidParameter("t_end must be positive and finite".into()));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidParameter("dt must be positive and finite".into()));
    }
    let bound = dd.step_bound();
    if dt > bound * T::lit(1.0 + 1e-9) {
        return Err(Error::StepTooLarge { dt: dt.approx_f64(), bound: bound.approx_f64() });
    }
    Ok(())
}

/// RK4 integration storing every accepted step.
pub fn evolve<T: Real>(
    dd: &DriftDiffusion<T>,
    initial: &CovarianceState<T>,
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>> {
    evolve_sampled(dd, initial, t_end, dt, 1)
}

/// RK4 integration storing every `stride`-th step (and always the last).
///
/// The step actually used divides `t_end` exactly and never exceeds `dt`.
/// Aborts once any covariance entry passes `DIVERGENCE_LIMIT`, reporting
/// the fastest-growing drift eigenvalue.
pub fn evolve_sampled<T: Real>(
    dd: &DriftDiffusion<T>,
    initial: &CovarianceState<T>,
    t_end: T,
    dt: T,
    stride: usize,
) -> Result<Trajectory<T>> {
    check_evolve_inputs(dd, initial, t_end, dt)?;
    let stride = stride.max(1);
    let n_steps = (t_end.approx_f64() / dt.approx_f64() - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / T::from_usize(n_steps).expect("step count fits the scalar");
    let t0 = initial.time;

    let mut sigma = initial.sigma.clone();
    crate::linalg::symmetrize(&mut sigma);
    let mut times = vec![t0];
    let mut states = vec![CovarianceState { time: t0, sigma: sigma.clone() }];

    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    // For symmetric Σ the flow is AΣ + (AΣ)ᵀ + D, one product per stage.
    let flow = |s: &DMatrix<T>| {
        let az = &dd.drift * s;
        &az + az.transpose() + &dd.diffusion
    };
    let limit = T::lit(DIVERGENCE_LIMIT);

    for k in 1..=n_steps {
        let k1 = flow(&sigma);
        let k2 = flow(&(&sigma + &k1 * (h * half)));
        let k3 = flow(&(&sigma + &k2 * (h * half)));
        let k4 = flow(&(&sigma + &k3 * h));
        sigma += (k1 + k2 * two + k3 * two + k4) * (h * sixth);
        crate::linalg::symmetrize(&mut sigma);

        let t = t0 + h * T::from_usize(k).expect("step count fits the scalar");
        let magnitude = crate::linalg::max_abs(&sigma);
        if magnitude > limit {
            return Err(diverged_error(dd, t, magnitude));
        }
        if k % stride == 0 || k == n_steps {
            times.push(t);
            states.push(CovarianceState { time: t, sigma: sigma.clone() });
        }
    }
    Ok(Trajectory { times, states })
}

/// Propagation by the exact discrete map Σ ← EΣEᵀ + Q over uniform steps.
///
/// Equivalent to the RK4 route for time-invariant generators but with no
/// step-size stability constraint; `n_steps` only sets the sampling grid.
pub fn evolve_exact<T: Real>(
    dd: &DriftDiffusion<T>,
    initial: &CovarianceState<T>,
    t_end: T,
    n_steps: usize,
    stride: usize,
) -> Result<Trajectory<T>> {
    initial.check_symmetric()?;
    if initial.dim() != dd.dim() {
        return Err(Error::DimensionMismatch { expected: dd.dim(), got: initial.dim() });
    }
    if !(t_end > T::zero()) || !t_end.is_finite() {
        return Err(Error::InvalidParameter("t_end must be positive and finite".into()));
    }
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be positive".into()));
    }
    let stride = stride.max(1);
    let h = t_end / T::from_usize(n_steps).expect("step count fits the scalar");
    let (e, q) = discrete_propagator(&dd.drift, &dd.diffusion, h)?;
    let t0 = initial.time;

    let mut sigma = initial.sigma.clone();
    crate::linalg::symmetrize(&mut sigma);
    let mut times = vec![t0];
    let mut states = vec![CovarianceState { time: t0, sigma: sigma.clone() }];
    let limit = T::lit(DIVERGENCE_LIMIT);

    for k in 1..=n_steps {
        sigma = &e * &sigma * e.transpose() + &q;
        crate::linalg::symmetrize(&mut sigma);
        let t = t0 + h * T::from_usize(k).expect("step count fits the scalar");
        let magnitude = crate::linalg::max_abs(&sigma);
        if magnitude > limit {
            return Err(diverged_error(dd, t, magnitude));
        }
        if k % stride == 0 || k == n_steps {
            times.push(t);
            states.push(CovarianceState { time: t, sigma: sigma.clone() });
        }
    }
    Ok(Trajectory { times, states })
}

/// Exact stepping that hands every sample (including the initial one) to
/// `observer` instead of storing it, for systems whose full trajectory
/// would not fit in memory.
pub fn evolve_exact_observed<T: Real>(
    dd: &DriftDiffusion<T>,
    initial: &CovarianceState<T>,
    t_end: T,
    n_steps: usize,
    mut observer: impl FnMut(T, &DMatrix<T>),
) -> Result<()> {
    initial.check_symmetric()?;
    if initial.dim() != dd.dim() {
        return Err(Error::DimensionMismatch { expected: dd.dim(), got: initial.dim() });
    }
    if !(t_end > T::zero()) || !t_end.is_finite() {
        return Err(Error::InvalidParameter("t_end must be positive and finite".into()));
    }
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be positive".into()));
    }
    let h = t_end / T::from_usize(n_steps).expect("step count fits the scalar");
    let (e, q) = discrete_propagator(&dd.drift, &dd.diffusion, h)?;
    let t0 = initial.time;

    let mut sigma = initial.sigma.clone();
    crate::linalg::symmetrize(&mut sigma);
    observer(t0, &sigma);
    let limit = T::lit(DIVERGENCE_LIMIT);

    for k in 1..=n_steps {
        sigma = &e * &sigma * e.transpose() + &q;
        crate::linalg::symmetrize(&mut sigma);
        let t = t0 + h * T::from_usize(k).expect("step count fits the scalar");
        let magnitude = crate::linalg::max_abs(&sigma);
        if magnitude > limit {
            return Err(diverged_error(dd, t, magnitude));
        }
        observer(t, &sigma);
    }
    Ok(())
}

/// Unique steady covariance of a strictly damped system.
pub fn steady_state<T: Real>(system: &ModeSystem<T>) -> Result<CovarianceState<T>> {
    let dd = build_drift_diffusion(system);
    let lam = dominant_eigenvalue(&dd.drift);
    if lam.re >= T::lit(-STABILITY_TOL) {
        return Err(Error::NotHurwitz { re: lam.re.approx_f64(), im: lam.im.approx_f64() });
    }
    let sigma = solve_lyapunov(&dd.drift, &dd.diffusion)?;
    Ok(CovarianceState { time: T::zero(), sigma })
}

/// Long-time covariance limit reached from `initial`.
///
/// The two-ensemble drift always carries a conserved pair (the dark
/// mode), so its limit exists but depends on the initial state and the
/// Lyapunov route is singular. The horizon is set by the slowest damped
/// rate in the spectrum; conserved (zero) eigenvalues are allowed, any
/// growing eigenvalue is refused by name. The result is accepted once
/// the final two half-horizon snapshots agree to `tol` relative.
pub fn settled_state<T: Real>(
    dd: &DriftDiffusion<T>,
    initial: &CovarianceState<T>,
    t_scale: T,
    tol: T,
) -> Result<CovarianceState<T>> {
    if !(t_scale >= T::zero()) || !t_scale.is_finite() {
        return Err(Error::InvalidParameter(
            "t_scale must be non-negative and finite".into(),
        ));
    }
    let zero_band = T::lit(STABILITY_TOL);
    let mut slowest: Option<T> = None;
    for lam in dd.drift.clone().complex_eigenvalues().iter() {
        if lam.re > zero_band {
            return Err(Error::NotHurwitz {
                re: lam.re.approx_f64(),
                im: lam.im.approx_f64(),
            });
        }
        if lam.re < -zero_band {
            let rate = -lam.re;
            slowest = Some(slowest.map_or(rate, |s: T| s.min(rate)));
        }
    }
    let Some(slowest) = slowest else {
        return Err(Error::Numerical(
            "covariance cannot settle: no damped direction in the drift".into(),
        ));
    };
    // 60 e-folds of the slowest decay (transients start orders of
    // magnitude above the limit), walked in short exact steps: one long
    // step would push the exponential through dozens of squarings and
    // bury the answer in rounding noise. Even so the route floors near
    // ‖A‖·horizon·ε relative, so tolerances below ~1e-7 are unreachable
    // for stiff spectra.
    let horizon = (T::lit(60.0) / slowest).max(t_scale);
    let traj = evolve_exact(dd, initial, horizon, 64, 32)?;
    let mid = &traj.states[traj.states.len() - 2];
    let settled = traj.last();
    let diff = crate::linalg::max_abs(&(&settled.sigma - &mid.sigma));
    let scale = crate::linalg::max_abs(&settled.sigma).max(T::one());
    if diff <= tol * scale {
        Ok(settled.clone())
    } else {
        Err(Error::Numerical(format!(
            "covariance did not settle within the spectral horizon \
             (residual {:.3e} of scale {:.3e})",
            diff.approx_f64(),
            scale.approx_f64()
        )))
    }
}

/// Long-time character of the two-ensemble dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Damped,
    Marginal,
    Growing,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Damped => "damped",
            Stability::Marginal => "marginal",
            Stability::Growing => "growing",
        })
    }
}

/// Couplings and rates of the two-ensemble homogeneous system, with the
/// mode indices of the inverted (`a`) and regular (`b`) ensembles.
#[derive(Clone, Copy, Debug)]
pub struct HomogeneousParams<T: Real = f64> {
    pub a_index: usize,
    pub b_index: usize,
    pub g_a: T,
    pub g_b: T,
    pub kappa: T,
    pub delta: T,
}

/// Extracts (g_a, g_b, κ, Δ) from a system of exactly one inverted and one
/// regular resonant ensemble.
pub fn homogeneous_parameters<T: Real>(system: &ModeSystem<T>) -> Result<HomogeneousParams<T>> {
    let spins: Vec<_> = system.spins().collect();
    if spins.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "two-ensemble form requires exactly 2 spin modes, found {}",
            spins.len()
        )));
    }
    let inverted: Vec<_> =
        spins.iter().filter(|(_, m)| m.kind == ModeKind::Inverted).collect();
    let regular: Vec<_> = spins.iter().filter(|(_, m)| m.kind == ModeKind::Regular).collect();
    if inverted.len() != 1 || regular.len() != 1 {
        return Err(Error::InvalidParameter(
            "two-ensemble form requires one inverted and one regular mode".into(),
        ));
    }
    for (_, m) in &spins {
        if m.detuning != T::zero() {
            return Err(Error::InvalidParameter(
                "two-ensemble closed forms assume resonant ensembles".into(),
            ));
        }
    }
    Ok(HomogeneousParams {
        a_index: inverted[0].0,
        b_index: regular[0].0,
        g_a: inverted[0].1.coupling,
        g_b: regular[0].1.coupling,
        kappa: system.kappa(),
        delta: system.delta_c(),
    })
}

/// Closed-form drift spectrum of the two-ensemble system.
///
/// Two exact zeros (the decoupled superpositions), then two conjugate pairs
/// built from G² = 4g_a² − 4g_b² + κ² − Δ² − 2iκΔ with the principal root;
/// conjugating the second pair keeps the set closed under conjugation for
/// every sign of κΔ.
pub fn analytic_eigenvalues<T: Real>(
    g_a: T,
    g_b: T,
    kappa: T,
    delta: T,
) -> [Complex<T>; 6] {
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut g2 = Complex::new(
        four * g_a * g_a - four * g_b * g_b + kappa * kappa - delta * delta,
        -two * kappa * delta,
    );
    if g2.im == T::zero() {
        // Scrub −0.0 so sqrt stays on the upper side of its branch cut.
        g2.im = T::zero();
    }
    let root = g2.sqrt() * Complex::new(half, T::zero());
    let base = Complex::new(-kappa * half, delta * half);
    let l3 = base - root;
    let l4 = base + root;
    [
        Complex::new(T::zero(), T::zero()),
        Complex::new(T::zero(), T::zero()),
        l3,
        l4,
        l4.conj(),
        l3.conj(),
    ]
}

/// Classification by the non-zero analytic eigenvalues.
pub fn stability_classify<T: Real>(g_a: T, g_b: T, kappa: T, delta: T) -> Stability {
    let eig = analytic_eigenvalues(g_a, g_b, kappa, delta);
    let max_re = eig[2..]
        .iter()
        .map(|z| z.re)
        .fold(T::lit(f64::NEG_INFINITY), |m, v| m.max(v));
    let tol = T::lit(STABILITY_TOL);
    if max_re > tol {
        Stability::Growing
    } else if max_re < -tol {
        Stability::Damped
    } else {
        Stability::Marginal
    }
}

/// Analytic spectrum next to the numeric drift spectrum, with the stability
/// classification.
#[derive(Clone, Debug)]
pub struct SpectrumReport<T: Real = f64> {
    pub analytic: Vec<Complex<T>>,
    pub numeric: Vec<Complex<T>>,
    pub classification: Stability,
}

/// Computes both eigenvalue routes for a two-ensemble system. The numeric
/// list is sorted by (re, im) for stable output.
pub fn spectrum_report<T: Real>(system: &ModeSystem<T>) -> Result<SpectrumReport<T>> {
    let p = homogeneous_parameters(system)?;
    let analytic = analytic_eigenvalues(p.g_a, p.g_b, p.kappa, p.delta).to_vec();
    let dd = build_drift_diffusion(system);
    let mut numeric: Vec<Complex<T>> = dd.drift.complex_eigenvalues().iter().copied().collect();
    numeric.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .expect("finite eigenvalues")
            .then(x.im.partial_cmp(&y.im).expect("finite eigenvalues"))
    });
    let classification = stability_classify(p.g_a, p.g_b, p.kappa, p.delta);
    Ok(SpectrumReport { analytic, numeric, classification })
}

/// Quadratures of the decoupled superposition d = (g_b a + g_a b†)/√(g_b²−g_a²):
/// returns (x_d, p_d). Requires g_b > g_a ≥ 0; the normalization is undefined
/// otherwise. Both quadratures are exact constants of the full dissipative
/// dynamics.
pub fn dark_mode<T: Real>(
    system: &ModeSystem<T>,
) -> Result<(QuadratureSpec<T>, QuadratureSpec<T>)> {
    let p = homogeneous_parameters(system)?;
    if !(p.g_b > p.g_a) {
        return Err(Error::CouplingOrder {
            g_a: p.g_a.approx_f64(),
            g_b: p.g_b.approx_f64(),
        });
    }
    let norm = (p.g_b * p.g_b - p.g_a * p.g_a).sqrt();
    let (wa, wb) = (p.g_b / norm, p.g_a / norm);
    let dim = system.dim();
    let mut xd = nalgebra::DVector::zeros(dim);
    xd[x_index(p.a_index)] = wa;
    xd[x_index(p.b_index)] = wb;
    let mut pd = nalgebra::DVector::zeros(dim);
    pd[p_index(p.a_index)] = wa;
    pd[p_index(p.b_index)] = -wb;
    Ok((QuadratureSpec::new(xd)?, QuadratureSpec::new(pd)?))
}

/// Quadratures of the orthogonal combination e = (g_a a† + g_b b)/√(g_b²−g_a²),
/// the partner that does couple to the cavity.
pub fn companion_mode<T: Real>(
    system: &ModeSystem<T>,
) -> Result<(QuadratureSpec<T>, QuadratureSpec<T>)> {
    let p = homogeneous_parameters(system)?;
    if !(p.g_b > p.g_a) {
        return Err(Error::CouplingOrder {
            g_a: p.g_a.approx_f64(),
            g_b: p.g_b.approx_f64(),
        });
    }
    let norm = (p.g_b * p.g_b - p.g_a * p.g_a).sqrt();
    let dim = system.dim();
    let mut xe = nalgebra::DVector::zeros(dim);
    xe[x_index(p.a_index)] = p.g_a / norm;
    xe[x_index(p.b_index)] = p.g_b / norm;
    let mut pe = nalgebra::DVector::zeros(dim);
    pe[p_index(p.a_index)] = -p.g_a / norm;
    pe[p_index(p.b_index)] = p.g_b / norm;
    Ok((QuadratureSpec::new(xe)?, QuadratureSpec::new(pe)?))
}
