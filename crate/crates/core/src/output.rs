//! Temporal modes of the cavity output field.
//!
//! Stage 1 builds two-mode correlations with one ensemble inverted; a π
//! pulse then swaps the inverted ensemble to regular, and the stored state
//! leaks out through the cavity. The field operator filtered by u(t),
//! c_u = ∫ u(t) c_out(t) dt, is Gaussian with moments given by two kernels
//! on the time grid; its quadrature variance is minimized over u by an
//! eigenproblem whose range is spanned by the two response functions.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::dynamics::{build_drift_diffusion, evolve_exact};
use crate::error::{Error, Result};
use crate::linalg::{jacobi_symmetric_eigen, symmetrize};
use crate::model::{
    mean_excitation, p_index, two_mode_quadrature, vacuum_state, x_index, CovarianceState,
    ModeKind, ModeSystem, CAVITY_LABEL,
};
use crate::real::Real;

/// Minimum number of grid points for output-mode work.
pub const MIN_GRID_POINTS: usize = 1000;

/// Largest grid accepted by the dense fallback optimizer.
pub const DENSE_OPTIMIZER_LIMIT: usize = 1024;

/// Swaps the single inverted ensemble to regular; couplings and detunings
/// are untouched. The already-regular modes are left as they are, so the
/// resulting system has no inverted mode left.
pub fn pi_pulse_transform<T: Real>(system: &ModeSystem<T>) -> Result<ModeSystem<T>> {
    let inverted: Vec<usize> = system
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.kind == ModeKind::Inverted)
        .map(|(j, _)| j)
        .collect();
    match inverted.len() {
        0 => Err(Error::NoInvertedMode),
        1 => {
            let kinds = system
                .modes()
                .iter()
                .map(|m| match m.kind {
                    ModeKind::Inverted => ModeKind::Regular,
                    ModeKind::Regular => ModeKind::Regular,
                })
                .collect();
            Ok(system.with_kinds(kinds))
        }
        n => Err(Error::MultipleInvertedModes(n)),
    }
}

/// Cavity response functions of the all-regular stage: α(t) multiplies the
/// stored collective operator g_a a(0) + g_b b(0), β(t) the initial cavity
/// operator, and the same β is the memory kernel on the input noise.
///
/// With s = κ + iΔ and Ω² = s² − 4g² (g² the summed coupling squares),
///   α(t) = −2iκ e^{−st/2} t sinhc(Ωt/2),
///   β(t) = −2κ e^{−st/2} [cosh(Ωt/2) − (st/2) sinhc(Ωt/2)],
/// where sinhc z = sinh(z)/z. β(0) = −2κ exactly, closing the input–output
/// relation at t = 0.
pub fn alpha_beta<T: Real>(
    kappa: T,
    delta: T,
    g_sq: T,
    t: T,
) -> (Complex<T>, Complex<T>) {
    let s = Complex::new(kappa, delta);
    let omega_rate = (s * s - Complex::new(T::lit(4.0) * g_sq, T::zero())).sqrt();
    let half_t = t * T::lit(0.5);
    let z = omega_rate * Complex::new(half_t, T::zero());
    let (cosh_z, sinhc_z) = cosh_sinhc(z);
    let envelope = (-s * Complex::new(half_t, T::zero())).exp();
    let two_kappa = Complex::new(T::lit(2.0) * kappa, T::zero());
    let i = Complex::new(T::zero(), T::one());
    let alpha = -i * two_kappa * envelope * Complex::new(t, T::zero()) * sinhc_z;
    let beta = -two_kappa * envelope * (cosh_z - s * Complex::new(half_t, T::zero()) * sinhc_z);
    (alpha, beta)
}

/// cosh z and sinh(z)/z, with the series branch keeping sinhc smooth
/// through z = 0.
fn cosh_sinhc<T: Real>(z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let cosh_z = z.cosh();
    if z.norm_sqr() < T::lit(1e-8) {
        let z2 = z * z;
        let one = Complex::new(T::one(), T::zero());
        let sinhc = one + z2 * Complex::new(T::lit(1.0 / 6.0), T::zero())
            + z2 * z2 * Complex::new(T::lit(1.0 / 120.0), T::zero());
        (cosh_z, sinhc)
    } else {
        (cosh_z, z.sinh() / z)
    }
}

/// Two-stage emission plan: stage 1 holds the inverted ensemble until the
/// pulse at `t_pulse`, stage 2 is the swapped system read out over
/// `horizon` on `n_grid` uniformly spaced samples.
#[derive(Clone, Debug)]
pub struct OutputStagePlan<T: Real = f64> {
    pub stage1: ModeSystem<T>,
    pub stage2: ModeSystem<T>,
    pub t_pulse: T,
    pub horizon: T,
    pub n_grid: usize,
}

impl<T: Real> OutputStagePlan<T> {
    /// Validates the readout window (≥ 5/κ so the emission completes) and
    /// the grid density, and derives stage 2 by the pulse transform.
    pub fn new(stage1: ModeSystem<T>, t_pulse: T, horizon: T, n_grid: usize) -> Result<Self> {
        let kappa = stage1.kappa();
        if !(kappa > T::zero()) {
            return Err(Error::InvalidParameter(
                "output readout requires kappa > 0".into(),
            ));
        }
        if t_pulse < T::zero() || !t_pulse.is_finite() {
            return Err(Error::InvalidParameter("t_pulse must be non-negative".into()));
        }
        if horizon * kappa < T::lit(5.0) {
            return Err(Error::InvalidParameter(format!(
                "readout horizon {} is shorter than 5/kappa",
                horizon.approx_f64()
            )));
        }
        if n_grid < MIN_GRID_POINTS {
            return Err(Error::GridTooCoarse { got: n_grid, min: MIN_GRID_POINTS });
        }
        let stage2 = pi_pulse_transform(&stage1)?;
        Ok(Self { stage1, stage2, t_pulse, horizon, n_grid })
    }

    /// The uniform readout grid 0..=horizon.
    pub fn grid(&self) -> Vec<T> {
        time_grid(self.horizon, self.n_grid)
    }
}

/// linspace(0, horizon, n) inclusive of both ends.
pub fn time_grid<T: Real>(horizon: T, n: usize) -> Vec<T> {
    let dt = horizon / T::from_usize(n - 1).expect("grid size fits the scalar");
    (0..n)
        .map(|i| dt * T::from_usize(i).expect("grid size fits the scalar"))
        .collect()
}

fn trapezoid_weights<T: Real>(times: &[T]) -> Vec<T> {
    let n = times.len();
    let dt = times[1] - times[0];
    let half = T::lit(0.5);
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { dt * half } else { dt })
        .collect()
}

/// Sampled temporal mode on a uniform grid, trapezoid-normalized to unit
/// L² norm with the largest sample rotated to the positive real axis.
#[derive(Clone, Debug)]
pub struct ModeFunction<T: Real = f64> {
    pub times: Vec<T>,
    pub samples: Vec<Complex<T>>,
}

impl<T: Real> ModeFunction<T> {
    pub fn new(times: Vec<T>, samples: Vec<Complex<T>>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::GridTooCoarse { got: times.len(), min: 2 });
        }
        if times.len() != samples.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: samples.len() });
        }
        let dt = times[1] - times[0];
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter("grid times must increase".into()));
        }
        let tol = T::lit(1e-9) * dt;
        for k in 1..times.len() {
            if ((times[k] - times[k - 1]) - dt).abs() > tol {
                return Err(Error::InvalidParameter("grid must be uniform".into()));
            }
        }
        let mut mode = Self { times, samples };
        mode.normalize()?;
        Ok(mode)
    }

    fn normalize(&mut self) -> Result<()> {
        let w = trapezoid_weights(&self.times);
        let norm_sq = self
            .samples
            .iter()
            .zip(&w)
            .fold(T::zero(), |acc, (u, wi)| acc + *wi * u.norm_sqr());
        if norm_sq <= T::lit(1e-300) {
            return Err(Error::ZeroMode);
        }
        let scale = norm_sq.sqrt();
        // Global phase: rotate the largest sample onto the positive reals.
        let peak = self
            .samples
            .iter()
            .max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).expect("finite samples"))
            .copied()
            .expect("non-empty samples");
        let peak_mod = peak.norm_sqr().sqrt();
        let phase = if peak_mod > T::zero() {
            peak / Complex::new(peak_mod, T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        };
        let factor = phase.conj() / Complex::new(scale, T::zero());
        for u in &mut self.samples {
            *u = *u * factor;
        }
        Ok(())
    }

    pub fn dt(&self) -> T {
        self.times[1] - self.times[0]
    }

    pub fn weights(&self) -> Vec<T> {
        trapezoid_weights(&self.times)
    }

    /// Trapezoid L² norm; 1 by construction, up to rounding.
    pub fn norm(&self) -> T {
        let w = self.weights();
        self.samples
            .iter()
            .zip(&w)
            .fold(T::zero(), |acc, (u, wi)| acc + *wi * u.norm_sqr())
            .sqrt()
    }
}

/// Ladder-operator second moments of the stored collective operator
/// r₀ = Σ g_j m_j and the cavity at the pulse.
#[derive(Clone, Copy, Debug)]
struct PulseMoments<T: Real> {
    anom_rr: Complex<T>,
    anom_rc: Complex<T>,
    anom_cc: Complex<T>,
    norm_rr: T,
    norm_rc: Complex<T>,
    norm_cc: T,
    g_sq: T,
    cavity_excitation: T,
}

/// ⟨m n⟩ from the symmetrized covariance (zero means).
fn anomalous_moment<T: Real>(sigma: &DMatrix<T>, m: usize, n: usize) -> Complex<T> {
    let (xm, pm) = (x_index(m), p_index(m));
    let (xn, pn) = (x_index(n), p_index(n));
    let half = T::lit(0.5);
    Complex::new(
        (sigma[(xm, xn)] - sigma[(pm, pn)]) * half,
        (sigma[(xm, pn)] + sigma[(pm, xn)]) * half,
    )
}

/// ⟨m† n⟩ from the symmetrized covariance (zero means).
fn normal_moment<T: Real>(sigma: &DMatrix<T>, m: usize, n: usize) -> Complex<T> {
    let (xm, pm) = (x_index(m), p_index(m));
    let (xn, pn) = (x_index(n), p_index(n));
    let half = T::lit(0.5);
    let delta = if m == n { half } else { T::zero() };
    Complex::new(
        (sigma[(xm, xn)] + sigma[(pm, pn)]) * half - delta,
        (sigma[(xm, pn)] - sigma[(pm, xn)]) * half,
    )
}

fn pulse_moments<T: Real>(
    stage2: &ModeSystem<T>,
    at_pulse: &CovarianceState<T>,
) -> Result<PulseMoments<T>> {
    if at_pulse.dim() != stage2.dim() {
        return Err(Error::DimensionMismatch { expected: stage2.dim(), got: at_pulse.dim() });
    }
    for (_, m) in stage2.spins() {
        if m.kind != ModeKind::Regular {
            return Err(Error::InvalidParameter(
                "response functions assume an all-regular stage".into(),
            ));
        }
        if m.detuning != T::zero() {
            return Err(Error::InvalidParameter(
                "response functions assume resonant ensembles".into(),
            ));
        }
    }
    let sigma = &at_pulse.sigma;
    let cav = stage2.cavity_index();
    let mut g_sq = T::zero();
    let mut anom_rr = Complex::new(T::zero(), T::zero());
    let mut anom_rc = Complex::new(T::zero(), T::zero());
    let mut norm_rr = Complex::new(T::zero(), T::zero());
    let mut norm_rc = Complex::new(T::zero(), T::zero());
    for (j, mj) in stage2.spins() {
        let gj = mj.coupling;
        g_sq = g_sq + gj * gj;
        let gjc = Complex::new(gj, T::zero());
        anom_rc += gjc * anomalous_moment(sigma, j, cav);
        norm_rc += gjc * normal_moment(sigma, j, cav);
        for (k, mk) in stage2.spins() {
            let w = Complex::new(gj * mk.coupling, T::zero());
            anom_rr += w * anomalous_moment(sigma, j, k);
            norm_rr += w * normal_moment(sigma, j, k);
        }
    }
    let anom_cc = anomalous_moment(sigma, cav, cav);
    let norm_cc = normal_moment(sigma, cav, cav);
    Ok(PulseMoments {
        anom_rr,
        anom_rc,
        anom_cc,
        norm_rr: norm_rr.re,
        norm_rc,
        norm_cc: norm_cc.re,
        g_sq,
        cavity_excitation: norm_cc.re,
    })
}

/// Second-moment kernels of the output field on the readout grid, together
/// with the rank-2 factors they are assembled from.
///
/// `k_anom[i][j] = ⟨c_out(t_i) c_out(t_j)⟩` (symmetric) and
/// `k_norm[i][j] = ⟨c_out†(t_i) c_out(t_j)⟩` (Hermitian, PSD): with vacuum
/// input the noise contributions vanish in normal order, so both kernels
/// are deterministic and have rank ≤ 2.
#[derive(Clone, Debug)]
pub struct OutputKernels<T: Real = f64> {
    pub times: Vec<T>,
    pub k_anom: DMatrix<Complex<T>>,
    pub k_norm: DMatrix<Complex<T>>,
    pub alpha: Vec<Complex<T>>,
    pub beta: Vec<Complex<T>>,
    pub kappa: T,
    moments: PulseMoments<T>,
}

/// State of stage 1 at the pulse, starting from vacuum.
pub fn stage1_state<T: Real>(plan: &OutputStagePlan<T>) -> Result<CovarianceState<T>> {
    let vac = vacuum_state(&plan.stage1);
    if plan.t_pulse == T::zero() {
        return Ok(vac);
    }
    let dd = build_drift_diffusion(&plan.stage1);
    let traj = evolve_exact(&dd, &vac, plan.t_pulse, 64, 64)?;
    Ok(traj.last().clone())
}

/// Pulse time that minimizes the stage-1 joint variance Var X_ab(0),
/// searched over [0, search_horizon]. When the variance keeps improving
/// all the way (it often settles monotonically onto the steady value),
/// the returned time is the window end.
pub fn default_pulse_time<T: Real>(stage1: &ModeSystem<T>, search_horizon: T) -> Result<T> {
    let p = crate::dynamics::homogeneous_parameters(stage1)?;
    if !(p.kappa > T::zero()) {
        return Err(Error::InvalidParameter("pulse search requires kappa > 0".into()));
    }
    if !(search_horizon > T::zero()) || !search_horizon.is_finite() {
        return Err(Error::InvalidParameter("search horizon must be positive".into()));
    }
    let dd = build_drift_diffusion(stage1);
    let traj = evolve_exact(&dd, &vacuum_state(stage1), search_horizon, 2000, 1)?;
    let a_label = stage1.modes()[p.a_index].label.clone();
    let b_label = stage1.modes()[p.b_index].label.clone();
    let spec = two_mode_quadrature(stage1, &a_label, &b_label, T::zero())?;
    Ok(traj.min_variance(&spec)?.time)
}

/// Builds both kernels for a plan. The stage-1 state is evolved to the
/// pulse internally.
pub fn output_kernels<T: Real>(plan: &OutputStagePlan<T>) -> Result<OutputKernels<T>> {
    let at_pulse = stage1_state(plan)?;
    output_kernels_from_state(plan, &at_pulse)
}

/// Same, starting from an explicit state at the pulse.
pub fn output_kernels_from_state<T: Real>(
    plan: &OutputStagePlan<T>,
    at_pulse: &CovarianceState<T>,
) -> Result<OutputKernels<T>> {
    let moments = pulse_moments(&plan.stage2, at_pulse)?;
    let kappa = plan.stage2.kappa();
    let delta = plan.stage2.delta_c();
    let times = plan.grid();
    let n = times.len();
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for &t in &times {
        let (a, b) = alpha_beta(kappa, delta, moments.g_sq, t);
        alpha.push(a);
        beta.push(b);
    }

    // PSD of the normal kernel reduces to PSD of the 2×2 moment matrix
    // [[⟨r†r⟩, ⟨r†c⟩], [⟨c†r⟩, ⟨c†c⟩]].
    let tol = T::lit(1e-10);
    let det = moments.norm_rr * moments.norm_cc - moments.norm_rc.norm_sqr();
    if moments.norm_rr < -tol || moments.norm_cc < -tol || det < -tol {
        return Err(Error::Numerical(format!(
            "normal moment matrix is not PSD (det {:.3e})",
            det.approx_f64()
        )));
    }

    let inv_2k = T::one() / (T::lit(2.0) * kappa);
    let scale = Complex::new(inv_2k, T::zero());
    let mut k_anom = DMatrix::zeros(n, n);
    let mut k_norm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (ai, bi) = (alpha[i], beta[i]);
            let (aj, bj) = (alpha[j], beta[j]);
            k_anom[(i, j)] = scale
                * (ai * aj * moments.anom_rr - (ai * bj + bi * aj) * moments.anom_rc
                    + bi * bj * moments.anom_cc);
            k_norm[(i, j)] = scale
                * (ai.conj() * aj * Complex::new(moments.norm_rr, T::zero())
                    - ai.conj() * bj * moments.norm_rc
                    - bi.conj() * aj * moments.norm_rc.conj()
                    + bi.conj() * bj * Complex::new(moments.norm_cc, T::zero()));
        }
    }
    Ok(OutputKernels { times, k_anom, k_norm, alpha, beta, kappa, moments })
}

impl<T: Real> OutputKernels<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean photon number carried by the output field on the grid,
    /// ∫ ⟨c_out† c_out⟩ dt by trapezoid.
    pub fn emitted_photons(&self) -> T {
        let w = trapezoid_weights(&self.times);
        self.times
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, _)| acc + w[i] * self.k_norm[(i, i)].re)
    }

    /// Excitations available for emission at the pulse: the coupled
    /// (bright) collective mode plus the cavity. The orthogonal dark
    /// combination never reaches the output and is excluded.
    pub fn available_photons(&self) -> T {
        self.moments.norm_rr / self.moments.g_sq + self.moments.cavity_excitation
    }

    /// ⟨c_u c_u⟩ and ⟨c_u† c_u⟩ for a sampled mode via the rank-2 factors.
    /// The left (conjugated) sums are the conjugates of the plain dots
    /// da = Σ w u α and db = Σ w u β, so both moments need only those two.
    pub fn filtered_moments(&self, u: &ModeFunction<T>) -> Result<(Complex<T>, Complex<T>)> {
        self.check_grid(u)?;
        let w = trapezoid_weights(&self.times);
        let zero = Complex::new(T::zero(), T::zero());
        let (mut da, mut db) = (zero, zero);
        for i in 0..self.len() {
            let wu = Complex::new(w[i], T::zero()) * u.samples[i];
            da += wu * self.alpha[i];
            db += wu * self.beta[i];
        }
        let m = &self.moments;
        let scale = Complex::new(T::one() / (T::lit(2.0) * self.kappa), T::zero());
        let anom = scale
            * (da * da * m.anom_rr
                - (da * db + db * da) * m.anom_rc
                + db * db * m.anom_cc);
        let norm = scale
            * (da.conj() * da * Complex::new(m.norm_rr, T::zero())
                - da.conj() * db * m.norm_rc
                - db.conj() * da * m.norm_rc.conj()
                + db.conj() * db * Complex::new(m.norm_cc, T::zero()));
        Ok((anom, norm))
    }

    fn check_grid(&self, u: &ModeFunction<T>) -> Result<()> {
        if u.times.len() != self.times.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                got: u.times.len(),
            });
        }
        let tol = T::lit(1e-9) * (self.times[1] - self.times[0]);
        for (a, b) in self.times.iter().zip(&u.times) {
            if (*a - *b).abs() > tol {
                return Err(Error::InvalidParameter(
                    "mode grid does not match the kernel grid".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Var X_u(θ) = ¼ + ½ Re(e^{2iθ} ⟨c_u c_u⟩) + ½ ⟨c_u† c_u⟩ for the
/// filtered quadrature X_u(θ) = (e^{iθ} c_u + e^{−iθ} c_u†)/2.
pub fn mode_variance<T: Real>(
    kernels: &OutputKernels<T>,
    u: &ModeFunction<T>,
    theta: T,
) -> Result<T> {
    let (anom, norm) = kernels.filtered_moments(u)?;
    let two_theta = theta * T::lit(2.0);
    let phase = Complex::new(two_theta.cos(), two_theta.sin());
    Ok(T::lit(0.25) + T::lit(0.5) * ((phase * anom).re + norm.re))
}

/// Reference temporal modes to compare the optimum against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateKind {
    /// u ∝ e^{−κt/2}, the bare-cavity emission profile.
    ExpDecay,
    /// u ∝ √⟨c†c⟩(t), following the instantaneous cavity population.
    SqrtPhoton,
}

pub fn candidate_mode<T: Real>(
    plan: &OutputStagePlan<T>,
    kind: CandidateKind,
) -> Result<ModeFunction<T>> {
    let times = plan.grid();
    let samples: Vec<Complex<T>> = match kind {
        CandidateKind::ExpDecay => {
            let half_kappa = plan.stage2.kappa() * T::lit(0.5);
            times
                .iter()
                .map(|&t| Complex::new((-half_kappa * t).exp(), T::zero()))
                .collect()
        }
        CandidateKind::SqrtPhoton => {
            let at_pulse = stage1_state(plan)?;
            let dd = build_drift_diffusion(&plan.stage2);
            let traj = evolve_exact(&dd, &at_pulse, plan.horizon, plan.n_grid - 1, 1)?;
            let mut samples = Vec::with_capacity(traj.states.len());
            for s in &traj.states {
                let n = mean_excitation(s, &plan.stage2, CAVITY_LABEL)?.max(T::zero());
                samples.push(Complex::new(n.sqrt(), T::zero()));
            }
            samples
        }
    };
    ModeFunction::new(times, samples)
}

/// Result of the variance minimization over temporal modes.
///
/// When `degenerate` is set the quadratic form had no negative direction:
/// no mode beats vacuum, `variance` is the infimum ¼, and `mode` is the
/// flat function as a placeholder.
#[derive(Clone, Debug)]
pub struct OptimalMode<T: Real = f64> {
    pub mode: ModeFunction<T>,
    pub theta: T,
    pub variance: T,
    pub degenerate: bool,
}

fn flat_mode<T: Real>(times: Vec<T>) -> Result<ModeFunction<T>> {
    let one = Complex::new(T::one(), T::zero());
    let samples = vec![one; times.len()];
    ModeFunction::new(times, samples)
}

/// Minimizes Var X_u(θ) over normalized modes u and phase θ.
///
/// In weighted coordinates s = W^{1/2} u the objective above ¼ is the
/// quadratic form ½ [Re(sᵀ F̃ s) + s† H̃ s] over the real stack (Re s, Im s);
/// both F̃ and H̃ have rank ≤ 2, so the form's range is spanned by at most
/// four real vectors built from W^{1/2} ᾱ and W^{1/2} β̄. The eigenproblem
/// is solved exactly in that span; the grid size only enters through dot
/// products.
pub fn optimize_mode<T: Real>(kernels: &OutputKernels<T>) -> Result<OptimalMode<T>> {
    let n = kernels.len();
    if n < 2 {
        return Err(Error::GridTooCoarse { got: n, min: 2 });
    }
    let w = trapezoid_weights(&kernels.times);
    let sw: Vec<T> = w.iter().map(|&wi| wi.sqrt()).collect();
    let va: Vec<Complex<T>> = (0..n)
        .map(|i| kernels.alpha[i] * Complex::new(sw[i], T::zero()))
        .collect();
    let vb: Vec<Complex<T>> = (0..n)
        .map(|i| kernels.beta[i] * Complex::new(sw[i], T::zero()))
        .collect();
    let m = &kernels.moments;
    let scale = Complex::new(T::one() / (T::lit(2.0) * kernels.kappa), T::zero());

    // t = H̃s + conj(F̃s) expressed in the span of conj(va), conj(vb).
    let apply = |s: &DVector<Complex<T>>| -> DVector<Complex<T>> {
        let zero = Complex::new(T::zero(), T::zero());
        let (mut da, mut db) = (zero, zero);
        for i in 0..n {
            da += va[i] * s[i];
            db += vb[i] * s[i];
        }
        let ca_f = scale * (m.anom_rr * da - m.anom_rc * db);
        let cb_f = scale * (m.anom_cc * db - m.anom_rc * da);
        let ca_h = scale * (Complex::new(m.norm_rr, T::zero()) * da - m.norm_rc * db);
        let cb_h = scale * (Complex::new(m.norm_cc, T::zero()) * db - m.norm_rc.conj() * da);
        let ca = ca_h + ca_f.conj();
        let cb = cb_h + cb_f.conj();
        DVector::from_fn(n, |i, _| ca * va[i].conj() + cb * vb[i].conj())
    };

    // Real range basis: for each complex generator v, the stacks of v and iv.
    let mut candidates: Vec<DVector<T>> = Vec::with_capacity(4);
    for gen in [&va, &vb] {
        let bar: Vec<Complex<T>> = gen.iter().map(|z| z.conj()).collect();
        candidates.push(DVector::from_fn(2 * n, |k, _| {
            if k < n { bar[k].re } else { bar[k - n].im }
        }));
        candidates.push(DVector::from_fn(2 * n, |k, _| {
            if k < n { -bar[k].im } else { bar[k - n].re }
        }));
    }
    let max_norm = candidates
        .iter()
        .map(|c| c.norm())
        .fold(T::zero(), |a, b| a.max(b));
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(4);
    if max_norm > T::zero() {
        let drop_tol = T::lit(1e-10) * max_norm;
        for mut c in candidates {
            for q in &basis {
                let proj = q.dot(&c);
                c.axpy(-proj, q, T::one());
            }
            let nm = c.norm();
            if nm > drop_tol {
                basis.push(c / nm);
            }
        }
    }

    let times = kernels.times.clone();
    if basis.is_empty() {
        return Ok(OptimalMode {
            mode: flat_mode(times)?,
            theta: T::zero(),
            variance: T::lit(0.25),
            degenerate: true,
        });
    }

    let images: Vec<DVector<T>> = basis
        .iter()
        .map(|q| {
            let s = DVector::from_fn(n, |i, _| Complex::new(q[i], q[n + i]));
            let t = apply(&s);
            DVector::from_fn(2 * n, |k, _| if k < n { t[k].re } else { t[k - n].im })
        })
        .collect();
    let r = basis.len();
    let mut p = DMatrix::zeros(r, r);
    for k in 0..r {
        for l in 0..r {
            p[(k, l)] = basis[k].dot(&images[l]);
        }
    }
    symmetrize(&mut p);
    // Jacobi instead of SymmetricEigen: the QR route has been seen pairing
    // the most negative eigenvalue with a null-space column when the
    // spectrum holds a near-degenerate pair straddling zero, which turned
    // the optimum into a mode orthogonal to its own quadratic form.
    let (evals, vecs) = jacobi_symmetric_eigen(&p);
    let mut min_idx = 0;
    let mut scale_e = T::zero();
    for k in 0..r {
        scale_e = scale_e.max(evals[k].abs());
        if evals[k] < evals[min_idx] {
            min_idx = k;
        }
    }
    let lambda = evals[min_idx];
    if lambda >= -T::lit(1e-12) * (scale_e + T::lit(1e-300)) {
        return Ok(OptimalMode {
            mode: flat_mode(times)?,
            theta: T::zero(),
            variance: T::lit(0.25),
            degenerate: true,
        });
    }

    let mut w_star = DVector::zeros(2 * n);
    for k in 0..r {
        w_star.axpy(vecs[(k, min_idx)], &basis[k], T::one());
    }
    let samples: Vec<Complex<T>> = (0..n)
        .map(|i| Complex::new(w_star[i] / sw[i], w_star[n + i] / sw[i]))
        .collect();
    let mode = ModeFunction::new(times, samples)?;
    let (anom, _) = kernels.filtered_moments(&mode)?;
    let theta = if anom.norm_sqr() > T::lit(1e-300) {
        let mut th = (T::pi() - anom.im.atan2(anom.re)) * T::lit(0.5);
        while th >= T::pi() {
            th -= T::pi();
        }
        while th < T::zero() {
            th += T::pi();
        }
        th
    } else {
        T::zero()
    };
    let variance = mode_variance(kernels, &mode, theta)?;
    Ok(OptimalMode { mode, theta, variance, degenerate: false })
}

/// The full real quadratic form on (Re s, Im s), for cross-checking the
/// compressed solver on moderate grids.
pub fn dense_q_matrix<T: Real>(kernels: &OutputKernels<T>) -> Result<DMatrix<T>> {
    let n = kernels.len();
    if n > DENSE_OPTIMIZER_LIMIT {
        return Err(Error::TooLarge { dim: n, limit: DENSE_OPTIMIZER_LIMIT });
    }
    let w = trapezoid_weights(&kernels.times);
    let sw: Vec<T> = w.iter().map(|&wi| wi.sqrt()).collect();
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let wt = sw[i] * sw[j];
            let f = kernels.k_anom[(i, j)] * Complex::new(wt, T::zero());
            let h = kernels.k_norm[(i, j)] * Complex::new(wt, T::zero());
            q[(i, j)] = h.re + f.re;
            q[(i, n + j)] = -h.im - f.im;
            q[(n + i, j)] = h.im - f.im;
            q[(n + i, n + j)] = h.re - f.re;
        }
    }
    symmetrize(&mut q);
    Ok(q)
}

/// Variance of the filtered quadrature computed by a second, independent
/// route: the accumulator v(t) = ∫₀ᵗ u c_out dt′ is appended to the system
/// as two extra rows and propagated through the stage-2 dynamics.
#[derive(Clone, Copy, Debug)]
pub struct AugmentedVariance<T: Real = f64> {
    pub variance: T,
    /// [x_v, p_v]/i accumulated by the same propagation; → 1 when u has
    /// unit L² norm over the horizon, certifying v is a bona fide mode.
    pub commutator: T,
}

pub fn augmented_variance<T: Real>(
    plan: &OutputStagePlan<T>,
    u: &ModeFunction<T>,
    theta: T,
) -> Result<AugmentedVariance<T>> {
    let grid = plan.grid();
    if u.times.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: u.times.len() });
    }
    let tol = T::lit(1e-9) * (grid[1] - grid[0]);
    for (a, b) in grid.iter().zip(&u.times) {
        if (*a - *b).abs() > tol {
            return Err(Error::InvalidParameter(
                "mode grid does not match the plan grid".into(),
            ));
        }
    }

    let at_pulse = stage1_state(plan)?;
    let dd = build_drift_diffusion(&plan.stage2);
    let dim2 = plan.stage2.dim();
    let naug = dim2 + 2;
    let (xv, pv) = (dim2, dim2 + 1);
    let (xc, pc) = (
        x_index(plan.stage2.cavity_index()),
        p_index(plan.stage2.cavity_index()),
    );
    let kappa = plan.stage2.kappa();
    let root_2k = (T::lit(2.0) * kappa).sqrt();

    let mut a_base = DMatrix::zeros(naug, naug);
    a_base.view_mut((0, 0), (dim2, dim2)).copy_from(&dd.drift);

    let mut sigma = DMatrix::zeros(naug, naug);
    sigma
        .view_mut((0, 0), (dim2, dim2))
        .copy_from(&at_pulse.sigma);
    let mut comm = DMatrix::zeros(naug, naug);
    let half = T::lit(0.5);
    for mode_idx in 0..dim2 / 2 {
        comm[(x_index(mode_idx), p_index(mode_idx))] = half;
        comm[(p_index(mode_idx), x_index(mode_idx))] = -half;
    }

    let u_max = u
        .samples
        .iter()
        .map(|z| z.norm_sqr().sqrt())
        .fold(T::zero(), |a, b| a.max(b));
    let rate = dd.rate_scale.max(root_2k * u_max);
    let h = grid[1] - grid[0];
    let bound = if rate > T::zero() { T::lit(0.01) / rate } else { h };
    let substeps = (h / bound).approx_f64().ceil().max(2.0) as usize;
    let dt = h / T::from_usize(substeps).expect("substep count fits the scalar");

    // One evaluation of both flows at local time ξ ∈ [0, 1] in the interval.
    let eval = |k: usize, xi: T, s: &DMatrix<T>, c: &DMatrix<T>| -> (DMatrix<T>, DMatrix<T>) {
        let ui = u.samples[k] * Complex::new(T::one() - xi, T::zero())
            + u.samples[k + 1] * Complex::new(xi, T::zero());
        let (ur, uim) = (ui.re, ui.im);
        let mut a = a_base.clone();
        a[(xv, xc)] = root_2k * ur;
        a[(xv, pc)] = -root_2k * uim;
        a[(pv, xc)] = root_2k * uim;
        a[(pv, pc)] = root_2k * ur;
        let mut b = DMatrix::zeros(naug, 2);
        b[(xc, 0)] = -root_2k;
        b[(pc, 1)] = -root_2k;
        b[(xv, 0)] = ur;
        b[(xv, 1)] = -uim;
        b[(pv, 0)] = uim;
        b[(pv, 1)] = ur;
        let mut j2 = DMatrix::zeros(2, 2);
        j2[(0, 1)] = T::one();
        j2[(1, 0)] = -T::one();
        // Vacuum input: symmetrized noise ⟨dW dWᵀ⟩ = ½ I dt and commutator
        // [dW_x, dW_p] = i dt, so both sources carry the same ½ B·Bᵀ scale.
        let d = &b * b.transpose() * half;
        let cj = &b * j2 * b.transpose() * half;
        let a_s = &a * s;
        let ds = &a_s + a_s.transpose() + d;
        // K̇ = AK + KAᵀ + ½BJBᵀ; KAᵀ = −(AK)ᵀ for antisymmetric K.
        let a_c = &a * c;
        let dc = &a_c - a_c.transpose() + cj;
        (ds, dc)
    };

    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    for k in 0..grid.len() - 1 {
        for sub in 0..substeps {
            let xi0 = T::from_usize(sub).expect("substep index fits the scalar")
                / T::from_usize(substeps).expect("substep count fits the scalar");
            let xi_h = (T::from_usize(sub).expect("substep index fits the scalar")
                + T::lit(0.5))
                / T::from_usize(substeps).expect("substep count fits the scalar");
            let xi1 = T::from_usize(sub + 1).expect("substep index fits the scalar")
                / T::from_usize(substeps).expect("substep count fits the scalar");
            let (k1s, k1c) = eval(k, xi0, &sigma, &comm);
            let (k2s, k2c) = eval(
                k,
                xi_h,
                &(&sigma + &k1s * (dt * half)),
                &(&comm + &k1c * (dt * half)),
            );
            let (k3s, k3c) = eval(
                k,
                xi_h,
                &(&sigma + &k2s * (dt * half)),
                &(&comm + &k2c * (dt * half)),
            );
            let (k4s, k4c) = eval(k, xi1, &(&sigma + &k3s * dt), &(&comm + &k3c * dt));
            sigma += (k1s + k2s * two + k3s * two + k4s) * (dt * sixth);
            comm += (k1c + k2c * two + k3c * two + k4c) * (dt * sixth);
            symmetrize(&mut sigma);
            let skew = (&comm - comm.transpose()) * half;
            comm = skew;
        }
    }

    let (c, s) = (theta.cos(), theta.sin());
    let variance = half
        * (c * c * sigma[(xv, xv)] - two * c * s * sigma[(xv, pv)] + s * s * sigma[(pv, pv)]);
    let commutator = two * comm[(xv, pv)];
    Ok(AugmentedVariance { variance, commutator })
}
