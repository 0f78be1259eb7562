//! Closed forms and the reduced two-mode model obtained by adiabatic
//! elimination of a strongly detuned (or heavily damped) cavity.
//!
//! In that regime the cavity follows the spins instantaneously and the pair
//! (a, b) obeys a 4×4 drift with complex weight w = 1/(κ − iΔ). The joint
//! variance of X_ab admits a closed form whose late-time plateau and first
//! minimum are exposed separately.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::dynamics::DriftDiffusion;
use crate::error::{Error, Result};
use crate::model::QuadratureSpec;
use crate::real::Real;

/// Parameters of the reduced two-ensemble model.
#[derive(Clone, Copy, Debug)]
pub struct AdiabaticParams<T: Real = f64> {
    pub g_a: T,
    pub g_b: T,
    pub kappa: T,
    pub delta: T,
}

impl<T: Real> AdiabaticParams<T> {
    pub fn new(g_a: T, g_b: T, kappa: T, delta: T) -> Result<Self> {
        for (name, v) in [("g_a", g_a), ("g_b", g_b), ("kappa", kappa), ("delta", delta)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if g_a < T::zero() || g_b < T::zero() {
            return Err(Error::InvalidParameter("couplings must be non-negative".into()));
        }
        if kappa < T::zero() {
            return Err(Error::InvalidParameter("kappa must be non-negative".into()));
        }
        if kappa == T::zero() && delta == T::zero() {
            return Err(Error::InvalidParameter(
                "adiabatic elimination needs kappa or delta nonzero".into(),
            ));
        }
        Ok(Self { g_a, g_b, kappa, delta })
    }

    /// True when the detuning is too small for the elimination to be a good
    /// description (|Δ| below five times the stronger coupling) and results
    /// should be treated as qualitative.
    pub fn weak_detuning(&self) -> bool {
        self.delta.abs() < T::lit(5.0) * self.g_a.max(self.g_b)
    }

    fn sum(&self) -> T {
        self.g_a + self.g_b
    }
}

/// Joint quadrature X(θ) in the reduced (a, b) layout.
pub fn reduced_two_mode_quadrature<T: Real>(theta: T) -> QuadratureSpec<T> {
    let half = T::lit(0.5);
    let (c, s) = (theta.cos() * half, theta.sin() * half);
    QuadratureSpec { coefficients: DVector::from_column_slice(&[c, -s, c, -s]) }
}

/// Closed-form Var X_ab(0) of the reduced model at time t, starting from
/// vacuum.
///
/// Singular at g_a = g_b; the two conjugate exponentials are summed in
/// complex arithmetic and the imaginary residue is required to cancel below
/// 1e-12.
pub fn analytic_variance<T: Real>(p: &AdiabaticParams<T>, t: T) -> Result<T> {
    if p.g_a == p.g_b {
        return Err(Error::EqualCouplings);
    }
    if t < T::zero() || !t.is_finite() {
        return Err(Error::InvalidParameter("time must be non-negative and finite".into()));
    }
    let s = p.sum();
    let diff2 = p.g_a * p.g_a - p.g_b * p.g_b;
    let r2 = p.kappa * p.kappa + p.delta * p.delta;
    let x = T::lit(2.0) * p.kappa * t * diff2 / r2;
    let ex = x.exp();

    // e^{t(g_a²−g_b²)/(κ+iΔ)} + e^{t(g_a²−g_b²)/(κ−iΔ)}: conjugates, so the
    // sum is real up to rounding.
    let z = Complex::new(p.kappa, p.delta);
    let e1 = (Complex::new(t * diff2, T::zero()) / z).exp();
    let e2 = (Complex::new(t * diff2, T::zero()) / z.conj()).exp();
    let pair = e1 + e2;
    if pair.im.abs() > T::lit(1e-12) * pair.re.abs().max(T::one()) {
        return Err(Error::Numerical(format!(
            "imaginary residue {:.3e} in the variance closed form",
            pair.im.approx_f64()
        )));
    }

    let eighth = T::lit(0.125);
    let bracket = (p.g_a * p.g_a + p.g_b * p.g_b) * (T::one() + ex)
        + T::lit(2.0) * p.g_a * p.g_b * pair.re;
    let f = (ex - T::one()) * (p.g_a - p.g_b) * eighth / s;
    Ok(eighth * bracket / (s * s) + f)
}

/// Late-time plateau g_b²/(4(g_a+g_b)²); exists only for g_b > g_a.
pub fn longtime_variance<T: Real>(p: &AdiabaticParams<T>) -> Result<T> {
    if !(p.g_b > p.g_a) {
        return Err(Error::CouplingOrder {
            g_a: p.g_a.approx_f64(),
            g_b: p.g_b.approx_f64(),
        });
    }
    let s = p.sum();
    Ok(p.g_b * p.g_b / (T::lit(4.0) * s * s))
}

/// Linearized small-time form ¼(1 + (g_a²−g_b²)κt/(κ²+Δ²)).
///
/// Valid while both the decay κt|g_a²−g_b²|/(κ²+Δ²) and the oscillation
/// phase t|Δ||g_a²−g_b²|/(κ²+Δ²) are small; the second bound is the tighter
/// one whenever |Δ| > κ.
pub fn short_time_variance<T: Real>(p: &AdiabaticParams<T>, t: T) -> T {
    let r2 = p.kappa * p.kappa + p.delta * p.delta;
    let diff2 = p.g_a * p.g_a - p.g_b * p.g_b;
    T::lit(0.25) * (T::one() + diff2 * p.kappa * t / r2)
}

/// First-minimum estimate: time t* = π|Δ|/(g_b²−g_a²) where the oscillating
/// term first turns over, and the first-order minimum value
/// (g_a−g_b)²/(4(g_a+g_b)²) + |2g_a(g_b−g_a)κ/(8(g_a+g_b)²Δ)|.
pub fn optimal_time_min_variance<T: Real>(p: &AdiabaticParams<T>) -> Result<(T, T)> {
    if !(p.g_b > p.g_a) {
        return Err(Error::CouplingOrder {
            g_a: p.g_a.approx_f64(),
            g_b: p.g_b.approx_f64(),
        });
    }
    if p.delta == T::zero() {
        return Err(Error::ZeroDetuning);
    }
    let s = p.sum();
    let gap2 = p.g_b * p.g_b - p.g_a * p.g_a;
    let t_star = T::PI() * p.delta.abs() / gap2;
    let base = (p.g_a - p.g_b) * (p.g_a - p.g_b) / (T::lit(4.0) * s * s);
    let corr = (T::lit(2.0) * p.g_a * (p.g_b - p.g_a) * p.kappa
        / (T::lit(8.0) * s * s * p.delta))
        .abs();
    Ok((t_star, base + corr))
}

/// The reduced 4×4 drift/diffusion over (x_a, p_a, x_b, p_b).
///
/// Vacuum input through the eliminated cavity leaves correlated noise with
/// coefficient magnitudes g² · 2κ/(κ²+Δ²); with g_a = 0 the model is
/// passive and holds vacuum exactly.
pub fn adiabatic_drift<T: Real>(p: &AdiabaticParams<T>) -> DriftDiffusion<T> {
    let r2 = p.kappa * p.kappa + p.delta * p.delta;
    let wr = p.kappa / r2;
    let wi = p.delta / r2;
    let (ga2, gb2, gab) = (p.g_a * p.g_a, p.g_b * p.g_b, p.g_a * p.g_b);

    #[rustfmt::skip]
    let drift = DMatrix::from_row_slice(4, 4, &[
         ga2 * wr, -ga2 * wi,  gab * wr,  gab * wi,
         ga2 * wi,  ga2 * wr,  gab * wi, -gab * wr,
        -gab * wr,  gab * wi, -gb2 * wr, -gb2 * wi,
         gab * wi,  gab * wr,  gb2 * wi, -gb2 * wr,
    ]);

    let w2k = p.kappa / r2;
    #[rustfmt::skip]
    let diffusion = DMatrix::from_row_slice(4, 4, &[
         ga2 * w2k, T::zero(), -gab * w2k, T::zero(),
         T::zero(), ga2 * w2k,  T::zero(), gab * w2k,
        -gab * w2k, T::zero(),  gb2 * w2k, T::zero(),
         T::zero(), gab * w2k,  T::zero(), gb2 * w2k,
    ]);

    let s = p.sum();
    DriftDiffusion { drift, diffusion, rate_scale: s * s / r2.sqrt() }
}
