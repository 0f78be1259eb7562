//! Inhomogeneously broadened ensembles.
//!
//! A Gaussian spread of transition frequencies is discretized into
//! equal-width bins; each bin becomes one collective mode whose coupling
//! carries the square root of the bin's probability mass, so the summed
//! coupling power is exactly the homogeneous value. Zero width or a single
//! bin reproduces the homogeneous system identically.

use crate::error::{Error, Result};
use crate::model::{
    p_index, x_index, ModeDescriptor, ModeKind, ModeSystem, QuadratureSpec,
};
use crate::real::Real;

pub const DEFAULT_BINS: usize = 51;
pub const DEFAULT_CUTOFF: f64 = 4.0;

/// Gaussian detuning distribution: `width` is the standard deviation, the
/// grid spans ±`cutoff`·width split into `bins` equal bins (odd, so one
/// bin is centered on resonance).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyDistribution<T: Real = f64> {
    pub width: T,
    pub cutoff: T,
    pub bins: usize,
}

impl<T: Real> FrequencyDistribution<T> {
    pub fn new(width: T, cutoff: T, bins: usize) -> Result<Self> {
        if !(width >= T::zero()) || !width.is_finite() {
            return Err(Error::InvalidParameter("width must be finite and >= 0".into()));
        }
        if !(cutoff > T::zero()) || !cutoff.is_finite() {
            return Err(Error::InvalidParameter("cutoff must be finite and > 0".into()));
        }
        if bins == 0 || bins % 2 == 0 {
            return Err(Error::BadBinCount(bins));
        }
        Ok(Self { width, cutoff, bins })
    }

    pub fn with_width(width: T) -> Result<Self> {
        Self::new(width, T::lit(DEFAULT_CUTOFF), DEFAULT_BINS)
    }

    /// Full width at half maximum of the underlying Gaussian.
    pub fn fwhm(&self) -> T {
        self.width * T::lit(2.354_820_045_030_949_4)
    }

    /// Probability-weighted bins. Masses come from the Gaussian CDF over
    /// each bin, mirrored across the center and renormalized, so the
    /// weights are exactly symmetric and sum to one.
    pub fn discretize(&self, g_total: T) -> Result<BinnedEnsemble<T>> {
        if !(g_total >= T::zero()) || !g_total.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite and >= 0".into()));
        }
        if self.width == T::zero() || self.bins == 1 {
            return Ok(BinnedEnsemble {
                centers: vec![T::zero()],
                weights: vec![T::one()],
                couplings: vec![g_total],
            });
        }
        let m = self.bins;
        let mid = (m - 1) / 2;
        let h = T::lit(2.0) * self.cutoff * self.width
            / T::from_usize(m).expect("bin count fits the scalar");
        let centers: Vec<T> = (0..m)
            .map(|k| {
                let offset = T::from_usize(k.max(mid) - k.min(mid))
                    .expect("bin count fits the scalar");
                if k < mid {
                    -h * offset
                } else {
                    h * offset
                }
            })
            .collect();
        // erf masses in f64; the symmetric half is computed once and
        // mirrored so rounding cannot break the w_k = w_{M-1-k} identity.
        let sigma = self.width.approx_f64();
        let h64 = h.approx_f64();
        let root2 = std::f64::consts::SQRT_2;
        let mut weights = vec![T::zero(); m];
        let mut total = T::zero();
        for k in mid..m {
            let c = h64 * (k - mid) as f64;
            let lo = (c - 0.5 * h64) / (sigma * root2);
            let hi = (c + 0.5 * h64) / (sigma * root2);
            let mass = T::lit(0.5 * (libm::erf(hi) - libm::erf(lo)));
            weights[k] = mass;
            weights[m - 1 - k] = mass;
            total = total + mass;
            if k > mid {
                total = total + mass;
            }
        }
        let couplings = weights
            .iter_mut()
            .map(|w| {
                *w = *w / total;
                g_total * w.sqrt()
            })
            .collect();
        Ok(BinnedEnsemble { centers, weights, couplings })
    }
}

/// One ensemble's discretization: bin-center detunings, probability
/// masses (sum 1), and per-bin couplings (sum of squares = g_total²).
#[derive(Clone, Debug)]
pub struct BinnedEnsemble<T: Real = f64> {
    pub centers: Vec<T>,
    pub weights: Vec<T>,
    pub couplings: Vec<T>,
}

impl<T: Real> BinnedEnsemble<T> {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Two broadened ensembles (one inverted, one regular) sharing a common
/// frequency distribution, coupled to the cavity. Bin k contributes modes
/// labeled `a<k>` (inverted) and `b<k>` (regular) at the same detuning.
pub fn inhomogeneous_system<T: Real>(
    g_a: T,
    g_b: T,
    kappa: T,
    delta_c: T,
    dist: &FrequencyDistribution<T>,
) -> Result<ModeSystem<T>> {
    let bins_a = dist.discretize(g_a)?;
    let bins_b = dist.discretize(g_b)?;
    let m = bins_a.len();
    let mut spins = Vec::with_capacity(2 * m);
    for k in 0..m {
        spins.push(ModeDescriptor {
            label: format!("a{k}"),
            kind: ModeKind::Inverted,
            coupling: bins_a.couplings[k],
            detuning: bins_a.centers[k],
        });
    }
    for k in 0..m {
        spins.push(ModeDescriptor {
            label: format!("b{k}"),
            kind: ModeKind::Regular,
            coupling: bins_b.couplings[k],
            detuning: bins_b.centers[k],
        });
    }
    ModeSystem::new(spins, kappa, delta_c)
}

/// How the per-bin modes are combined into one collective mode per
/// ensemble when reading out the joint quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectiveWeighting {
    /// Amplitudes proportional to the couplings: the combination the
    /// cavity actually talks to.
    Coupling,
    /// Equal amplitudes on every bin.
    Uniform,
}

/// X_ab(θ) over the collective modes A = Σ c_k a_k, B = Σ d_k b_k with
/// normalized amplitudes, reducing to the homogeneous joint quadrature
/// when there is a single bin.
pub fn collective_quadrature<T: Real>(
    system: &ModeSystem<T>,
    theta: T,
    weighting: CollectiveWeighting,
) -> Result<QuadratureSpec<T>> {
    let mut inverted: Vec<(usize, T)> = Vec::new();
    let mut regular: Vec<(usize, T)> = Vec::new();
    for (j, mode) in system.spins() {
        match mode.kind {
            ModeKind::Inverted => inverted.push((j, mode.coupling)),
            ModeKind::Regular => regular.push((j, mode.coupling)),
        }
    }
    if inverted.is_empty() || regular.is_empty() {
        return Err(Error::InvalidParameter(
            "joint quadrature needs both an inverted and a regular ensemble".into(),
        ));
    }
    let mut coefficients = nalgebra::DVector::zeros(system.dim());
    let half = T::lit(0.5);
    let (ct, st) = (theta.cos(), theta.sin());
    for group in [&inverted, &regular] {
        let norm_sq = match weighting {
            CollectiveWeighting::Coupling => group
                .iter()
                .fold(T::zero(), |acc, (_, g)| acc + *g * *g),
            CollectiveWeighting::Uniform => {
                T::from_usize(group.len()).expect("bin count fits the scalar")
            }
        };
        if !(norm_sq > T::zero()) {
            return Err(Error::InvalidParameter(
                "collective weighting needs a nonzero coupling in each ensemble".into(),
            ));
        }
        let norm = norm_sq.sqrt();
        for (j, g) in group {
            let amp = match weighting {
                CollectiveWeighting::Coupling => *g / norm,
                CollectiveWeighting::Uniform => T::one() / norm,
            };
            coefficients[x_index(*j)] = half * ct * amp;
            coefficients[p_index(*j)] = -half * st * amp;
        }
    }
    QuadratureSpec::new(coefficients)
}
