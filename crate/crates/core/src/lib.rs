//! Gaussian dynamics of collective spin ensembles coupled through a lossy
//! cavity.
//!
//! One ensemble is inverted (its collective excitation behaves as a
//! negative-mass oscillator), so the beam-splitter interaction with the
//! other ensemble generates two-mode squeezing of the joint quadratures.
//! The crate propagates quadrature covariance matrices under the exact
//! linear model and under its adiabatic reduction, classifies stability
//! from the closed-form drift spectrum, builds temporal modes of the
//! cavity output field (including the variance-optimal filter), and
//! models inhomogeneous broadening by frequency binning.
//!
//! All state lives in `2n × 2n` covariance matrices over the quadrature
//! layout `(x_0, p_0, x_1, p_1, …)` with the cavity as the last mode;
//! vacuum is `Σ = I/2` and a joint quadrature variance of ¼ is the vacuum
//! reference. The scalar type is generic; `f64` is the default and the
//! `F32`/`F64` aliases pick a precision explicitly.

pub mod adiabatic;
pub mod dynamics;
mod error;
pub mod inhomo;
mod linalg;
pub mod model;
pub mod output;
mod real;

pub use error::{Error, Result};
pub use real::Real;

pub use model::{
    mean_excitation, quadrature_variance, symplectic_eigenvalues, two_mode_quadrature,
    vacuum_state, CovarianceState, ModeDescriptor, ModeKind, ModeSystem, QuadratureSpec,
};

pub use dynamics::{
    analytic_eigenvalues, build_drift_diffusion, evolve, evolve_exact, evolve_exact_observed,
    evolve_sampled, settled_state, spectrum_report, stability_classify, steady_state,
    DriftDiffusion, Stability, Trajectory,
};

pub use adiabatic::AdiabaticParams;

pub use output::{
    augmented_variance, candidate_mode, default_pulse_time, mode_variance, optimize_mode,
    output_kernels, pi_pulse_transform, CandidateKind, ModeFunction, OptimalMode,
    OutputKernels, OutputStagePlan,
};

pub use inhomo::{
    collective_quadrature, inhomogeneous_system, CollectiveWeighting, FrequencyDistribution,
};

/// Single-precision aliases. f32 propagates the small systems fine but
/// loses the tighter acceptance tolerances; prefer [`F64`] unless memory
/// is the constraint.
pub mod f32_types {
    pub type ModeSystem = crate::ModeSystem<f32>;
    pub type CovarianceState = crate::CovarianceState<f32>;
    pub type Trajectory = crate::Trajectory<f32>;
    pub type AdiabaticParams = crate::AdiabaticParams<f32>;
    pub type OutputStagePlan = crate::OutputStagePlan<f32>;
    pub type ModeFunction = crate::ModeFunction<f32>;
    pub type FrequencyDistribution = crate::FrequencyDistribution<f32>;
}

/// Double-precision aliases (the default scalar).
pub mod f64_types {
    pub type ModeSystem = crate::ModeSystem<f64>;
    pub type CovarianceState = crate::CovarianceState<f64>;
    pub type Trajectory = crate::Trajectory<f64>;
    pub type AdiabaticParams = crate::AdiabaticParams<f64>;
    pub type OutputStagePlan = crate::OutputStagePlan<f64>;
    pub type ModeFunction = crate::ModeFunction<f64>;
    pub type FrequencyDistribution = crate::FrequencyDistribution<f64>;
}

pub use f32_types as F32;
pub use f64_types as F64;
