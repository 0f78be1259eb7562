//! Error type shared by every module. Diagnostics are carried as f64 so the
//! error enum stays independent of the scalar parameter.

/// Everything that can go wrong when building or evolving a system.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown mode label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate mode label `{0}`")]
    DuplicateLabel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:.3e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error(
        "drift is not Hurwitz: eigenvalue {re:.6e}{im:+.6e}i has non-negative real part"
    )]
    NotHurwitz { re: f64, im: f64 },

    #[error("time step {dt:.3e} exceeds the stability bound {bound:.3e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error(
        "integration diverged at t = {t:.4}: covariance magnitude reached \
         {magnitude:.3e} (fastest-growing drift eigenvalue {re:.6e}{im:+.6e}i)"
    )]
    Diverged { t: f64, magnitude: f64, re: f64, im: f64 },

    #[error("couplings must satisfy g_b > g_a >= 0 (got g_a = {g_a}, g_b = {g_b})")]
    CouplingOrder { g_a: f64, g_b: f64 },

    #[error("expression is singular at g_a = g_b")]
    EqualCouplings,

    #[error("detuning must be nonzero for the time-of-minimum formula")]
    ZeroDetuning,

    #[error("mode-function grid too coarse: {got} points, need at least {min}")]
    GridTooCoarse { got: usize, min: usize },

    #[error("mode function has zero norm and cannot be normalized")]
    ZeroMode,

    #[error("no inverted mode present")]
    NoInvertedMode,

    #[error("expected exactly one inverted mode, found {0}")]
    MultipleInvertedModes(usize),

    #[error("system too large for the dense steady-state solve: {dim} quadratures (limit {limit})")]
    TooLarge { dim: usize, limit: usize },

    #[error("distribution bin count must be odd and positive (got {0})")]
    BadBinCount(usize),

    #[error("{0}")]
    Numerical(String),
}

/// Crate-wide result alias.
pub type Result<V> = std::result::Result<V, Error>;
