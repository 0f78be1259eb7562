//! Scalar abstraction: everything is generic over a real field so the same
//! code runs at f32 and f64. f64 is the default everywhere.

use nalgebra as na;
use num_traits as nt;

/// Real scalar usable throughout the crate.
///
/// `RealField` brings the linear-algebra operations, `FloatConst` the
/// mathematical constants, and the primitive conversions let numeric
/// literals be written once in f64.
pub trait Real:
    na::RealField + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + Copy
{
    /// Lossless-enough literal conversion; panics only on NaN inputs,
    /// which never appear in literals.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal conversion")
    }

    /// Conversion for diagnostics and error payloads.
    fn approx_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl<T> Real for T where
    T: na::RealField + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + Copy
{
}
