use core::fmt::{Debug, Display};
use num_traits::{Float, FromPrimitive};

/// Scalar type the solvers are generic over: `f32` or `f64`.
///
/// Everything in this crate is plain IEEE floating-point arithmetic, so the
/// only requirements are the `num-traits` float interface plus conversions
/// for schedule constants. The verification tolerances quoted throughout the
/// documentation assume `f64`; `f32` works but with correspondingly larger
/// roundoff.
pub trait Real: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Shorthand for lifting an `f64` constant into `Self`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable in this scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
