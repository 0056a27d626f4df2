//! Scalar abstraction shared by every geometric routine in the crate.

use std::fmt::{Debug, Display};

use geo::algorithm::bool_ops::BoolOpsNum;
use num_traits::FloatConst;

/// Floating-point type the pipeline can run on.
///
/// All geometry in the crate is generic over this trait. The polygon kernel needs [`BoolOpsNum`], so in practice the
/// implementors are `f32` and `f64`.
pub trait Real: BoolOpsNum + FloatConst + Default + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal into `Self`.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle<T: Real>(angle: T) -> T {
    let tau = T::TAU();
    let mut a = angle % tau;
    if a < T::zero() {
        a = a + tau;
    }
    // `-0.0 % tau + tau` can land exactly on tau after rounding
    if a >= tau {
        a = a - tau;
    }
    a
}

/// Smallest absolute difference between two angles, in `[0, π]`.
pub fn angle_between<T: Real>(a: T, b: T) -> T {
    let d = wrap_angle(a - b);
    if d > T::PI() {
        T::TAU() - d
    } else {
        d
    }
}
