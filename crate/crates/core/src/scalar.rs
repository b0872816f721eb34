//! Scalar abstraction for the real-valued parts of the representations.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating point type usable for decay and sigmoid evaluation.
pub trait Real: Float + FromPrimitive + Debug {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts a primitive to `F`. Every caller passes small integers or
/// constants, so failure would be a bug in the scalar type.
#[inline]
pub(crate) fn lit<F: Real>(v: f64) -> F {
    F::from_f64(v).expect("scalar type cannot represent a small constant")
}

/// Round half up: `floor(v + 0.5)`.
#[inline]
pub fn round_half_up<F: Real>(v: F) -> F {
    (v + lit::<F>(0.5)).floor()
}

/// Rounds half up and clamps into the 8-bit range.
#[inline]
pub fn to_gray<F: Real>(v: F) -> u8 {
    let r = round_half_up(v);
    if r <= F::zero() {
        0
    } else if r >= lit(255.0) {
        255
    } else {
        r.to_u8().unwrap_or(0)
    }
}
