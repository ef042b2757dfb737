//! Real scalar abstraction shared by the codec, cipher and shadow-HE layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point slot scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for configuration constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }

    /// Round to the nearest integer, resolving ties toward negative infinity.
    ///
    /// `2.5 -> 2`, `-2.5 -> -3`, `2.6 -> 3`.
    fn round_half_down(self) -> Self {
        (self - Self::of(0.5)).ceil()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Round half away from zero to `decimals` places.
pub fn round_reported(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale
}
