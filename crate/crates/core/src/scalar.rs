//! Floating-point scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used for coefficients, amplitudes and optimizer state: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; exact for `f64` itself.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Half-turn multiples below this distance from the grid count as Clifford angles.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut t = theta % two_pi;
    if t <= -T::PI() {
        t = t + two_pi;
    } else if t > T::PI() {
        t = t - two_pi;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        for k in -20..20 {
            let theta = 0.37 * k as f64;
            let w = wrap_angle(theta);
            assert!(w > -PI && w <= PI, "{theta} -> {w}");
            let diff = (theta - w) / (2.0 * PI);
            assert!((diff - diff.round()).abs() < 1e-12);
        }
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0f32 * std::f32::consts::PI) - std::f32::consts::PI).abs() < 1e-5);
    }
}
