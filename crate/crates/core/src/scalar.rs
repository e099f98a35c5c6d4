use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    /// Representative of `self` modulo 1 in `[0, 1)`.
    fn frac1(self) -> Self {
        let r = self - self.floor();
        if r >= Self::one() {
            Self::zero()
        } else {
            r
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Distance between two angles measured in turns.
pub fn circ_dist<T: Real>(x: T, y: T) -> T {
    let d = (x - y).frac1();
    d.min(T::one() - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frac_and_circular_distance() {
        assert_eq!((-0.25f64).frac1(), 0.75);
        assert_eq!(3.5f64.frac1(), 0.5);
        assert!((circ_dist(0.99f64, 0.01) - 0.02).abs() < 1e-15);
        assert!((circ_dist(0.1f32, 0.4) - 0.3).abs() < 1e-6);
    }
}
