//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a literal; panics only if the value is not representable at all.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Tolerance used when deciding whether `n` nonnegative entries sum to one.
    fn normalization_tolerance(n: usize) -> Self {
        let floor = Self::lit(1e-9);
        let scaled = Self::epsilon() * Self::lit(16.0) * Self::lit(n.max(1) as f64);
        floor.max(scaled)
    }
}

impl Real for f32 {}
impl Real for f64 {}
