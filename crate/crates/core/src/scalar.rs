//! Scalar abstraction for the numeric core.
//!
//! Everything that accumulates credit, correlates weights with scores, or
//! measures rank alignment is written against [`Real`] so the same code runs
//! at `f32` or `f64` precision. The crate root exports `f64` aliases for the
//! common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the engine.
pub trait Real:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum<Self> + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for constants and RNG draws.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Real")
    }
}

impl<T> Real for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum<T>
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint<F: Real>(a: F, b: F) -> F {
        (a + b) / F::from_f64_lossy(2.0)
    }

    #[test]
    fn works_for_both_float_widths() {
        assert_eq!(midpoint(1.0f64, 3.0f64), 2.0);
        assert_eq!(midpoint(1.0f32, 3.0f32), 2.0);
    }
}
