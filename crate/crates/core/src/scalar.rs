//! Numeric bounds shared by the generic parts of the crate.
//!
//! Money and P&L arithmetic only needs a signed field ([`Scalar`]), so it also
//! runs over exact rationals. Indicators and metrics take square roots and
//! need a real float type ([`Real`]).

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Signed field arithmetic: `f32`, `f64`, or `num_rational::Ratio<i64/i128>`.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    fn from_qty(qty: u64) -> Self {
        Self::from_u64(qty).expect("quantity representable in scalar type")
    }

    /// Converts a finite `f64`; panics for values the scalar cannot hold.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where
    T: Num + Signed + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// Floating point scalar used by indicators and the metric suite.
pub trait Real: Float + Scalar {}

impl<T: Float + Scalar> Real for T {}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn halve<T: Scalar>(x: T) -> T {
        x / T::from_qty(2)
    }

    #[test]
    fn rational_is_a_scalar() {
        let r = halve(Ratio::<i128>::from_integer(3));
        assert_eq!(r, Ratio::new(3, 2));
        assert_eq!(halve(3.0f32), 1.5);
    }

    #[test]
    fn min_max() {
        assert_eq!(2.0f64.min_of(1.0), 1.0);
        assert_eq!(2.0f64.max_of(1.0), 2.0);
    }
}
