//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating point type the metrics and aggregation routines are generic over.
///
/// Implemented for `f32` and `f64` through the blanket impl below; the
/// crate root exposes `f64` aliases for the common case.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Slack used when comparing values that are mathematically equal but
    /// may have been summed in a different order.
    fn tie_tolerance() -> Self {
        Self::epsilon() * Self::lit(64.0)
    }

    /// Tolerance for "sums to one" checks on user supplied distributions.
    fn mass_tolerance() -> Self {
        (Self::epsilon() * Self::lit(100.0)).max(Self::lit(1e-9))
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}
