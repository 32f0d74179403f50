//! Scalar traits shared by the numeric modules.
//!
//! The load flow and sequence-component code needs transcendental functions
//! and is generic over [`Real`] (`f32`/`f64`). The allocation objective only
//! needs ordered field arithmetic and is generic over [`Field`], which also
//! admits exact rationals.

use std::fmt::{Debug, Display};

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, NumAssign, Signed};

/// Floating point: f32 or f64.
pub trait Real:
    Float + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used by the allocation objective.
pub trait Field: Num + Signed + Copy + PartialOrd + Debug + Send + Sync {
    /// Two objective values closer than this are treated as a tie. `scale`
    /// is a non-negative magnitude of the objective being compared.
    fn tie_tolerance(scale: Self) -> Self;

    fn three() -> Self {
        Self::one() + Self::one() + Self::one()
    }
}

impl Field for f64 {
    fn tie_tolerance(scale: Self) -> Self {
        1e-12 * scale.max(1.0)
    }
}

impl Field for f32 {
    fn tie_tolerance(scale: Self) -> Self {
        1e-5 * scale.max(1.0)
    }
}

impl<I> Field for Ratio<I>
where
    I: Integer + Signed + Copy + Debug + Send + Sync,
{
    fn tie_tolerance(_scale: Self) -> Self {
        Self::from_integer(I::zero())
    }
}
