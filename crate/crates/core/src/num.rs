//! Scalar abstraction shared by the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point type the kinematic and likelihood kernels are generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Square of `self`.
    #[inline]
    fn sq(self) -> Self {
        self * self
    }
}

impl Real for f32 {}
impl Real for f64 {}
