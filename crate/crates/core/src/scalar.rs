//! Floating-point scalar abstraction.
//!
//! Everything that touches parameters or features is generic over [`Scalar`].
//! Training runs in `f32`; gradient checks instantiate the same code in `f64`.
//! Reductions that produce scores (similarities, entropies, eigenvectors) are
//! carried out in `f64` regardless of the storage type.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Width in bytes of the storage representation.
    const BYTES: usize;

    fn as_f64(self) -> f64;
    fn of_f64(x: f64) -> Self;
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn of_f64(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline(always)]
    fn of_f64(x: f64) -> Self {
        x
    }
}
