//! Scalar abstraction for the numeric core.
//!
//! All model building and solving code is generic over [`Scalar`], so the
//! same routines run in `f32` or `f64`. The crate root exports `f64` type
//! aliases, which is what the CLI and the fixtures use.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the solver and the formulation builders.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + fmt::Display
    + fmt::LowerExp
    + fmt::Debug
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for literals and parsed input.
    fn real(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
