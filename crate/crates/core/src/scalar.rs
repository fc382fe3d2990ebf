use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating point element type used by frames, the model and the losses.
///
/// Implemented for `f32` (training and inference) and `f64` (gradient
/// verification).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tag written into checkpoint tensor records.
    const DTYPE: DType;

    fn from_f64c(v: f64) -> Self;

    fn to_f64c(self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    #[inline(always)]
    fn from_f64c(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn to_f64c(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    #[inline(always)]
    fn from_f64c(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn to_f64c(self) -> f64 {
        self
    }
}

/// Shorthand for literal constants in generic code.
#[inline(always)]
pub fn c<T: Scalar>(v: f64) -> T {
    T::from_f64c(v)
}
