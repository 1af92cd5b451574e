//! Scalar abstraction over the floating-point element type.
//!
//! All math in this crate is generic over [`Scalar`]; `f32` is adequate for
//! training while `f64` is required for finite-difference gradient checks.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Element type of [`crate::NumArray`]: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Debug + Display + Send + Sync + 'static
{
    /// Dtype code used in the checkpoint container.
    const DTYPE: u8;

    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    /// Size of one element in the checkpoint container, in bytes.
    const BYTE_WIDTH: usize;
}

impl Scalar for f32 {
    const DTYPE: u8 = 0;
    const BYTE_WIDTH: usize = 4;

    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("f32 needs 4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: u8 = 1;
    const BYTE_WIDTH: usize = 8;

    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("f64 needs 8 bytes"))
    }
}
