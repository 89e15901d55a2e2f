//! Scalar abstraction over f32 and f64.
//!
//! The pipeline trains in f32; gradient checks run the identical code in f64
//! so finite differences are not drowned by rounding error.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

use crate::numerics::{Dtype, Tensor, TensorData};

pub trait Real:
    Float
    + FromPrimitive
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
    const DTYPE: Dtype;

    /// Constant conversion from f64 (rounds once for f32).
    fn c(x: f64) -> Self;

    /// Widening conversion to f64 (exact for both scalar types).
    fn f64(self) -> f64;

    fn tensor(dims: Vec<usize>, data: Vec<Self>) -> Tensor;

    /// Extracts a payload of this exact dtype; `None` on dtype mismatch so
    /// checkpoints loaded into the wrong scalar type fail loudly.
    fn from_tensor(t: &Tensor) -> Option<Vec<Self>>;
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;

    #[inline(always)]
    fn c(x: f64) -> Self {
        x as f32
    }

    #[inline(always)]
    fn f64(self) -> f64 {
        self as f64
    }

    fn tensor(dims: Vec<usize>, data: Vec<Self>) -> Tensor {
        Tensor::f32(dims, data)
    }

    fn from_tensor(t: &Tensor) -> Option<Vec<Self>> {
        match &t.data {
            TensorData::F32(v) => Some(v.clone()),
            TensorData::F64(_) => None,
        }
    }
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;

    #[inline(always)]
    fn c(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn f64(self) -> f64 {
        self
    }

    fn tensor(dims: Vec<usize>, data: Vec<Self>) -> Tensor {
        Tensor::f64(dims, data)
    }

    fn from_tensor(t: &Tensor) -> Option<Vec<Self>> {
        match &t.data {
            TensorData::F64(v) => Some(v.clone()),
            TensorData::F32(_) => None,
        }
    }
}
