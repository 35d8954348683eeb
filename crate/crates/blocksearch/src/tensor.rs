//! Dense n-dimensional arrays.
//!
//! Activations use batch x height x width x channels layout. The engine runs
//! in 64-bit for verification (gradient checks) and 32-bit for training; both
//! share one implementation through the [`Element`] trait.

use crate::error::{Error, Result};
use std::fmt;

/// Element dtype tag, used by checkpoint files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::Data(format!("unknown dtype tag {other}"))),
        }
    }
}

/// Scalar element of a tensor.
pub trait Element:
    num_traits::Float + Send + Sync + fmt::Debug + fmt::Display + Default + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![T::zero(); len] }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![value; len] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: (0..len).map(&mut f).collect() }
    }

    pub fn scalar_count(&self) -> usize {
        self.data.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Flat offset of [b, h, w, c] in a rank-4 tensor.
    #[inline]
    pub fn at4(&self, b: usize, h: usize, w: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        ((b * self.shape[1] + h) * self.shape[2] + w) * self.shape[3] + c
    }

    /// Flat offset of [r, c] in a rank-2 tensor.
    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        r * self.shape[1] + c
    }

    /// Errors if any element is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// Converts element type (used to load checkpoints across modes).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0f64; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0f64; 5]).is_err());
    }

    #[test]
    fn finite_check_catches_nan_and_inf() {
        let mut t = Tensor::<f32>::zeros(vec![4]);
        assert!(t.ensure_finite("test").is_ok());
        t.data_mut()[2] = f32::NAN;
        assert!(t.ensure_finite("test").is_err());
        t.data_mut()[2] = f32::INFINITY;
        assert!(t.ensure_finite("test").is_err());
    }

    #[test]
    fn rank4_offsets_are_row_major_nhwc() {
        let t = Tensor::<f64>::zeros(vec![2, 3, 4, 5]);
        assert_eq!(t.at4(0, 0, 0, 0), 0);
        assert_eq!(t.at4(0, 0, 0, 4), 4);
        assert_eq!(t.at4(0, 0, 1, 0), 5);
        assert_eq!(t.at4(0, 1, 0, 0), 20);
        assert_eq!(t.at4(1, 0, 0, 0), 60);
        assert_eq!(t.at4(1, 2, 3, 4), 119);
    }
}
