//! Dense row-major tensor with shape arithmetic, matrix multiply, GLU and
//! layer normalization.
//!
//! All sequence features are rank-3 `[batch, time, channels]`; the flat index
//! of `[i, j, p]` is `(i * t + j) * c + p`. Generic over [`Real`] so the same
//! kernels run in f32 (benchmarks, training) and f64 (gradient checking).

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Element dtype tag, also used by the binary tensor file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    /// On-disk tag byte.
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    /// Element size in bytes.
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

/// Scalar element trait: IEEE-754 float with the transcendentals the layers
/// need. Implemented for `f32` and `f64` only.
pub trait Real:
    Float
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + core::fmt::Display
    + core::fmt::Debug
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Dense n-dimensional array, row-major, owning its data.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor from a shape and flat row-major data.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::InvalidShape {
                op: "tensor::new",
                shape: shape.to_vec(),
                reason: "all extents must be >= 1",
            });
        }
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Standard-normal draws scaled by `std`.
    pub fn randn(shape: &[usize], rng: &mut Rng, std: f64) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(rng.next_normal() * std))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    /// Flat row-major offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &extent) in idx.iter().zip(&self.shape) {
            debug_assert!(*i < extent);
            off = off * extent + i;
        }
        off
    }

    /// Inverse of [`offset`](Self::offset).
    pub fn unflatten(&self, mut off: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for (slot, &extent) in idx.iter_mut().zip(&self.shape).rev() {
            *slot = off % extent;
            off /= extent;
        }
        idx
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::InvalidShape {
                op: "reshape",
                shape: shape.to_vec(),
                reason: "element count must be preserved and extents >= 1",
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "add_assign",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product of two rank-2 tensors: `[m,n] x [n,p] -> [m,p]`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let p = other.shape[1];
        let mut out = vec![T::zero(); m * p];
        for i in 0..m {
            let a_row = &self.data[i * n..(i + 1) * n];
            let out_row = &mut out[i * p..(i + 1) * p];
            for (k, &a_ik) in a_row.iter().enumerate() {
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, &b_kj) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b_kj;
                }
            }
        }
        Tensor::new(&[m, p], out)
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "transpose2",
                shape: self.shape.clone(),
                reason: "rank-2 tensor required",
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(&[n, m], out)
    }

    /// Sum over rows of a rank-2 tensor, yielding `[cols]`.
    pub fn col_sums(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "col_sums",
                shape: self.shape.clone(),
                reason: "rank-2 tensor required",
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![T::zero(); n];
        for i in 0..m {
            for j in 0..n {
                out[j] += self.data[i * n + j];
            }
        }
        Tensor::new(&[n], out)
    }
}

/// Gated linear unit over the last axis: splits `[..., 2m]` into value and
/// gate halves, returns `value * sigmoid(gate)` with shape `[..., m]`.
pub fn glu<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape();
    let last = *shape.last().ok_or(Error::InvalidShape {
        op: "glu",
        shape: shape.to_vec(),
        reason: "rank >= 1 required",
    })?;
    if last % 2 != 0 {
        return Err(Error::InvalidShape {
            op: "glu",
            shape: shape.to_vec(),
            reason: "last extent must be even",
        });
    }
    let half = last / 2;
    let rows = x.numel() / last;
    let mut out_shape = shape.to_vec();
    *out_shape.last_mut().unwrap() = half;
    let mut out = Vec::with_capacity(rows * half);
    for r in 0..rows {
        let row = &x.data()[r * last..(r + 1) * last];
        for u in 0..half {
            out.push(row[u] * sigmoid(row[half + u]));
        }
    }
    Tensor::new(&out_shape, out)
}

/// Layer normalization across the channel axis of `[b, t, c]`, with
/// per-channel gain and bias. Uses the biased variance (1/c).
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    if x.rank() != 3 {
        return Err(Error::InvalidShape {
            op: "layer_norm",
            shape: x.shape().to_vec(),
            reason: "rank-3 [b,t,c] input required",
        });
    }
    let c = x.shape()[2];
    if gain.shape() != [c] || bias.shape() != [c] {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            left: gain.shape().to_vec(),
            right: x.shape().to_vec(),
        });
    }
    if eps <= T::zero() {
        return Err(Error::Config {
            reason: alloc::format!("layer_norm eps must be > 0, got {eps}"),
        });
    }
    let positions = x.numel() / c;
    let inv_c = T::one() / T::from_f64(c as f64);
    let mut out = vec![T::zero(); x.numel()];
    for pos in 0..positions {
        let row = &x.data()[pos * c..(pos + 1) * c];
        let mut mean = T::zero();
        for &v in row {
            mean += v;
        }
        mean = mean * inv_c;
        let mut var = T::zero();
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var = var * inv_c;
        let inv_std = T::one() / (var + eps).sqrt();
        let out_row = &mut out[pos * c..(pos + 1) * c];
        for p in 0..c {
            out_row[p] = gain.data()[p] * (row[p] - mean) * inv_std + bias.data()[p];
        }
    }
    Tensor::new(x.shape(), out)
}
