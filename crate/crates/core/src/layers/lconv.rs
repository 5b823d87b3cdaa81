//! Lightweight convolution: depthwise 1d convolution whose channels share
//! kernels within `heads` contiguous groups.
//!
//! For input `x: [b, t, c]` and kernels `K: [k, h]`, the output is
//!
//! ```text
//! o[i, j, p] = sum_q K[q, head(p)] * x[i, j + q - (k-1)/2, p]
//! ```
//!
//! with zero padding outside `[0, t)`. `head(p)` maps channel `p` to its
//! contiguous group of size `c / h`, the only reading consistent with
//! `K` having `h` kernel columns.

use alloc::vec;
use alloc::vec::Vec;

use super::{head_of, same_pad};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// Trainable kernels for lightweight convolution. Parameter count is `k * h`.
#[derive(Clone, Debug)]
pub struct LconvLayer<T> {
    /// `[k, h]`, one kernel column per head.
    pub kernels: Tensor<T>,
    pub kernel_size: usize,
    pub heads: usize,
}

/// Intermediates retained for the backward pass.
#[derive(Clone, Debug)]
pub struct LconvCache<T> {
    pub input: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LconvGrads<T> {
    pub kernels: Tensor<T>,
}

impl<T: Real> LconvGrads<T> {
    pub fn into_vec(self) -> Vec<Tensor<T>> {
        vec![self.kernels]
    }
}

impl<T: Real> LconvLayer<T> {
    /// Identity initialization: a one at the center tap of every head.
    pub fn new_identity(kernel_size: usize, heads: usize) -> Result<Self> {
        Self::check_width(kernel_size)?;
        let mut kernels = Tensor::zeros(&[kernel_size, heads]);
        let center = same_pad(kernel_size);
        for d in 0..heads {
            kernels.data_mut()[center * heads + d] = T::one();
        }
        Ok(LconvLayer {
            kernels,
            kernel_size,
            heads,
        })
    }

    /// Random normal kernels (used by gradient checks and tests).
    pub fn new_random(kernel_size: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Self::check_width(kernel_size)?;
        Ok(LconvLayer {
            kernels: Tensor::randn(&[kernel_size, heads], rng, 1.0),
            kernel_size,
            heads,
        })
    }

    fn check_width(kernel_size: usize) -> Result<()> {
        if kernel_size % 2 == 0 || kernel_size == 0 {
            return Err(Error::Config {
                reason: alloc::format!("lconv kernel width must be odd, got {kernel_size}"),
            });
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("kernels", &self.kernels)]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("kernels", &mut self.kernels)]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        if x.rank() != 3 {
            return Err(Error::InvalidShape {
                op: "lconv",
                shape: x.shape().to_vec(),
                reason: "rank-3 [b,t,c] input required",
            });
        }
        let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if c % self.heads != 0 {
            return Err(Error::HeadsMismatch {
                heads: self.heads,
                channels: c,
            });
        }
        Ok((b, t, c))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, t, c) = self.check_input(x)?;
        let k = self.kernel_size;
        let h = self.heads;
        let pad = same_pad(k);
        let head_idx: Vec<usize> = (0..c).map(|p| head_of(p, h, c)).collect();
        let kern = self.kernels.data();
        let mut out = vec![T::zero(); b * t * c];
        for i in 0..b {
            for j in 0..t {
                let out_row = &mut out[(i * t + j) * c..(i * t + j + 1) * c];
                for q in 0..k {
                    let src = j as isize + q as isize - pad as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let x_row = &x.data()[(i * t + src as usize) * c..][..c];
                    let k_row = &kern[q * h..(q + 1) * h];
                    for p in 0..c {
                        out_row[p] += k_row[head_idx[p]] * x_row[p];
                    }
                }
            }
        }
        Tensor::new(&[b, t, c], out)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LconvCache<T>)> {
        let out = self.forward(x)?;
        Ok((out, LconvCache { input: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &LconvCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, LconvGrads<T>)> {
        let (b, t, c) = self.check_input(&cache.input)?;
        if grad_out.shape() != cache.input.shape() {
            return Err(Error::CacheMismatch { op: "lconv_backward" });
        }
        let k = self.kernel_size;
        let h = self.heads;
        let pad = same_pad(k);
        let head_idx: Vec<usize> = (0..c).map(|p| head_of(p, h, c)).collect();
        let kern = self.kernels.data();
        let x = cache.input.data();
        let g = grad_out.data();
        let mut grad_x = vec![T::zero(); b * t * c];
        let mut grad_k = vec![T::zero(); k * h];
        for i in 0..b {
            for j in 0..t {
                let g_row = &g[(i * t + j) * c..][..c];
                for q in 0..k {
                    let src = j as isize + q as isize - pad as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let src_off = (i * t + src as usize) * c;
                    let k_row = &kern[q * h..(q + 1) * h];
                    let gk_row = &mut grad_k[q * h..(q + 1) * h];
                    for p in 0..c {
                        let gv = g_row[p];
                        grad_x[src_off + p] += gv * k_row[head_idx[p]];
                        gk_row[head_idx[p]] += gv * x[src_off + p];
                    }
                }
            }
        }
        Ok((
            Tensor::new(&[b, t, c], grad_x)?,
            LconvGrads {
                kernels: Tensor::new(&[k, h], grad_k)?,
            },
        ))
    }
}
