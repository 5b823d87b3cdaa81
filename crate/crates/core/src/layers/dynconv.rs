//! Dynamic convolution: a lightweight convolution whose kernel is generated
//! per time step from the input.
//!
//! Kernel generation runs `linear -> GLU -> linear` on each frame:
//!
//! ```text
//! gated   = GLU(x . glu_weight + glu_bias)          # [b, t, c]
//! kernels = gated . kernel_weight + kernel_bias     # [b, t, k, h]
//! o[i,j,p] = sum_q kernels[i,j,q,head(p)] * x[i, j + q - (k-1)/2, p]
//! ```
//!
//! The default follows the sum above literally; `softmax_kernel` optionally
//! normalizes the generated taps over `q`, the variant used elsewhere in the
//! dynamic-convolution literature.

use alloc::vec;
use alloc::vec::Vec;

use super::{glu_backward, head_of, same_pad};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{glu, Real, Tensor};

/// Kernel-generating weights for dynamic convolution.
///
/// Parameter count is `2c^2 + 2c + c*k*h + k*h`.
#[derive(Clone, Debug)]
pub struct DynConvLayer<T> {
    /// `[c, 2c]`: projection feeding the GLU.
    pub glu_weight: Tensor<T>,
    /// `[2c]`
    pub glu_bias: Tensor<T>,
    /// `[c, k*h]`: projection producing per-frame kernels.
    pub kernel_weight: Tensor<T>,
    /// `[k*h]`
    pub kernel_bias: Tensor<T>,
    pub kernel_size: usize,
    pub heads: usize,
    /// Normalize generated taps over the kernel axis.
    pub softmax_kernel: bool,
}

#[derive(Clone, Debug)]
pub struct DynConvCache<T> {
    pub input: Tensor<T>,
    /// Pre-GLU activations, `[b*t, 2c]`.
    pub pre_glu: Tensor<T>,
    /// GLU output, `[b*t, c]`.
    pub gated: Tensor<T>,
    /// Generated kernels after optional softmax, `[b, t, k, h]`.
    pub kernels: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct DynConvGrads<T> {
    pub glu_weight: Tensor<T>,
    pub glu_bias: Tensor<T>,
    pub kernel_weight: Tensor<T>,
    pub kernel_bias: Tensor<T>,
}

impl<T: Real> DynConvGrads<T> {
    pub fn into_vec(self) -> Vec<Tensor<T>> {
        vec![
            self.glu_weight,
            self.glu_bias,
            self.kernel_weight,
            self.kernel_bias,
        ]
    }
}

/// Adds a `[n]` bias row to every row of a `[rows, n]` matrix.
fn add_row_bias<T: Real>(mat: &mut Tensor<T>, bias: &Tensor<T>) {
    let n = bias.numel();
    for row in mat.data_mut().chunks_mut(n) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

impl<T: Real> DynConvLayer<T> {
    pub fn new(
        channels: usize,
        kernel_size: usize,
        heads: usize,
        softmax_kernel: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if kernel_size % 2 == 0 || kernel_size == 0 {
            return Err(Error::Config {
                reason: alloc::format!("dynconv kernel width must be odd, got {kernel_size}"),
            });
        }
        if heads == 0 || channels % heads != 0 {
            return Err(Error::HeadsMismatch {
                heads,
                channels,
            });
        }
        let std = 1.0 / (channels as f64).sqrt();
        Ok(DynConvLayer {
            glu_weight: Tensor::randn(&[channels, 2 * channels], rng, std),
            glu_bias: Tensor::zeros(&[2 * channels]),
            kernel_weight: Tensor::randn(&[channels, kernel_size * heads], rng, std),
            kernel_bias: Tensor::zeros(&[kernel_size * heads]),
            kernel_size,
            heads,
            softmax_kernel,
        })
    }

    /// Constant identity kernel: `kernel_weight = 0` and a one-hot center tap
    /// in `kernel_bias`, so the layer reproduces its input exactly
    /// (softmax off).
    pub fn new_identity(
        channels: usize,
        kernel_size: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut layer = Self::new(channels, kernel_size, heads, false, rng)?;
        layer.kernel_weight = Tensor::zeros(&[channels, kernel_size * heads]);
        let mut bias = Tensor::zeros(&[kernel_size * heads]);
        let center = same_pad(kernel_size);
        for d in 0..heads {
            bias.data_mut()[center * heads + d] = T::one();
        }
        layer.kernel_bias = bias;
        Ok(layer)
    }

    pub fn channels(&self) -> usize {
        self.glu_weight.shape()[0]
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("glu_weight", &self.glu_weight),
            ("glu_bias", &self.glu_bias),
            ("kernel_weight", &self.kernel_weight),
            ("kernel_bias", &self.kernel_bias),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![
            ("glu_weight", &mut self.glu_weight),
            ("glu_bias", &mut self.glu_bias),
            ("kernel_weight", &mut self.kernel_weight),
            ("kernel_bias", &mut self.kernel_bias),
        ]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        if x.rank() != 3 {
            return Err(Error::InvalidShape {
                op: "dynconv",
                shape: x.shape().to_vec(),
                reason: "rank-3 [b,t,c] input required",
            });
        }
        let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if c != self.channels() {
            return Err(Error::ShapeMismatch {
                op: "dynconv",
                left: x.shape().to_vec(),
                right: self.glu_weight.shape().to_vec(),
            });
        }
        if c % self.heads != 0 {
            return Err(Error::HeadsMismatch {
                heads: self.heads,
                channels: c,
            });
        }
        Ok((b, t, c))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DynConvCache<T>)> {
        let (b, t, c) = self.check_input(x)?;
        let k = self.kernel_size;
        let h = self.heads;
        let flat = x.clone().reshape(&[b * t, c])?;
        let mut pre_glu = flat.matmul(&self.glu_weight)?;
        add_row_bias(&mut pre_glu, &self.glu_bias);
        let gated = glu(&pre_glu)?;
        let mut kernels = gated.matmul(&self.kernel_weight)?;
        add_row_bias(&mut kernels, &self.kernel_bias);
        if self.softmax_kernel {
            softmax_over_taps(&mut kernels, k, h);
        }
        let kernels = kernels.reshape(&[b, t, k, h])?;

        let pad = same_pad(k);
        let head_idx: Vec<usize> = (0..c).map(|p| head_of(p, h, c)).collect();
        let mut out = vec![T::zero(); b * t * c];
        for i in 0..b {
            for j in 0..t {
                let k_row = &kernels.data()[(i * t + j) * k * h..][..k * h];
                let out_row = &mut out[(i * t + j) * c..][..c];
                for q in 0..k {
                    let src = j as isize + q as isize - pad as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let x_row = &x.data()[(i * t + src as usize) * c..][..c];
                    let taps = &k_row[q * h..(q + 1) * h];
                    for p in 0..c {
                        out_row[p] += taps[head_idx[p]] * x_row[p];
                    }
                }
            }
        }
        let out = Tensor::new(&[b, t, c], out)?;
        Ok((
            out,
            DynConvCache {
                input: x.clone(),
                pre_glu,
                gated,
                kernels,
            },
        ))
    }

    /// Gradients w.r.t. the input and all four parameter tensors.
    ///
    /// The input feeds both the convolution and the kernel generator, so its
    /// gradient accumulates over both paths.
    pub fn backward(
        &self,
        cache: &DynConvCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, DynConvGrads<T>)> {
        let (b, t, c) = self.check_input(&cache.input)?;
        if grad_out.shape() != cache.input.shape()
            || cache.kernels.shape() != [b, t, self.kernel_size, self.heads]
        {
            return Err(Error::CacheMismatch {
                op: "dynconv_backward",
            });
        }
        let k = self.kernel_size;
        let h = self.heads;
        let pad = same_pad(k);
        let head_idx: Vec<usize> = (0..c).map(|p| head_of(p, h, c)).collect();
        let x = cache.input.data();
        let g = grad_out.data();

        // Convolution path: gradients w.r.t. generated kernels and input.
        let mut grad_kern = vec![T::zero(); b * t * k * h];
        let mut grad_x = vec![T::zero(); b * t * c];
        for i in 0..b {
            for j in 0..t {
                let row = i * t + j;
                let g_row = &g[row * c..][..c];
                let k_row = &cache.kernels.data()[row * k * h..][..k * h];
                for q in 0..k {
                    let src = j as isize + q as isize - pad as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let src_off = (i * t + src as usize) * c;
                    let gk_taps = &mut grad_kern[row * k * h + q * h..][..h];
                    let taps = &k_row[q * h..(q + 1) * h];
                    for p in 0..c {
                        let gv = g_row[p];
                        gk_taps[head_idx[p]] += gv * x[src_off + p];
                        grad_x[src_off + p] += gv * taps[head_idx[p]];
                    }
                }
            }
        }

        // Through the optional softmax over taps.
        if self.softmax_kernel {
            for row in 0..b * t {
                let s_row = &cache.kernels.data()[row * k * h..][..k * h];
                let g_row = &mut grad_kern[row * k * h..][..k * h];
                for d in 0..h {
                    let mut dot = T::zero();
                    for q in 0..k {
                        dot += g_row[q * h + d] * s_row[q * h + d];
                    }
                    for q in 0..k {
                        let s = s_row[q * h + d];
                        g_row[q * h + d] = s * (g_row[q * h + d] - dot);
                    }
                }
            }
        }
        let grad_kern = Tensor::new(&[b * t, k * h], grad_kern)?;

        // Kernel-generator linear layer.
        let grad_kernel_weight = cache.gated.transpose2()?.matmul(&grad_kern)?;
        let grad_kernel_bias = grad_kern.col_sums()?;
        let grad_gated = grad_kern.matmul(&self.kernel_weight.transpose2()?)?;

        // GLU and input projection.
        let grad_pre = glu_backward(&cache.pre_glu, &grad_gated)?;
        let flat = cache.input.clone().reshape(&[b * t, c])?;
        let grad_glu_weight = flat.transpose2()?.matmul(&grad_pre)?;
        let grad_glu_bias = grad_pre.col_sums()?;
        let grad_x_gen = grad_pre.matmul(&self.glu_weight.transpose2()?)?;

        for (dst, &src) in grad_x.iter_mut().zip(grad_x_gen.data()) {
            *dst += src;
        }

        Ok((
            Tensor::new(&[b, t, c], grad_x)?,
            DynConvGrads {
                glu_weight: grad_glu_weight,
                glu_bias: grad_glu_bias,
                kernel_weight: grad_kernel_weight,
                kernel_bias: grad_kernel_bias,
            },
        ))
    }
}

/// In-place softmax over the tap axis of a `[rows, k*h]` kernel matrix.
fn softmax_over_taps<T: Real>(kernels: &mut Tensor<T>, k: usize, h: usize) {
    for row in kernels.data_mut().chunks_mut(k * h) {
        for d in 0..h {
            let mut max = T::neg_infinity();
            for q in 0..k {
                if row[q * h + d] > max {
                    max = row[q * h + d];
                }
            }
            let mut total = T::zero();
            for q in 0..k {
                let e = (row[q * h + d] - max).exp();
                row[q * h + d] = e;
                total += e;
            }
            for q in 0..k {
                row[q * h + d] = row[q * h + d] / total;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid;

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = Rng::new(1);
        let layer = DynConvLayer::<f64>::new_identity(4, 3, 2, &mut rng).unwrap();
        let x = Tensor::<f64>::randn(&[2, 5, 4], &mut rng, 1.0);
        let y = layer.forward(&x).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let mut rng = Rng::new(2);
        let mut layer = DynConvLayer::<f64>::new(4, 3, 2, false, &mut rng).unwrap();
        layer.kernel_weight = Tensor::zeros(&[4, 6]);
        layer.kernel_bias = Tensor::zeros(&[6]);
        let x = Tensor::<f64>::randn(&[1, 4, 4], &mut rng, 1.0);
        let y = layer.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_step_by_step_composition_oracle() {
        let mut rng = Rng::new(3);
        let (b, t, c, k, h) = (1usize, 3usize, 2usize, 3usize, 1usize);
        let layer = DynConvLayer::<f64>::new(c, k, h, false, &mut rng).unwrap();
        let x = Tensor::<f64>::randn(&[b, t, c], &mut rng, 1.0);
        let y = layer.forward(&x).unwrap();

        // Independent oracle: each equation as its own scalar loop.
        let mut gated = vec![0.0; t * c];
        for j in 0..t {
            for u in 0..c {
                let mut value = layer.glu_bias.data()[u];
                let mut gate = layer.glu_bias.data()[c + u];
                for p in 0..c {
                    value += x.data()[j * c + p] * layer.glu_weight.data()[p * 2 * c + u];
                    gate += x.data()[j * c + p] * layer.glu_weight.data()[p * 2 * c + c + u];
                }
                gated[j * c + u] = value * sigmoid(gate);
            }
        }
        let mut kernels = vec![0.0; t * k * h];
        for j in 0..t {
            for m in 0..k * h {
                let mut acc = layer.kernel_bias.data()[m];
                for p in 0..c {
                    acc += gated[j * c + p] * layer.kernel_weight.data()[p * k * h + m];
                }
                kernels[j * k * h + m] = acc;
            }
        }
        for j in 0..t {
            for p in 0..c {
                let head = p * h / c;
                let mut acc = 0.0;
                for q in 0..k {
                    let src = j as isize + q as isize - 1;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    acc += kernels[j * k * h + q * h + head] * x.data()[src as usize * c + p];
                }
                assert!((y.data()[j * c + p] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = Rng::new(4);
        let layer = DynConvLayer::<f64>::new(4, 3, 2, false, &mut rng).unwrap();
        let x = Tensor::<f64>::randn(&[1, 4, 4], &mut rng, 1.0);
        let (_, cache) = layer.forward_cached(&x).unwrap();
        let g = Tensor::<f64>::zeros(&[1, 4, 4]);
        let (grad_x, grads) = layer.backward(&cache, &g).unwrap();
        assert!(grad_x.data().iter().all(|&v| v == 0.0));
        for t in grads.into_vec() {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_instance_matches_hand_derivation() {
        // b = t = c = h = 1, k = 1: everything collapses to scalars.
        let mut rng = Rng::new(5);
        let mut layer = DynConvLayer::<f64>::new(1, 1, 1, false, &mut rng).unwrap();
        let (w_v, w_g) = (0.7, -0.4); // glu value / gate weights
        let (b_v, b_g) = (0.1, 0.2);
        let (w2, b2) = (1.3, -0.6);
        layer.glu_weight = Tensor::new(&[1, 2], vec![w_v, w_g]).unwrap();
        layer.glu_bias = Tensor::new(&[2], vec![b_v, b_g]).unwrap();
        layer.kernel_weight = Tensor::new(&[1, 1], vec![w2]).unwrap();
        layer.kernel_bias = Tensor::new(&[1], vec![b2]).unwrap();
        let xv = 0.9;
        let x = Tensor::new(&[1, 1, 1], vec![xv]).unwrap();
        let (y, cache) = layer.forward_cached(&x).unwrap();

        let value = xv * w_v + b_v;
        let gate = xv * w_g + b_g;
        let sg = sigmoid(gate);
        let gated = value * sg;
        let kern = gated * w2 + b2;
        assert!((y.data()[0] - kern * xv).abs() < 1e-14);

        let gu = 1.0; // upstream gradient
        let g = Tensor::new(&[1, 1, 1], vec![gu]).unwrap();
        let (grad_x, grads) = layer.backward(&cache, &g).unwrap();

        let dgated_dx = w_v * sg + value * sg * (1.0 - sg) * w_g;
        let dkern_dx = w2 * dgated_dx;
        assert!((grad_x.data()[0] - (kern + xv * dkern_dx)).abs() < 1e-12);
        assert!((grads.kernel_weight.data()[0] - xv * gated).abs() < 1e-12);
        assert!((grads.kernel_bias.data()[0] - xv).abs() < 1e-12);
        assert!((grads.glu_weight.data()[0] - xv * sg * w2 * xv).abs() < 1e-12);
        assert!((grads.glu_bias.data()[0] - sg * w2 * xv).abs() < 1e-12);
        let dgate = value * sg * (1.0 - sg) * w2 * xv;
        assert!((grads.glu_weight.data()[1] - xv * dgate).abs() < 1e-12);
        assert!((grads.glu_bias.data()[1] - dgate).abs() < 1e-12);
    }
}
