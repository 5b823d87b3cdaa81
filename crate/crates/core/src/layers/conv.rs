//! Plain 1d/2d convolution and average pooling, cross-correlation convention.

use alloc::vec;
use alloc::vec::Vec;

use super::same_pad;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// 1d convolution over `[b, t, c_in] -> [b, t, c_out]`, stride 1, zero
/// "same" padding.
#[derive(Clone, Debug)]
pub struct Conv1d<T> {
    /// `[k, c_in, c_out]`
    pub weight: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Conv1dCache<T> {
    pub input: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Conv1dGrads<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv1dGrads<T> {
    pub fn into_vec(self) -> Vec<Tensor<T>> {
        vec![self.weight, self.bias]
    }
}

/// Convolves one batch element `[t, c_in]` with `[k, c_in, c_out]` weights.
/// Shared by [`Conv1d`] and the WadaIN-scaled convolution so that a unit
/// kernel scale reproduces the plain convolution bit for bit.
pub(crate) fn conv1d_single<T: Real>(
    x: &[T],
    t: usize,
    c_in: usize,
    weight: &[T],
    bias: &[T],
    k: usize,
    c_out: usize,
    out: &mut [T],
) {
    let pad = same_pad(k);
    for j in 0..t {
        let out_row = &mut out[j * c_out..(j + 1) * c_out];
        out_row.copy_from_slice(bias);
        for q in 0..k {
            let src = j as isize + q as isize - pad as isize;
            if src < 0 || src >= t as isize {
                continue;
            }
            let x_row = &x[src as usize * c_in..][..c_in];
            for (p, &xv) in x_row.iter().enumerate() {
                let w_row = &weight[(q * c_in + p) * c_out..][..c_out];
                for (o, &w) in out_row.iter_mut().zip(w_row) {
                    *o += w * xv;
                }
            }
        }
    }
}

impl<T: Real> Conv1d<T> {
    pub fn new(kernel_size: usize, c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / ((kernel_size * c_in) as f64).sqrt();
        Conv1d {
            weight: Tensor::randn(&[kernel_size, c_in, c_out], rng, std),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        if x.rank() != 3 || x.shape()[2] != self.c_in() {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                left: x.shape().to_vec(),
                right: self.weight.shape().to_vec(),
            });
        }
        Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, t, c_in) = self.check_input(x)?;
        let (k, c_out) = (self.kernel_size(), self.c_out());
        let mut out = vec![T::zero(); b * t * c_out];
        for i in 0..b {
            conv1d_single(
                &x.data()[i * t * c_in..][..t * c_in],
                t,
                c_in,
                self.weight.data(),
                self.bias.data(),
                k,
                c_out,
                &mut out[i * t * c_out..][..t * c_out],
            );
        }
        Tensor::new(&[b, t, c_out], out)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Conv1dCache<T>)> {
        let out = self.forward(x)?;
        Ok((out, Conv1dCache { input: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &Conv1dCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Conv1dGrads<T>)> {
        let (b, t, c_in) = self.check_input(&cache.input)?;
        let (k, c_out) = (self.kernel_size(), self.c_out());
        if grad_out.shape() != [b, t, c_out] {
            return Err(Error::CacheMismatch {
                op: "conv1d_backward",
            });
        }
        let pad = same_pad(k);
        let x = cache.input.data();
        let g = grad_out.data();
        let w = self.weight.data();
        let mut grad_x = vec![T::zero(); b * t * c_in];
        let mut grad_w = vec![T::zero(); k * c_in * c_out];
        let mut grad_b = vec![T::zero(); c_out];
        for i in 0..b {
            for j in 0..t {
                let g_row = &g[(i * t + j) * c_out..][..c_out];
                for (gb, &gv) in grad_b.iter_mut().zip(g_row) {
                    *gb += gv;
                }
                for q in 0..k {
                    let src = j as isize + q as isize - pad as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let src_off = (i * t + src as usize) * c_in;
                    for p in 0..c_in {
                        let xv = x[src_off + p];
                        let w_row = &w[(q * c_in + p) * c_out..][..c_out];
                        let gw_row = &mut grad_w[(q * c_in + p) * c_out..][..c_out];
                        let mut acc = T::zero();
                        for r in 0..c_out {
                            let gv = g_row[r];
                            gw_row[r] += gv * xv;
                            acc += gv * w_row[r];
                        }
                        grad_x[src_off + p] += acc;
                    }
                }
            }
        }
        Ok((
            Tensor::new(&[b, t, c_in], grad_x)?,
            Conv1dGrads {
                weight: Tensor::new(&[k, c_in, c_out], grad_w)?,
                bias: Tensor::new(&[c_out], grad_b)?,
            },
        ))
    }
}

/// 2d convolution over `[b, h, w, c_in]`, "same"-style zero padding. With
/// stride `s` the output extents are `ceil(h/s) x ceil(w/s)`.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    /// `[k_h, k_w, c_in, c_out]`
    pub weight: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct Conv2dCache<T> {
    pub input: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv2dGrads<T> {
    pub fn into_vec(self) -> Vec<Tensor<T>> {
        vec![self.weight, self.bias]
    }
}

/// Output extent and leading pad for a strided same-padded axis.
fn strided_extent(len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let span = (out - 1) * stride + k;
    let pad_total = span.saturating_sub(len);
    (out, pad_total / 2)
}

impl<T: Real> Conv2d<T> {
    pub fn new(
        k_h: usize,
        k_w: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let std = 1.0 / ((k_h * k_w * c_in) as f64).sqrt();
        Conv2d {
            weight: Tensor::randn(&[k_h, k_w, c_in, c_out], rng, std),
            bias: Tensor::zeros(&[c_out]),
            stride,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[3]
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        if x.rank() != 4 || x.shape()[3] != self.c_in() {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: x.shape().to_vec(),
                right: self.weight.shape().to_vec(),
            });
        }
        Ok((x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, height, width, c_in) = self.check_input(x)?;
        let (k_h, k_w) = (self.weight.shape()[0], self.weight.shape()[1]);
        let c_out = self.c_out();
        let s = self.stride;
        let (out_h, pad_h) = strided_extent(height, k_h, s);
        let (out_w, pad_w) = strided_extent(width, k_w, s);
        let mut out = vec![T::zero(); b * out_h * out_w * c_out];
        for i in 0..b {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let out_row =
                        &mut out[((i * out_h + oy) * out_w + ox) * c_out..][..c_out];
                    out_row.copy_from_slice(self.bias.data());
                    for u in 0..k_h {
                        let y = (oy * s + u) as isize - pad_h as isize;
                        if y < 0 || y >= height as isize {
                            continue;
                        }
                        for v in 0..k_w {
                            let xx = (ox * s + v) as isize - pad_w as isize;
                            if xx < 0 || xx >= width as isize {
                                continue;
                            }
                            let x_row = &x.data()
                                [((i * height + y as usize) * width + xx as usize) * c_in..]
                                [..c_in];
                            for (p, &xv) in x_row.iter().enumerate() {
                                let w_row = &self.weight.data()
                                    [((u * k_w + v) * c_in + p) * c_out..][..c_out];
                                for (o, &w) in out_row.iter_mut().zip(w_row) {
                                    *o += w * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(&[b, out_h, out_w, c_out], out)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Conv2dCache<T>)> {
        let out = self.forward(x)?;
        Ok((out, Conv2dCache { input: x.clone() }))
    }

    pub fn backward(
        &self,
        cache: &Conv2dCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Conv2dGrads<T>)> {
        let (b, height, width, c_in) = self.check_input(&cache.input)?;
        let (k_h, k_w) = (self.weight.shape()[0], self.weight.shape()[1]);
        let c_out = self.c_out();
        let s = self.stride;
        let (out_h, pad_h) = strided_extent(height, k_h, s);
        let (out_w, pad_w) = strided_extent(width, k_w, s);
        if grad_out.shape() != [b, out_h, out_w, c_out] {
            return Err(Error::CacheMismatch {
                op: "conv2d_backward",
            });
        }
        let x = cache.input.data();
        let g = grad_out.data();
        let w = self.weight.data();
        let mut grad_x = vec![T::zero(); b * height * width * c_in];
        let mut grad_w = vec![T::zero(); k_h * k_w * c_in * c_out];
        let mut grad_b = vec![T::zero(); c_out];
        for i in 0..b {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let g_row = &g[((i * out_h + oy) * out_w + ox) * c_out..][..c_out];
                    for (gb, &gv) in grad_b.iter_mut().zip(g_row) {
                        *gb += gv;
                    }
                    for u in 0..k_h {
                        let y = (oy * s + u) as isize - pad_h as isize;
                        if y < 0 || y >= height as isize {
                            continue;
                        }
                        for v in 0..k_w {
                            let xx = (ox * s + v) as isize - pad_w as isize;
                            if xx < 0 || xx >= width as isize {
                                continue;
                            }
                            let src_off =
                                ((i * height + y as usize) * width + xx as usize) * c_in;
                            for p in 0..c_in {
                                let xv = x[src_off + p];
                                let base = ((u * k_w + v) * c_in + p) * c_out;
                                let w_row = &w[base..][..c_out];
                                let gw_row = &mut grad_w[base..][..c_out];
                                let mut acc = T::zero();
                                for r in 0..c_out {
                                    let gv = g_row[r];
                                    gw_row[r] += gv * xv;
                                    acc += gv * w_row[r];
                                }
                                grad_x[src_off + p] += acc;
                            }
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::new(&[b, height, width, c_in], grad_x)?,
            Conv2dGrads {
                weight: Tensor::new(&[k_h, k_w, c_in, c_out], grad_w)?,
                bias: Tensor::new(&[c_out], grad_b)?,
            },
        ))
    }
}

/// Average pooling over `[b, h, w, c]`. Output extents are `ceil(h/stride)`;
/// windows are clipped at the borders and divide by the number of cells they
/// actually cover, so pooling a constant field returns the same constant.
#[derive(Clone, Copy, Debug)]
pub struct AvgPool2d {
    pub window: usize,
    pub stride: usize,
}

impl AvgPool2d {
    pub fn halving() -> Self {
        AvgPool2d {
            window: 2,
            stride: 2,
        }
    }

    pub fn output_shape(&self, in_shape: &[usize]) -> Vec<usize> {
        vec![
            in_shape[0],
            in_shape[1].div_ceil(self.stride),
            in_shape[2].div_ceil(self.stride),
            in_shape[3],
        ]
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 4 {
            return Err(Error::InvalidShape {
                op: "avgpool2d",
                shape: x.shape().to_vec(),
                reason: "rank-4 [b,h,w,c] input required",
            });
        }
        let (b, height, width, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let out_h = height.div_ceil(self.stride);
        let out_w = width.div_ceil(self.stride);
        let mut out = vec![T::zero(); b * out_h * out_w * c];
        for i in 0..b {
            for oy in 0..out_h {
                let y0 = oy * self.stride;
                let y1 = (y0 + self.window).min(height);
                for ox in 0..out_w {
                    let x0 = ox * self.stride;
                    let x1 = (x0 + self.window).min(width);
                    let count = T::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                    let out_row = &mut out[((i * out_h + oy) * out_w + ox) * c..][..c];
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            let x_row = &x.data()[((i * height + y) * width + xx) * c..][..c];
                            for (o, &v) in out_row.iter_mut().zip(x_row) {
                                *o += v;
                            }
                        }
                    }
                    for o in out_row.iter_mut() {
                        *o = *o / count;
                    }
                }
            }
        }
        Tensor::new(&[b, out_h, out_w, c], out)
    }

    /// Scatters the upstream gradient back over each window.
    pub fn backward<T: Real>(
        &self,
        in_shape: &[usize],
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (b, height, width, c) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
        let out_h = height.div_ceil(self.stride);
        let out_w = width.div_ceil(self.stride);
        if grad_out.shape() != [b, out_h, out_w, c] {
            return Err(Error::CacheMismatch {
                op: "avgpool2d_backward",
            });
        }
        let mut grad_x = vec![T::zero(); b * height * width * c];
        for i in 0..b {
            for oy in 0..out_h {
                let y0 = oy * self.stride;
                let y1 = (y0 + self.window).min(height);
                for ox in 0..out_w {
                    let x0 = ox * self.stride;
                    let x1 = (x0 + self.window).min(width);
                    let inv_count = T::one() / T::from_f64(((y1 - y0) * (x1 - x0)) as f64);
                    let g_row = &grad_out.data()[((i * out_h + oy) * out_w + ox) * c..][..c];
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            let gx_row =
                                &mut grad_x[((i * height + y) * width + xx) * c..][..c];
                            for (o, &gv) in gx_row.iter_mut().zip(g_row) {
                                *o += gv * inv_count;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(in_shape, grad_x)
    }
}

/// Mean over the spatial axes: `[b, h, w, c] -> [b, 1, 1, c]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::InvalidShape {
            op: "global_avg_pool",
            shape: x.shape().to_vec(),
            reason: "rank-4 [b,h,w,c] input required",
        });
    }
    let (b, height, width, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let inv = T::one() / T::from_f64((height * width) as f64);
    let mut out = vec![T::zero(); b * c];
    for i in 0..b {
        for cell in x.data()[i * height * width * c..][..height * width * c].chunks(c) {
            for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(cell) {
                *o += v;
            }
        }
        for o in out[i * c..(i + 1) * c].iter_mut() {
            *o = *o * inv;
        }
    }
    Tensor::new(&[b, 1, 1, c], out)
}

/// Backward of [`global_avg_pool`].
pub fn global_avg_pool_backward<T: Real>(
    in_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, height, width, c) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    if grad_out.shape() != [b, 1, 1, c] {
        return Err(Error::CacheMismatch {
            op: "global_avg_pool_backward",
        });
    }
    let inv = T::one() / T::from_f64((height * width) as f64);
    let mut grad_x = vec![T::zero(); b * height * width * c];
    for i in 0..b {
        let g_row = &grad_out.data()[i * c..(i + 1) * c];
        for cell in grad_x[i * height * width * c..][..height * width * c].chunks_mut(c) {
            for (o, &gv) in cell.iter_mut().zip(g_row) {
                *o = gv * inv;
            }
        }
    }
    Tensor::new(in_shape, grad_x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv1d_identity_1x1_kernel() {
        let mut rng = Rng::new(1);
        let c = 3;
        let mut layer = Conv1d::<f64>::new(1, c, c, &mut rng);
        let mut w = Tensor::zeros(&[1, c, c]);
        for p in 0..c {
            w.data_mut()[p * c + p] = 1.0;
        }
        layer.weight = w;
        let x = Tensor::<f64>::randn(&[1, 5, c], &mut rng, 1.0);
        let y = layer.forward(&x).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn conv1d_matches_naive_loop_oracle() {
        let mut rng = Rng::new(2);
        let layer = Conv1d::<f64>::new(3, 4, 2, &mut rng);
        let x = Tensor::<f64>::randn(&[2, 6, 4], &mut rng, 1.0);
        let y = layer.forward(&x).unwrap();
        let (b, t, c_in, c_out, k) = (2usize, 6usize, 4usize, 2usize, 3usize);
        for i in 0..b {
            for j in 0..t {
                for r in 0..c_out {
                    let mut acc = layer.bias.data()[r];
                    for q in 0..k {
                        let src = j as isize + q as isize - 1;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        for p in 0..c_in {
                            acc += layer.weight.data()[(q * c_in + p) * c_out + r]
                                * x.data()[(i * t + src as usize) * c_in + p];
                        }
                    }
                    assert!((y.data()[(i * t + j) * c_out + r] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv2d_matches_naive_loop_oracle() {
        let mut rng = Rng::new(3);
        let layer = Conv2d::<f64>::new(3, 3, 6, 2, 1, &mut rng);
        let x = Tensor::<f64>::randn(&[1, 5, 6, 6], &mut rng, 1.0);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 5, 6, 2]);
        let (height, width, c_in, c_out) = (5usize, 6usize, 6usize, 2usize);
        for oy in 0..height {
            for ox in 0..width {
                for r in 0..c_out {
                    let mut acc = layer.bias.data()[r];
                    for u in 0..3 {
                        for v in 0..3 {
                            let yy = oy as isize + u as isize - 1;
                            let xx = ox as isize + v as isize - 1;
                            if yy < 0 || yy >= height as isize || xx < 0 || xx >= width as isize
                            {
                                continue;
                            }
                            for p in 0..c_in {
                                acc += layer.weight.data()[((u * 3 + v) * c_in + p) * c_out + r]
                                    * x.data()
                                        [((yy as usize) * width + xx as usize) * c_in + p];
                            }
                        }
                    }
                    assert!((y.data()[(oy * width + ox) * c_out + r] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn avgpool_constant_field_is_preserved() {
        let x = Tensor::<f64>::filled(&[1, 5, 7, 3], 2.25);
        let pool = AvgPool2d::halving();
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 4, 3]);
        assert!(y.data().iter().all(|&v| v == 2.25));
    }

    #[test]
    fn avgpool_backward_distributes_uniformly() {
        let pool = AvgPool2d::halving();
        let x = Tensor::<f64>::filled(&[1, 4, 4, 1], 1.0);
        let y = pool.forward(&x).unwrap();
        let g = Tensor::<f64>::filled(y.shape(), 1.0);
        let gx = pool.backward(x.shape(), &g).unwrap();
        assert!(gx.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn global_pool_means_and_backward() {
        let mut rng = Rng::new(4);
        let x = Tensor::<f64>::randn(&[2, 3, 4, 5], &mut rng, 1.0);
        let y = global_avg_pool(&x).unwrap();
        assert_eq!(y.shape(), &[2, 1, 1, 5]);
        let mut expect = 0.0;
        for cell in 0..12 {
            expect += x.data()[cell * 5];
        }
        assert!((y.data()[0] - expect / 12.0).abs() < 1e-12);
        let g = Tensor::<f64>::filled(&[2, 1, 1, 5], 12.0);
        let gx = global_avg_pool_backward(x.shape(), &g).unwrap();
        assert!(gx.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
