//! Elementwise activations and their backward passes.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Real, Tensor};

/// Backward of [`crate::tensor::glu`]: given the forward input `x` with last
/// extent `2m` and the upstream gradient `[..., m]`, returns the gradient
/// w.r.t. `x`.
pub fn glu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let last = *x.shape().last().unwrap_or(&0);
    if last == 0 || last % 2 != 0 {
        return Err(Error::InvalidShape {
            op: "glu_backward",
            shape: x.shape().to_vec(),
            reason: "last extent must be even and nonzero",
        });
    }
    let half = last / 2;
    let rows = x.numel() / last;
    if grad_out.numel() != rows * half {
        return Err(Error::ShapeMismatch {
            op: "glu_backward",
            left: x.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    let mut grad = Vec::with_capacity(x.numel());
    grad.resize(x.numel(), T::zero());
    for r in 0..rows {
        let row = &x.data()[r * last..(r + 1) * last];
        let g_row = &grad_out.data()[r * half..(r + 1) * half];
        let out_row = &mut grad[r * last..(r + 1) * last];
        for u in 0..half {
            let gate = sigmoid(row[half + u]);
            out_row[u] = g_row[u] * gate;
            out_row[half + u] = g_row[u] * row[u] * gate * (T::one() - gate);
        }
    }
    Tensor::new(x.shape(), grad)
}

/// Leaky rectifier with the given negative-side slope.
pub fn leaky_relu<T: Real>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v < T::zero() { v * slope } else { v })
}

/// Backward of [`leaky_relu`], using the forward input for the mask.
pub fn leaky_relu_backward<T: Real>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    slope: T,
) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            op: "leaky_relu_backward",
            left: x.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v < T::zero() { g * slope } else { g })
        .collect();
    Tensor::new(x.shape(), data)
}

/// Elementwise logistic sigmoid.
pub fn sigmoid_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// Backward of the sigmoid given its *output* `y`: `g * y * (1 - y)`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            op: "sigmoid_backward",
            left: y.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * v * (T::one() - v))
        .collect();
    Tensor::new(y.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::glu;

    #[test]
    fn glu_backward_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let x = Tensor::<f64>::randn(&[2, 6], &mut rng, 1.0);
        let weights = Tensor::<f64>::randn(&[2, 3], &mut rng, 1.0);
        let loss = |t: &Tensor<f64>| -> f64 {
            glu(t)
                .unwrap()
                .data()
                .iter()
                .zip(weights.data())
                .map(|(&a, &w)| a * w)
                .sum()
        };
        let analytic = glu_backward(&x, &weights).unwrap();
        let h = 1e-6;
        for i in 0..x.numel() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!(
                (fd - analytic.data()[i]).abs() < 1e-7,
                "element {i}: fd {fd} vs analytic {}",
                analytic.data()[i]
            );
        }
    }

    #[test]
    fn leaky_relu_negative_slope() {
        let x = Tensor::<f64>::new(&[3], vec![-2.0, 0.0, 3.0]).unwrap();
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y.data(), &[-0.4, 0.0, 3.0]);
    }

    #[test]
    fn sigmoid_range_and_backward() {
        let x = Tensor::<f64>::new(&[3], vec![-30.0, 0.0, 30.0]).unwrap();
        let y = sigmoid_forward(&x);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!((y.data()[1] - 0.5).abs() < 1e-15);
        let g = Tensor::filled(&[3], 1.0);
        let gx = sigmoid_backward(&y, &g).unwrap();
        assert!((gx.data()[1] - 0.25).abs() < 1e-15);
    }
}
