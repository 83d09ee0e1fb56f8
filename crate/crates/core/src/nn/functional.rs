//! Elementwise activations and losses.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::IGNORE;
use crate::scalar::Scalar;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

#[inline]
fn tanh_scalar<T: Scalar>(x: T) -> T {
    // tanh through exp, clamped where the result is saturated anyway.
    let x = x.maximum(T::from_f64(-20.0)).minimum(T::from_f64(20.0));
    let e = (x + x).exp();
    (e - T::ONE) / (e + T::ONE)
}

#[inline]
fn gelu_scalar<T: Scalar>(x: T) -> T {
    let inner = T::from_f64(SQRT_2_OVER_PI) * (x + T::from_f64(GELU_CUBIC) * x * x * x);
    T::from_f64(0.5) * x * (T::ONE + tanh_scalar(inner))
}

#[inline]
fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let x2 = x * x;
    let inner = T::from_f64(SQRT_2_OVER_PI) * (x + T::from_f64(GELU_CUBIC) * x * x2);
    let t = tanh_scalar(inner);
    let sech2 = T::ONE - t * t;
    let dinner = T::from_f64(SQRT_2_OVER_PI) * (T::ONE + T::from_f64(3.0 * GELU_CUBIC) * x2);
    half * (T::ONE + t) + half * x * sech2 * dinner
}

pub fn gelu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| gelu_scalar(v)).collect()
}

/// dx = dy * gelu'(x), with x the pre-activation input.
pub fn gelu_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter().zip(dy.iter()).map(|(&v, &d)| d * gelu_grad_scalar(v)).collect()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

/// Row-wise softmax in place over `width`-sized rows.
pub fn softmax_rows<T: Scalar>(x: &mut [T], width: usize) {
    debug_assert_eq!(x.len() % width, 0);
    for row in x.chunks_exact_mut(width) {
        let mut m = row[0];
        for &v in row.iter() {
            m = m.maximum(v);
        }
        let mut sum = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

pub struct CrossEntropyOut<T: Scalar> {
    /// Mean negative log-likelihood over contributing pixels.
    pub loss: f64,
    /// Gradient with respect to the logits, already divided by the count.
    pub dlogits: Vec<T>,
    /// Number of pixels that contributed.
    pub contributing: usize,
}

/// Mean cross-entropy between `logits` rows and `labels`, skipping IGNORE.
/// Loss is accumulated in f64 regardless of the working precision.
pub fn cross_entropy_masked<T: Scalar>(logits: &[T], labels: &[u8], num_classes: usize) -> CrossEntropyOut<T> {
    debug_assert_eq!(logits.len(), labels.len() * num_classes);
    let contributing = labels.iter().filter(|&&l| l != IGNORE).count();
    let mut dlogits = vec![T::ZERO; logits.len()];
    if contributing == 0 {
        return CrossEntropyOut { loss: 0.0, dlogits, contributing };
    }
    let inv = 1.0 / contributing as f64;
    let mut loss = 0.0f64;
    let mut exps = vec![0.0f64; num_classes];
    for (row_idx, (&label, row)) in labels.iter().zip(logits.chunks_exact(num_classes)).enumerate() {
        if label == IGNORE {
            continue;
        }
        let mut m = row[0];
        for &v in row.iter() {
            m = m.maximum(v);
        }
        let mut denom = 0.0f64;
        for (e, &v) in exps.iter_mut().zip(row.iter()) {
            *e = (v - m).exp().to_f64();
            denom += *e;
        }
        let log_denom = libm::log(denom);
        let shifted = (row[label as usize] - m).to_f64();
        loss += (log_denom - shifted) * inv;
        let drow = &mut dlogits[row_idx * num_classes..(row_idx + 1) * num_classes];
        for (c, (&e, d)) in exps.iter().zip(drow.iter_mut()).enumerate() {
            let p = e / denom;
            let delta = if c == label as usize { 1.0 } else { 0.0 };
            *d = T::from_f64((p - delta) * inv);
        }
    }
    CrossEntropyOut { loss, dlogits, contributing }
}

/// Mean squared error over all elements, f64 accumulation.
pub fn mse<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x.to_f64() - y.to_f64();
        sum += d * d;
    }
    sum / a.len() as f64
}

/// d/da of `mse(a, b)`.
pub fn mse_backward<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let inv = 2.0 / a.len() as f64;
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| T::from_f64((x.to_f64() - y.to_f64()) * inv))
        .collect()
}
