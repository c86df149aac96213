use crate::error::{Error, Result};

use super::{Scalar, Shape, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient `(softmax − onehot) / n`.
///
/// `logits` must be `n×C×1×1`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let s = logits.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::dim("logit spatial size", "1x1", format!("{}x{}", s.h, s.w)));
    }
    if labels.len() != s.n {
        return Err(Error::dim("labels", s.n, labels.len()));
    }
    let classes = s.c;
    let inv_n = T::one() / T::from_f64(s.n as f64);
    let mut grad = vec![T::zero(); s.len()];
    let mut total = T::zero();
    for (n, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidInput(format!("label {label} out of range [0, {classes})")));
        }
        let row = logits.sample(n);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = sum.ln();
        total = total + (log_sum - (row[label] - max));
        let g = &mut grad[n * classes..(n + 1) * classes];
        for (k, gk) in g.iter_mut().enumerate() {
            let p = ((row[k] - max) - log_sum).exp();
            let target = if k == label { T::one() } else { T::zero() };
            *gk = (p - target) * inv_n;
        }
    }
    Ok((total * inv_n, Tensor::from_raw(Shape::new(s.n, classes, 1, 1), grad)))
}
