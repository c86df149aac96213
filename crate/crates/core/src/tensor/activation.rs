use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Scalar, Shape, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Gradient of ReLU expressed through its output: passes where `output > 0`.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::dim("grad_out", output.shape(), grad_out.shape()));
    }
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Ok(Tensor::from_raw(output.shape(), data))
}

/// Inverted-dropout multipliers: `0` with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<T: Scalar>(shape: Shape, rate: f64, seed: u64) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    if rate == 0.0 {
        return Ok(vec![T::one(); shape.len()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..shape.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect())
}

/// Inverted dropout. Inference mode returns the input unchanged.
pub fn dropout<T: Scalar>(input: &Tensor<T>, rate: f64, training: bool, seed: u64) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask::<T>(input.shape(), rate, seed)?;
    Ok(apply_mask(input, &mask))
}

pub(crate) fn apply_mask<T: Scalar>(input: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let data = input.data().iter().zip(mask).map(|(&x, &m)| x * m).collect();
    Tensor::from_raw(input.shape(), data)
}

pub fn dropout_backward<T: Scalar>(mask: &[T], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.len() != grad_out.len() {
        return Err(Error::dim("dropout mask", grad_out.len(), mask.len()));
    }
    Ok(apply_mask(grad_out, mask))
}
