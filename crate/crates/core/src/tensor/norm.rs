use crate::error::{Error, Result};

use super::{Scalar, Tensor};

/// Per-channel batch normalization parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T: Scalar = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: f64,
    pub momentum: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

impl<T: Scalar> BatchNormState<T> {
    /// Identity affine transform with unit running variance.
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        for (axis, len) in [
            ("beta", self.beta.len()),
            ("running_mean", self.running_mean.len()),
            ("running_var", self.running_var.len()),
        ] {
            if len != c {
                return Err(Error::dim(axis, c, len));
            }
        }
        if self.running_var.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidInput("running_var must be non-negative".into()));
        }
        if !(self.epsilon > 0.0) || !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::InvalidInput("epsilon must be > 0 and momentum in (0, 1)".into()));
        }
        Ok(())
    }

    /// Folds a training batch's statistics into the running estimates.
    /// The running variance uses the unbiased batch variance.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let m = T::from_f64(self.momentum);
        let keep = T::one() - m;
        let count = cache.count as f64;
        let unbias = T::from_f64(if count > 1.0 { count / (count - 1.0) } else { 1.0 });
        for c in 0..self.channels() {
            self.running_mean[c] = keep * self.running_mean[c] + m * cache.batch_mean[c];
            self.running_var[c] = keep * self.running_var[c] + m * cache.batch_var[c] * unbias;
        }
    }
}

/// Intermediates of a training-mode normalization needed for backward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Scalar> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Biased (population) variance of the batch.
    pub batch_var: Vec<T>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Normalizes each channel and applies `gamma · x̂ + beta`.
///
/// Training mode uses batch statistics and folds them into the running
/// estimates; inference mode uses the running estimates.
pub fn batchnorm<T: Scalar>(input: &Tensor<T>, state: &mut BatchNormState<T>, training: bool) -> Result<Tensor<T>> {
    let (out, cache) = batchnorm_forward(
        input,
        &state.gamma,
        &state.beta,
        &state.running_mean,
        &state.running_var,
        state.epsilon,
        training,
    )?;
    if let Some(cache) = cache {
        state.update_running(&cache);
    }
    Ok(out)
}

/// Training-mode normalization with batch statistics. Running estimates are
/// neither read nor updated.
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    epsilon: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let c = gamma.len();
    let (out, cache) = batchnorm_forward(input, gamma, beta, &vec![T::zero(); c], &vec![T::one(); c], epsilon, true)?;
    Ok((out, cache.expect("training mode always yields a cache")))
}

/// Slice-level normalization kernel. Returns a cache only in training mode.
pub(crate) fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    epsilon: f64,
    training: bool,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    let s = input.shape();
    let channels = gamma.len();
    if s.c != channels {
        return Err(Error::dim("channels", channels, s.c));
    }
    for (axis, len) in [("beta", beta.len()), ("running_mean", running_mean.len()), ("running_var", running_var.len())] {
        if len != channels {
            return Err(Error::dim(axis, channels, len));
        }
    }
    let plane = s.plane();
    let count = s.n * plane;
    let eps = T::from_f64(epsilon);
    if !training {
        let mut out = input.clone();
        let data = out.data_mut();
        for n in 0..s.n {
            for c in 0..channels {
                let scale = gamma[c] / (running_var[c] + eps).sqrt();
                let shift = beta[c] - running_mean[c] * scale;
                let start = (n * channels + c) * plane;
                for v in &mut data[start..start + plane] {
                    *v = *v * scale + shift;
                }
            }
        }
        return Ok((out, None));
    }

    if count == 0 {
        return Err(Error::InvalidInput("batch normalization in training mode needs a non-empty batch".into()));
    }
    let inv_count = T::one() / T::from_f64(count as f64);
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for n in 0..s.n {
        for c in 0..channels {
            mean[c] = mean[c] + input.channel(n, c).iter().copied().sum::<T>();
        }
    }
    mean.iter_mut().for_each(|m| *m = *m * inv_count);
    for n in 0..s.n {
        for c in 0..channels {
            let mu = mean[c];
            var[c] = var[c] + input.channel(n, c).iter().map(|&x| (x - mu) * (x - mu)).sum::<T>();
        }
    }
    var.iter_mut().for_each(|v| *v = *v * inv_count);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut x_hat = input.clone();
    let mut out = input.clone();
    {
        let xh = x_hat.data_mut();
        let y = out.data_mut();
        for n in 0..s.n {
            for c in 0..channels {
                let start = (n * channels + c) * plane;
                for i in start..start + plane {
                    xh[i] = (xh[i] - mean[c]) * inv_std[c];
                    y[i] = gamma[c] * xh[i] + beta[c];
                }
            }
        }
    }
    Ok((
        out,
        Some(BatchNormCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            count,
        }),
    ))
}

/// Backward pass of a training-mode normalization.
pub fn batchnorm_backward<T: Scalar>(cache: &BatchNormCache<T>, gamma: &[T], grad_out: &Tensor<T>) -> Result<BatchNormGrads<T>> {
    let s = cache.x_hat.shape();
    if grad_out.shape() != s {
        return Err(Error::dim("grad_out", s, grad_out.shape()));
    }
    let channels = s.c;
    if gamma.len() != channels {
        return Err(Error::dim("gamma", channels, gamma.len()));
    }
    let plane = s.plane();
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for n in 0..s.n {
        for c in 0..channels {
            let g = grad_out.channel(n, c);
            let xh = cache.x_hat.channel(n, c);
            dbeta[c] = dbeta[c] + g.iter().copied().sum::<T>();
            dgamma[c] = dgamma[c] + g.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
        }
    }
    let m = T::from_f64(cache.count as f64);
    let mut dx = grad_out.clone();
    {
        let d = dx.data_mut();
        let xh = cache.x_hat.data();
        for n in 0..s.n {
            for c in 0..channels {
                let k = gamma[c] * cache.inv_std[c] / m;
                let start = (n * channels + c) * plane;
                for i in start..start + plane {
                    d[i] = k * (m * d[i] - dbeta[c] - xh[i] * dgamma[c]);
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}
