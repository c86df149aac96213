use crate::error::{Error, Result};

use super::{Scalar, Shape, Tensor};

/// Flat input offsets of each pooled maximum, one per output element.
#[derive(Debug, Clone)]
pub struct MaxPoolIndices {
    input_shape: Shape,
    argmax: Vec<usize>,
}

impl MaxPoolIndices {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

fn pooled_len(x: usize, kernel: usize, stride: usize) -> usize {
    (x - kernel) / stride + 1
}

/// Max pooling without padding.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    maxpool2d_indexed(input, kernel, stride).map(|(y, _)| y)
}

/// [`maxpool2d`] that also records where each maximum came from.
pub fn maxpool2d_indexed<T: Scalar>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor<T>, MaxPoolIndices)> {
    let s = input.shape();
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidInput("pool kernel and stride must be >= 1".into()));
    }
    if s.h < kernel {
        return Err(Error::dim("rows", format!(">= {kernel}"), s.h));
    }
    if s.w < kernel {
        return Err(Error::dim("cols", format!(">= {kernel}"), s.w));
    }
    let (ho, wo) = (pooled_len(s.h, kernel, stride), pooled_len(s.w, kernel, stride));
    let out_shape = Shape::new(s.n, s.c, ho, wo);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let plane = s.plane();
    for nc in 0..s.n * s.c {
        let x = &input.data()[nc * plane..(nc + 1) * plane];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = oy * stride * s.w + ox * stride;
                for ki in 0..kernel {
                    let row = (oy * stride + ki) * s.w;
                    for kj in 0..kernel {
                        let i = row + ox * stride + kj;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(nc * plane + best);
            }
        }
    }
    Ok((Tensor::from_raw(out_shape, out), MaxPoolIndices { input_shape: s, argmax }))
}

/// Routes each output gradient to the input element that won its window.
pub fn maxpool2d_backward<T: Scalar>(indices: &MaxPoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::dim("grad_out length", indices.argmax.len(), grad_out.len()));
    }
    let mut dx = vec![T::zero(); indices.input_shape.len()];
    for (&i, &g) in indices.argmax.iter().zip(grad_out.data()) {
        dx[i] = dx[i] + g;
    }
    Ok(Tensor::from_raw(indices.input_shape, dx))
}

/// Mean over each channel's spatial plane; output is `n×c×1×1`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let plane = s.plane();
    let inv = T::one() / T::from_f64(plane as f64);
    let data = input
        .data()
        .chunks_exact(plane)
        .map(|ch| ch.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_raw(Shape::new(s.n, s.c, 1, 1), data)
}

pub fn global_avg_pool_backward<T: Scalar>(input_shape: Shape, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let expect = Shape::new(input_shape.n, input_shape.c, 1, 1);
    if grad_out.shape() != expect {
        return Err(Error::dim("grad_out", expect, grad_out.shape()));
    }
    let plane = input_shape.plane();
    let inv = T::one() / T::from_f64(plane as f64);
    let mut dx = Vec::with_capacity(input_shape.len());
    for &g in grad_out.data() {
        dx.extend(std::iter::repeat(g * inv).take(plane));
    }
    Ok(Tensor::from_raw(input_shape, dx))
}
