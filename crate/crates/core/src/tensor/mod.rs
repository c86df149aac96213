//! Dense NCHW tensors and the layer kernels used by every network variant.
//!
//! Kernels are free functions over [`Tensor`]. Each forward kernel that carries
//! learnable state or routes gradients has a matching `*_backward` function.
//! All kernels are generic over [`Scalar`] so the gradient checker can replay
//! the exact same code in double precision.

pub(crate) mod activation;
mod conv;
mod loss;
pub(crate) mod norm;
mod pool;

use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

pub use activation::{dropout, dropout_backward, dropout_mask, relu, relu_backward, relu_inplace};
pub use conv::{
    conv2d, conv2d_backward, depthwise_conv2d, depthwise_conv2d_backward, ConvGrads, ConvMode,
    ConvSpec,
};
pub use loss::softmax_cross_entropy;
pub use norm::{batchnorm, batchnorm_backward, batchnorm_train, BatchNormCache, BatchNormGrads, BatchNormState};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2d, maxpool2d_backward, maxpool2d_indexed,
    MaxPoolIndices,
};

/// Element type for kernels: `f32` for inference and training, `f64` for
/// gradient verification.
pub trait Scalar:
    Float + Default + Send + Sync + fmt::Debug + fmt::Display + std::iter::Sum + 'static
{
    /// `c <- alpha * a * b + beta * c` for row-major `a: m×k`, `b: k×n`, `c: m×n`
    /// with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                debug_assert!(reach(m, k, rsa, csa) <= a.len());
                debug_assert!(reach(k, n, rsb, csb) <= b.len());
                debug_assert!(reach(m, n, rsc, csc) <= c.len());
                // SAFETY: the debug assertions above state the contract every
                // call site upholds: each operand slice covers its strided extent.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

fn reach(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}

/// Shape of a rank-4 tensor in (batch, channels, rows, cols) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one sample.
    pub const fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 array stored row-major in NCHW order.
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    /// Wraps `data`; every dimension must be at least 1 and the length must match.
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        for (axis, v) in [("batch", shape.n), ("channels", shape.c), ("rows", shape.h), ("cols", shape.w)] {
            if v == 0 {
                return Err(Error::dim(axis, ">= 1", 0));
            }
        }
        if data.len() != shape.len() {
            return Err(Error::dim("data length", shape.len(), data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Internal constructor for shapes produced by kernels. Zero-channel
    /// tensors are allowed here as concat operands.
    pub(crate) fn from_raw(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(n, c, h, w)]
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.shape.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape.sample_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn channel(&self, n: usize, c: usize) -> &[T] {
        let plane = self.shape.plane();
        let start = (n * self.shape.c + c) * plane;
        &self.data[start..start + plane]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Selects samples by index into a new batch.
    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::dim("batch", ">= 1", 0));
        }
        let mut data = Vec::with_capacity(indices.len() * self.shape.sample_len());
        for &i in indices {
            if i >= self.shape.n {
                return Err(Error::dim("batch index", format!("< {}", self.shape.n), i));
            }
            data.extend_from_slice(self.sample(i));
        }
        Ok(Tensor {
            shape: Shape { n: indices.len(), ..self.shape },
            data,
        })
    }

    /// Stacks single-sample tensors of identical shape along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::dim("batch", ">= 1", 0))?;
        let mut data = Vec::with_capacity(items.iter().map(Tensor::len).sum());
        let mut n = 0;
        for t in items {
            let s = t.shape;
            if (s.c, s.h, s.w) != (first.shape.c, first.shape.h, first.shape.w) {
                return Err(Error::dim("sample shape", first.shape, s));
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape { n, ..first.shape },
            data,
        })
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

/// Concatenates along the channel axis with `a`'s channels first.
pub fn channel_concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape, b.shape);
    for (axis, x, y) in [("batch", sa.n, sb.n), ("rows", sa.h, sb.h), ("cols", sa.w, sb.w)] {
        if x != y {
            return Err(Error::dim(axis, x, y));
        }
    }
    let out_shape = Shape { c: sa.c + sb.c, ..sa };
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..sa.n {
        data.extend_from_slice(a.sample(n));
        data.extend_from_slice(b.sample(n));
    }
    Ok(Tensor::from_raw(out_shape, data))
}

/// Splits a gradient of a channel concat back into its two operands.
pub fn channel_split<T: Scalar>(x: &Tensor<T>, first_channels: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = x.shape;
    if first_channels > s.c {
        return Err(Error::dim("channels", format!("<= {}", s.c), first_channels));
    }
    let plane = s.plane();
    let sa = Shape { c: first_channels, ..s };
    let sb = Shape { c: s.c - first_channels, ..s };
    let mut a = Vec::with_capacity(sa.len());
    let mut b = Vec::with_capacity(sb.len());
    for n in 0..s.n {
        let sample = x.sample(n);
        a.extend_from_slice(&sample[..first_channels * plane]);
        b.extend_from_slice(&sample[first_channels * plane..]);
    }
    Ok((Tensor::from_raw(sa, a), Tensor::from_raw(sb, b)))
}

/// Zero-channel operand for concat identities.
pub fn empty_channels<T: Scalar>(n: usize, h: usize, w: usize) -> Tensor<T> {
    Tensor::from_raw(Shape::new(n, 0, h, w), Vec::new())
}
