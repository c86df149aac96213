use crate::error::{Error, Result};

use super::{Scalar, Shape, Tensor};

/// How a convolution mixes channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvMode {
    /// Every output channel sees every input channel.
    Standard,
    /// One filter per input channel; `out_channels == in_channels`.
    Depthwise,
    /// 1×1 channel mixing.
    Pointwise,
}

/// Geometry of a 2-D cross-correlation.
///
/// Weight layouts (row-major):
/// - standard: `[out, in, kh, kw]`
/// - depthwise: `[channels, 1, kh, kw]`
/// - pointwise: `[out, in, 1, 1]`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub has_bias: bool,
    pub mode: ConvMode,
}

impl ConvSpec {
    pub fn standard(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding,
            has_bias: true,
            mode: ConvMode::Standard,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel: (kernel, kernel),
            stride: 1,
            padding,
            has_bias: true,
            mode: ConvMode::Depthwise,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (1, 1),
            stride: 1,
            padding: 0,
            has_bias: true,
            mode: ConvMode::Pointwise,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Number of weight scalars (bias excluded).
    pub fn weight_len(&self) -> usize {
        let (kh, kw) = self.kernel;
        match self.mode {
            ConvMode::Depthwise => self.in_channels * kh * kw,
            ConvMode::Standard | ConvMode::Pointwise => self.out_channels * self.in_channels * kh * kw,
        }
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        let (kh, kw) = self.kernel;
        match self.mode {
            ConvMode::Depthwise => vec![self.in_channels, 1, kh, kw],
            ConvMode::Standard | ConvMode::Pointwise => vec![self.out_channels, self.in_channels, kh, kw],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + if self.has_bias { self.out_channels } else { 0 }
    }

    /// Output spatial size: `floor((x + 2·pad − k) / stride) + 1`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < kh {
            return Err(Error::dim("rows", format!(">= {kh} after padding"), ph));
        }
        if pw < kw {
            return Err(Error::dim("cols", format!(">= {kw} after padding"), pw));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::dim("channels", ">= 1", 0));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(Error::dim("kernel", ">= 1", 0));
        }
        if self.stride == 0 {
            return Err(Error::InvalidInput("stride must be >= 1".into()));
        }
        match self.mode {
            ConvMode::Depthwise if self.out_channels != self.in_channels => Err(Error::dim(
                "out_channels (depthwise)",
                self.in_channels,
                self.out_channels,
            )),
            ConvMode::Pointwise if self.kernel != (1, 1) => Err(Error::dim(
                "kernel (pointwise)",
                "1x1",
                format!("{}x{}", self.kernel.0, self.kernel.1),
            )),
            _ => Ok(()),
        }
    }

    fn check_operands<T: Scalar>(&self, input: Shape, weights: &[T], bias: Option<&[T]>) -> Result<(usize, usize)> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(Error::dim("input channels", self.in_channels, input.c));
        }
        if weights.len() != self.weight_len() {
            let axis = match self.mode {
                ConvMode::Depthwise => "depthwise filter count",
                _ => "weights",
            };
            return Err(Error::dim(axis, self.weight_len(), weights.len()));
        }
        match (self.has_bias, bias) {
            (true, Some(b)) if b.len() != self.out_channels => {
                return Err(Error::dim("bias", self.out_channels, b.len()))
            }
            (true, None) => return Err(Error::dim("bias", self.out_channels, 0)),
            (false, Some(b)) => return Err(Error::dim("bias", 0, b.len())),
            _ => {}
        }
        self.output_hw(input.h, input.w)
    }

    fn is_direct_1x1(&self) -> bool {
        self.kernel == (1, 1) && self.stride == 1 && self.padding == 0
    }
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

/// 2-D cross-correlation. Depthwise specs are routed to [`depthwise_conv2d`].
pub fn conv2d<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec, weights: &[T], bias: Option<&[T]>) -> Result<Tensor<T>> {
    if spec.mode == ConvMode::Depthwise {
        return depthwise_conv2d(input, spec, weights, bias);
    }
    let s = input.shape();
    let (ho, wo) = spec.check_operands(s, weights, bias)?;
    let out_shape = Shape::new(s.n, spec.out_channels, ho, wo);
    let positions = ho * wo;
    let k = spec.weight_len() / spec.out_channels;
    let mut out = vec![T::zero(); out_shape.len()];
    let mut col = if spec.is_direct_1x1() { Vec::new() } else { vec![T::zero(); k * positions] };

    for n in 0..s.n {
        let x = input.sample(n);
        let col_ref: &[T] = if spec.is_direct_1x1() {
            x
        } else {
            im2col(x, s, spec, ho, wo, &mut col);
            &col
        };
        let y = &mut out[n * out_shape.sample_len()..(n + 1) * out_shape.sample_len()];
        if let Some(b) = bias {
            for (o, row) in y.chunks_exact_mut(positions).enumerate() {
                row.fill(b[o]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(
            spec.out_channels,
            k,
            positions,
            T::one(),
            weights,
            k as isize,
            1,
            col_ref,
            positions as isize,
            1,
            beta,
            y,
            positions as isize,
            1,
        );
    }
    Ok(Tensor::from_raw(out_shape, out))
}

/// Backward pass of [`conv2d`] given the forward input and the output gradient.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &[T],
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    if spec.mode == ConvMode::Depthwise {
        return depthwise_conv2d_backward(input, spec, weights, grad_out);
    }
    let s = input.shape();
    let bias_probe: Option<Vec<T>> = spec.has_bias.then(|| vec![T::zero(); spec.out_channels]);
    let (ho, wo) = spec.check_operands(s, weights, bias_probe.as_deref())?;
    let go = grad_out.shape();
    if go != Shape::new(s.n, spec.out_channels, ho, wo) {
        return Err(Error::dim("grad_out", Shape::new(s.n, spec.out_channels, ho, wo), go));
    }
    let positions = ho * wo;
    let k = spec.weight_len() / spec.out_channels;
    let direct = spec.is_direct_1x1();
    let mut grad_w = vec![T::zero(); weights.len()];
    let mut grad_b = bias_probe;
    let mut grad_in = vec![T::zero(); s.len()];
    let mut col = if direct { Vec::new() } else { vec![T::zero(); k * positions] };
    let mut dcol = if direct { Vec::new() } else { vec![T::zero(); k * positions] };

    for n in 0..s.n {
        let x = input.sample(n);
        let dy = grad_out.sample(n);
        let col_ref: &[T] = if direct {
            x
        } else {
            im2col(x, s, spec, ho, wo, &mut col);
            &col
        };
        // dW += dY · colᵀ
        T::gemm(
            spec.out_channels,
            positions,
            k,
            T::one(),
            dy,
            positions as isize,
            1,
            col_ref,
            1,
            positions as isize,
            T::one(),
            &mut grad_w,
            k as isize,
            1,
        );
        if let Some(gb) = grad_b.as_mut() {
            for (o, row) in dy.chunks_exact(positions).enumerate() {
                gb[o] = gb[o] + row.iter().copied().sum::<T>();
            }
        }
        // dcol = Wᵀ · dY
        let dx = &mut grad_in[n * s.sample_len()..(n + 1) * s.sample_len()];
        if direct {
            T::gemm(
                k,
                spec.out_channels,
                positions,
                T::one(),
                weights,
                1,
                k as isize,
                dy,
                positions as isize,
                1,
                T::zero(),
                dx,
                positions as isize,
                1,
            );
        } else {
            T::gemm(
                k,
                spec.out_channels,
                positions,
                T::one(),
                weights,
                1,
                k as isize,
                dy,
                positions as isize,
                1,
                T::zero(),
                &mut dcol,
                positions as isize,
                1,
            );
            col2im(&dcol, s, spec, ho, wo, dx);
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_raw(s, grad_in),
        weight: grad_w,
        bias: grad_b,
    })
}

/// Per-channel 2-D cross-correlation: output channel `c` reads only input channel `c`.
pub fn depthwise_conv2d<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &[T],
    bias: Option<&[T]>,
) -> Result<Tensor<T>> {
    if spec.mode != ConvMode::Depthwise {
        return Err(Error::InvalidInput(format!("depthwise_conv2d called with {:?} spec", spec.mode)));
    }
    let s = input.shape();
    let (ho, wo) = spec.check_operands(s, weights, bias)?;
    let (kh, kw) = spec.kernel;
    let out_shape = Shape::new(s.n, s.c, ho, wo);
    let mut out = vec![T::zero(); out_shape.len()];
    let pad = spec.padding as isize;
    for n in 0..s.n {
        for c in 0..s.c {
            let x = input.channel(n, c);
            let filt = &weights[c * kh * kw..(c + 1) * kh * kw];
            let b = bias.map_or(T::zero(), |b| b[c]);
            let y = &mut out[(n * s.c + c) * ho * wo..(n * s.c + c + 1) * ho * wo];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b;
                    for ki in 0..kh {
                        let iy = (oy * spec.stride + ki) as isize - pad;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        let xrow = &x[iy as usize * s.w..(iy as usize + 1) * s.w];
                        for kj in 0..kw {
                            let ix = (ox * spec.stride + kj) as isize - pad;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            acc = acc + filt[ki * kw + kj] * xrow[ix as usize];
                        }
                    }
                    y[oy * wo + ox] = acc;
                }
            }
        }
    }
    Ok(Tensor::from_raw(out_shape, out))
}

pub fn depthwise_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &[T],
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let s = input.shape();
    let bias_probe: Option<Vec<T>> = spec.has_bias.then(|| vec![T::zero(); spec.out_channels]);
    let (ho, wo) = spec.check_operands(s, weights, bias_probe.as_deref())?;
    if grad_out.shape() != Shape::new(s.n, s.c, ho, wo) {
        return Err(Error::dim("grad_out", Shape::new(s.n, s.c, ho, wo), grad_out.shape()));
    }
    let (kh, kw) = spec.kernel;
    let pad = spec.padding as isize;
    let mut grad_w = vec![T::zero(); weights.len()];
    let mut grad_b = bias_probe;
    let mut grad_in = vec![T::zero(); s.len()];
    let plane = s.plane();
    for n in 0..s.n {
        for c in 0..s.c {
            let x = input.channel(n, c);
            let dy = grad_out.channel(n, c);
            let filt = &weights[c * kh * kw..(c + 1) * kh * kw];
            let gw = &mut grad_w[c * kh * kw..(c + 1) * kh * kw];
            let dx = &mut grad_in[(n * s.c + c) * plane..(n * s.c + c + 1) * plane];
            if let Some(gb) = grad_b.as_mut() {
                gb[c] = gb[c] + dy.iter().copied().sum::<T>();
            }
            for oy in 0..ho {
                for ox in 0..wo {
                    let g = dy[oy * wo + ox];
                    for ki in 0..kh {
                        let iy = (oy * spec.stride + ki) as isize - pad;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for kj in 0..kw {
                            let ix = (ox * spec.stride + kj) as isize - pad;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            let xi = iy as usize * s.w + ix as usize;
                            gw[ki * kw + kj] = gw[ki * kw + kj] + g * x[xi];
                            dx[xi] = dx[xi] + g * filt[ki * kw + kj];
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_raw(s, grad_in),
        weight: grad_w,
        bias: grad_b,
    })
}

/// Unfolds one sample into `[(c, ki, kj), (oy, ox)]` patches; out-of-range taps are zero.
fn im2col<T: Scalar>(x: &[T], s: Shape, spec: &ConvSpec, ho: usize, wo: usize, col: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let pad = spec.padding as isize;
    let positions = ho * wo;
    for c in 0..s.c {
        let plane = &x[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut col[((c * kh + ki) * kw + kj) * positions..((c * kh + ki) * kw + kj + 1) * positions];
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ki) as isize - pad;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= s.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * spec.stride + kj) as isize - pad;
                        *d = if ix < 0 || ix >= s.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im<T: Scalar>(col: &[T], s: Shape, spec: &ConvSpec, ho: usize, wo: usize, dx: &mut [T]) {
    let (kh, kw) = spec.kernel;
    let pad = spec.padding as isize;
    let positions = ho * wo;
    for c in 0..s.c {
        let plane = &mut dx[c * s.h * s.w..(c + 1) * s.h * s.w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &col[((c * kh + ki) * kw + kj) * positions..((c * kh + ki) * kw + kj + 1) * positions];
                for oy in 0..ho {
                    let iy = (oy * spec.stride + ki) as isize - pad;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * s.w..(iy as usize + 1) * s.w];
                    for ox in 0..wo {
                        let ix = (ox * spec.stride + kj) as isize - pad;
                        if ix >= 0 && ix < s.w as isize {
                            dst[ix as usize] = dst[ix as usize] + row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}
