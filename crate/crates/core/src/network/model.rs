use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, WeightError};
use crate::tensor::norm::{batchnorm_forward, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
use crate::tensor::{
    self, channel_concat, channel_split, conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward,
    maxpool2d_backward, maxpool2d_indexed, relu_backward, relu_inplace, BatchNormCache, ConvSpec, MaxPoolIndices,
    Scalar, Shape, Tensor,
};

use super::config::{conv3x3_specs, NetworkConfig, ParamScope, Stage, TraceRow, POOL_KERNEL, POOL_STRIDE};
use super::Embedding;

/// A named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Scalar = f32> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<T>,
    /// Running statistics are stored alongside parameters but never receive gradients.
    pub learnable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn scope(&self) -> ParamScope {
        if self.name.starts_with("bn10.") || self.name.starts_with("fc.") {
            ParamScope::Full
        } else {
            ParamScope::Backbone
        }
    }

    /// Layer prefix: everything before the final `.weight`/`.bias`/... component.
    pub fn layer(&self) -> &str {
        self.name.rsplit_once('.').map_or(&self.name, |(layer, _)| layer)
    }
}

/// Named float arrays as stored in a weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Flat, ordered collection of named arrays plus normalization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub use_dwc: bool,
    pub use_gdc: bool,
    pub num_classes: usize,
    pub bn_epsilon: f32,
    pub bn_momentum: f32,
    pub arrays: Vec<NamedArray>,
}

/// How to populate parameters when building a network.
#[derive(Debug, Clone)]
pub enum Init {
    Random { seed: u64 },
    Weights(WeightStore),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum InitRule {
    /// Uniform in `±gain·sqrt(3 / fan_in)`.
    Uniform { fan_in: usize, gain: f64 },
    Constant(f64),
}

#[derive(Debug, Clone)]
struct ConvStage {
    spec: ConvSpec,
    weight: usize,
    bias: usize,
}

/// A single convolution or a depthwise→pointwise pair.
#[derive(Debug, Clone)]
struct ConvUnit {
    stages: Vec<ConvStage>,
}

#[derive(Debug, Clone)]
enum Op {
    /// Convolution followed by ReLU.
    Conv { name: String, unit: ConvUnit },
    MaxPool { name: String },
    Fire {
        name: String,
        squeeze: ConvUnit,
        expand1: ConvUnit,
        expand3: ConvUnit,
    },
    Dropout { name: String },
    AvgPool { name: String },
    BatchNorm {
        name: String,
        gamma: usize,
        beta: usize,
        mean: usize,
        var: usize,
    },
    Linear { name: String, weight: usize, bias: usize },
}

impl Op {
    fn name(&self) -> &str {
        match self {
            Op::Conv { name, .. }
            | Op::MaxPool { name }
            | Op::Fire { name, .. }
            | Op::Dropout { name }
            | Op::AvgPool { name }
            | Op::BatchNorm { name, .. }
            | Op::Linear { name, .. } => name,
        }
    }
}

/// Whether a forward pass uses training behaviour (batch statistics,
/// active dropout) and with which dropout seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    Training { seed: u64 },
}

#[derive(Debug, Clone)]
enum Record<T: Scalar> {
    Conv {
        input: Tensor<T>,
        mids: Vec<Tensor<T>>,
        output: Tensor<T>,
    },
    MaxPool(MaxPoolIndices),
    Fire {
        input: Tensor<T>,
        squeezed: Tensor<T>,
        e1: Tensor<T>,
        e3: Tensor<T>,
        e3_mids: Vec<Tensor<T>>,
    },
    Dropout(Option<Vec<T>>),
    AvgPool(Shape),
    BatchNorm(Box<BatchNormCache<T>>),
    Linear(Tensor<T>),
}

/// Intermediates of a training-mode forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape<T: Scalar = f32> {
    records: Vec<Record<T>>,
    batch: usize,
    classes: usize,
}

impl<T: Scalar> Tape<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Hash of every ReLU on/off decision and max-pool winner in the pass.
    /// Two passes with equal signatures took the same piecewise-linear branch.
    pub fn activation_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mask = |t: &Tensor<T>, h: &mut std::collections::hash_map::DefaultHasher| {
            for chunk in t.data().chunks(64) {
                let bits = chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, &v)| if v > T::zero() { acc | (1 << i) } else { acc });
                bits.hash(h);
            }
        };
        for r in &self.records {
            match r {
                Record::Conv { output, .. } => mask(output, &mut h),
                Record::Fire { squeezed, e1, e3, .. } => {
                    mask(squeezed, &mut h);
                    mask(e1, &mut h);
                    mask(e3, &mut h);
                }
                Record::MaxPool(idx) => idx.argmax().hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}

/// One gradient array per parameter; `None` for running statistics.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f32> {
    pub grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(params: &[Param<T>]) -> Self {
        Gradients {
            grads: params
                .iter()
                .map(|p| p.learnable.then(|| vec![T::zero(); p.data.len()]))
                .collect(),
        }
    }

    fn accumulate(&mut self, index: usize, values: &[T]) {
        if let Some(g) = self.grads[index].as_mut() {
            for (a, &b) in g.iter_mut().zip(values) {
                *a = *a + b;
            }
        }
    }
}

/// A built network with its parameters.
///
/// Parameters are held in canonical order (conv1 first, fc last). A network
/// is immutable during inference and can be shared across threads.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    config: NetworkConfig,
    params: Vec<Param<T>>,
    ops: Vec<Op>,
    head_index: usize,
    bn_epsilon: f64,
    bn_momentum: f64,
}

struct Layout {
    params: Vec<(String, Vec<usize>, bool, InitRule)>,
    ops: Vec<Op>,
    head_index: usize,
}

impl Layout {
    fn push(&mut self, name: String, dims: Vec<usize>, learnable: bool, rule: InitRule) -> usize {
        self.params.push((name, dims, learnable, rule));
        self.params.len() - 1
    }

    fn conv_unit(&mut self, prefix: &str, specs: Vec<ConvSpec>) -> ConvUnit {
        let separable = specs.len() > 1;
        let stages = specs
            .into_iter()
            .map(|spec| {
                let base = if separable {
                    let part = match spec.mode {
                        tensor::ConvMode::Depthwise => "depthwise",
                        _ => "pointwise",
                    };
                    format!("{prefix}.{part}")
                } else {
                    prefix.to_string()
                };
                let (kh, kw) = spec.kernel;
                let fan_in = match spec.mode {
                    tensor::ConvMode::Depthwise => kh * kw,
                    _ => spec.in_channels * kh * kw,
                };
                // The depthwise half of a separable pair is linear (no ReLU follows it).
                let gain = if spec.mode == tensor::ConvMode::Depthwise { 1.0 } else { 2f64.sqrt() };
                let weight = self.push(format!("{base}.weight"), spec.weight_dims(), true, InitRule::Uniform { fan_in, gain });
                let bias = self.push(format!("{base}.bias"), vec![spec.out_channels], true, InitRule::Constant(0.0));
                ConvStage { spec, weight, bias }
            })
            .collect();
        ConvUnit { stages }
    }

    fn build(config: &NetworkConfig) -> Layout {
        let mut l = Layout {
            params: Vec::new(),
            ops: Vec::new(),
            head_index: 0,
        };
        let dwc = config.use_dwc;
        let conv1 = l.conv_unit("conv1", conv3x3_specs(config.input_channels, config.conv1_filters, dwc));
        l.ops.push(Op::Conv {
            name: "conv1".into(),
            unit: conv1,
        });
        let mut channels = config.conv1_filters;
        for stage in &config.stages {
            match stage {
                Stage::MaxPool { name } => l.ops.push(Op::MaxPool { name: name.clone() }),
                Stage::Fire(f) => {
                    let squeeze = l.conv_unit(&format!("{}.squeeze", f.name), vec![ConvSpec::standard(channels, f.squeeze_1x1, 1, 0)]);
                    let expand1 = l.conv_unit(
                        &format!("{}.expand1x1", f.name),
                        vec![ConvSpec::standard(f.squeeze_1x1, f.expand_1x1, 1, 0)],
                    );
                    let expand3 = l.conv_unit(&format!("{}.expand3x3", f.name), conv3x3_specs(f.squeeze_1x1, f.expand_3x3, dwc));
                    l.ops.push(Op::Fire {
                        name: f.name.clone(),
                        squeeze,
                        expand1,
                        expand3,
                    });
                    channels = f.out_channels();
                }
            }
        }
        l.ops.push(Op::Dropout {
            name: config.dropout9_name(),
        });
        let e = config.embedding_dim;
        let conv10 = l.conv_unit("conv10", vec![ConvSpec::standard(channels, e, 1, 0)]);
        l.ops.push(Op::Conv {
            name: "conv10".into(),
            unit: conv10,
        });
        if config.use_gdc {
            let k = config.final_spatial();
            let spec = ConvSpec::depthwise(e, k, 0);
            let weight = l.push("gdc10.weight".into(), spec.weight_dims(), true, InitRule::Constant(1.0 / (k * k) as f64));
            let bias = l.push("gdc10.bias".into(), vec![e], true, InitRule::Constant(0.0));
            l.ops.push(Op::Conv {
                name: "gdc10".into(),
                unit: ConvUnit {
                    stages: vec![ConvStage { spec, weight, bias }],
                },
            });
        } else {
            l.ops.push(Op::AvgPool {
                name: "averagepool10".into(),
            });
        }
        l.head_index = l.ops.len() - 1;
        let gamma = l.push("bn10.gamma".into(), vec![e], true, InitRule::Constant(1.0));
        let beta = l.push("bn10.beta".into(), vec![e], true, InitRule::Constant(0.0));
        let mean = l.push("bn10.running_mean".into(), vec![e], false, InitRule::Constant(0.0));
        let var = l.push("bn10.running_var".into(), vec![e], false, InitRule::Constant(1.0));
        l.ops.push(Op::BatchNorm {
            name: "batchnorm10".into(),
            gamma,
            beta,
            mean,
            var,
        });
        l.ops.push(Op::Dropout {
            name: "dropout10".into(),
        });
        let c = config.num_classes;
        let weight = l.push("fc.weight".into(), vec![c, e], true, InitRule::Uniform { fan_in: e, gain: 1.0 });
        let bias = l.push("fc.bias".into(), vec![c], true, InitRule::Constant(0.0));
        l.ops.push(Op::Linear {
            name: "fc".into(),
            weight,
            bias,
        });
        l
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Scalar> Network<T> {
    pub fn build(config: NetworkConfig, init: Init) -> Result<Self> {
        config.validate()?;
        let layout = Layout::build(&config);
        let params = match init {
            Init::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                layout
                    .params
                    .iter()
                    .map(|(name, dims, learnable, rule)| {
                        let len = dims.iter().product();
                        let data = match *rule {
                            InitRule::Uniform { fan_in, gain } => {
                                let bound = gain * (3.0 / fan_in as f64).sqrt();
                                (0..len).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect()
                            }
                            InitRule::Constant(v) => vec![T::from_f64(v); len],
                        };
                        Param {
                            name: name.clone(),
                            dims: dims.clone(),
                            data,
                            learnable: *learnable,
                        }
                    })
                    .collect()
            }
            Init::Weights(ref store) => Self::params_from_store(&config, &layout, store)?,
        };
        let (bn_epsilon, bn_momentum) = match &init {
            Init::Weights(store) => (store.bn_epsilon as f64, store.bn_momentum as f64),
            Init::Random { .. } => (DEFAULT_EPSILON, DEFAULT_MOMENTUM),
        };
        Ok(Network {
            config,
            params,
            ops: layout.ops,
            head_index: layout.head_index,
            bn_epsilon,
            bn_momentum,
        })
    }

    fn params_from_store(config: &NetworkConfig, layout: &Layout, store: &WeightStore) -> Result<Vec<Param<T>>> {
        if store.use_dwc != config.use_dwc || store.use_gdc != config.use_gdc {
            return Err(WeightError::FlagMismatch {
                file_dwc: store.use_dwc,
                file_gdc: store.use_gdc,
                want_dwc: config.use_dwc,
                want_gdc: config.use_gdc,
            }
            .into());
        }
        if store.num_classes != config.num_classes {
            return Err(WeightError::ClassMismatch {
                file: store.num_classes as u32,
                want: config.num_classes as u32,
            }
            .into());
        }
        let mut by_name = std::collections::HashMap::new();
        for a in &store.arrays {
            if by_name.insert(a.name.as_str(), a).is_some() {
                return Err(WeightError::DuplicateEntry(a.name.clone()).into());
            }
        }
        let mut params = Vec::with_capacity(layout.params.len());
        for (name, dims, learnable, _) in &layout.params {
            let array = by_name
                .remove(name.as_str())
                .ok_or_else(|| WeightError::MissingEntry(name.clone()))?;
            if &array.dims != dims || array.data.len() != dims.iter().product::<usize>() {
                return Err(WeightError::ShapeMismatch {
                    name: name.clone(),
                    expected: dims.clone(),
                    found: array.dims.clone(),
                }
                .into());
            }
            params.push(Param {
                name: name.clone(),
                dims: dims.clone(),
                data: array.data.iter().map(|&v| T::from_f64(v as f64)).collect(),
                learnable: *learnable,
            });
        }
        if let Some(extra) = store.arrays.iter().find(|a| by_name.contains_key(a.name.as_str())) {
            return Err(WeightError::UnexpectedEntry(extra.name.clone()).into());
        }
        Ok(params)
    }

    /// Snapshot of all parameters in canonical order, converted to `f32`.
    pub fn to_store(&self) -> WeightStore {
        WeightStore {
            use_dwc: self.config.use_dwc,
            use_gdc: self.config.use_gdc,
            num_classes: self.config.num_classes,
            bn_epsilon: self.bn_epsilon as f32,
            bn_momentum: self.bn_momentum as f32,
            arrays: self
                .params
                .iter()
                .map(|p| NamedArray {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    data: p.data.iter().map(|v| v.as_f64() as f32).collect(),
                })
                .collect(),
        }
    }

    /// Same network with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    data: p.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    learnable: p.learnable,
                })
                .collect(),
            ops: self.ops.clone(),
            head_index: self.head_index,
            bn_epsilon: self.bn_epsilon,
            bn_momentum: self.bn_momentum,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn bn_epsilon(&self) -> f64 {
        self.bn_epsilon
    }

    pub fn bn_momentum(&self) -> f64 {
        self.bn_momentum
    }

    /// Learnable parameter scalars within `scope`, by enumerating arrays.
    pub fn learnable_len(&self, scope: ParamScope) -> usize {
        self.params
            .iter()
            .filter(|p| p.learnable && (scope == ParamScope::Full || p.scope() == ParamScope::Backbone))
            .map(|p| p.data.len())
            .sum()
    }

    pub fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, self.config.input_channels, self.config.input_size, self.config.input_size)
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<()> {
        let s = batch.shape();
        let want = self.input_shape(s.n);
        for (axis, got, expect) in [("input channels", s.c, want.c), ("input rows", s.h, want.h), ("input cols", s.w, want.w)] {
            if got != expect {
                return Err(Error::dim(axis, expect, got));
            }
        }
        if s.n == 0 {
            return Err(Error::dim("batch", ">= 1", 0));
        }
        Ok(())
    }

    /// Logits `n×C×1×1`.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        self.run(batch.clone(), mode, self.ops.len(), None, None)
    }

    /// Training-mode forward that records what [`Network::backward`] needs.
    pub fn forward_train(&self, batch: &Tensor<T>, seed: u64) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(batch)?;
        let mut records = Vec::with_capacity(self.ops.len());
        let logits = self.run(batch.clone(), Mode::Training { seed }, self.ops.len(), Some(&mut records), None)?;
        Ok((
            logits,
            Tape {
                records,
                batch: batch.shape().n,
                classes: self.config.num_classes,
            },
        ))
    }

    /// Actual output shapes of every layer on an inference pass, in the same
    /// row format as [`NetworkConfig::shape_trace`].
    pub fn trace_forward(&self, batch: &Tensor<T>) -> Result<Vec<TraceRow>> {
        self.check_input(batch)?;
        let mut rows = Vec::new();
        let logits = self.run(batch.clone(), Mode::Inference, self.ops.len(), None, Some(&mut rows))?;
        let s = logits.shape();
        rows.push(TraceRow {
            name: "softmax".into(),
            channels: s.c,
            height: s.h,
            width: s.w,
        });
        Ok(rows)
    }

    /// Pooling-head output (`n×E×1×1`) in inference mode.
    pub fn embed_tensor(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch)?;
        self.run(batch.clone(), Mode::Inference, self.head_index + 1, None, None)
    }

    fn run(
        &self,
        mut x: Tensor<T>,
        mode: Mode,
        stop: usize,
        mut tape: Option<&mut Vec<Record<T>>>,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<Tensor<T>> {
        let training = matches!(mode, Mode::Training { .. });
        for (index, op) in self.ops.iter().take(stop).enumerate() {
            let (y, record) = match op {
                Op::Conv { unit, .. } => {
                    let (mut y, mids) = self.unit_forward(unit, &x)?;
                    relu_inplace(&mut y);
                    let record = tape.is_some().then(|| Record::Conv {
                        input: x,
                        mids,
                        output: y.clone(),
                    });
                    (y, record)
                }
                Op::MaxPool { .. } => {
                    let (y, idx) = maxpool2d_indexed(&x, POOL_KERNEL, POOL_STRIDE)?;
                    (y, tape.is_some().then_some(Record::MaxPool(idx)))
                }
                Op::Fire {
                    squeeze,
                    expand1,
                    expand3,
                    ..
                } => {
                    let (mut s, _) = self.unit_forward(squeeze, &x)?;
                    relu_inplace(&mut s);
                    let (mut e1, _) = self.unit_forward(expand1, &s)?;
                    relu_inplace(&mut e1);
                    let (mut e3, e3_mids) = self.unit_forward(expand3, &s)?;
                    relu_inplace(&mut e3);
                    let y = channel_concat(&e1, &e3)?;
                    let record = tape.is_some().then(|| Record::Fire {
                        input: x,
                        squeezed: s,
                        e1,
                        e3,
                        e3_mids,
                    });
                    (y, record)
                }
                Op::Dropout { .. } => match mode {
                    Mode::Training { seed } if self.config.dropout_rate > 0.0 => {
                        let mask = tensor::dropout_mask::<T>(x.shape(), self.config.dropout_rate, mix_seed(seed, index as u64))?;
                        let y = tensor::activation::apply_mask(&x, &mask);
                        (y, tape.is_some().then_some(Record::Dropout(Some(mask))))
                    }
                    _ => (x, tape.is_some().then_some(Record::Dropout(None))),
                },
                Op::AvgPool { .. } => {
                    let y = global_avg_pool(&x);
                    (y, tape.is_some().then_some(Record::AvgPool(x.shape())))
                }
                Op::BatchNorm {
                    gamma,
                    beta,
                    mean,
                    var,
                    ..
                } => {
                    let (y, cache) = batchnorm_forward(
                        &x,
                        &self.params[*gamma].data,
                        &self.params[*beta].data,
                        &self.params[*mean].data,
                        &self.params[*var].data,
                        self.bn_epsilon,
                        training,
                    )?;
                    let record = match (tape.is_some(), cache) {
                        (true, Some(c)) => Some(Record::BatchNorm(Box::new(c))),
                        (true, None) => {
                            return Err(Error::State("batch statistics missing in training pass".into()));
                        }
                        (false, _) => None,
                    };
                    (y, record)
                }
                Op::Linear { weight, bias, .. } => {
                    let y = self.linear_forward(&x, *weight, *bias)?;
                    (y, tape.is_some().then(|| Record::Linear(x)))
                }
            };
            if let Some(rows) = trace.as_deref_mut() {
                let s = y.shape();
                rows.push(TraceRow {
                    name: op.name().to_string(),
                    channels: s.c,
                    height: s.h,
                    width: s.w,
                });
            }
            if let (Some(t), Some(r)) = (tape.as_deref_mut(), record) {
                t.push(r);
            }
            x = y;
        }
        Ok(x)
    }

    fn unit_forward(&self, unit: &ConvUnit, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut mids = Vec::new();
        let mut cur: Option<Tensor<T>> = None;
        for (i, st) in unit.stages.iter().enumerate() {
            let input = cur.as_ref().unwrap_or(x);
            let y = conv2d(input, &st.spec, &self.params[st.weight].data, Some(&self.params[st.bias].data))?;
            if i + 1 < unit.stages.len() {
                mids.push(y.clone());
            }
            cur = Some(y);
        }
        Ok((cur.expect("conv unit has at least one stage"), mids))
    }

    fn unit_backward(
        &self,
        unit: &ConvUnit,
        input: &Tensor<T>,
        mids: &[Tensor<T>],
        grad_out: Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let mut g = grad_out;
        for (i, st) in unit.stages.iter().enumerate().rev() {
            let x = if i == 0 { input } else { &mids[i - 1] };
            let cg = conv2d_backward(x, &st.spec, &self.params[st.weight].data, &g)?;
            grads.accumulate(st.weight, &cg.weight);
            if let Some(b) = cg.bias {
                grads.accumulate(st.bias, &b);
            }
            g = cg.input;
        }
        Ok(g)
    }

    fn linear_forward(&self, x: &Tensor<T>, weight: usize, bias: usize) -> Result<Tensor<T>> {
        let s = x.shape();
        let inputs = s.sample_len();
        let w = &self.params[weight];
        let (outputs, expect_in) = (w.dims[0], w.dims[1]);
        if inputs != expect_in {
            return Err(Error::dim("fc input features", expect_in, inputs));
        }
        let b = &self.params[bias].data;
        let mut y = Vec::with_capacity(s.n * outputs);
        for _ in 0..s.n {
            y.extend_from_slice(b);
        }
        T::gemm(s.n, inputs, outputs, T::one(), x.data(), inputs as isize, 1, &w.data, 1, inputs as isize, T::one(), &mut y, outputs as isize, 1);
        Ok(Tensor::from_raw(Shape::new(s.n, outputs, 1, 1), y))
    }

    /// Gradients of the loss with respect to every learnable parameter, given
    /// the gradient with respect to the logits.
    pub fn backward(&self, tape: &Tape<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        if tape.records.len() != self.ops.len() {
            return Err(Error::State(format!(
                "tape has {} records for {} layers",
                tape.records.len(),
                self.ops.len()
            )));
        }
        let expect = Shape::new(tape.batch, tape.classes, 1, 1);
        if grad_logits.shape() != expect {
            return Err(Error::dim("grad_logits", expect, grad_logits.shape()));
        }
        let mut grads = Gradients::zeros_like(&self.params);
        let mut g = grad_logits.clone();
        for (op, record) in self.ops.iter().zip(&tape.records).rev() {
            g = match (op, record) {
                (Op::Conv { unit, .. }, Record::Conv { input, mids, output }) => {
                    let g = relu_backward(output, &g)?;
                    self.unit_backward(unit, input, mids, g, &mut grads)?
                }
                (Op::MaxPool { .. }, Record::MaxPool(idx)) => maxpool2d_backward(idx, &g)?,
                (
                    Op::Fire {
                        squeeze,
                        expand1,
                        expand3,
                        ..
                    },
                    Record::Fire {
                        input,
                        squeezed,
                        e1,
                        e3,
                        e3_mids,
                    },
                ) => {
                    let (g1, g3) = channel_split(&g, e1.shape().c)?;
                    let g1 = relu_backward(e1, &g1)?;
                    let g3 = relu_backward(e3, &g3)?;
                    let mut ds = self.unit_backward(expand1, squeezed, &[], g1, &mut grads)?;
                    ds.add_assign(&self.unit_backward(expand3, squeezed, e3_mids, g3, &mut grads)?);
                    let ds = relu_backward(squeezed, &ds)?;
                    self.unit_backward(squeeze, input, &[], ds, &mut grads)?
                }
                (Op::Dropout { .. }, Record::Dropout(mask)) => match mask {
                    Some(m) => tensor::dropout_backward(m, &g)?,
                    None => g,
                },
                (Op::AvgPool { .. }, Record::AvgPool(shape)) => global_avg_pool_backward(*shape, &g)?,
                (Op::BatchNorm { gamma, beta, .. }, Record::BatchNorm(cache)) => {
                    let bg = tensor::batchnorm_backward(cache, &self.params[*gamma].data, &g)?;
                    grads.accumulate(*gamma, &bg.gamma);
                    grads.accumulate(*beta, &bg.beta);
                    bg.input
                }
                (Op::Linear { weight, bias, .. }, Record::Linear(x)) => {
                    let s = x.shape();
                    let inputs = s.sample_len();
                    let w = &self.params[*weight];
                    let outputs = w.dims[0];
                    let mut gw = vec![T::zero(); outputs * inputs];
                    // dW = dYᵀ · X
                    T::gemm(outputs, s.n, inputs, T::one(), g.data(), 1, outputs as isize, x.data(), inputs as isize, 1, T::zero(), &mut gw, inputs as isize, 1);
                    grads.accumulate(*weight, &gw);
                    let mut gb = vec![T::zero(); outputs];
                    for row in g.data().chunks_exact(outputs) {
                        for (a, &b) in gb.iter_mut().zip(row) {
                            *a = *a + b;
                        }
                    }
                    grads.accumulate(*bias, &gb);
                    // dX = dY · W
                    let mut dx = vec![T::zero(); s.len()];
                    T::gemm(s.n, outputs, inputs, T::one(), g.data(), outputs as isize, 1, &w.data, inputs as isize, 1, T::zero(), &mut dx, inputs as isize, 1);
                    Tensor::from_raw(s, dx)
                }
                _ => return Err(Error::State(format!("tape record does not match layer {}", op.name()))),
            };
        }
        Ok(grads)
    }

    /// Folds the batch statistics recorded on `tape` into the running estimates.
    pub fn update_running_stats(&mut self, tape: &Tape<T>) {
        let m = T::from_f64(self.bn_momentum);
        let keep = T::one() - m;
        for (op, record) in self.ops.iter().zip(&tape.records) {
            if let (Op::BatchNorm { mean, var, .. }, Record::BatchNorm(cache)) = (op, record) {
                let count = cache.count as f64;
                let unbias = T::from_f64(if count > 1.0 { count / (count - 1.0) } else { 1.0 });
                for c in 0..cache.batch_mean.len() {
                    let rm = &mut self.params[*mean].data[c];
                    *rm = keep * *rm + m * cache.batch_mean[c];
                    let rv = &mut self.params[*var].data[c];
                    *rv = keep * *rv + m * cache.batch_var[c] * unbias;
                }
            }
        }
    }
}

impl Network<f32> {
    /// One embedding per sample, taken at the pooling-head output.
    pub fn embed(&self, batch: &Tensor<f32>) -> Result<Vec<Embedding>> {
        let pooled = self.embed_tensor(batch)?;
        Ok((0..pooled.shape().n)
            .map(|n| Embedding::new_unchecked(pooled.sample(n).to_vec()))
            .collect())
    }
}
