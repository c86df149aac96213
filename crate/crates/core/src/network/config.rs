use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ConvSpec;

/// The four architecture combinations: GAP or GDC head, standard or
/// depthwise-separable 3×3 convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Base,
    Gdc,
    Dwc,
    DwcGdc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::Gdc, Variant::Dwc, Variant::DwcGdc];

    pub fn from_flags(use_dwc: bool, use_gdc: bool) -> Self {
        match (use_dwc, use_gdc) {
            (false, false) => Variant::Base,
            (false, true) => Variant::Gdc,
            (true, false) => Variant::Dwc,
            (true, true) => Variant::DwcGdc,
        }
    }

    pub fn use_dwc(self) -> bool {
        matches!(self, Variant::Dwc | Variant::DwcGdc)
    }

    pub fn use_gdc(self) -> bool {
        matches!(self, Variant::Gdc | Variant::DwcGdc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Gdc => "gdc",
            Variant::Dwc => "dwc",
            Variant::DwcGdc => "dwc-gdc",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "gdc" => Ok(Variant::Gdc),
            "dwc" => Ok(Variant::Dwc),
            "dwc-gdc" | "dwc+gdc" => Ok(Variant::DwcGdc),
            other => Err(Error::InvalidInput(format!(
                "unknown variant {other:?}; expected base, gdc, dwc or dwc-gdc"
            ))),
        }
    }
}

/// One fire module: a 1×1 squeeze feeding parallel 1×1 and 3×3 expand layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FireSpec {
    pub name: String,
    pub squeeze_1x1: usize,
    pub expand_1x1: usize,
    pub expand_3x3: usize,
}

impl FireSpec {
    pub fn new(name: impl Into<String>, squeeze_1x1: usize, expand_1x1: usize, expand_3x3: usize) -> Self {
        FireSpec {
            name: name.into(),
            squeeze_1x1,
            expand_1x1,
            expand_3x3,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.expand_1x1 + self.expand_3x3
    }
}

/// Backbone stage following conv1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// 3×3, stride 2, no padding.
    MaxPool { name: String },
    Fire(FireSpec),
}

impl Stage {
    pub fn name(&self) -> &str {
        match self {
            Stage::MaxPool { name } => name,
            Stage::Fire(f) => &f.name,
        }
    }
}

pub const INPUT_SIZE: usize = 113;
pub const INPUT_CHANNELS: usize = 3;
pub const EMBEDDING_DIM: usize = 1000;
pub const POOL_KERNEL: usize = 3;
pub const POOL_STRIDE: usize = 2;

/// Architecture description. [`NetworkConfig::new`] gives the full-size
/// 113×113 network; [`NetworkConfig::tiny`] a miniature with the same layer
/// types for gradient checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub use_dwc: bool,
    pub use_gdc: bool,
    pub num_classes: usize,
    pub input_size: usize,
    pub input_channels: usize,
    pub conv1_filters: usize,
    pub stages: Vec<Stage>,
    /// Filters of conv10, which is also the embedding dimensionality.
    pub embedding_dim: usize,
    pub dropout_rate: f64,
}

fn pool(name: &str) -> Stage {
    Stage::MaxPool { name: name.to_string() }
}

fn fire(name: &str, s: usize, e1: usize, e3: usize) -> Stage {
    Stage::Fire(FireSpec::new(name, s, e1, e3))
}

impl NetworkConfig {
    pub fn new(variant: Variant, num_classes: usize) -> Self {
        NetworkConfig {
            use_dwc: variant.use_dwc(),
            use_gdc: variant.use_gdc(),
            num_classes,
            input_size: INPUT_SIZE,
            input_channels: INPUT_CHANNELS,
            conv1_filters: 64,
            stages: vec![
                pool("maxpool1"),
                fire("fire2", 16, 64, 64),
                fire("fire3", 16, 64, 64),
                fire("fire4", 32, 128, 128),
                pool("maxpool4"),
                fire("fire5", 32, 128, 128),
                fire("fire6", 48, 192, 192),
                fire("fire7", 48, 192, 192),
                fire("fire8", 64, 256, 256),
                pool("maxpool8"),
                fire("fire9", 64, 256, 256),
            ],
            embedding_dim: EMBEDDING_DIM,
            dropout_rate: 0.5,
        }
    }

    /// 8×8 input, two fire modules, 3 classes.
    pub fn tiny(variant: Variant) -> Self {
        NetworkConfig {
            use_dwc: variant.use_dwc(),
            use_gdc: variant.use_gdc(),
            num_classes: 3,
            input_size: 8,
            input_channels: INPUT_CHANNELS,
            conv1_filters: 4,
            stages: vec![pool("maxpool1"), fire("fire2", 2, 3, 3), fire("fire3", 3, 2, 4)],
            embedding_dim: 5,
            dropout_rate: 0.5,
        }
    }

    pub fn variant(&self) -> Variant {
        Variant::from_flags(self.use_dwc, self.use_gdc)
    }

    pub fn fires(&self) -> impl Iterator<Item = &FireSpec> {
        self.stages.iter().filter_map(|s| match s {
            Stage::Fire(f) => Some(f),
            Stage::MaxPool { .. } => None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "classification head needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.input_size == 0 || self.input_channels == 0 || self.conv1_filters == 0 || self.embedding_dim == 0 {
            return Err(Error::InvalidInput("network dimensions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidInput(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        let mut seen = std::collections::HashSet::new();
        for stage in &self.stages {
            if !seen.insert(stage.name()) {
                return Err(Error::InvalidInput(format!("duplicate stage name {}", stage.name())));
            }
            if let Stage::Fire(f) = stage {
                if f.squeeze_1x1 == 0 || f.expand_1x1 == 0 || f.expand_3x3 == 0 {
                    return Err(Error::InvalidInput(format!("fire module {} has a zero filter count", f.name)));
                }
            }
        }
        if self.fires().next().is_none() {
            return Err(Error::InvalidInput("at least one fire module is required".into()));
        }
        // spatial feasibility
        let mut hw = self.input_size;
        for stage in &self.stages {
            if let Stage::MaxPool { name } = stage {
                if hw < POOL_KERNEL {
                    return Err(Error::dim(format!("{name} input rows"), format!(">= {POOL_KERNEL}"), hw));
                }
                hw = (hw - POOL_KERNEL) / POOL_STRIDE + 1;
            }
        }
        Ok(())
    }

    /// Channels entering conv10.
    pub fn backbone_channels(&self) -> usize {
        self.fires().last().map_or(self.conv1_filters, FireSpec::out_channels)
    }

    /// Spatial size of conv10's output (the pooling head's input).
    pub fn final_spatial(&self) -> usize {
        self.stages.iter().fold(self.input_size, |hw, s| match s {
            Stage::MaxPool { .. } => (hw.saturating_sub(POOL_KERNEL)) / POOL_STRIDE + 1,
            Stage::Fire(_) => hw,
        })
    }

    fn dropout_after_backbone_name(&self) -> String {
        let suffix: String = self
            .fires()
            .last()
            .map(|f| f.name.chars().filter(char::is_ascii_digit).collect())
            .unwrap_or_default();
        format!("dropout{suffix}")
    }

    pub(crate) fn head_pool_name(&self) -> &'static str {
        if self.use_gdc {
            "gdc10"
        } else {
            "averagepool10"
        }
    }

    /// Layer names and output sizes from conv1 through softmax, without
    /// allocating activations.
    pub fn shape_trace(&self) -> Result<Vec<TraceRow>> {
        self.validate()?;
        let mut rows = Vec::new();
        let mut hw = self.input_size;
        let mut c = self.conv1_filters;
        rows.push(TraceRow::new("conv1", c, hw));
        for stage in &self.stages {
            match stage {
                Stage::MaxPool { name } => {
                    hw = (hw - POOL_KERNEL) / POOL_STRIDE + 1;
                    rows.push(TraceRow::new(name, c, hw));
                }
                Stage::Fire(f) => {
                    c = f.out_channels();
                    rows.push(TraceRow::new(&f.name, c, hw));
                }
            }
        }
        rows.push(TraceRow::new(&self.dropout_after_backbone_name(), c, hw));
        rows.push(TraceRow::new("conv10", self.embedding_dim, hw));
        rows.push(TraceRow::new(self.head_pool_name(), self.embedding_dim, 1));
        rows.push(TraceRow::new("batchnorm10", self.embedding_dim, 1));
        rows.push(TraceRow::new("dropout10", self.embedding_dim, 1));
        rows.push(TraceRow::new("fc", self.num_classes, 1));
        rows.push(TraceRow::new("softmax", self.num_classes, 1));
        Ok(rows)
    }

    pub(crate) fn dropout9_name(&self) -> String {
        self.dropout_after_backbone_name()
    }
}

/// One line of a shape trace: layer name and its `c×h×w` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TraceRow {
    fn new(name: &str, channels: usize, hw: usize) -> Self {
        TraceRow {
            name: name.to_string(),
            channels,
            height: hw,
            width: hw,
        }
    }
}

impl fmt::Display for TraceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.height == self.width {
            write!(f, "{} {}²×{}", self.name, self.height, self.channels)
        } else {
            write!(f, "{} {}×{}×{}", self.name, self.height, self.width, self.channels)
        }
    }
}

/// Which parameters a count covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamScope {
    /// conv1 through conv10, plus the GDC head when present.
    Backbone,
    /// Backbone plus batchnorm10 (gamma, beta) and fc.
    Full,
}

/// The 3×3 convolution of a layer: either one standard conv or a
/// depthwise + pointwise pair, each stage with a bias.
pub(crate) fn conv3x3_specs(in_channels: usize, out_channels: usize, dwc: bool) -> Vec<ConvSpec> {
    if dwc {
        vec![ConvSpec::depthwise(in_channels, 3, 1), ConvSpec::pointwise(in_channels, out_channels)]
    } else {
        vec![ConvSpec::standard(in_channels, out_channels, 3, 1)]
    }
}

/// Closed-form learnable parameter count.
pub fn count_params(config: &NetworkConfig, scope: ParamScope) -> usize {
    let conv3 = |i: usize, o: usize| -> usize {
        if config.use_dwc {
            (i * 9 + i) + (i * o + o)
        } else {
            i * o * 9 + o
        }
    };
    let conv1x1 = |i: usize, o: usize| i * o + o;

    let mut total = conv3(config.input_channels, config.conv1_filters);
    let mut channels = config.conv1_filters;
    for f in config.fires() {
        total += conv1x1(channels, f.squeeze_1x1);
        total += conv1x1(f.squeeze_1x1, f.expand_1x1);
        total += conv3(f.squeeze_1x1, f.expand_3x3);
        channels = f.out_channels();
    }
    let e = config.embedding_dim;
    total += conv1x1(channels, e);
    if config.use_gdc {
        let k = config.final_spatial();
        total += e * k * k + e;
    }
    match scope {
        ParamScope::Backbone => total,
        ParamScope::Full => total + 2 * e + e * config.num_classes + config.num_classes,
    }
}
