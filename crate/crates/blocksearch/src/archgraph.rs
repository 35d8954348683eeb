//! Compiling a block config into a full network graph.
//!
//! The network is a stem convolution, `stages` stages of `n` residual blocks,
//! and a pooled classifier head. Stage `s` runs at `initial_filters * 2^(s-1)`
//! channels; the first block of every stage after the first strides by 2 and
//! doubles the channel count. Inside a block the entry 1x1 convolution cuts
//! the width to a quarter of the block's output channels, the sampled branches
//! run in parallel on that bottleneck width, their combination is expanded
//! back by an exit 1x1 convolution, and the block input is added through a
//! shortcut (identity, or a strided 1x1 projection in reduction blocks). Every
//! convolution is followed by batch norm and ReLU.

use crate::blockspace::{BlockConfig, CombinerKind, OpKind};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fmt::Write as _;

/// Network assembly parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MacroConfigRepr", into = "MacroConfigRepr")]
pub struct MacroConfig {
    stages: usize,
    repeats: usize,
    initial_filters: usize,
    input_shape: (usize, usize, usize),
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct MacroConfigRepr {
    stages: usize,
    repeats: usize,
    initial_filters: usize,
    input_shape: (usize, usize, usize),
    num_classes: usize,
}

impl MacroConfig {
    pub fn new(
        stages: usize,
        repeats: usize,
        initial_filters: usize,
        input_shape: (usize, usize, usize),
        num_classes: usize,
    ) -> Result<Self> {
        if stages < 1 {
            return Err(Error::InvalidConfig("stage count must be at least 1".into()));
        }
        if repeats < 1 {
            return Err(Error::InvalidConfig("repeats per stage must be at least 1".into()));
        }
        if initial_filters < 1 || !initial_filters.is_multiple_of(4) {
            return Err(Error::InvalidConfig(format!(
                "initial_filters {initial_filters} must be a positive multiple of 4 \
                 (the bottleneck width is a quarter of the block width)"
            )));
        }
        let (h, w, c) = input_shape;
        if c < 1 {
            return Err(Error::InvalidConfig("input must have at least one channel".into()));
        }
        let min_side = 1usize << (stages - 1);
        if h < min_side || w < min_side {
            return Err(Error::InvalidConfig(format!(
                "input {h}x{w} too small for {stages} stages: each stage after the \
                 first halves the spatial size, so both sides must be at least {min_side}"
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidConfig("need at least 2 classes".into()));
        }
        Ok(MacroConfig { stages, repeats, initial_filters, input_shape, num_classes })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn repeats(&self) -> usize {
        self.repeats
    }

    pub fn initial_filters(&self) -> usize {
        self.initial_filters
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn with_input(&self, input_shape: (usize, usize, usize), num_classes: usize) -> Result<Self> {
        MacroConfig::new(self.stages, self.repeats, self.initial_filters, input_shape, num_classes)
    }

    /// Parse a compact spec like `stages=3,n=4,filters=96,input=32x32x3,classes=10`.
    /// Omitted keys keep their defaults.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let d = MacroConfig::default();
        let (mut stages, mut repeats, mut filters) = (d.stages, d.repeats, d.initial_filters);
        let mut input = d.input_shape;
        let mut classes = d.num_classes;
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("macro spec item \"{part}\" is not key=value")))?;
            let value = value.trim();
            let parse_num = |what: &str, v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| Error::Parse(format!("{what} \"{v}\" is not an integer")))
            };
            match key.trim() {
                "stages" => stages = parse_num("stage count", value)?,
                "n" | "repeats" => repeats = parse_num("repeat count", value)?,
                "filters" | "initial_filters" => filters = parse_num("filter count", value)?,
                "classes" => classes = parse_num("class count", value)?,
                "input" => {
                    let dims: Vec<usize> = value
                        .split('x')
                        .map(|v| parse_num("input dimension", v))
                        .collect::<Result<_>>()?;
                    if dims.len() != 3 {
                        return Err(Error::Parse(format!("input \"{value}\" must be HxWxC")));
                    }
                    input = (dims[0], dims[1], dims[2]);
                }
                other => return Err(Error::Parse(format!("unknown macro spec key \"{other}\""))),
            }
        }
        MacroConfig::new(stages, repeats, filters, input, classes)
    }
}

impl Default for MacroConfig {
    /// Defaults are calibrated so the reported best CIFAR-10 block compiles
    /// to roughly 2.1M parameters (see the acceptance suite).
    fn default() -> Self {
        MacroConfig::new(3, 4, 96, (32, 32, 3), 10).expect("default macro config is valid")
    }
}

impl TryFrom<MacroConfigRepr> for MacroConfig {
    type Error = Error;

    fn try_from(r: MacroConfigRepr) -> Result<Self> {
        MacroConfig::new(r.stages, r.repeats, r.initial_filters, r.input_shape, r.num_classes)
    }
}

impl From<MacroConfig> for MacroConfigRepr {
    fn from(m: MacroConfig) -> Self {
        MacroConfigRepr {
            stages: m.stages,
            repeats: m.repeats,
            initial_filters: m.initial_filters,
            input_shape: m.input_shape,
            num_classes: m.num_classes,
        }
    }
}

/// Feature shape flowing between nodes (per example, batch excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    /// Spatial feature map: height x width x channels.
    Map { h: usize, w: usize, c: usize },
    /// Flat feature vector of `c` values.
    Flat { c: usize },
}

impl FeatureShape {
    pub fn channels(&self) -> usize {
        match *self {
            FeatureShape::Map { c, .. } => c,
            FeatureShape::Flat { c } => c,
        }
    }
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FeatureShape::Map { h, w, c } => write!(f, "{h}x{w}x{c}"),
            FeatureShape::Flat { c } => write!(f, "{c}"),
        }
    }
}

/// Output spatial extent and leading pad of a same-padded convolution.
///
/// Same padding keeps `out = ceil(in / stride)`; the total pad splits with the
/// smaller half in front.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let needed = (out - 1) * stride + kernel;
    let total = needed.saturating_sub(input);
    (out, total / 2)
}

/// Typed layer node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    /// The first convolution, reading the network input.
    StemConv { kernel: (usize, usize), stride: usize, c_in: usize, c_out: usize },
    Conv { kernel: (usize, usize), stride: usize, c_in: usize, c_out: usize },
    DepthwiseConv { kernel: usize, stride: usize, channels: usize },
    BatchNorm { channels: usize },
    Relu,
    Combine { kind: CombinerKind },
    ResidualAdd,
    GlobalAvgPool,
    Dense { c_in: usize, c_out: usize },
    Softmax,
}

impl LayerKind {
    /// Trainable parameter count. Convolutions carry no bias (batch norm
    /// always follows); batch norm has scale and shift; dense keeps a bias.
    pub fn param_count(&self) -> u64 {
        match *self {
            LayerKind::StemConv { kernel, c_in, c_out, .. }
            | LayerKind::Conv { kernel, c_in, c_out, .. } => {
                (kernel.0 * kernel.1 * c_in * c_out) as u64
            }
            LayerKind::DepthwiseConv { kernel, channels, .. } => (kernel * kernel * channels) as u64,
            LayerKind::BatchNorm { channels } => 2 * channels as u64,
            LayerKind::Dense { c_in, c_out } => (c_in * c_out + c_out) as u64,
            _ => 0,
        }
    }

    /// Multiply-accumulate count for one example, given the node's output
    /// shape. Pooling, normalization, activations, and merges count as free.
    pub fn mac_count(&self, out_shape: FeatureShape) -> u64 {
        match *self {
            LayerKind::StemConv { kernel, c_in, c_out, .. }
            | LayerKind::Conv { kernel, c_in, c_out, .. } => match out_shape {
                FeatureShape::Map { h, w, .. } => (kernel.0 * kernel.1 * c_in * c_out) as u64 * (h * w) as u64,
                FeatureShape::Flat { .. } => 0,
            },
            LayerKind::DepthwiseConv { kernel, channels, .. } => match out_shape {
                FeatureShape::Map { h, w, .. } => (kernel * kernel * channels) as u64 * (h * w) as u64,
                FeatureShape::Flat { .. } => 0,
            },
            LayerKind::Dense { c_in, c_out } => (c_in * c_out) as u64,
            _ => 0,
        }
    }

    fn describe(&self) -> String {
        match *self {
            LayerKind::StemConv { kernel, stride, c_in, c_out } => {
                format!("stem_conv {}x{} s{stride} {c_in}->{c_out}", kernel.0, kernel.1)
            }
            LayerKind::Conv { kernel, stride, c_in, c_out } => {
                format!("conv {}x{} s{stride} {c_in}->{c_out}", kernel.0, kernel.1)
            }
            LayerKind::DepthwiseConv { kernel, stride, channels } => {
                format!("dwconv {kernel}x{kernel} s{stride} {channels}")
            }
            LayerKind::BatchNorm { channels } => format!("batch_norm {channels}"),
            LayerKind::Relu => "relu".into(),
            LayerKind::Combine { kind } => format!("combine {kind}"),
            LayerKind::ResidualAdd => "residual_add".into(),
            LayerKind::GlobalAvgPool => "global_avg_pool".into(),
            LayerKind::Dense { c_in, c_out } => format!("dense {c_in}->{c_out}"),
            LayerKind::Softmax => "softmax".into(),
        }
    }
}

/// One node in the computation graph. Nodes with no inputs read the network
/// input tensor.
#[derive(Debug, Clone)]
pub struct LayerNode {
    pub id: usize,
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<usize>,
}

/// A compiled network: topologically ordered nodes with inferred shapes.
#[derive(Debug, Clone)]
pub struct ArchGraph {
    block: BlockConfig,
    macro_cfg: MacroConfig,
    nodes: Vec<LayerNode>,
    shapes: Vec<FeatureShape>,
}

impl ArchGraph {
    pub fn block(&self) -> &BlockConfig {
        &self.block
    }

    pub fn macro_config(&self) -> &MacroConfig {
        &self.macro_cfg
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &LayerNode {
        &self.nodes[id]
    }

    /// Inferred output shape of every node, aligned with `nodes()`.
    pub fn shapes(&self) -> &[FeatureShape] {
        &self.shapes
    }

    pub fn output_shape(&self, id: usize) -> FeatureShape {
        self.shapes[id]
    }

    /// Recomputes every node's output shape from the input shape alone.
    pub fn infer_shapes(&self) -> Result<Vec<FeatureShape>> {
        infer_shapes(&self.nodes, self.macro_cfg.input_shape())
    }

    pub fn count_params(&self) -> u64 {
        self.nodes.iter().map(|n| n.kind.param_count()).sum()
    }

    pub fn count_macs(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| n.kind.mac_count(self.shapes[n.id]))
            .sum()
    }

    /// Deterministic human-readable listing: one line per node with shape and
    /// parameter count, then graph totals. Identical graphs emit identical
    /// bytes.
    pub fn describe(&self) -> String {
        let (h, w, c) = self.macro_cfg.input_shape();
        let mut out = String::new();
        let _ = writeln!(out, "block {}", self.block);
        let _ = writeln!(
            out,
            "macro stages={} n={} filters={} input={h}x{w}x{c} classes={}",
            self.macro_cfg.stages(),
            self.macro_cfg.repeats(),
            self.macro_cfg.initial_filters(),
            self.macro_cfg.num_classes()
        );
        for node in &self.nodes {
            let inputs = if node.inputs.is_empty() {
                "input".to_string()
            } else {
                node.inputs
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let _ = writeln!(
                out,
                "{:>4}  {:<28} {:<28} <- {:<12} {:>12}  params {}",
                node.id,
                node.name,
                node.kind.describe(),
                inputs,
                self.shapes[node.id].to_string(),
                node.kind.param_count()
            );
        }
        let _ = writeln!(out, "total params {}", self.count_params());
        let _ = writeln!(out, "total macs {}", self.count_macs());
        out
    }

    /// SHA-256 of the description text; checkpoints record it so parameters
    /// can never be loaded into a different architecture.
    pub fn description_hash(&self) -> String {
        let digest = Sha256::digest(self.describe().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}

/// Shape inference over a topologically ordered node list.
pub fn infer_shapes(nodes: &[LayerNode], input: (usize, usize, usize)) -> Result<Vec<FeatureShape>> {
    let (ih, iw, ic) = input;
    let input_shape = FeatureShape::Map { h: ih, w: iw, c: ic };
    let mut shapes: Vec<FeatureShape> = Vec::with_capacity(nodes.len());

    let expect_map = |shape: FeatureShape, node: &LayerNode| -> Result<(usize, usize, usize)> {
        match shape {
            FeatureShape::Map { h, w, c } => Ok((h, w, c)),
            FeatureShape::Flat { .. } => Err(Error::Shape(format!(
                "node {} ({}) needs a spatial input, got {shape}",
                node.id, node.name
            ))),
        }
    };

    for node in nodes {
        for &inp in &node.inputs {
            if inp >= node.id {
                return Err(Error::Shape(format!(
                    "node {} ({}) consumes node {inp}, which does not precede it",
                    node.id, node.name
                )));
            }
        }
        let in_shape = |idx: usize| -> FeatureShape {
            if node.inputs.is_empty() {
                input_shape
            } else {
                shapes[node.inputs[idx]]
            }
        };
        let shape = match &node.kind {
            LayerKind::StemConv { kernel, stride, c_in, c_out }
            | LayerKind::Conv { kernel, stride, c_in, c_out } => {
                let (h, w, c) = expect_map(in_shape(0), node)?;
                if c != *c_in {
                    return Err(Error::Shape(format!(
                        "node {} ({}) expects {c_in} input channels, got {c}",
                        node.id, node.name
                    )));
                }
                let (oh, _) = same_padding(h, kernel.0, *stride);
                let (ow, _) = same_padding(w, kernel.1, *stride);
                FeatureShape::Map { h: oh, w: ow, c: *c_out }
            }
            LayerKind::DepthwiseConv { kernel, stride, channels } => {
                let (h, w, c) = expect_map(in_shape(0), node)?;
                if c != *channels {
                    return Err(Error::Shape(format!(
                        "node {} ({}) expects {channels} channels, got {c}",
                        node.id, node.name
                    )));
                }
                let (oh, _) = same_padding(h, *kernel, *stride);
                let (ow, _) = same_padding(w, *kernel, *stride);
                FeatureShape::Map { h: oh, w: ow, c: *channels }
            }
            LayerKind::BatchNorm { channels } => {
                let shape = in_shape(0);
                if shape.channels() != *channels {
                    return Err(Error::Shape(format!(
                        "node {} ({}) normalizes {channels} channels, got {}",
                        node.id,
                        node.name,
                        shape.channels()
                    )));
                }
                shape
            }
            LayerKind::Relu | LayerKind::Softmax => in_shape(0),
            LayerKind::Combine { kind } => {
                let first = expect_map(in_shape(0), node)?;
                let mut channels = first.2;
                for idx in 1..node.inputs.len() {
                    let (h, w, c) = expect_map(in_shape(idx), node)?;
                    if (h, w) != (first.0, first.1) {
                        return Err(Error::Shape(format!(
                            "combine node {} ({}): input {} is {h}x{w}x{c} but input {} is {}x{}x{}",
                            node.id, node.name, node.inputs[idx], node.inputs[0], first.0, first.1, first.2
                        )));
                    }
                    if kind.is_additive() && c != first.2 {
                        return Err(Error::Shape(format!(
                            "additive combine node {} ({}): input {} has {c} channels but input {} has {}",
                            node.id, node.name, node.inputs[idx], node.inputs[0], first.2
                        )));
                    }
                    if !kind.is_additive() {
                        channels += c;
                    }
                }
                FeatureShape::Map { h: first.0, w: first.1, c: channels }
            }
            LayerKind::ResidualAdd => {
                let a = in_shape(0);
                let b = in_shape(1);
                if a != b {
                    return Err(Error::Shape(format!(
                        "residual_add node {} ({}): input {} is {a} but input {} is {b}",
                        node.id, node.name, node.inputs[0], node.inputs[1]
                    )));
                }
                a
            }
            LayerKind::GlobalAvgPool => {
                let (_, _, c) = expect_map(in_shape(0), node)?;
                FeatureShape::Flat { c }
            }
            LayerKind::Dense { c_in, c_out } => {
                let shape = in_shape(0);
                match shape {
                    FeatureShape::Flat { c } if c == *c_in => FeatureShape::Flat { c: *c_out },
                    _ => {
                        return Err(Error::Shape(format!(
                            "dense node {} ({}) expects a flat {c_in}-vector, got {shape}",
                            node.id, node.name
                        )))
                    }
                }
            }
        };
        shapes.push(shape);
    }
    Ok(shapes)
}

struct GraphBuilder {
    nodes: Vec<LayerNode>,
}

impl GraphBuilder {
    fn push(&mut self, name: String, kind: LayerKind, inputs: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(LayerNode { id, name, kind, inputs });
        id
    }

    /// conv -> bn -> relu; returns the relu node id.
    #[allow(clippy::too_many_arguments)]
    fn conv_bn_relu(
        &mut self,
        prefix: &str,
        suffix: &str,
        kernel: (usize, usize),
        stride: usize,
        c_in: usize,
        c_out: usize,
        input: usize,
    ) -> usize {
        let sep = if suffix.is_empty() { "" } else { "_" };
        let conv = self.push(
            format!("{prefix}.conv{sep}{suffix}"),
            LayerKind::Conv { kernel, stride, c_in, c_out },
            vec![input],
        );
        let bn = self.push(
            format!("{prefix}.bn{sep}{suffix}"),
            LayerKind::BatchNorm { channels: c_out },
            vec![conv],
        );
        self.push(format!("{prefix}.relu{sep}{suffix}"), LayerKind::Relu, vec![bn])
    }
}

/// Compiles a block config and macro config into a network graph with
/// validated shapes.
pub fn build_architecture(block: &BlockConfig, macro_cfg: &MacroConfig) -> Result<ArchGraph> {
    let mut b = GraphBuilder { nodes: Vec::new() };
    let f0 = macro_cfg.initial_filters();
    let (_, _, c_in) = macro_cfg.input_shape();

    let stem_conv = b.push(
        "stem.conv".into(),
        LayerKind::StemConv { kernel: (3, 3), stride: 1, c_in, c_out: f0 },
        vec![],
    );
    let stem_bn = b.push("stem.bn".into(), LayerKind::BatchNorm { channels: f0 }, vec![stem_conv]);
    let mut last = b.push("stem.relu".into(), LayerKind::Relu, vec![stem_bn]);
    let mut last_channels = f0;

    for stage in 1..=macro_cfg.stages() {
        let c_out = f0 << (stage - 1);
        let width = c_out / 4;
        for rep in 0..macro_cfg.repeats() {
            let reduction = stage > 1 && rep == 0;
            let stride = if reduction { 2 } else { 1 };
            let prefix = format!("s{stage}.b{rep}");
            let block_input = last;
            let block_in_channels = last_channels;

            let entry = b.conv_bn_relu(
                &format!("{prefix}.entry"),
                "",
                (1, 1),
                stride,
                block_in_channels,
                width,
                block_input,
            );

            let mut branch_outputs = Vec::with_capacity(block.branches().len());
            for (i, branch) in block.branches().iter().enumerate() {
                let bp = format!("{prefix}.br{i}");
                let k = branch.kernel.size();
                let out = match branch.kind {
                    OpKind::Conv => b.conv_bn_relu(&bp, "", (k, k), 1, width, width, entry),
                    OpKind::RcConv => {
                        let row = b.conv_bn_relu(&bp, "a", (k, 1), 1, width, width, entry);
                        b.conv_bn_relu(&bp, "b", (1, k), 1, width, width, row)
                    }
                    OpKind::SpConv => {
                        let dw = b.push(
                            format!("{bp}.dw"),
                            LayerKind::DepthwiseConv { kernel: k, stride: 1, channels: width },
                            vec![entry],
                        );
                        let dw_bn =
                            b.push(format!("{bp}.dw_bn"), LayerKind::BatchNorm { channels: width }, vec![dw]);
                        let dw_relu = b.push(format!("{bp}.dw_relu"), LayerKind::Relu, vec![dw_bn]);
                        b.conv_bn_relu(&bp, "pw", (1, 1), 1, width, width, dw_relu)
                    }
                };
                branch_outputs.push(out);
            }

            let combine = b.push(
                format!("{prefix}.combine"),
                LayerKind::Combine { kind: block.combiner() },
                branch_outputs,
            );
            let combined_channels = match block.combiner() {
                CombinerKind::Concat => width * block.branches().len(),
                _ => width,
            };

            let exit = b.conv_bn_relu(
                &format!("{prefix}.exit"),
                "",
                (1, 1),
                1,
                combined_channels,
                c_out,
                combine,
            );

            let shortcut = if reduction || block_in_channels != c_out {
                b.conv_bn_relu(
                    &format!("{prefix}.shortcut"),
                    "",
                    (1, 1),
                    stride,
                    block_in_channels,
                    c_out,
                    block_input,
                )
            } else {
                block_input
            };

            last = b.push(format!("{prefix}.add"), LayerKind::ResidualAdd, vec![exit, shortcut]);
            last_channels = c_out;
        }
    }

    let gap = b.push("head.gap".into(), LayerKind::GlobalAvgPool, vec![last]);
    let dense = b.push(
        "head.dense".into(),
        LayerKind::Dense { c_in: last_channels, c_out: macro_cfg.num_classes() },
        vec![gap],
    );
    b.push("head.softmax".into(), LayerKind::Softmax, vec![dense]);

    let shapes = infer_shapes(&b.nodes, macro_cfg.input_shape())?;
    Ok(ArchGraph {
        block: block.clone(),
        macro_cfg: macro_cfg.clone(),
        nodes: b.nodes,
        shapes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockspace::SearchSpace;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cifar10_block() -> BlockConfig {
        "conv(5)|sp_conv(1)|sp_conv(3)|rc_conv(3)+add_det".parse().unwrap()
    }

    #[test]
    fn macro_config_invariants() {
        assert!(MacroConfig::new(3, 3, 64, (32, 32, 3), 10).is_ok());
        // not a multiple of 4
        assert!(MacroConfig::new(3, 3, 30, (32, 32, 3), 10).is_err());
        // too many reductions for the input
        assert!(MacroConfig::new(6, 1, 64, (16, 16, 3), 10).is_err());
        assert!(MacroConfig::new(0, 3, 64, (32, 32, 3), 10).is_err());
        assert!(MacroConfig::new(3, 0, 64, (32, 32, 3), 10).is_err());
        assert!(MacroConfig::new(3, 3, 64, (32, 32, 3), 1).is_err());
    }

    #[test]
    fn same_padding_matches_ceil_semantics() {
        assert_eq!(same_padding(32, 3, 1), (32, 1));
        assert_eq!(same_padding(32, 1, 1), (32, 0));
        assert_eq!(same_padding(32, 5, 1), (32, 2));
        assert_eq!(same_padding(32, 1, 2), (16, 0));
        assert_eq!(same_padding(32, 3, 2), (16, 0));
        assert_eq!(same_padding(5, 3, 2), (3, 1));
        assert_eq!(same_padding(1, 3, 1), (1, 1));
    }

    #[test]
    fn builds_reported_cifar10_architecture() {
        let mc = MacroConfig::new(3, 3, 64, (32, 32, 3), 10).unwrap();
        let g = build_architecture(&cifar10_block(), &mc).unwrap();
        assert!(matches!(g.nodes().last().unwrap().kind, LayerKind::Softmax));
        assert_eq!(g.output_shape(g.nodes().len() - 1), FeatureShape::Flat { c: 10 });
    }

    #[test]
    fn stem_preserves_spatial_size() {
        let mc = MacroConfig::new(1, 1, 16, (32, 32, 3), 10).unwrap();
        let g = build_architecture(&cifar10_block(), &mc).unwrap();
        assert_eq!(g.output_shape(0), FeatureShape::Map { h: 32, w: 32, c: 16 });
    }

    #[test]
    fn non_reduction_blocks_preserve_shape() {
        let mc = MacroConfig::new(1, 3, 64, (32, 32, 3), 10).unwrap();
        let g = build_architecture(&cifar10_block(), &mc).unwrap();
        for node in g.nodes() {
            if matches!(node.kind, LayerKind::ResidualAdd) {
                assert_eq!(g.output_shape(node.id), FeatureShape::Map { h: 32, w: 32, c: 64 });
            }
        }
    }

    #[test]
    fn reduction_block_halves_space_and_doubles_channels() {
        let mc = MacroConfig::new(2, 1, 64, (32, 32, 3), 10).unwrap();
        let g = build_architecture(&cifar10_block(), &mc).unwrap();
        let s1_add = g.nodes().iter().find(|n| n.name == "s1.b0.add").unwrap();
        assert_eq!(g.output_shape(s1_add.id), FeatureShape::Map { h: 32, w: 32, c: 64 });
        let s2_add = g.nodes().iter().find(|n| n.name == "s2.b0.add").unwrap();
        assert_eq!(g.output_shape(s2_add.id), FeatureShape::Map { h: 16, w: 16, c: 128 });
    }

    #[test]
    fn bottleneck_width_is_quarter_of_block_output() {
        let mc = MacroConfig::new(1, 1, 64, (32, 32, 3), 10).unwrap();
        let g = build_architecture(&cifar10_block(), &mc).unwrap();
        let entry = g.nodes().iter().find(|n| n.name == "s1.b0.entry.relu").unwrap();
        assert_eq!(g.output_shape(entry.id).channels(), 16);
    }

    #[test]
    fn concat_combiner_sums_channel_widths() {
        let block: BlockConfig = "conv(1)|conv(3)|conv(5)|sp_conv(3)+concat".parse().unwrap();
        let mc = MacroConfig::new(1, 1, 64, (32, 32, 3), 10).unwrap();
        let g = build_architecture(&block, &mc).unwrap();
        let combine = g.nodes().iter().find(|n| n.name == "s1.b0.combine").unwrap();
        assert_eq!(g.output_shape(combine.id).channels(), 64);
    }

    #[test]
    fn unit_param_formulas() {
        let conv3 = LayerKind::Conv { kernel: (3, 3), stride: 1, c_in: 16, c_out: 16 };
        assert_eq!(conv3.param_count(), 2304);

        // rc_conv(3) at width 16: 3x1 plus 1x3.
        let row = LayerKind::Conv { kernel: (3, 1), stride: 1, c_in: 16, c_out: 16 };
        let col = LayerKind::Conv { kernel: (1, 3), stride: 1, c_in: 16, c_out: 16 };
        assert_eq!(row.param_count() + col.param_count(), 1536);

        // sp_conv(3) at width 16: depthwise 3x3 plus pointwise 1x1.
        let dw = LayerKind::DepthwiseConv { kernel: 3, stride: 1, channels: 16 };
        let pw = LayerKind::Conv { kernel: (1, 1), stride: 1, c_in: 16, c_out: 16 };
        assert_eq!(dw.param_count() + pw.param_count(), 400);

        assert_eq!(LayerKind::BatchNorm { channels: 16 }.param_count(), 32);
        assert_eq!(LayerKind::Dense { c_in: 256, c_out: 10 }.param_count(), 2570);
    }

    #[test]
    fn unit_mac_formulas() {
        let out = FeatureShape::Map { h: 32, w: 32, c: 16 };
        let conv3 = LayerKind::Conv { kernel: (3, 3), stride: 1, c_in: 16, c_out: 16 };
        assert_eq!(conv3.mac_count(out), 2_359_296);

        let conv1 = LayerKind::Conv { kernel: (1, 1), stride: 1, c_in: 64, c_out: 16 };
        assert_eq!(conv1.mac_count(out), 1_048_576);

        assert_eq!(LayerKind::GlobalAvgPool.mac_count(out), 0);
        assert_eq!(LayerKind::Relu.mac_count(out), 0);
    }

    #[test]
    fn description_is_deterministic_and_consistent_with_totals() {
        let mc = MacroConfig::default();
        let g1 = build_architecture(&cifar10_block(), &mc).unwrap();
        let g2 = build_architecture(&cifar10_block(), &mc).unwrap();
        assert_eq!(g1.describe(), g2.describe());
        assert_eq!(g1.description_hash(), g2.description_hash());

        let text = g1.describe();
        assert!(text.contains(&format!("total params {}", g1.count_params())));
        assert!(text.contains(&format!("total macs {}", g1.count_macs())));
    }

    /// Independent node-count oracle walking the construction rules.
    fn expected_node_count(block: &BlockConfig, mc: &MacroConfig) -> usize {
        let branch_nodes: usize = block
            .branches()
            .iter()
            .map(|br| match br.kind {
                OpKind::Conv => 3,
                OpKind::RcConv => 6,
                OpKind::SpConv => 6,
            })
            .sum();
        let mut total = 3; // stem conv, bn, relu
        for stage in 1..=mc.stages() {
            for rep in 0..mc.repeats() {
                let reduction = stage > 1 && rep == 0;
                total += 3 + branch_nodes + 1 + 3 + 1; // entry + branches + combine + exit + add
                if reduction {
                    total += 3; // shortcut conv, bn, relu
                }
            }
        }
        total + 3 // gap, dense, softmax
    }

    #[test]
    fn node_count_matches_construction_rule_oracle() {
        let mc = MacroConfig::new(3, 3, 64, (32, 32, 3), 10).unwrap();
        let g = build_architecture(&cifar10_block(), &mc).unwrap();
        assert_eq!(g.nodes().len(), expected_node_count(&cifar10_block(), &mc));

        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let block = space.sample(&mut rng);
            let g = build_architecture(&block, &mc).unwrap();
            assert_eq!(g.nodes().len(), expected_node_count(&block, &mc), "block {block}");
        }
    }

    #[test]
    fn default_macro_calibrates_reported_block_near_reported_size() {
        let g = build_architecture(&cifar10_block(), &MacroConfig::default()).unwrap();
        let params = g.count_params() as f64;
        eprintln!("calibration: {} params", g.count_params());
        assert!(
            (params - 2.1e6).abs() <= 0.3 * 2.1e6,
            "{params} outside +/-30% of 2.1M"
        );
    }

    #[test]
    fn distinct_configs_emit_distinct_descriptions() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mc = MacroConfig::new(2, 1, 16, (16, 16, 3), 4).unwrap();
        let mut seen = std::collections::HashMap::new();
        for _ in 0..50 {
            let block = space.sample(&mut rng);
            let text = build_architecture(&block, &mc).unwrap().describe();
            if let Some(prev) = seen.insert(text, block.clone()) {
                assert_eq!(prev, block, "distinct configs must not collide");
            }
        }
    }

    #[test]
    fn shape_mismatch_errors_name_both_nodes_and_shapes() {
        // Hand-built malformed graph: a residual add over a 16-channel map
        // and an 8-channel map.
        let nodes = vec![
            LayerNode {
                id: 0,
                name: "a.conv".into(),
                kind: LayerKind::Conv { kernel: (1, 1), stride: 1, c_in: 3, c_out: 16 },
                inputs: vec![],
            },
            LayerNode {
                id: 1,
                name: "b.conv".into(),
                kind: LayerKind::Conv { kernel: (1, 1), stride: 1, c_in: 3, c_out: 8 },
                inputs: vec![],
            },
            LayerNode {
                id: 2,
                name: "bad.add".into(),
                kind: LayerKind::ResidualAdd,
                inputs: vec![0, 1],
            },
        ];
        let err = infer_shapes(&nodes, (8, 8, 3)).unwrap_err().to_string();
        assert!(err.contains("bad.add"), "{err}");
        assert!(err.contains("input 0") && err.contains("input 1"), "{err}");
        assert!(err.contains("8x8x16") && err.contains("8x8x8"), "{err}");

        // Same for an additive combine with unequal widths.
        let nodes = vec![
            LayerNode {
                id: 0,
                name: "a.conv".into(),
                kind: LayerKind::Conv { kernel: (1, 1), stride: 1, c_in: 3, c_out: 16 },
                inputs: vec![],
            },
            LayerNode {
                id: 1,
                name: "b.conv".into(),
                kind: LayerKind::Conv { kernel: (1, 1), stride: 1, c_in: 3, c_out: 8 },
                inputs: vec![],
            },
            LayerNode {
                id: 2,
                name: "bad.combine".into(),
                kind: LayerKind::Combine { kind: CombinerKind::AddDet },
                inputs: vec![0, 1],
            },
        ];
        let err = infer_shapes(&nodes, (8, 8, 3)).unwrap_err().to_string();
        assert!(err.contains("bad.combine"), "{err}");
        assert!(err.contains("8") && err.contains("16"), "{err}");
    }

    #[test]
    fn recomputed_shapes_match_stored_shapes() {
        let g = build_architecture(&cifar10_block(), &MacroConfig::default()).unwrap();
        assert_eq!(g.infer_shapes().unwrap(), g.shapes().to_vec());
    }
}
