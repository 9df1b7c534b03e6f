//! Network topology: convolutional image encoder(s), an optional metadata
//! encoder, and a one- or two-layer projection head over their concatenated
//! features.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::TargetSpace;

use super::layers::*;
use super::{NeuralError, Tensor};

pub type ParamMap = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    SingleView,
    MultiView,
    MetadataAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    #[serde(default = "ConvBlock::default_kernel")]
    pub kernel: usize,
    #[serde(default = "ConvBlock::default_pool")]
    pub pool: usize,
}

impl ConvBlock {
    pub fn new(out_channels: usize) -> Self {
        ConvBlock {
            out_channels,
            kernel: 3,
            pool: 2,
        }
    }

    fn default_kernel() -> usize {
        3
    }

    fn default_pool() -> usize {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    OneLayer,
    TwoLayer { hidden_units: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetadataInput {
    FrameArea,
    MeanArea,
    SinkingSpeed,
}

/// Regression predicts one scalar; classification predicts logits over a
/// fixed, ordered list of taxa.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Task {
    #[default]
    Regression,
    Classification {
        classes: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub encoder: Vec<ConvBlock>,
    pub head: Head,
    #[serde(default)]
    pub metadata_inputs: Vec<MetadataInput>,
    #[serde(default)]
    pub metadata_hidden: usize,
    pub target_space: TargetSpace,
    pub input_size: usize,
    #[serde(default)]
    pub task: Task,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::single_view()
    }
}

impl ModelConfig {
    pub fn single_view() -> Self {
        ModelConfig {
            architecture: Architecture::SingleView,
            encoder: vec![ConvBlock::new(8), ConvBlock::new(16)],
            head: Head::TwoLayer { hidden_units: 64 },
            metadata_inputs: Vec::new(),
            metadata_hidden: 0,
            target_space: TargetSpace::Log,
            input_size: 32,
            task: Task::Regression,
        }
    }

    pub fn multi_view() -> Self {
        ModelConfig {
            architecture: Architecture::MultiView,
            ..Self::single_view()
        }
    }

    /// Metadata-aware model over frame area, mean area and speed; the
    /// metadata encoder is twice as wide as its input.
    pub fn metadata_aware() -> Self {
        let inputs = vec![
            MetadataInput::FrameArea,
            MetadataInput::MeanArea,
            MetadataInput::SinkingSpeed,
        ];
        ModelConfig {
            architecture: Architecture::MetadataAware,
            metadata_hidden: 2 * inputs.len(),
            metadata_inputs: inputs,
            ..Self::single_view()
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::InvalidConfig(m));
        if self.encoder.is_empty() {
            return bad("encoder needs at least one block".into());
        }
        let mut size = self.input_size;
        for b in &self.encoder {
            if b.out_channels == 0 || b.kernel % 2 == 0 || b.pool == 0 {
                return bad(format!("invalid conv block {b:?}"));
            }
            size /= b.pool;
            if size == 0 {
                return bad(format!("input size {} too small for encoder", self.input_size));
            }
        }
        if let Head::TwoLayer { hidden_units: 0 } = self.head {
            return bad("two-layer head needs hidden units".into());
        }
        if self.architecture == Architecture::MetadataAware {
            if self.metadata_inputs.is_empty() {
                return bad("metadata-aware model needs metadata inputs".into());
            }
            if self.metadata_hidden == 0 {
                return bad("metadata_hidden must be positive".into());
            }
        }
        if let Task::Classification { classes } = &self.task {
            if classes.len() < 2 {
                return bad("classification needs at least two classes".into());
            }
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        match self.architecture {
            Architecture::MultiView => 2,
            _ => 1,
        }
    }

    pub fn uses_metadata(&self) -> bool {
        self.architecture == Architecture::MetadataAware
    }

    pub fn image_feature_width(&self) -> usize {
        self.encoder.last().map_or(0, |b| b.out_channels)
    }

    /// Width of the concatenated vector fed to the head.
    pub fn head_input_width(&self) -> usize {
        let img = self.n_views() * self.image_feature_width();
        if self.uses_metadata() {
            img + self.metadata_hidden
        } else {
            img
        }
    }

    pub fn output_width(&self) -> usize {
        match &self.task {
            Task::Regression => 1,
            Task::Classification { classes } => classes.len(),
        }
    }

    /// Parameter names and shapes in a fixed order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for view in 0..self.n_views() {
            let mut c_in = 1;
            for (i, b) in self.encoder.iter().enumerate() {
                out.push((
                    format!("encoder.{view}.conv{i}.weight"),
                    vec![b.out_channels, c_in, b.kernel, b.kernel],
                ));
                out.push((format!("encoder.{view}.conv{i}.bias"), vec![b.out_channels]));
                c_in = b.out_channels;
            }
        }
        if self.uses_metadata() {
            let (m, h) = (self.metadata_inputs.len(), self.metadata_hidden);
            out.push(("metadata.fc1.weight".into(), vec![h, m]));
            out.push(("metadata.fc1.bias".into(), vec![h]));
            out.push(("metadata.fc2.weight".into(), vec![h, h]));
            out.push(("metadata.fc2.bias".into(), vec![h]));
        }
        let d = self.head_input_width();
        let k = self.output_width();
        match self.head {
            Head::OneLayer => {
                out.push(("head.fc.weight".into(), vec![k, d]));
                out.push(("head.fc.bias".into(), vec![k]));
            }
            Head::TwoLayer { hidden_units } => {
                out.push(("head.fc1.weight".into(), vec![hidden_units, d]));
                out.push(("head.fc1.bias".into(), vec![hidden_units]));
                out.push(("head.fc2.weight".into(), vec![k, hidden_units]));
                out.push(("head.fc2.bias".into(), vec![k]));
            }
        }
        out
    }

    /// Name of the head's final bias, which training seeds with the mean
    /// target.
    pub fn output_bias_name(&self) -> &'static str {
        match self.head {
            Head::OneLayer => "head.fc.bias",
            Head::TwoLayer { .. } => "head.fc2.bias",
        }
    }
}

/// Which parameter groups are held fixed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Freeze {
    #[default]
    None,
    Encoder,
    EncoderAndMetadata,
}

impl Freeze {
    pub fn is_frozen(self, name: &str) -> bool {
        match self {
            Freeze::None => false,
            Freeze::Encoder => name.starts_with("encoder."),
            Freeze::EncoderAndMetadata => name.starts_with("encoder.") || name.starts_with("metadata."),
        }
    }
}

/// Uniform fan-in scaled initialization, zero biases.
pub fn init_parameters(config: &ModelConfig, rng: &mut impl Rng) -> Result<ParamMap, NeuralError> {
    config.validate()?;
    let mut params = ParamMap::new();
    for (name, shape) in config.parameter_shapes() {
        let mut t = Tensor::zeros(&shape);
        if name.ends_with(".weight") {
            let fan_in: usize = shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        }
        params.insert(name, t);
    }
    Ok(params)
}

/// One forward/backward unit: one image per view, plus a standardized
/// metadata vector for metadata-aware models.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput {
    pub images: Vec<Vec<f64>>,
    pub metadata: Option<Vec<f64>>,
}

fn param<'a>(params: &'a ParamMap, name: &str) -> Result<&'a Tensor, NeuralError> {
    params
        .get(name)
        .ok_or_else(|| NeuralError::ShapeMismatch(format!("missing parameter {name}")))
}

struct BlockCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<usize>,
    c_in: usize,
    size: usize,
}

struct EncoderCache {
    blocks: Vec<BlockCache>,
    final_plane: usize,
}

struct MetaCache {
    v: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    encoders: Vec<EncoderCache>,
    meta: Option<MetaCache>,
    head_input: Vec<f64>,
    head_pre: Vec<f64>,
    head_hidden: Vec<f64>,
    pub output: Vec<f64>,
}

fn check_image(config: &ModelConfig, img: &[f64]) -> Result<(), NeuralError> {
    let s = config.input_size;
    if img.len() != s * s {
        return Err(NeuralError::ShapeMismatch(format!(
            "image has {} values, expected (1, {s}, {s})",
            img.len()
        )));
    }
    Ok(())
}

fn encoder_forward(
    config: &ModelConfig,
    params: &ParamMap,
    view: usize,
    image: &[f64],
    keep: bool,
) -> Result<(Vec<f64>, Option<EncoderCache>), NeuralError> {
    check_image(config, image)?;
    let mut x = image.to_vec();
    let mut c_in = 1;
    let mut size = config.input_size;
    let mut blocks = Vec::new();
    for (i, b) in config.encoder.iter().enumerate() {
        let w = param(params, &format!("encoder.{view}.conv{i}.weight"))?;
        let bias = param(params, &format!("encoder.{view}.conv{i}.bias"))?;
        let pre = conv2d_forward(&x, c_in, size, size, &w.data, &bias.data, b.out_channels, b.kernel);
        let mut act = pre.clone();
        relu_inplace(&mut act);
        let (pooled, argmax) = maxpool_forward(&act, b.out_channels, size, size, b.pool);
        if keep {
            blocks.push(BlockCache {
                input: std::mem::take(&mut x),
                pre,
                argmax,
                c_in,
                size,
            });
        }
        x = pooled;
        c_in = b.out_channels;
        size /= b.pool;
    }
    let features = gap_forward(&x, c_in, size * size);
    let cache = keep.then_some(EncoderCache {
        blocks,
        final_plane: size * size,
    });
    Ok((features, cache))
}

/// Image feature vector `z = g(x)` for one view.
pub fn encode_image(
    config: &ModelConfig,
    params: &ParamMap,
    view: usize,
    image: &[f64],
) -> Result<Vec<f64>, NeuralError> {
    Ok(encoder_forward(config, params, view, image, false)?.0)
}

/// Metadata feature vector: affine, ReLU, affine.
pub fn encode_metadata(config: &ModelConfig, params: &ParamMap, v: &[f64]) -> Result<Vec<f64>, NeuralError> {
    Ok(metadata_forward(config, params, v)?.hidden_out)
}

struct MetaOut {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    hidden_out: Vec<f64>,
}

fn metadata_forward(config: &ModelConfig, params: &ParamMap, v: &[f64]) -> Result<MetaOut, NeuralError> {
    if v.len() != config.metadata_inputs.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "metadata has {} values, expected {}",
            v.len(),
            config.metadata_inputs.len()
        )));
    }
    let w1 = param(params, "metadata.fc1.weight")?;
    let b1 = param(params, "metadata.fc1.bias")?;
    let w2 = param(params, "metadata.fc2.weight")?;
    let b2 = param(params, "metadata.fc2.bias")?;
    let pre = linear_forward(v, &w1.data, &b1.data);
    let mut hidden = pre.clone();
    relu_inplace(&mut hidden);
    let hidden_out = linear_forward(&hidden, &w2.data, &b2.data);
    Ok(MetaOut {
        pre,
        hidden,
        hidden_out,
    })
}

/// Runs the whole network on one sample, keeping what backward needs.
pub fn forward_cached(
    config: &ModelConfig,
    params: &ParamMap,
    input: &SampleInput,
) -> Result<ForwardCache, NeuralError> {
    forward_impl(config, params, input, true)
}

/// Raw network output (one value for regression, logits for
/// classification).
pub fn forward(config: &ModelConfig, params: &ParamMap, input: &SampleInput) -> Result<Vec<f64>, NeuralError> {
    Ok(forward_impl(config, params, input, false)?.output)
}

fn forward_impl(
    config: &ModelConfig,
    params: &ParamMap,
    input: &SampleInput,
    keep: bool,
) -> Result<ForwardCache, NeuralError> {
    if input.images.len() < config.n_views() {
        return Err(NeuralError::MissingSecondView);
    }
    let mut head_input = Vec::with_capacity(config.head_input_width());
    let mut encoders = Vec::new();
    for view in 0..config.n_views() {
        let (z, cache) = encoder_forward(config, params, view, &input.images[view], keep)?;
        head_input.extend_from_slice(&z);
        encoders.extend(cache);
    }
    let mut meta = None;
    if config.uses_metadata() {
        let v = input.metadata.as_ref().ok_or(NeuralError::MissingMetadata)?;
        let m = metadata_forward(config, params, v)?;
        head_input.extend_from_slice(&m.hidden_out);
        meta = Some(MetaCache {
            v: v.clone(),
            pre: m.pre,
            hidden: m.hidden,
        });
    }

    let (head_pre, head_hidden, output) = match config.head {
        Head::OneLayer => {
            let w = param(params, "head.fc.weight")?;
            let b = param(params, "head.fc.bias")?;
            (Vec::new(), Vec::new(), linear_forward(&head_input, &w.data, &b.data))
        }
        Head::TwoLayer { .. } => {
            let w1 = param(params, "head.fc1.weight")?;
            let b1 = param(params, "head.fc1.bias")?;
            let w2 = param(params, "head.fc2.weight")?;
            let b2 = param(params, "head.fc2.bias")?;
            let pre = linear_forward(&head_input, &w1.data, &b1.data);
            let mut hidden = pre.clone();
            relu_inplace(&mut hidden);
            let out = linear_forward(&hidden, &w2.data, &b2.data);
            (pre, hidden, out)
        }
    };
    Ok(ForwardCache {
        encoders,
        meta,
        head_input,
        head_pre,
        head_hidden,
        output,
    })
}

/// Zero-valued gradient map with the parameters' keys and shapes.
pub fn zero_grads(params: &ParamMap) -> ParamMap {
    params.iter().map(|(k, v)| (k.clone(), v.zeros_like())).collect()
}

fn accumulate(grads: &mut ParamMap, name: &str, local: &[f64]) {
    if let Some(t) = grads.get_mut(name) {
        for (g, l) in t.data.iter_mut().zip(local) {
            *g += l;
        }
    }
}

/// Linear layer backward into the gradient map; returns the input gradient.
fn linear_backward_named(
    params: &ParamMap,
    grads: &mut ParamMap,
    prefix: &str,
    x: &[f64],
    grad_out: &[f64],
    frozen: bool,
) -> Result<Vec<f64>, NeuralError> {
    let w = param(params, &format!("{prefix}.weight"))?;
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; grad_out.len()];
    let gx = linear_backward(x, &w.data, grad_out, &mut gw, &mut gb);
    if !frozen {
        accumulate(grads, &format!("{prefix}.weight"), &gw);
        accumulate(grads, &format!("{prefix}.bias"), &gb);
    }
    Ok(gx)
}

/// Accumulates into `grads` the gradient of `sum(grad_output * output)` for
/// one cached sample. Parameters frozen by `freeze` receive nothing.
pub fn backward_sample(
    config: &ModelConfig,
    params: &ParamMap,
    cache: &ForwardCache,
    grad_output: &[f64],
    grads: &mut ParamMap,
    freeze: Freeze,
) -> Result<(), NeuralError> {
    let head_frozen = freeze.is_frozen("head.");
    let g_in = match config.head {
        Head::OneLayer => linear_backward_named(params, grads, "head.fc", &cache.head_input, grad_output, head_frozen)?,
        Head::TwoLayer { .. } => {
            let mut g_h =
                linear_backward_named(params, grads, "head.fc2", &cache.head_hidden, grad_output, head_frozen)?;
            relu_backward(&cache.head_pre, &mut g_h);
            linear_backward_named(params, grads, "head.fc1", &cache.head_input, &g_h, head_frozen)?
        }
    };

    let f = config.image_feature_width();
    if let Some(meta) = &cache.meta {
        if !freeze.is_frozen("metadata.") {
            let g_z = &g_in[config.n_views() * f..];
            let mut g_h = linear_backward_named(params, grads, "metadata.fc2", &meta.hidden, g_z, false)?;
            relu_backward(&meta.pre, &mut g_h);
            linear_backward_named(params, grads, "metadata.fc1", &meta.v, &g_h, false)?;
        }
    }

    if freeze.is_frozen("encoder.") {
        return Ok(());
    }
    for (view, enc) in cache.encoders.iter().enumerate() {
        let mut g = gap_backward(&g_in[view * f..(view + 1) * f], enc.final_plane);
        for (i, (b, bc)) in config.encoder.iter().zip(&enc.blocks).enumerate().rev() {
            let plane = bc.size * bc.size;
            g = maxpool_backward(&bc.argmax, &g, b.out_channels * plane);
            relu_backward(&bc.pre, &mut g);
            let wname = format!("encoder.{view}.conv{i}.weight");
            let w = param(params, &wname)?;
            let mut gw = vec![0.0; w.len()];
            let mut gb = vec![0.0; b.out_channels];
            let mut gx = if i > 0 { vec![0.0; bc.c_in * plane] } else { Vec::new() };
            conv2d_backward(
                &bc.input,
                bc.c_in,
                bc.size,
                bc.size,
                &w.data,
                b.out_channels,
                b.kernel,
                &g,
                &mut gw,
                &mut gb,
                (i > 0).then_some(gx.as_mut_slice()),
            );
            accumulate(grads, &wname, &gw);
            accumulate(grads, &format!("encoder.{view}.conv{i}.bias"), &gb);
            g = std::mem::take(&mut gx);
        }
    }
    Ok(())
}
