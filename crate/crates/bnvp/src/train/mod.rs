//! Quantization-aware training with straight-through gradients.
//!
//! Full-precision proxy weights are binarized (or k-bit quantized) on every
//! forward pass; the backward pass hands the quantized-weight gradient to
//! the proxy unchanged and clips proxies to [-1, +1] after each update. The
//! convolutional backbone trains under a full-precision FC stage that is
//! discarded at export, leaving a frozen feature extractor that reproduces
//! the training graph's inference path exactly on binary layers.

mod graph;
pub mod synth;

use std::fmt::Write as _;
use std::io::Write;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bitcore::RealTensor;
use crate::error::{Error, Result};
use crate::graph::{
    fold_affine, ConvWeights, Feature, FrozenConv, FrozenLayer, FrozenNetwork, FrozenPool,
    LayerKind, NetworkSpec,
};
use crate::quant::{kbit_quantize, sign_quantize_slice};

use graph::{Batch, BnOp, ConvOp, DenseOp, FlattenOp, Op, OpGraph, PoolOp, ReluOp, SignActOp};

pub use crate::quant::{kbit_dequantize, kbit_level, sign_quantize, uniform_quantize, KbitCodes};

/// Proxy weights are clipped to this range after every update.
pub const PROXY_CLIP: f32 = 1.0;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate multiplier applied once at `lr_decay_at * epochs`.
    pub lr_decay_factor: f64,
    pub lr_decay_at: f64,
    pub momentum: f64,
    pub seed: u64,
    pub classes: usize,
    /// Width of the two full-precision FC layers trained on top of the
    /// backbone (256 for the compact nets, 4096 for the wide ones).
    pub fc_neurons: usize,
    /// Weight quantizer bit width: 1 (sign), 2/4/8 (uniform) or 32 (none).
    pub weight_bits: u8,
    /// Stop once epoch training accuracy reaches this fraction.
    pub stop_at_accuracy: Option<f64>,
    pub bn_momentum: f64,
    pub bn_eps: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            lr_decay_factor: 0.1,
            lr_decay_at: 2.0 / 3.0,
            momentum: 0.9,
            seed: 1,
            classes: 8,
            fc_neurons: 256,
            weight_bits: 1,
            stop_at_accuracy: None,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fc_neurons == 0 {
            return Err(Error::Config("fc_neurons must be positive".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("classes must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !matches!(self.weight_bits, 1 | 2 | 4 | 8 | 32) {
            return Err(Error::UnsupportedBits(self.weight_bits));
        }
        if !(0.0..=1.0).contains(&self.lr_decay_at) {
            return Err(Error::Config("lr_decay_at must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            fn parsed<V: std::str::FromStr>(value: &str, key: &str, lineno: usize) -> Result<V> {
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("line {}: bad value for {key}", lineno + 1)))
            }
            match key {
                "epochs" => cfg.epochs = parsed(value, key, lineno)?,
                "batch_size" => cfg.batch_size = parsed(value, key, lineno)?,
                "learning_rate" => cfg.learning_rate = parsed(value, key, lineno)?,
                "lr_decay_factor" => cfg.lr_decay_factor = parsed(value, key, lineno)?,
                "lr_decay_at" => cfg.lr_decay_at = parsed(value, key, lineno)?,
                "momentum" => cfg.momentum = parsed(value, key, lineno)?,
                "seed" => cfg.seed = parsed(value, key, lineno)?,
                "classes" => cfg.classes = parsed(value, key, lineno)?,
                "fc_neurons" => cfg.fc_neurons = parsed(value, key, lineno)?,
                "weight_bits" => cfg.weight_bits = parsed(value, key, lineno)?,
                "stop_at_accuracy" => cfg.stop_at_accuracy = Some(parsed(value, key, lineno)?),
                "bn_momentum" => cfg.bn_momentum = parsed(value, key, lineno)?,
                "bn_eps" => cfg.bn_eps = parsed(value, key, lineno)?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "lr_decay_factor = {}", self.lr_decay_factor);
        let _ = writeln!(s, "lr_decay_at = {}", self.lr_decay_at);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "classes = {}", self.classes);
        let _ = writeln!(s, "fc_neurons = {}", self.fc_neurons);
        let _ = writeln!(s, "weight_bits = {}", self.weight_bits);
        if let Some(a) = self.stop_at_accuracy {
            let _ = writeln!(s, "stop_at_accuracy = {a}");
        }
        let _ = writeln!(s, "bn_momentum = {}", self.bn_momentum);
        let _ = writeln!(s, "bn_eps = {}", self.bn_eps);
        s
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        let decay_epoch = (self.epochs as f64 * self.lr_decay_at).floor() as usize;
        if self.epochs > 0 && epoch >= decay_epoch && decay_epoch > 0 {
            self.learning_rate * self.lr_decay_factor
        } else {
            self.learning_rate
        }
    }
}

/// In-memory labeled image set.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<(RealTensor, usize)>,
    pub classes: usize,
}

/// Full-precision proxy weights of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyWeights {
    pub layer: String,
    /// Shape `[out, kernel, kernel, in]` for conv layers.
    pub weights: RealTensor,
}

/// Raw BatchNorm parameters and running statistics of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub layer: String,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

/// A trained checkpoint: proxies, normalization statistics and the
/// training-only FC stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: NetworkSpec,
    pub proxies: Vec<ProxyWeights>,
    pub bn_stats: Vec<BnStats>,
    /// FC stage weights, `[out, in]` each: two hidden layers + classifier.
    pub head: Vec<RealTensor>,
    pub config: TrainConfig,
}

/// Pass-through weight gradient: the proxy gradient equals the gradient
/// with respect to the quantized weights.
pub fn ste_weight_grad(upstream: &RealTensor) -> RealTensor {
    upstream.clone()
}

/// Hat-rule activation gradient: upstream where |pre-activation| <= 1,
/// zero elsewhere.
pub fn ste_activation_grad(
    upstream: &RealTensor,
    pre_activation: &RealTensor,
) -> Result<RealTensor> {
    if upstream.values.len() != pre_activation.values.len() {
        return Err(Error::LengthMismatch {
            expected: pre_activation.values.len(),
            got: upstream.values.len(),
        });
    }
    let values = upstream
        .values
        .iter()
        .zip(&pre_activation.values)
        .map(|(&g, &a)| if a.abs() <= 1.0 { g } else { 0.0 })
        .collect();
    Ok(RealTensor {
        shape: upstream.shape.clone(),
        values,
    })
}

/// Backbone layer bookkeeping produced alongside the op graph.
struct GraphLayout {
    /// (spec layer name, op index) for each weighted backbone layer.
    convs: Vec<(String, usize)>,
    /// (spec layer name, op index) for each backbone BatchNorm.
    bns: Vec<(String, usize)>,
    /// Op indices of the FC-stage dense layers.
    head: Vec<usize>,
}

fn effective_spec(spec: &NetworkSpec, weight_bits: u8) -> NetworkSpec {
    let mut out = spec.clone();
    for l in &mut out.layers {
        if l.kind != LayerKind::Pool {
            l.weight_bits = weight_bits;
        }
    }
    out
}

fn build_graph<T: Float>(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(OpGraph<T>, GraphLayout)> {
    let chain = spec.resolve()?;
    let mut ops: Vec<Op<T>> = Vec::new();
    let mut layout = GraphLayout {
        convs: Vec::new(),
        bns: Vec::new(),
        head: Vec::new(),
    };
    let mut first = true;
    let mut feature = Feature::Map {
        h: spec.input_shape.0,
        w: spec.input_shape.1,
        c: spec.input_shape.2,
    };
    for g in &chain {
        match g.spec.kind {
            LayerKind::ConvBlock => {
                let Feature::Map { c: cin, .. } = g.input else {
                    return Err(Error::ShapeMismatch("conv fed by flat features".into()));
                };
                if g.spec.has_batchnorm {
                    layout.bns.push((g.spec.name.clone(), ops.len()));
                    ops.push(Op::Bn(BnOp::new(
                        cin,
                        cfg.bn_momentum,
                        f64::from(cfg.bn_eps),
                    )));
                    if g.spec.activation_bits == 1 {
                        ops.push(Op::Sign(SignActOp::new()));
                    } else {
                        ops.push(Op::Relu(ReluOp::new()));
                    }
                }
                layout.convs.push((g.spec.name.clone(), ops.len()));
                ops.push(Op::Conv(ConvOp::new(
                    g.spec.kernel,
                    g.spec.stride,
                    g.spec.padding,
                    cin,
                    g.spec.units,
                    g.spec.weight_bits,
                    first,
                    rng,
                )));
                first = false;
                feature = g.output;
            }
            LayerKind::Pool => {
                ops.push(Op::Pool(PoolOp::new(g.spec.kernel, g.spec.stride)));
                feature = g.output;
            }
            // The trained FC stage below replaces any FC layers in the spec;
            // they are stripped at export either way.
            LayerKind::FullyConnected => break,
        }
    }
    let backbone_end = ops.len();
    let feat_len = feature.len();
    // Backbone accumulators are integer-scale; normalize them before the FC
    // stage. This BatchNorm belongs to the discarded head, not the extractor.
    layout.bns.push(("head".to_string(), ops.len()));
    ops.push(Op::Bn(BnOp::new(
        feature.norm_channels(),
        cfg.bn_momentum,
        f64::from(cfg.bn_eps),
    )));
    ops.push(Op::Flatten(FlattenOp::new()));
    layout.head.push(ops.len());
    ops.push(Op::Dense(DenseOp::new(feat_len, cfg.fc_neurons, 32, rng)));
    ops.push(Op::Relu(ReluOp::new()));
    layout.head.push(ops.len());
    ops.push(Op::Dense(DenseOp::new(
        cfg.fc_neurons,
        cfg.fc_neurons,
        32,
        rng,
    )));
    ops.push(Op::Relu(ReluOp::new()));
    layout.head.push(ops.len());
    ops.push(Op::Dense(DenseOp::new(
        cfg.fc_neurons,
        cfg.classes,
        32,
        rng,
    )));
    Ok((OpGraph { ops, backbone_end }, layout))
}

fn snapshot_model(
    graph: &OpGraph<f32>,
    layout: &GraphLayout,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> TrainedModel {
    let mut proxies = Vec::new();
    for (name, idx) in &layout.convs {
        if let Op::Conv(conv) = &graph.ops[*idx] {
            proxies.push(ProxyWeights {
                layer: name.clone(),
                weights: RealTensor {
                    shape: vec![conv.cout, conv.kernel, conv.kernel, conv.cin],
                    values: conv.proxy.clone(),
                },
            });
        }
    }
    let mut bn_stats = Vec::new();
    for (name, idx) in &layout.bns {
        if let Op::Bn(bn) = &graph.ops[*idx] {
            let (gamma, beta, mean, var) = bn.stats_f32();
            bn_stats.push(BnStats {
                layer: name.clone(),
                gamma,
                beta,
                mean,
                var,
            });
        }
    }
    let mut head = Vec::new();
    for idx in &layout.head {
        if let Op::Dense(d) = &graph.ops[*idx] {
            head.push(RealTensor {
                shape: vec![d.out_len, d.in_len],
                values: d.proxy.clone(),
            });
        }
    }
    TrainedModel {
        spec: spec.clone(),
        proxies,
        bn_stats,
        head,
        config: cfg.clone(),
    }
}

fn restore_graph(model: &TrainedModel) -> Result<(OpGraph<f32>, GraphLayout)> {
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    let (mut graph, layout) = build_graph::<f32>(&model.spec, &model.config, &mut rng)?;
    if layout.convs.len() != model.proxies.len() {
        return Err(Error::ShapeMismatch(
            "proxy count does not match spec".into(),
        ));
    }
    if layout.bns.len() != model.bn_stats.len() {
        return Err(Error::ShapeMismatch(
            "batchnorm count does not match spec".into(),
        ));
    }
    if layout.head.len() != model.head.len() {
        return Err(Error::ShapeMismatch("head layer count mismatch".into()));
    }
    for ((_, idx), p) in layout.convs.iter().zip(&model.proxies) {
        if let Op::Conv(conv) = &mut graph.ops[*idx] {
            if conv.proxy.len() != p.weights.values.len() {
                return Err(Error::ShapeMismatch(format!(
                    "proxy size mismatch at {}",
                    p.layer
                )));
            }
            conv.proxy.copy_from_slice(&p.weights.values);
        }
    }
    for ((_, idx), s) in layout.bns.iter().zip(&model.bn_stats) {
        if let Op::Bn(bn) = &mut graph.ops[*idx] {
            if bn.channels != s.gamma.len() {
                return Err(Error::ShapeMismatch(format!(
                    "batchnorm size mismatch at {}",
                    s.layer
                )));
            }
            bn.gamma.copy_from_slice(&s.gamma);
            bn.beta.copy_from_slice(&s.beta);
            bn.running_mean.copy_from_slice(&s.mean);
            bn.running_var.copy_from_slice(&s.var);
        }
    }
    for (idx, w) in layout.head.iter().zip(&model.head) {
        if let Op::Dense(d) = &mut graph.ops[*idx] {
            if d.proxy.len() != w.values.len() {
                return Err(Error::ShapeMismatch("head size mismatch".into()));
            }
            d.proxy.copy_from_slice(&w.values);
        }
    }
    Ok((graph, layout))
}

fn batch_from_images(images: &[&RealTensor]) -> Batch<f32> {
    let dims = {
        let mut d = vec![images.len()];
        d.extend_from_slice(&images[0].shape);
        d
    };
    let mut data = Vec::with_capacity(dims.iter().product());
    for img in images {
        data.extend_from_slice(&img.values);
    }
    Batch { dims, data }
}

/// Trains a model with mini-batch momentum SGD. Progress lines
/// `epoch,step,loss,accuracy` go to `log` when given.
pub fn train(
    dataset: &LabeledDataset,
    spec: &NetworkSpec,
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.classes != config.classes {
        return Err(Error::ClassCountMismatch {
            expected: config.classes,
            got: dataset.classes,
        });
    }
    let (h, w, ch) = spec.input_shape;
    for (img, label) in &dataset.images {
        if img.shape != vec![h, w, ch] {
            return Err(Error::ShapeMismatch(format!(
                "dataset image shape {:?} does not match network input {h}x{w}x{ch}",
                img.shape
            )));
        }
        if *label >= config.classes {
            return Err(Error::ClassCountMismatch {
                expected: config.classes,
                got: *label + 1,
            });
        }
    }
    let spec = effective_spec(spec, config.weight_bits);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut graph, layout) = build_graph::<f32>(&spec, config, &mut rng)?;

    let mut indices: Vec<usize> = (0..dataset.images.len()).collect();
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        indices.shuffle(&mut rng);
        let mut epoch_correct = 0usize;
        for (step, chunk) in indices.chunks(config.batch_size).enumerate() {
            let images: Vec<&RealTensor> = chunk.iter().map(|&i| &dataset.images[i].0).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.images[i].1).collect();
            let batch = batch_from_images(&images);
            let logits = graph.forward_train(&batch);
            let (loss, grad, correct) = graph::softmax_cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            graph.backward(&grad);
            graph.sgd_step(lr, config.momentum);
            epoch_correct += correct;
            if let Some(out) = log.as_deref_mut() {
                writeln!(
                    out,
                    "{},{},{:.6},{:.4}",
                    epoch,
                    step,
                    loss,
                    correct as f64 / labels.len() as f64
                )?;
            }
        }
        let epoch_acc = epoch_correct as f64 / dataset.images.len() as f64;
        if let Some(target) = config.stop_at_accuracy {
            if epoch_acc >= target {
                break;
            }
        }
    }
    Ok(snapshot_model(&graph, &layout, &spec, config))
}

/// Inference over a trained (unexported) model: the training graph in
/// inference mode, batchnorm running statistics, folded thresholds before
/// binary convolutions.
pub struct InferenceSession {
    graph: OpGraph<f32>,
    input_shape: (usize, usize, usize),
}

impl InferenceSession {
    pub fn new(model: &TrainedModel) -> Result<Self> {
        let (graph, _) = restore_graph(model)?;
        Ok(InferenceSession {
            graph,
            input_shape: model.spec.input_shape,
        })
    }

    fn check_input(&self, image: &RealTensor) -> Result<()> {
        let (h, w, c) = self.input_shape;
        if image.shape != vec![h, w, c] {
            return Err(Error::ShapeMismatch(format!(
                "expected {h}x{w}x{c} input, got {:?}",
                image.shape
            )));
        }
        Ok(())
    }

    /// Flattened backbone features (the FC stage is not applied).
    pub fn features(&mut self, image: &RealTensor) -> Result<RealTensor> {
        self.check_input(image)?;
        let mut dims = vec![1];
        dims.extend_from_slice(&image.shape);
        let batch = Batch {
            dims,
            data: image.values.clone(),
        };
        let end = self.graph.backbone_end;
        let out = self.graph.forward_infer(&batch, end);
        let n = out.data.len();
        RealTensor::new(vec![n], out.data)
    }

    /// Class logits including the FC stage.
    pub fn logits(&mut self, image: &RealTensor) -> Result<RealTensor> {
        self.check_input(image)?;
        let mut dims = vec![1];
        dims.extend_from_slice(&image.shape);
        let batch = Batch {
            dims,
            data: image.values.clone(),
        };
        let end = self.graph.ops.len();
        let out = self.graph.forward_infer(&batch, end);
        let n = out.data.len();
        RealTensor::new(vec![n], out.data)
    }
}

/// Freezes a trained model into a feature extractor: FC layers stripped,
/// proxies quantized to their final precision, BatchNorm folded.
pub fn export_extractor(model: &TrainedModel) -> Result<FrozenNetwork> {
    let chain = model.spec.resolve()?;
    let mut layers = Vec::new();
    let mut proxy_iter = model.proxies.iter();
    let mut last_pool: Option<String> = None;
    for g in &chain {
        match g.spec.kind {
            LayerKind::FullyConnected => break,
            LayerKind::Pool => {
                last_pool = Some(g.spec.name.clone());
                layers.push(FrozenLayer::Pool(FrozenPool {
                    name: g.spec.name.clone(),
                    kernel: g.spec.kernel,
                    stride: g.spec.stride,
                }));
            }
            LayerKind::ConvBlock => {
                let Feature::Map { c: cin, .. } = g.input else {
                    return Err(Error::ShapeMismatch("conv fed by flat features".into()));
                };
                let proxy = proxy_iter.next().ok_or_else(|| {
                    Error::ShapeMismatch(format!("missing proxies for {}", g.spec.name))
                })?;
                let weights =
                    freeze_weights(&proxy.weights.values, g.spec.units, g.spec.weight_bits)?;
                let bn = if g.spec.has_batchnorm {
                    let stats = model
                        .bn_stats
                        .iter()
                        .find(|s| s.layer == g.spec.name)
                        .ok_or_else(|| Error::MissingBnStats(g.spec.name.clone()))?;
                    Some(fold_affine(
                        &stats.gamma,
                        &stats.beta,
                        &stats.mean,
                        &stats.var,
                        model.config.bn_eps,
                    )?)
                } else {
                    None
                };
                layers.push(FrozenLayer::Conv(FrozenConv {
                    name: g.spec.name.clone(),
                    kernel: g.spec.kernel,
                    stride: g.spec.stride,
                    padding: g.spec.padding,
                    cin,
                    cout: g.spec.units,
                    activation_bits: g.spec.activation_bits,
                    bn,
                    weights,
                }));
            }
        }
    }
    let mut spec = model.spec.clone();
    spec.layers.retain(|l| l.kind != LayerKind::FullyConnected);
    spec.output_layer = if spec.layers.iter().any(|l| l.name == spec.output_layer) {
        spec.output_layer
    } else {
        last_pool
            .or_else(|| spec.layers.last().map(|l| l.name.clone()))
            .ok_or_else(|| Error::ShapeMismatch("network has no exportable layers".into()))?
    };
    Ok(FrozenNetwork { spec, layers })
}

fn freeze_weights(proxy: &[f32], out_units: usize, bits: u8) -> Result<ConvWeights> {
    match bits {
        1 => {
            let signs = sign_quantize_slice(proxy)?;
            ConvWeights::pack_binary(&signs, out_units)
        }
        2 | 4 | 8 => Ok(ConvWeights::coded(kbit_quantize(proxy, bits)?)),
        32 => Ok(ConvWeights::Real {
            values: proxy.to_vec(),
        }),
        b => Err(Error::UnsupportedBits(b)),
    }
}

/// Report from the finite-difference gradient validation.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Validates analytic gradients against central finite differences on an
/// f64 replica of the training graph. Only meaningful for specs whose
/// layers are all full-precision (quantizers are not differentiable).
pub fn gradient_check(
    spec: &NetworkSpec,
    config: &TrainConfig,
    samples: &[(RealTensor, usize)],
    max_params_per_tensor: usize,
) -> Result<GradCheckReport> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = effective_spec(spec, config.weight_bits);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut graph, _) = build_graph::<f64>(&spec, config, &mut rng)?;

    let labels: Vec<usize> = samples.iter().map(|(_, l)| *l).collect();
    let dims = {
        let mut d = vec![samples.len()];
        d.extend_from_slice(&samples[0].0.shape);
        d
    };
    let mut data = Vec::new();
    for (img, _) in samples {
        data.extend(img.values.iter().map(|&v| f64::from(v)));
    }
    let batch = Batch { dims, data };

    let logits = graph.forward_train(&batch);
    let (_, grad, _) = graph::softmax_cross_entropy(&logits, &labels);
    graph.backward(&grad);

    // Collect (per-tensor) parameter and gradient pointers.
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
    };
    let mut pick = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e3779b97f4a7c15);
    let op_count = graph.ops.len();
    for op_idx in 0..op_count {
        let (param_count, is_quantized) = match &graph.ops[op_idx] {
            Op::Conv(conv) => (conv.proxy.len(), conv.bits < 32),
            Op::Dense(d) => (d.proxy.len(), d.bits < 32),
            Op::Bn(bn) => (2 * bn.channels, false),
            _ => (0, false),
        };
        if param_count == 0 || is_quantized {
            continue;
        }
        let take = param_count.min(max_params_per_tensor);
        for _ in 0..take {
            let pi = rand::Rng::gen_range(&mut pick, 0..param_count);
            let analytic = read_grad(&graph.ops[op_idx], pi);
            let w0 = read_param(&graph.ops[op_idx], pi);
            let h = 1e-5 * w0.abs().max(1.0);
            write_param(&mut graph.ops[op_idx], pi, w0 + h);
            let lp = loss_of(&mut graph, &batch, &labels);
            write_param(&mut graph.ops[op_idx], pi, w0 - h);
            let lm = loss_of(&mut graph, &batch, &labels);
            write_param(&mut graph.ops[op_idx], pi, w0);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

fn loss_of(graph: &mut OpGraph<f64>, batch: &Batch<f64>, labels: &[usize]) -> f64 {
    let logits = graph.forward_train(batch);
    let (loss, _, _) = graph::softmax_cross_entropy(&logits, labels);
    loss
}

fn read_param(op: &Op<f64>, i: usize) -> f64 {
    match op {
        Op::Conv(conv) => conv.proxy[i],
        Op::Dense(d) => d.proxy[i],
        Op::Bn(bn) => {
            if i < bn.channels {
                bn.gamma[i]
            } else {
                bn.beta[i - bn.channels]
            }
        }
        _ => unreachable!(),
    }
}

fn read_grad(op: &Op<f64>, i: usize) -> f64 {
    match op {
        Op::Conv(conv) => conv.grad[i],
        Op::Dense(d) => d.grad[i],
        Op::Bn(bn) => {
            if i < bn.channels {
                bn.g_gamma[i]
            } else {
                bn.g_beta[i - bn.channels]
            }
        }
        _ => unreachable!(),
    }
}

fn write_param(op: &mut Op<f64>, i: usize, v: f64) {
    match op {
        Op::Conv(conv) => conv.proxy[i] = v,
        Op::Dense(d) => d.proxy[i] = v,
        Op::Bn(bn) => {
            if i < bn.channels {
                bn.gamma[i] = v;
            } else {
                bn.beta[i - bn.channels] = v;
            }
        }
        _ => unreachable!(),
    }
}
