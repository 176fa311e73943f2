//! Canonical network presets.
//!
//! All presets take 227x227x3 input: with C(11,4,96) valid and the published
//! conv1 feature count of 290400 = 55*55*96, no other resolution fits.
//! conv1 uses valid padding; every later convolution uses same padding so the
//! 27x27 / 13x13 / 6x6 map progression comes out right.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{LayerSpec, NetworkSpec, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// AlexNet-like full-precision reference: five conv blocks + FC(4096) x2.
    Baseline,
    /// Baseline topology with 1-bit weights and activations.
    BinaryNet,
    /// Depth-reduced binary net: conv3/conv4 removed, pools kept.
    FloppyNet,
    /// FloppyNet topology trained with a 4096-neuron FC stage.
    ShallowNet,
    /// FloppyNet with k-bit weights, k in {2, 4, 8}.
    FloppyNetK(u8),
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Baseline => write!(f, "baseline"),
            Preset::BinaryNet => write!(f, "binarynet"),
            Preset::FloppyNet => write!(f, "floppynet"),
            Preset::ShallowNet => write!(f, "shallownet"),
            Preset::FloppyNetK(k) => write!(f, "floppynet_{k}"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Preset::Baseline),
            "binarynet" => Ok(Preset::BinaryNet),
            "floppynet" => Ok(Preset::FloppyNet),
            "shallownet" => Ok(Preset::ShallowNet),
            "floppynet_2" => Ok(Preset::FloppyNetK(2)),
            "floppynet_4" => Ok(Preset::FloppyNetK(4)),
            "floppynet_8" => Ok(Preset::FloppyNetK(8)),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

const INPUT: (usize, usize, usize) = (227, 227, 3);

fn alexnet_chain(weight_bits: u8, activation_bits: u8) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv("conv1", 11, 4, 96)
            .with_precision(weight_bits, 32)
            .with_batchnorm(false)
            .with_padding(Padding::Valid),
        LayerSpec::pool("pool1", 2, 2),
        LayerSpec::conv("conv2", 5, 1, 256).with_precision(weight_bits, activation_bits),
        LayerSpec::pool("pool2", 2, 2),
        LayerSpec::conv("conv3", 3, 1, 384).with_precision(weight_bits, activation_bits),
        LayerSpec::conv("conv4", 3, 1, 384).with_precision(weight_bits, activation_bits),
        LayerSpec::conv("conv5", 3, 1, 256).with_precision(weight_bits, activation_bits),
        LayerSpec::pool("pool5", 2, 2),
        LayerSpec::fully_connected("fc6", 4096).with_precision(weight_bits, activation_bits),
        LayerSpec::fully_connected("fc7", 4096).with_precision(weight_bits, activation_bits),
    ]
}

fn floppy_chain(weight_bits: u8) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv("conv1", 11, 4, 96)
            .with_precision(weight_bits, 32)
            .with_batchnorm(false)
            .with_padding(Padding::Valid),
        LayerSpec::pool("pool1", 2, 2),
        LayerSpec::conv("conv2", 5, 1, 256).with_precision(weight_bits, 1),
        LayerSpec::pool("pool2", 2, 2),
        // conv3 and conv4 are removed outright; conv5 keeps its name so the
        // output layer stays comparable with the deeper nets.
        LayerSpec::conv("conv5", 3, 1, 256).with_precision(weight_bits, 1),
        LayerSpec::pool("pool5", 2, 2),
    ]
}

/// Builds the named preset architecture.
pub fn preset(p: Preset) -> NetworkSpec {
    let (name, layers) = match p {
        Preset::Baseline => ("baseline".to_string(), alexnet_chain(32, 32)),
        Preset::BinaryNet => ("binarynet".to_string(), alexnet_chain(1, 1)),
        Preset::FloppyNet => ("floppynet".to_string(), floppy_chain(1)),
        Preset::ShallowNet => ("shallownet".to_string(), floppy_chain(1)),
        Preset::FloppyNetK(k) => (format!("floppynet_{k}"), floppy_chain(k)),
    };
    NetworkSpec {
        name,
        input_shape: INPUT,
        layers,
        output_layer: "pool5".to_string(),
    }
}

/// Parses a preset name and builds it, validating k for the k-bit family.
pub fn preset_named(name: &str) -> Result<NetworkSpec> {
    let p = Preset::from_str(name)?;
    if let Preset::FloppyNetK(k) = p {
        if !matches!(k, 2 | 4 | 8) {
            return Err(Error::UnsupportedBits(k));
        }
    }
    let spec = preset(p);
    spec.resolve()?;
    Ok(spec)
}

/// Width of the training-time fully connected stage for a preset.
pub fn default_fc_neurons(p: Preset) -> usize {
    match p {
        Preset::FloppyNet | Preset::FloppyNetK(_) => 256,
        Preset::Baseline | Preset::BinaryNet | Preset::ShallowNet => 4096,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LayerKind;

    #[test]
    fn all_presets_resolve() {
        for name in [
            "baseline",
            "binarynet",
            "floppynet",
            "shallownet",
            "floppynet_2",
            "floppynet_4",
            "floppynet_8",
        ] {
            let spec = preset_named(name).unwrap();
            assert!(spec.resolve().is_ok(), "{name}");
        }
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(preset_named("floppynet_3").is_err());
        assert!(preset_named("alexnet").is_err());
    }

    #[test]
    fn binarynet_is_binarized_baseline() {
        let b = preset(Preset::Baseline);
        let bn = preset(Preset::BinaryNet);
        assert_eq!(b.layers.len(), bn.layers.len());
        for (l, r) in b.layers.iter().zip(&bn.layers) {
            assert_eq!(l.name, r.name);
            assert_eq!(l.kind, r.kind);
            assert_eq!(l.units, r.units);
            if r.kind != LayerKind::Pool {
                assert_eq!(r.weight_bits, 1);
            }
        }
        assert_eq!(bn.layers[0].activation_bits, 32);
        assert_eq!(bn.layers[2].activation_bits, 1);
    }

    #[test]
    fn shallownet_topology_matches_floppynet() {
        let f = preset(Preset::FloppyNet);
        let s = preset(Preset::ShallowNet);
        assert_eq!(f.layers, s.layers);
        assert_eq!(default_fc_neurons(Preset::FloppyNet), 256);
        assert_eq!(default_fc_neurons(Preset::ShallowNet), 4096);
    }

    #[test]
    fn kbit_presets_change_weight_bits_only() {
        let f1 = preset(Preset::FloppyNet);
        let f4 = preset(Preset::FloppyNetK(4));
        for (a, b) in f1.layers.iter().zip(&f4.layers) {
            assert_eq!(a.activation_bits, b.activation_bits);
            if a.kind == LayerKind::ConvBlock {
                assert_eq!(b.weight_bits, 4);
            }
        }
    }
}
