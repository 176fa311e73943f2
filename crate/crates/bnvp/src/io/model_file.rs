//! Bit-exact model serialization.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "BNVP" | version u16 | kind u8 | reserved u8 | payload_len u32
//! payload ...                                            (spec + parameters)
//! checksum u32      CRC32 over everything from magic through payload end
//! ```
//!
//! `kind` 0 is a training checkpoint (full-precision proxies, raw BatchNorm
//! statistics, FC stage); `kind` 1 is a frozen extractor whose weights are
//! stored at their final precision — one bit per weight for binary layers,
//! k-bit fields for quantized ones — and whose BatchNorms are folded to a
//! scale/shift pair per channel. Bits are packed LSB-first, matching the
//! in-memory word layout.

use std::fs;
use std::path::Path;

use crate::bitcore::{RealTensor, WORD_BITS};
use crate::error::{Error, Result};
use crate::graph::{
    AffineNorm, ConvWeights, Feature, FrozenConv, FrozenDense, FrozenLayer, FrozenNetwork,
    FrozenPool, LayerKind, LayerSpec, NetworkSpec, Padding,
};
use crate::quant::KbitCodes;
use crate::train::{BnStats, ProxyWeights, TrainConfig, TrainedModel};

const MAGIC: &[u8; 4] = b"BNVP";
const VERSION: u16 = 1;

const KIND_CHECKPOINT: u8 = 0;
const KIND_FROZEN: u8 = 1;

/// Either serializable model form.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelData {
    Checkpoint(TrainedModel),
    Frozen(FrozenNetwork),
}

pub fn save_model(path: &Path, model: &ModelData) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelData> {
    decode_model(&fs::read(path)?)
}

pub fn load_frozen(path: &Path) -> Result<FrozenNetwork> {
    match load_model(path)? {
        ModelData::Frozen(net) => Ok(net),
        ModelData::Checkpoint(_) => Err(Error::CorruptModel(
            "expected a frozen extractor, found a training checkpoint".into(),
        )),
    }
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    match load_model(path)? {
        ModelData::Checkpoint(m) => Ok(m),
        ModelData::Frozen(_) => Err(Error::CorruptModel(
            "expected a training checkpoint, found a frozen extractor".into(),
        )),
    }
}

pub fn encode_model(model: &ModelData) -> Result<Vec<u8>> {
    let (kind, spec) = match model {
        ModelData::Checkpoint(m) => (KIND_CHECKPOINT, &m.spec),
        ModelData::Frozen(n) => (KIND_FROZEN, &n.spec),
    };
    let mut payload = Vec::new();
    write_spec(&mut payload, spec);
    match model {
        ModelData::Checkpoint(m) => write_checkpoint(&mut payload, m),
        ModelData::Frozen(n) => write_frozen(&mut payload, n)?,
    }
    let mut out = Vec::with_capacity(payload.len() + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(0);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelData> {
    if bytes.len() < 16 {
        return Err(Error::CorruptModel("file shorter than header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            got: version,
            supported: VERSION,
        });
    }
    let kind = bytes[6];
    let payload_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body_end = 12usize
        .checked_add(payload_len)
        .ok_or_else(|| Error::CorruptModel("payload length overflow".into()))?;
    if bytes.len() != body_end + 4 {
        return Err(Error::CorruptModel(format!(
            "file length {} does not match payload length {payload_len}",
            bytes.len()
        )));
    }
    let stored = u32::from_le_bytes(bytes[body_end..body_end + 4].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[0..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader {
        buf: &bytes[12..body_end],
        pos: 0,
    };
    let spec = read_spec(&mut r)?;
    let model = match kind {
        KIND_CHECKPOINT => ModelData::Checkpoint(read_checkpoint(&mut r, spec)?),
        KIND_FROZEN => ModelData::Frozen(read_frozen(&mut r, spec)?),
        other => return Err(Error::CorruptModel(format!("unknown model kind {other}"))),
    };
    if r.pos != r.buf.len() {
        return Err(Error::CorruptModel("trailing bytes in payload".into()));
    }
    Ok(model)
}

// ---------------- writers ----------------

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn write_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_spec(out: &mut Vec<u8>, spec: &NetworkSpec) {
    write_str(out, &spec.name);
    out.extend_from_slice(&(spec.input_shape.0 as u32).to_le_bytes());
    out.extend_from_slice(&(spec.input_shape.1 as u32).to_le_bytes());
    out.extend_from_slice(&(spec.input_shape.2 as u32).to_le_bytes());
    write_str(out, &spec.output_layer);
    out.extend_from_slice(&(spec.layers.len() as u16).to_le_bytes());
    for l in &spec.layers {
        write_str(out, &l.name);
        out.push(match l.kind {
            LayerKind::ConvBlock => 0,
            LayerKind::Pool => 1,
            LayerKind::FullyConnected => 2,
        });
        out.extend_from_slice(&(l.kernel as u16).to_le_bytes());
        out.extend_from_slice(&(l.stride as u16).to_le_bytes());
        out.extend_from_slice(&(l.units as u32).to_le_bytes());
        out.push(l.weight_bits);
        out.push(l.activation_bits);
        out.push(u8::from(l.has_batchnorm));
        out.push(match l.padding {
            Padding::Valid => 0,
            Padding::Same => 1,
        });
    }
}

fn write_config(out: &mut Vec<u8>, cfg: &TrainConfig) {
    out.extend_from_slice(&(cfg.epochs as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.batch_size as u32).to_le_bytes());
    out.extend_from_slice(&cfg.learning_rate.to_le_bytes());
    out.extend_from_slice(&cfg.lr_decay_factor.to_le_bytes());
    out.extend_from_slice(&cfg.lr_decay_at.to_le_bytes());
    out.extend_from_slice(&cfg.momentum.to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(&(cfg.classes as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.fc_neurons as u32).to_le_bytes());
    out.push(cfg.weight_bits);
    match cfg.stop_at_accuracy {
        Some(a) => {
            out.push(1);
            out.extend_from_slice(&a.to_le_bytes());
        }
        None => out.push(0),
    }
    out.extend_from_slice(&cfg.bn_momentum.to_le_bytes());
    out.extend_from_slice(&cfg.bn_eps.to_le_bytes());
}

fn write_checkpoint(out: &mut Vec<u8>, m: &TrainedModel) {
    write_config(out, &m.config);
    out.extend_from_slice(&(m.proxies.len() as u16).to_le_bytes());
    for p in &m.proxies {
        write_str(out, &p.layer);
        out.push(p.weights.shape.len() as u8);
        for d in &p.weights.shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        write_f32s(out, &p.weights.values);
    }
    out.extend_from_slice(&(m.bn_stats.len() as u16).to_le_bytes());
    for s in &m.bn_stats {
        write_str(out, &s.layer);
        out.extend_from_slice(&(s.gamma.len() as u32).to_le_bytes());
        write_f32s(out, &s.gamma);
        write_f32s(out, &s.beta);
        write_f32s(out, &s.mean);
        write_f32s(out, &s.var);
    }
    out.extend_from_slice(&(m.head.len() as u16).to_le_bytes());
    for h in &m.head {
        out.extend_from_slice(&(h.shape[0] as u32).to_le_bytes());
        out.extend_from_slice(&(h.shape[1] as u32).to_le_bytes());
        write_f32s(out, &h.values);
    }
}

/// Packs `bits`-wide code fields LSB-first into bytes.
fn pack_fields(codes: &[u8], bits: u8) -> Vec<u8> {
    let total_bits = codes.len() * bits as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut pos = 0usize;
    for &code in codes {
        for b in 0..bits {
            if (code >> b) & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

fn unpack_fields(bytes: &[u8], bits: u8, count: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut code = 0u8;
        for b in 0..bits {
            if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                code |= 1 << b;
            }
            pos += 1;
        }
        out.push(code);
    }
    out
}

fn write_weights(out: &mut Vec<u8>, w: &ConvWeights) -> Result<()> {
    match w {
        ConvWeights::Binary { rows, row_bits } => {
            out.push(1);
            let count = rows.len() * row_bits;
            out.extend_from_slice(&(count as u32).to_le_bytes());
            out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
            // concatenate rows into one contiguous bitstream
            let mut bitpos = 0usize;
            let mut bytes = vec![0u8; count.div_ceil(8)];
            for row in rows {
                for i in 0..*row_bits {
                    if (row[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1 {
                        bytes[bitpos / 8] |= 1 << (bitpos % 8);
                    }
                    bitpos += 1;
                }
            }
            out.extend_from_slice(&bytes);
        }
        ConvWeights::Coded { codes, .. } => {
            out.push(codes.bits);
            out.extend_from_slice(&(codes.codes.len() as u32).to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
            out.extend_from_slice(&pack_fields(&codes.codes, codes.bits));
        }
        ConvWeights::Real { values } => {
            out.push(32);
            out.extend_from_slice(&(values.len() as u32).to_le_bytes());
            out.extend_from_slice(&0u32.to_le_bytes());
            write_f32s(out, values);
        }
    }
    Ok(())
}

fn write_frozen(out: &mut Vec<u8>, net: &FrozenNetwork) -> Result<()> {
    for layer in &net.layers {
        match layer {
            FrozenLayer::Pool(_) => {}
            FrozenLayer::Conv(c) => {
                write_weights(out, &c.weights)?;
                write_bn(out, c.bn.as_ref());
            }
            FrozenLayer::Dense(d) => {
                write_weights(out, &d.weights)?;
                write_bn(out, d.bn.as_ref());
            }
        }
    }
    Ok(())
}

fn write_bn(out: &mut Vec<u8>, bn: Option<&AffineNorm>) {
    match bn {
        None => out.extend_from_slice(&0u32.to_le_bytes()),
        Some(a) => {
            out.extend_from_slice(&(a.scale.len() as u32).to_le_bytes());
            write_f32s(out, &a.scale);
            write_f32s(out, &a.shift);
        }
    }
}

// ---------------- readers ----------------

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptModel("payload truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::CorruptModel("non-utf8 string".into()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn read_spec(r: &mut Reader) -> Result<NetworkSpec> {
    let name = r.string()?;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let c = r.u32()? as usize;
    let output_layer = r.string()?;
    let layer_count = r.u16()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let lname = r.string()?;
        let kind = match r.u8()? {
            0 => LayerKind::ConvBlock,
            1 => LayerKind::Pool,
            2 => LayerKind::FullyConnected,
            other => return Err(Error::CorruptModel(format!("unknown layer kind {other}"))),
        };
        let kernel = r.u16()? as usize;
        let stride = r.u16()? as usize;
        let units = r.u32()? as usize;
        let weight_bits = r.u8()?;
        let activation_bits = r.u8()?;
        let has_batchnorm = r.u8()? != 0;
        let padding = match r.u8()? {
            0 => Padding::Valid,
            1 => Padding::Same,
            other => return Err(Error::CorruptModel(format!("unknown padding {other}"))),
        };
        layers.push(LayerSpec {
            name: lname,
            kind,
            kernel,
            stride,
            units,
            weight_bits,
            activation_bits,
            has_batchnorm,
            padding,
        });
    }
    Ok(NetworkSpec {
        name,
        input_shape: (h, w, c),
        layers,
        output_layer,
    })
}

fn read_config(r: &mut Reader) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: r.u32()? as usize,
        batch_size: r.u32()? as usize,
        learning_rate: r.f64()?,
        lr_decay_factor: r.f64()?,
        lr_decay_at: r.f64()?,
        momentum: r.f64()?,
        seed: r.u64()?,
        classes: r.u32()? as usize,
        fc_neurons: r.u32()? as usize,
        weight_bits: r.u8()?,
        stop_at_accuracy: if r.u8()? != 0 { Some(r.f64()?) } else { None },
        bn_momentum: r.f64()?,
        bn_eps: r.f32()?,
    })
}

fn read_checkpoint(r: &mut Reader, spec: NetworkSpec) -> Result<TrainedModel> {
    let config = read_config(r)?;
    let proxy_count = r.u16()? as usize;
    let mut proxies = Vec::with_capacity(proxy_count);
    for _ in 0..proxy_count {
        let layer = r.string()?;
        let ndims = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let values = r.f32s(n)?;
        proxies.push(ProxyWeights {
            layer,
            weights: RealTensor { shape, values },
        });
    }
    let bn_count = r.u16()? as usize;
    let mut bn_stats = Vec::with_capacity(bn_count);
    for _ in 0..bn_count {
        let layer = r.string()?;
        let channels = r.u32()? as usize;
        bn_stats.push(BnStats {
            layer,
            gamma: r.f32s(channels)?,
            beta: r.f32s(channels)?,
            mean: r.f32s(channels)?,
            var: r.f32s(channels)?,
        });
    }
    let head_count = r.u16()? as usize;
    let mut head = Vec::with_capacity(head_count);
    for _ in 0..head_count {
        let out_len = r.u32()? as usize;
        let in_len = r.u32()? as usize;
        let values = r.f32s(out_len * in_len)?;
        head.push(RealTensor {
            shape: vec![out_len, in_len],
            values,
        });
    }
    Ok(TrainedModel {
        spec,
        proxies,
        bn_stats,
        head,
        config,
    })
}

fn read_weights(r: &mut Reader) -> Result<ConvWeights> {
    let encoding = r.u8()?;
    let count = r.u32()? as usize;
    let out_units = r.u32()? as usize;
    match encoding {
        1 => {
            if out_units == 0 || !count.is_multiple_of(out_units) {
                return Err(Error::CorruptModel("bad binary weight geometry".into()));
            }
            let row_bits = count / out_units;
            let bytes = r.take(count.div_ceil(8))?;
            let mut rows = Vec::with_capacity(out_units);
            for ro in 0..out_units {
                let mut words = vec![0u64; row_bits.div_ceil(WORD_BITS)];
                for i in 0..row_bits {
                    let bit = ro * row_bits + i;
                    if (bytes[bit / 8] >> (bit % 8)) & 1 == 1 {
                        words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
                    }
                }
                rows.push(words);
            }
            Ok(ConvWeights::Binary { rows, row_bits })
        }
        bits @ (2 | 4 | 8) => {
            let bytes = r.take((count * bits as usize).div_ceil(8))?;
            let codes = unpack_fields(bytes, bits, count);
            Ok(ConvWeights::coded(KbitCodes { bits, codes }))
        }
        32 => Ok(ConvWeights::Real {
            values: r.f32s(count)?,
        }),
        other => Err(Error::CorruptModel(format!(
            "unknown weight encoding {other}"
        ))),
    }
}

fn read_bn(r: &mut Reader) -> Result<Option<AffineNorm>> {
    let channels = r.u32()? as usize;
    if channels == 0 {
        return Ok(None);
    }
    Ok(Some(AffineNorm {
        scale: r.f32s(channels)?,
        shift: r.f32s(channels)?,
    }))
}

fn read_frozen(r: &mut Reader, spec: NetworkSpec) -> Result<FrozenNetwork> {
    let chain = spec.resolve()?;
    let mut layers = Vec::with_capacity(chain.len());
    for g in &chain {
        match g.spec.kind {
            LayerKind::Pool => layers.push(FrozenLayer::Pool(FrozenPool {
                name: g.spec.name.clone(),
                kernel: g.spec.kernel,
                stride: g.spec.stride,
            })),
            LayerKind::ConvBlock => {
                let Feature::Map { c: cin, .. } = g.input else {
                    return Err(Error::CorruptModel("conv fed by flat features".into()));
                };
                let weights = read_weights(r)?;
                if weights.weight_count() != g.weight_count {
                    return Err(Error::CorruptModel(format!(
                        "layer {} weight count mismatch",
                        g.spec.name
                    )));
                }
                let bn = read_bn(r)?;
                if g.spec.has_batchnorm != bn.is_some() {
                    return Err(Error::CorruptModel(format!(
                        "layer {} batchnorm presence mismatch",
                        g.spec.name
                    )));
                }
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
            LayerKind::FullyConnected => {
                let weights = read_weights(r)?;
                if weights.weight_count() != g.weight_count {
                    return Err(Error::CorruptModel(format!(
                        "layer {} weight count mismatch",
                        g.spec.name
                    )));
                }
                let bn = read_bn(r)?;
                layers.push(FrozenLayer::Dense(FrozenDense {
                    name: g.spec.name.clone(),
                    in_len: g.input.len(),
                    out_len: g.spec.units,
                    activation_bits: g.spec.activation_bits,
                    bn_channels: g.input.norm_channels(),
                    bn,
                    weights,
                }));
            }
        }
    }
    Ok(FrozenNetwork { spec, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{preset, FrozenNetwork, Preset};

    #[test]
    fn frozen_round_trip_is_bit_exact() {
        let net = FrozenNetwork::random_init(&preset(Preset::FloppyNet), 4).unwrap();
        let bytes = encode_model(&ModelData::Frozen(net.clone())).unwrap();
        let back = decode_model(&bytes).unwrap();
        assert_eq!(ModelData::Frozen(net), back);
    }

    #[test]
    fn dense_layers_with_bn_round_trip() {
        // the deep preset carries binary FC layers with per-channel norms
        let net = FrozenNetwork::random_init(&preset(Preset::BinaryNet), 7).unwrap();
        let bytes = encode_model(&ModelData::Frozen(net.clone())).unwrap();
        let back = decode_model(&bytes).unwrap();
        assert_eq!(ModelData::Frozen(net), back);
    }

    #[test]
    fn kbit_round_trip() {
        let net = FrozenNetwork::random_init(&preset(Preset::FloppyNetK(4)), 9).unwrap();
        let bytes = encode_model(&ModelData::Frozen(net.clone())).unwrap();
        let back = decode_model(&bytes).unwrap();
        assert_eq!(ModelData::Frozen(net), back);
    }

    #[test]
    fn field_packing_round_trip() {
        for bits in [1u8, 2, 4, 8] {
            let max = ((1u16 << bits) - 1) as u8;
            let codes: Vec<u8> = (0..57)
                .map(|i| (i * 7 % (max as usize + 1)) as u8)
                .collect();
            let packed = pack_fields(&codes, bits);
            assert_eq!(packed.len(), (codes.len() * bits as usize).div_ceil(8));
            assert_eq!(unpack_fields(&packed, bits, codes.len()), codes);
        }
    }

    #[test]
    fn version_and_magic_are_distinct_errors() {
        let net = FrozenNetwork::random_init(&preset(Preset::FloppyNet), 4).unwrap();
        let mut bytes = encode_model(&ModelData::Frozen(net)).unwrap();
        bytes[4] = 9; // version
        assert!(matches!(
            decode_model(&bytes),
            Err(Error::UnsupportedVersion { got: 9, .. })
        ));
        bytes[4] = 1;
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::CorruptModel(_))));
    }

    #[test]
    fn payload_byte_flip_is_detected() {
        let net = FrozenNetwork::random_init(&preset(Preset::FloppyNet), 4).unwrap();
        let bytes = encode_model(&ModelData::Frozen(net)).unwrap();
        // flip a byte deep in the weight payload
        let mut corrupted = bytes.clone();
        let idx = bytes.len() / 2;
        corrupted[idx] ^= 0x40;
        assert!(matches!(
            decode_model(&corrupted),
            Err(Error::ChecksumMismatch { .. })
        ));
    }
}
