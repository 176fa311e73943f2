//! Frozen feature extractors: threshold-folded BatchNorm, packed binary
//! convolution, and the sequential forward pass.
//!
//! At inference a BatchNorm followed by a sign activation collapses into a
//! per-channel threshold compare, so a binary block is: threshold the input,
//! pack it, XNOR-popcount against the packed filters. Full-precision blocks
//! apply the folded affine (scale/shift) plus ReLU before a dense
//! convolution. Both paths share zero-padding semantics: out-of-bounds taps
//! contribute nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitcore::{
    copy_bits, real_binary_dot, set_bits, xnor_dot_masked, BitTensor, RealTensor, WORD_BITS,
};
use crate::error::{Error, Result};
use crate::graph::{conv_out_dim, same_pad_begin, Feature, LayerKind, NetworkSpec, Padding};
use crate::quant::{kbit_dequantize, KbitCodes};

/// Inference-form BatchNorm: `y = scale·x + shift` per channel.
///
/// This is the pair that gets serialized; the running statistics are folded
/// into it at export time.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNorm {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

/// Per-channel threshold form of BatchNorm + sign.
///
/// `direction = +1`: output is +1 iff `x >= threshold`;
/// `direction = -1`: output is +1 iff `x <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedBatchNorm {
    pub thresholds: Vec<f64>,
    pub directions: Vec<f32>,
}

/// Folds raw BatchNorm statistics into the inference affine pair.
pub fn fold_affine(
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Result<AffineNorm> {
    let c = gamma.len();
    if beta.len() != c || mean.len() != c || var.len() != c {
        return Err(Error::LengthMismatch {
            expected: c,
            got: beta.len().min(mean.len()).min(var.len()),
        });
    }
    let mut scale = Vec::with_capacity(c);
    let mut shift = Vec::with_capacity(c);
    for i in 0..c {
        if var[i] < 0.0 {
            return Err(Error::DegenerateScale(format!(
                "negative variance at channel {i}"
            )));
        }
        let s = (f64::from(var[i]) + f64::from(eps)).sqrt();
        if s == 0.0 {
            return Err(Error::DegenerateScale(format!(
                "zero variance and epsilon at channel {i}"
            )));
        }
        if gamma[i] == 0.0 {
            return Err(Error::DegenerateScale(format!(
                "gamma is zero at channel {i}"
            )));
        }
        let g = f64::from(gamma[i]) / s;
        scale.push(g as f32);
        shift.push((f64::from(beta[i]) - f64::from(mean[i]) * g) as f32);
    }
    Ok(AffineNorm { scale, shift })
}

/// Folds BatchNorm + sign into per-channel thresholds:
/// `tau = mean - beta * sqrt(var + eps) / gamma`, direction = sign(gamma).
pub fn fold_batchnorm(
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Result<FoldedBatchNorm> {
    let c = gamma.len();
    if beta.len() != c || mean.len() != c || var.len() != c {
        return Err(Error::LengthMismatch {
            expected: c,
            got: beta.len().min(mean.len()).min(var.len()),
        });
    }
    let mut thresholds = Vec::with_capacity(c);
    let mut directions = Vec::with_capacity(c);
    for i in 0..c {
        if var[i] < 0.0 {
            return Err(Error::DegenerateScale(format!(
                "negative variance at channel {i}"
            )));
        }
        if gamma[i] == 0.0 {
            return Err(Error::DegenerateScale(format!(
                "gamma is zero at channel {i}"
            )));
        }
        let s = (f64::from(var[i]) + f64::from(eps)).sqrt();
        if s == 0.0 {
            return Err(Error::DegenerateScale(format!(
                "zero variance and epsilon at channel {i}"
            )));
        }
        thresholds.push(f64::from(mean[i]) - f64::from(beta[i]) * s / f64::from(gamma[i]));
        directions.push(if gamma[i] > 0.0 { 1.0 } else { -1.0 });
    }
    Ok(FoldedBatchNorm {
        thresholds,
        directions,
    })
}

impl FoldedBatchNorm {
    /// Threshold form of an affine pair: `scale·x + shift >= 0`.
    pub fn from_affine(affine: &AffineNorm) -> Result<Self> {
        let mut thresholds = Vec::with_capacity(affine.scale.len());
        let mut directions = Vec::with_capacity(affine.scale.len());
        for (i, (&s, &b)) in affine.scale.iter().zip(&affine.shift).enumerate() {
            if s == 0.0 {
                return Err(Error::DegenerateScale(format!(
                    "scale is zero at channel {i}"
                )));
            }
            thresholds.push(-f64::from(b) / f64::from(s));
            directions.push(if s > 0.0 { 1.0 } else { -1.0 });
        }
        Ok(FoldedBatchNorm {
            thresholds,
            directions,
        })
    }

    /// Identity normalization: plain sign at zero.
    pub fn identity(channels: usize) -> Self {
        FoldedBatchNorm {
            thresholds: vec![0.0; channels],
            directions: vec![1.0; channels],
        }
    }

    #[inline]
    pub fn binarize(&self, channel: usize, x: f32) -> bool {
        if self.directions[channel] > 0.0 {
            f64::from(x) >= self.thresholds[channel]
        } else {
            f64::from(x) <= self.thresholds[channel]
        }
    }
}

/// Weight storage of a frozen layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvWeights {
    /// 1-bit weights: one packed word row per output unit, padding-clean.
    Binary {
        rows: Vec<Vec<u64>>,
        row_bits: usize,
    },
    /// k-bit codes (k in {2,4,8}) plus their dequantized values.
    Coded { codes: KbitCodes, dequant: Vec<f32> },
    /// Full-precision weights, `[out][taps]` row-major.
    Real { values: Vec<f32> },
}

impl ConvWeights {
    /// Packs exact ±1 sign values, `out_units` rows of `row_bits` each.
    pub fn pack_binary(signs: &[f32], out_units: usize) -> Result<Self> {
        if out_units == 0 || !signs.len().is_multiple_of(out_units) {
            return Err(Error::ShapeMismatch(format!(
                "{} weights do not divide into {} rows",
                signs.len(),
                out_units
            )));
        }
        let row_bits = signs.len() / out_units;
        let mut rows = Vec::with_capacity(out_units);
        for r in 0..out_units {
            let t = BitTensor::pack(&signs[r * row_bits..(r + 1) * row_bits])?;
            rows.push(t.words().to_vec());
        }
        Ok(ConvWeights::Binary { rows, row_bits })
    }

    pub fn coded(codes: KbitCodes) -> Self {
        let dequant = kbit_dequantize(&codes);
        ConvWeights::Coded { codes, dequant }
    }

    pub fn weight_count(&self) -> usize {
        match self {
            ConvWeights::Binary { rows, row_bits } => rows.len() * row_bits,
            ConvWeights::Coded { codes, .. } => codes.codes.len(),
            ConvWeights::Real { values } => values.len(),
        }
    }

    /// Sign values of row `r` as ±1 reals (dense form for the real-input path).
    fn row_values(&self, r: usize, row_len: usize) -> RowView<'_> {
        match self {
            ConvWeights::Binary { rows, .. } => RowView::Bits(&rows[r]),
            ConvWeights::Coded { dequant, .. } => {
                RowView::Dense(&dequant[r * row_len..(r + 1) * row_len])
            }
            ConvWeights::Real { values } => RowView::Dense(&values[r * row_len..(r + 1) * row_len]),
        }
    }
}

enum RowView<'a> {
    Bits(&'a [u64]),
    Dense(&'a [f32]),
}

impl RowView<'_> {
    #[inline]
    fn weight(&self, i: usize) -> f32 {
        match self {
            RowView::Bits(words) => {
                if (words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            RowView::Dense(v) => v[i],
        }
    }
}

/// A frozen convolution block: optional input normalization, activation,
/// then convolution at the stored precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenConv {
    pub name: String,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub cin: usize,
    pub cout: usize,
    pub activation_bits: u8,
    pub bn: Option<AffineNorm>,
    pub weights: ConvWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPool {
    pub name: String,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenDense {
    pub name: String,
    pub in_len: usize,
    pub out_len: usize,
    pub activation_bits: u8,
    /// Channels the input normalization runs over (map channels for a
    /// conv-fed layer, element count for a flat-fed layer).
    pub bn_channels: usize,
    pub bn: Option<AffineNorm>,
    pub weights: ConvWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrozenLayer {
    Conv(FrozenConv),
    Pool(FrozenPool),
    Dense(FrozenDense),
}

impl FrozenLayer {
    pub fn name(&self) -> &str {
        match self {
            FrozenLayer::Conv(l) => &l.name,
            FrozenLayer::Pool(l) => &l.name,
            FrozenLayer::Dense(l) => &l.name,
        }
    }
}

fn map_dims(t: &RealTensor) -> Result<(usize, usize, usize)> {
    match t.shape.as_slice() {
        [h, w, c] => Ok((*h, *w, *c)),
        other => Err(Error::ShapeMismatch(format!(
            "expected a HxWxC map, got shape {other:?}"
        ))),
    }
}

/// Thresholds a map into a [h][w][c] bit plane, LSB-first.
fn binarize_map(x: &RealTensor, fold: &FoldedBatchNorm) -> Result<Vec<u64>> {
    let (h, w, c) = map_dims(x)?;
    if fold.thresholds.len() != c {
        return Err(Error::LengthMismatch {
            expected: c,
            got: fold.thresholds.len(),
        });
    }
    let n = h * w * c;
    let mut words = vec![0u64; n.div_ceil(WORD_BITS)];
    for (i, &v) in x.values.iter().enumerate() {
        if fold.binarize(i % c, v) {
            words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
        }
    }
    Ok(words)
}

/// Applies the affine normalization followed by ReLU (full-precision block
/// entry). Returns a new map of the same shape.
fn affine_relu(x: &RealTensor, bn: &AffineNorm, channels: usize) -> RealTensor {
    let mut out = x.clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        let ch = i % channels;
        let y = bn.scale[ch] * *v + bn.shift[ch];
        *v = if y > 0.0 { y } else { 0.0 };
    }
    out
}

impl FrozenConv {
    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            conv_out_dim(h, self.kernel, self.stride, self.padding)?,
            conv_out_dim(w, self.kernel, self.stride, self.padding)?,
        ))
    }

    /// Runs the block on a real-valued input map.
    pub fn forward(&self, input: &RealTensor) -> Result<RealTensor> {
        let (h, w, c) = map_dims(input)?;
        if c != self.cin {
            return Err(Error::ShapeMismatch(format!(
                "layer `{}` expects {} input channels, got {c}",
                self.name, self.cin
            )));
        }
        match (&self.weights, self.activation_bits) {
            (ConvWeights::Binary { rows, row_bits }, 1) => {
                let fold = match &self.bn {
                    Some(a) => FoldedBatchNorm::from_affine(a)?,
                    None => FoldedBatchNorm::identity(c),
                };
                let bits = binarize_map(input, &fold)?;
                self.conv_packed(&bits, h, w, rows, *row_bits)
            }
            (_, 1) => {
                // Sub-32-bit weights with binary activations: threshold to a
                // ±1 map, then dense convolution against dequantized weights.
                let fold = match &self.bn {
                    Some(a) => FoldedBatchNorm::from_affine(a)?,
                    None => FoldedBatchNorm::identity(c),
                };
                let mut pm = input.clone();
                for (i, v) in pm.values.iter_mut().enumerate() {
                    *v = if fold.binarize(i % c, *v) { 1.0 } else { -1.0 };
                }
                self.conv_dense(&pm, h, w)
            }
            (_, _) => {
                let x = match &self.bn {
                    Some(a) => affine_relu(input, a, c),
                    None => input.clone(),
                };
                self.conv_dense(&x, h, w)
            }
        }
    }

    /// XNOR-popcount convolution over a binarized input plane.
    fn conv_packed(
        &self,
        bits: &[u64],
        h: usize,
        w: usize,
        rows: &[Vec<u64>],
        row_bits: usize,
    ) -> Result<RealTensor> {
        let k = self.kernel;
        let (oh, ow) = self.out_dims(h, w)?;
        let (pad_y, pad_x) = match self.padding {
            Padding::Valid => (0isize, 0isize),
            Padding::Same => (
                same_pad_begin(h, oh, k, self.stride) as isize,
                same_pad_begin(w, ow, k, self.stride) as isize,
            ),
        };
        let row_words = row_bits.div_ceil(WORD_BITS);
        let mut window = vec![0u64; row_words];
        let mut mask = vec![0u64; row_words];
        let mut full_mask = vec![0u64; row_words];
        set_bits(&mut full_mask, 0, row_bits);

        let mut out = vec![0f32; oh * ow * self.cout];
        let c = self.cin;
        for oy in 0..oh {
            let iy0 = (oy * self.stride) as isize - pad_y;
            for ox in 0..ow {
                let ix0 = (ox * self.stride) as isize - pad_x;
                let border = iy0 < 0
                    || ix0 < 0
                    || iy0 + k as isize > h as isize
                    || ix0 + k as isize > w as isize;
                window.iter_mut().for_each(|v| *v = 0);
                let (mask_ref, mask_pop): (&[u64], u32) = if border {
                    mask.iter_mut().for_each(|v| *v = 0);
                    let mut pop = 0u32;
                    for ky in 0..k {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let x_start = ix0.max(0) as usize;
                        let x_end = ((ix0 + k as isize) as usize).min(w);
                        if x_start >= x_end {
                            continue;
                        }
                        let len = (x_end - x_start) * c;
                        let src = (iy as usize * w + x_start) * c;
                        let dst = (ky * k + (x_start as isize - ix0) as usize) * c;
                        copy_bits(bits, src, len, &mut window, dst);
                        set_bits(&mut mask, dst, len);
                        pop += len as u32;
                    }
                    (&mask, pop)
                } else {
                    for ky in 0..k {
                        let iy = iy0 as usize + ky;
                        let src = (iy * w + ix0 as usize) * c;
                        copy_bits(bits, src, k * c, &mut window, ky * k * c);
                    }
                    (&full_mask, row_bits as u32)
                };
                let base = (oy * ow + ox) * self.cout;
                for (co, wrow) in rows.iter().enumerate() {
                    out[base + co] = xnor_dot_masked(&window, wrow, mask_ref, mask_pop) as f32;
                }
            }
        }
        RealTensor::new(vec![oh, ow, self.cout], out)
    }

    /// Dense convolution; weight rows may be packed signs, dequantized codes
    /// or raw reals. Out-of-bounds taps are skipped (zero padding).
    fn conv_dense(&self, x: &RealTensor, h: usize, w: usize) -> Result<RealTensor> {
        let k = self.kernel;
        let c = self.cin;
        let (oh, ow) = self.out_dims(h, w)?;
        let (pad_y, pad_x) = match self.padding {
            Padding::Valid => (0isize, 0isize),
            Padding::Same => (
                same_pad_begin(h, oh, k, self.stride) as isize,
                same_pad_begin(w, ow, k, self.stride) as isize,
            ),
        };
        let row_len = k * k * c;
        let mut out = vec![0f32; oh * ow * self.cout];
        for co in 0..self.cout {
            let row = self.weights.row_values(co, row_len);
            for oy in 0..oh {
                let iy0 = (oy * self.stride) as isize - pad_y;
                for ox in 0..ow {
                    let ix0 = (ox * self.stride) as isize - pad_x;
                    let mut acc = 0f32;
                    for ky in 0..k {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = ix0 + kx as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xoff = (iy as usize * w + ix as usize) * c;
                            let woff = (ky * k + kx) * c;
                            for ci in 0..c {
                                acc += x.values[xoff + ci] * row.weight(woff + ci);
                            }
                        }
                    }
                    out[(oy * ow + ox) * self.cout + co] = acc;
                }
            }
        }
        RealTensor::new(vec![oh, ow, self.cout], out)
    }
}

/// Channelwise max pooling with a k x k kernel and stride s.
pub fn max_pool(input: &RealTensor, kernel: usize, stride: usize) -> Result<RealTensor> {
    let (h, w, c) = map_dims(input)?;
    if h < kernel || w < kernel {
        return Err(Error::ShapeMismatch(format!(
            "input {h}x{w} smaller than pool kernel {kernel}"
        )));
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let src = ((oy * stride + ky) * w + ox * stride + kx) * c;
                    let dst = (oy * ow + ox) * c;
                    for ci in 0..c {
                        let v = input.values[src + ci];
                        if v > out[dst + ci] {
                            out[dst + ci] = v;
                        }
                    }
                }
            }
        }
    }
    RealTensor::new(vec![oh, ow, c], out)
}

impl FrozenDense {
    pub fn forward(&self, input: &RealTensor) -> Result<RealTensor> {
        if input.len() != self.in_len {
            return Err(Error::ShapeMismatch(format!(
                "layer `{}` expects {} inputs, got {}",
                self.name,
                self.in_len,
                input.len()
            )));
        }
        if self.activation_bits == 1 {
            let fold = match &self.bn {
                Some(a) => FoldedBatchNorm::from_affine(a)?,
                None => FoldedBatchNorm::identity(self.bn_channels),
            };
            let mut words = vec![0u64; self.in_len.div_ceil(WORD_BITS)];
            for (i, &v) in input.values.iter().enumerate() {
                if fold.binarize(i % self.bn_channels, v) {
                    words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
                }
            }
            let mut full_mask = vec![0u64; words.len()];
            set_bits(&mut full_mask, 0, self.in_len);
            let mut out = vec![0f32; self.out_len];
            match &self.weights {
                ConvWeights::Binary { rows, .. } => {
                    for (o, row) in rows.iter().enumerate() {
                        out[o] =
                            xnor_dot_masked(&words, row, &full_mask, self.in_len as u32) as f32;
                    }
                }
                _ => {
                    // thresholded ±1 against dequantized/real rows
                    let pm: Vec<f32> = (0..self.in_len)
                        .map(|i| {
                            if (words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1 {
                                1.0
                            } else {
                                -1.0
                            }
                        })
                        .collect();
                    for (o, slot) in out.iter_mut().enumerate() {
                        let row = self.weights.row_values(o, self.in_len);
                        let mut acc = 0f32;
                        for (i, &v) in pm.iter().enumerate() {
                            acc += v * row.weight(i);
                        }
                        *slot = acc;
                    }
                }
            }
            RealTensor::new(vec![self.out_len], out)
        } else {
            let x = match &self.bn {
                Some(a) => affine_relu(input, a, self.bn_channels),
                None => input.clone(),
            };
            let mut out = vec![0f32; self.out_len];
            match &self.weights {
                ConvWeights::Binary { rows, row_bits } => {
                    for (o, row) in rows.iter().enumerate() {
                        let t = BitTensor::from_words(row.clone(), vec![*row_bits])?;
                        out[o] = real_binary_dot(&x.values, &t)?;
                    }
                }
                _ => {
                    for (o, slot) in out.iter_mut().enumerate() {
                        let row = self.weights.row_values(o, self.in_len);
                        let mut acc = 0f32;
                        for (i, &v) in x.values.iter().enumerate() {
                            acc += v * row.weight(i);
                        }
                        *slot = acc;
                    }
                }
            }
            RealTensor::new(vec![self.out_len], out)
        }
    }
}

/// A frozen feature extractor: the resolved spec plus per-layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenNetwork {
    pub spec: NetworkSpec,
    pub layers: Vec<FrozenLayer>,
}

impl FrozenNetwork {
    /// Runs the network and returns the flattened output of the spec's
    /// configured output layer.
    pub fn forward(&self, image: &RealTensor) -> Result<RealTensor> {
        let target = self.spec.output_layer.clone();
        self.forward_at(image, &target)
    }

    /// Runs layers in order until `layer` and returns its output flattened.
    pub fn forward_at(&self, image: &RealTensor, layer: &str) -> Result<RealTensor> {
        let (h, w, c) = self.spec.input_shape;
        if image.shape != vec![h, w, c] {
            return Err(Error::ShapeMismatch(format!(
                "network expects {h}x{w}x{c} input, got {:?}",
                image.shape
            )));
        }
        if !self.layers.iter().any(|l| l.name() == layer) {
            return Err(Error::UnknownLayer(layer.to_string()));
        }
        let mut cur = image.clone();
        for l in &self.layers {
            cur = match l {
                FrozenLayer::Conv(conv) => conv.forward(&cur)?,
                FrozenLayer::Pool(pool) => max_pool(&cur, pool.kernel, pool.stride)?,
                FrozenLayer::Dense(dense) => dense.forward(&cur)?,
            };
            if l.name() == layer {
                let n = cur.len();
                return RealTensor::new(vec![n], cur.values);
            }
        }
        Err(Error::UnknownLayer(layer.to_string()))
    }

    /// Builds a network with seeded random weights and identity
    /// normalizations. Used for shape checks, benchmarks and demos.
    pub fn random_init(spec: &NetworkSpec, seed: u64) -> Result<FrozenNetwork> {
        let chain = spec.resolve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(chain.len());
        for geom in &chain {
            let l = &geom.spec;
            match l.kind {
                LayerKind::Pool => layers.push(FrozenLayer::Pool(FrozenPool {
                    name: l.name.clone(),
                    kernel: l.kernel,
                    stride: l.stride,
                })),
                LayerKind::ConvBlock => {
                    let Feature::Map { c, .. } = geom.input else {
                        unreachable!("resolve() guarantees conv inputs are maps")
                    };
                    let weights =
                        random_weights(&mut rng, geom.weight_count, l.units, l.weight_bits)?;
                    let bn = l.has_batchnorm.then(|| AffineNorm {
                        scale: vec![1.0; c],
                        shift: vec![0.0; c],
                    });
                    layers.push(FrozenLayer::Conv(FrozenConv {
                        name: l.name.clone(),
                        kernel: l.kernel,
                        stride: l.stride,
                        padding: l.padding,
                        cin: c,
                        cout: l.units,
                        activation_bits: l.activation_bits,
                        bn,
                        weights,
                    }));
                }
                LayerKind::FullyConnected => {
                    let in_len = geom.input.len();
                    let bn_channels = geom.input.norm_channels();
                    let weights =
                        random_weights(&mut rng, geom.weight_count, l.units, l.weight_bits)?;
                    let bn = l.has_batchnorm.then(|| AffineNorm {
                        scale: vec![1.0; bn_channels],
                        shift: vec![0.0; bn_channels],
                    });
                    layers.push(FrozenLayer::Dense(FrozenDense {
                        name: l.name.clone(),
                        in_len,
                        out_len: l.units,
                        activation_bits: l.activation_bits,
                        bn_channels,
                        bn,
                        weights,
                    }));
                }
            }
        }
        Ok(FrozenNetwork {
            spec: spec.clone(),
            layers,
        })
    }
}

fn random_weights(
    rng: &mut ChaCha8Rng,
    count: usize,
    out_units: usize,
    bits: u8,
) -> Result<ConvWeights> {
    match bits {
        1 => {
            let signs: Vec<f32> = (0..count)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            ConvWeights::pack_binary(&signs, out_units)
        }
        2 | 4 | 8 => {
            let max = ((1u16 << bits) - 1) as u8;
            let codes: Vec<u8> = (0..count).map(|_| rng.gen_range(0..=max)).collect();
            Ok(ConvWeights::coded(KbitCodes { bits, codes }))
        }
        32 => {
            let values: Vec<f32> = (0..count).map(|_| rng.gen_range(-0.1..0.1)).collect();
            Ok(ConvWeights::Real { values })
        }
        b => Err(Error::UnsupportedBits(b)),
    }
}
