//! Bit-packed sign tensors and the XNOR-popcount dot-product kernel.
//!
//! A `BitTensor` stores one sign per bit: bit 1 encodes +1, bit 0 encodes -1.
//! Bits are laid out LSB-first inside 64-bit words so masking the trailing
//! partial word is a single AND. All padding bits past `valid_bits` are kept
//! at zero; every operation masks before counting, so padding never leaks
//! into results.

use crate::error::{Error, Result};

/// Storage word width in bits.
pub const WORD_BITS: usize = 64;

/// Sign tensor packed one value per bit (1 = +1, 0 = -1), LSB-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitTensor {
    logical_shape: Vec<usize>,
    words: Vec<u64>,
    valid_bits: usize,
}

/// Dense 32-bit real tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl RealTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(RealTensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        RealTensor {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

/// All-ones mask for the low `bits` bits of the trailing word; `bits` in 1..=64.
fn tail_mask(bits: usize) -> u64 {
    debug_assert!((1..=WORD_BITS).contains(&bits));
    if bits == WORD_BITS {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

impl BitTensor {
    /// Packs a slice of exact ±1 values, one bit each (LSB-first).
    pub fn pack(values: &[f32]) -> Result<Self> {
        Self::pack_with_shape(values, vec![values.len()])
    }

    /// Packs ±1 values under an explicit logical shape.
    pub fn pack_with_shape(values: &[f32], logical_shape: Vec<usize>) -> Result<Self> {
        let expected: usize = logical_shape.iter().product();
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        let mut words = vec![0u64; words_for(values.len())];
        for (i, &v) in values.iter().enumerate() {
            if v == 1.0 {
                words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
            } else if v != -1.0 {
                return Err(Error::NotSign { index: i, value: v });
            }
        }
        Ok(BitTensor {
            logical_shape,
            words,
            valid_bits: values.len(),
        })
    }

    /// Builds a tensor from raw words; bits past `valid_bits` are cleared.
    pub fn from_words(mut words: Vec<u64>, logical_shape: Vec<usize>) -> Result<Self> {
        let valid_bits: usize = logical_shape.iter().product();
        let need = words_for(valid_bits);
        if words.len() != need {
            return Err(Error::LengthMismatch {
                expected: need,
                got: words.len(),
            });
        }
        if !valid_bits.is_multiple_of(WORD_BITS) {
            if let Some(last) = words.last_mut() {
                *last &= tail_mask(valid_bits % WORD_BITS);
            }
        }
        Ok(BitTensor {
            logical_shape,
            words,
            valid_bits,
        })
    }

    /// Unpacks to a ±1 vector of length `valid_bits`.
    pub fn unpack(&self) -> Vec<f32> {
        (0..self.valid_bits)
            .map(|i| if self.bit(i) { 1.0 } else { -1.0 })
            .collect()
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.valid_bits);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn valid_bits(&self) -> usize {
        self.valid_bits
    }

    pub fn logical_shape(&self) -> &[usize] {
        &self.logical_shape
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Number of set bits among the valid bits.
    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }
}

/// ±1 dot product of two packed sign tensors via XNOR + popcount.
///
/// Returns `2·popcount(xnor(a, w)) − n` over the valid bits, which equals
/// `Σ aᵢ·wᵢ` exactly.
pub fn xnor_dot(a: &BitTensor, w: &BitTensor) -> Result<i64> {
    if a.valid_bits != w.valid_bits {
        return Err(Error::LengthMismatch {
            expected: a.valid_bits,
            got: w.valid_bits,
        });
    }
    let n = a.valid_bits;
    if n == 0 {
        return Ok(0);
    }
    let full = n / WORD_BITS;
    let mut agree: u64 = 0;
    for i in 0..full {
        agree += u64::from((!(a.words[i] ^ w.words[i])).count_ones());
    }
    let rem = n % WORD_BITS;
    if rem != 0 {
        let x = !(a.words[full] ^ w.words[full]) & tail_mask(rem);
        agree += u64::from(x.count_ones());
    }
    Ok(2 * agree as i64 - n as i64)
}

/// Masked ±1 dot product over raw word slices: only positions with a set
/// mask bit contribute. `mask_pop` must equal the mask popcount.
///
/// Used by the convolution kernel where border windows exclude out-of-bounds
/// taps; excluded positions behave like zero-padding in a dense convolution.
pub(crate) fn xnor_dot_masked(a: &[u64], w: &[u64], mask: &[u64], mask_pop: u32) -> i64 {
    debug_assert!(a.len() >= mask.len() && w.len() >= mask.len());
    let mut agree: u64 = 0;
    for i in 0..mask.len() {
        agree += u64::from(((!(a[i] ^ w[i])) & mask[i]).count_ones());
    }
    2 * agree as i64 - i64::from(mask_pop)
}

/// Dot product of a real slice against packed signs: `Σ xᵢ·signᵢ(w)`,
/// computed with sign-conditional add/subtract.
pub fn real_binary_dot(x: &[f32], w: &BitTensor) -> Result<f32> {
    if x.len() != w.valid_bits {
        return Err(Error::LengthMismatch {
            expected: w.valid_bits,
            got: x.len(),
        });
    }
    let mut acc = 0.0f32;
    for (i, &v) in x.iter().enumerate() {
        if w.bit(i) {
            acc += v;
        } else {
            acc -= v;
        }
    }
    Ok(acc)
}

/// Copies `len` bits from `src` starting at bit `src_off` into `dst` at bit
/// `dst_off`. Destination bits in range are overwritten; bits outside the
/// range are preserved.
pub(crate) fn copy_bits(src: &[u64], src_off: usize, len: usize, dst: &mut [u64], dst_off: usize) {
    let mut copied = 0;
    while copied < len {
        let s = src_off + copied;
        let d = dst_off + copied;
        let s_word = s / WORD_BITS;
        let s_bit = s % WORD_BITS;
        let d_word = d / WORD_BITS;
        let d_bit = d % WORD_BITS;
        // Largest chunk that stays inside one source and one destination word.
        let chunk = (WORD_BITS - s_bit).min(WORD_BITS - d_bit).min(len - copied);
        let bits = (src[s_word] >> s_bit) & tail_mask(chunk);
        dst[d_word] = (dst[d_word] & !(tail_mask(chunk) << d_bit)) | (bits << d_bit);
        copied += chunk;
    }
}

/// Sets `len` bits to one in `dst` starting at bit `off`.
pub(crate) fn set_bits(dst: &mut [u64], off: usize, len: usize) {
    let mut done = 0;
    while done < len {
        let p = off + done;
        let word = p / WORD_BITS;
        let bit = p % WORD_BITS;
        let chunk = (WORD_BITS - bit).min(len - done);
        dst[word] |= tail_mask(chunk) << bit;
        done += chunk;
    }
}
