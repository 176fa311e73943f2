//! Weight quantizers: the sign binarizer and the k-bit uniform family.
//!
//! The k-bit scheme normalizes weights by tanh and the tensor's peak
//! magnitude, then snaps to 2^k evenly spaced levels on [-1, +1]. k = 1
//! degenerates to the sign quantizer. Ties round toward the positive level,
//! matching sign(0) = +1.

use serde::{Deserialize, Serialize};

use crate::bitcore::RealTensor;
use crate::error::{Error, Result};

/// Elementwise sign: +1 if w >= 0 else -1.
pub fn sign_quantize_slice(w: &[f32]) -> Result<Vec<f32>> {
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(w.iter()
        .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
        .collect())
}

/// Sign quantization of a tensor, shape preserved.
pub fn sign_quantize(w: &RealTensor) -> Result<RealTensor> {
    Ok(RealTensor {
        shape: w.shape.clone(),
        values: sign_quantize_slice(&w.values)?,
    })
}

/// Quantized level indices for a weight tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbitCodes {
    pub bits: u8,
    pub codes: Vec<u8>,
}

fn check_bits(k: u8) -> Result<()> {
    match k {
        1 | 2 | 4 | 8 => Ok(()),
        other => Err(Error::UnsupportedBits(other)),
    }
}

/// Value of level `idx` on the 2^k-level grid over [-1, +1].
pub fn kbit_level(idx: u8, k: u8) -> f32 {
    let levels = (1u32 << k) as f64;
    (f64::from(idx) * 2.0 / (levels - 1.0) - 1.0) as f32
}

/// Nearest-level index for a value already in [-1, +1]; ties round up.
pub fn uniform_index(x: f64, k: u8) -> u8 {
    let levels = (1u32 << k) as f64;
    let delta = 2.0 / (levels - 1.0);
    let idx = ((x + 1.0) / delta + 0.5).floor();
    idx.clamp(0.0, levels - 1.0) as u8
}

/// Nearest-level value for `x` in [-1, +1].
pub fn uniform_quantize(x: f64, k: u8) -> f32 {
    kbit_level(uniform_index(x, k), k)
}

/// k-bit quantization of a weight slice: tanh-normalize, then snap to the
/// uniform grid. With k = 1 this reduces to the sign quantizer.
pub fn kbit_quantize(w: &[f32], k: u8) -> Result<KbitCodes> {
    check_bits(k)?;
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let t: Vec<f64> = w.iter().map(|&v| f64::from(v).tanh()).collect();
    let peak = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let codes = t
        .iter()
        .map(|&v| {
            let n = if peak > 0.0 { v / peak } else { 0.0 };
            uniform_index(n, k)
        })
        .collect();
    Ok(KbitCodes { bits: k, codes })
}

/// Dequantizes codes back to their level values.
pub fn kbit_dequantize(codes: &KbitCodes) -> Vec<f32> {
    codes
        .codes
        .iter()
        .map(|&c| kbit_level(c, codes.bits))
        .collect()
}

/// Quantized forward values for training: sign for 1-bit, level values for
/// k-bit, identity for 32-bit.
pub fn quantize_forward(w: &[f32], bits: u8) -> Result<Vec<f32>> {
    match bits {
        1 => sign_quantize_slice(w),
        2 | 4 | 8 => Ok(kbit_dequantize(&kbit_quantize(w, bits)?)),
        32 => Ok(w.to_vec()),
        other => Err(Error::UnsupportedBits(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_basic() {
        assert_eq!(sign_quantize_slice(&[0.5]).unwrap(), vec![1.0]);
        assert_eq!(sign_quantize_slice(&[-0.3]).unwrap(), vec![-1.0]);
        // tie rule: sign(0) = +1
        assert_eq!(sign_quantize_slice(&[0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn sign_rejects_non_finite() {
        assert!(sign_quantize_slice(&[f32::NAN]).is_err());
        assert!(sign_quantize_slice(&[f32::INFINITY]).is_err());
    }

    #[test]
    fn k8_hits_all_levels_and_endpoints() {
        let w: Vec<f32> = (0..100_000)
            .map(|i| -1.0 + 2.0 * (i as f32) / 99_999.0)
            .collect();
        let codes = kbit_quantize(&w, 8).unwrap();
        let distinct: std::collections::BTreeSet<u8> = codes.codes.iter().copied().collect();
        assert_eq!(distinct.len(), 256);
        let dq = kbit_dequantize(&codes);
        assert_eq!(dq[0], -1.0);
        assert_eq!(*dq.last().unwrap(), 1.0);
    }

    #[test]
    fn k2_zero_maps_to_nearest_level() {
        // 4-level codebook {-1, -1/3, 1/3, 1}; w = 0 sits midway between
        // -1/3 and 1/3 and rounds up.
        let codes = kbit_quantize(&[0.0, 0.9, -0.9], 2).unwrap();
        let dq = kbit_dequantize(&codes);
        assert!((dq[0] - 1.0 / 3.0).abs() < 1e-6);
        assert_eq!(dq[1], 1.0);
        assert_eq!(dq[2], -1.0);
    }

    #[test]
    fn uniform_error_bound() {
        for k in [2u8, 4, 8] {
            let delta = 2.0 / ((1u32 << k) as f64 - 1.0);
            for i in 0..=10_000 {
                let x = -1.0 + 2.0 * f64::from(i) / 10_000.0;
                let q = f64::from(uniform_quantize(x, k));
                // half a level spacing, plus float32 representation slack
                assert!((q - x).abs() <= delta / 2.0 + 1e-6, "k={k} x={x} q={q}");
            }
        }
    }

    #[test]
    fn k1_degenerates_to_sign() {
        let w = [0.7, -0.2, 0.0, -3.0, 1.5];
        let codes = kbit_quantize(&w, 1).unwrap();
        let dq = kbit_dequantize(&codes);
        assert_eq!(dq, sign_quantize_slice(&w).unwrap());
    }

    #[test]
    fn unsupported_k_rejected() {
        assert!(kbit_quantize(&[0.0], 3).is_err());
        assert!(kbit_quantize(&[0.0], 16).is_err());
    }

    #[test]
    fn all_zero_tensor_quantizes_cleanly() {
        let codes = kbit_quantize(&[0.0, 0.0], 4).unwrap();
        let dq = kbit_dequantize(&codes);
        // zero normalizes to zero; nearest level above zero
        assert!(dq.iter().all(|&v| v.abs() <= 2.0 / 15.0 + 1e-6));
    }
}
