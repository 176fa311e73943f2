#![allow(dead_code)] // each test binary uses its own subset

//! Shared oracles for the integration suites. Everything here recomputes
//! results through plain dense arithmetic, independent of the packed
//! kernels it checks.

use bnvp::bitcore::RealTensor;
use bnvp::graph::Padding;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Exact ±1 dot product computed tap by tap.
pub fn dot_oracle(a: &[f32], w: &[f32]) -> i64 {
    assert_eq!(a.len(), w.len());
    a.iter().zip(w).map(|(x, y)| (x * y) as i64).sum()
}

/// Random ±1 vector.
pub fn random_signs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// Dense float convolution with zero padding over an `[h, w, c]` map.
/// Weights are `[co][ky][kx][ci]` row-major. This is the reference the
/// packed XNOR path is checked against.
#[allow(clippy::too_many_arguments)]
pub fn dense_conv_reference(
    input: &RealTensor,
    weights: &[f32],
    cout: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> RealTensor {
    let (h, w, c) = (input.shape[0], input.shape[1], input.shape[2]);
    let (oh, ow) = match padding {
        Padding::Valid => ((h - kernel) / stride + 1, (w - kernel) / stride + 1),
        Padding::Same => (h.div_ceil(stride), w.div_ceil(stride)),
    };
    let (pad_y, pad_x) = match padding {
        Padding::Valid => (0isize, 0isize),
        Padding::Same => {
            let py = (((oh - 1) * stride + kernel).saturating_sub(h)) / 2;
            let px = (((ow - 1) * stride + kernel).saturating_sub(w)) / 2;
            (py as isize, px as isize)
        }
    };
    let mut out = vec![0f32; oh * ow * cout];
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0f64;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let iy = (oy * stride) as isize - pad_y + ky as isize;
                        let ix = (ox * stride) as isize - pad_x + kx as isize;
                        if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c {
                            let xv = input.values[((iy as usize) * w + ix as usize) * c + ci];
                            let wv = weights[((co * kernel + ky) * kernel + kx) * c + ci];
                            acc += f64::from(xv) * f64::from(wv);
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = acc as f32;
            }
        }
    }
    RealTensor::new(vec![oh, ow, cout], out).expect("finite reference output")
}
