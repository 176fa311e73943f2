//! Synthetic place dataset: procedurally generated scenes for desk-scale
//! training and retrieval checks.
//!
//! Each class is a fixed "place" built from a smooth random color field plus
//! an oriented grating, so classes are visually distinct at conv scale.
//! Training samples jitter the prototype with small shifts, noise and
//! brightness changes; query images apply noise and brightness only, which
//! matches a revisit of the same place under different conditions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bitcore::RealTensor;
use crate::graph::{LayerSpec, NetworkSpec, Padding};
use crate::train::LabeledDataset;

/// Scaled three-block binary architecture for `size` x `size` x 3 input.
pub fn desk_network_spec(size: usize, weight_bits: u8) -> NetworkSpec {
    NetworkSpec {
        name: "desk_floppy".into(),
        input_shape: (size, size, 3),
        layers: vec![
            LayerSpec::conv("conv1", 3, 1, 16)
                .with_precision(weight_bits, 32)
                .with_batchnorm(false)
                .with_padding(Padding::Valid),
            LayerSpec::pool("pool1", 2, 2),
            LayerSpec::conv("conv2", 3, 1, 32).with_precision(weight_bits, 1),
            LayerSpec::pool("pool2", 2, 2),
            LayerSpec::conv("conv5", 3, 1, 64).with_precision(weight_bits, 1),
            LayerSpec::pool("pool5", 2, 2),
        ],
        output_layer: "pool5".into(),
    }
}

fn class_rng(seed: u64, class: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(class as u64),
    )
}

/// The clean image of one place.
pub fn class_prototype(class: usize, classes: usize, size: usize, seed: u64) -> RealTensor {
    let mut rng = class_rng(seed, class);
    // Smooth random color field from a 4x4 grid, bilinearly upsampled.
    const G: usize = 4;
    let mut grid = [[0f32; 3]; G * G];
    for cell in grid.iter_mut() {
        for v in cell.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
    }
    let theta =
        std::f32::consts::PI * class as f32 / classes.max(1) as f32 + rng.gen_range(-0.2..0.2);
    let freq = rng.gen_range(1.5..3.5);
    let phase = rng.gen_range(0.0..std::f32::consts::TAU);
    let stripe_weight: [f32; 3] = [
        rng.gen_range(0.3..0.7),
        rng.gen_range(0.3..0.7),
        rng.gen_range(0.3..0.7),
    ];
    let mut values = vec![0f32; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            // bilinear sample of the coarse grid
            let gy = y as f32 / (size - 1) as f32 * (G - 1) as f32;
            let gx = x as f32 / (size - 1) as f32 * (G - 1) as f32;
            let y0 = gy.floor() as usize;
            let x0 = gx.floor() as usize;
            let y1 = (y0 + 1).min(G - 1);
            let x1 = (x0 + 1).min(G - 1);
            let fy = gy - y0 as f32;
            let fx = gx - x0 as f32;
            let proj = (x as f32 * theta.cos() + y as f32 * theta.sin()) / size as f32;
            let stripe = 0.5 + 0.5 * (std::f32::consts::TAU * freq * proj + phase).sin();
            for ch in 0..3 {
                let blob = grid[y0 * G + x0][ch] * (1.0 - fy) * (1.0 - fx)
                    + grid[y0 * G + x1][ch] * (1.0 - fy) * fx
                    + grid[y1 * G + x0][ch] * fy * (1.0 - fx)
                    + grid[y1 * G + x1][ch] * fy * fx;
                let w = stripe_weight[ch];
                values[(y * size + x) * 3 + ch] = (1.0 - w) * blob + w * stripe;
            }
        }
    }
    // rescale each channel into [0.15, 0.85] so perturbations stay in range
    for ch in 0..3 {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for i in (ch..values.len()).step_by(3) {
            lo = lo.min(values[i]);
            hi = hi.max(values[i]);
        }
        let span = hi - lo;
        for i in (ch..values.len()).step_by(3) {
            values[i] = if span > 1e-6 {
                0.15 + 0.7 * (values[i] - lo) / span
            } else {
                0.5
            };
        }
    }
    RealTensor::new(vec![size, size, 3], values).expect("finite prototype")
}

fn shift_image(img: &RealTensor, dy: isize, dx: isize) -> RealTensor {
    let (h, w) = (img.shape[0], img.shape[1]);
    let c = img.shape[2];
    let mut out = vec![0f32; img.values.len()];
    for y in 0..h {
        for x in 0..w {
            let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
            let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
            for ch in 0..c {
                out[(y * w + x) * c + ch] = img.values[(sy * w + sx) * c + ch];
            }
        }
    }
    RealTensor {
        shape: img.shape.clone(),
        values: out,
    }
}

fn perturb(
    img: &RealTensor,
    rng: &mut ChaCha8Rng,
    noise_sigma: f32,
    brightness: f32,
) -> RealTensor {
    let normal = Normal::new(0.0f32, noise_sigma.max(1e-8)).expect("valid sigma");
    let delta = rng.gen_range(-brightness..=brightness);
    let values = img
        .values
        .iter()
        .map(|&v| {
            let n = if noise_sigma > 0.0 {
                normal.sample(rng)
            } else {
                0.0
            };
            (v + n + delta).clamp(0.0, 1.0)
        })
        .collect();
    RealTensor {
        shape: img.shape.clone(),
        values,
    }
}

/// Labeled training set: `per_class` jittered samples of each place.
pub fn training_set(classes: usize, per_class: usize, size: usize, seed: u64) -> LabeledDataset {
    let mut images = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let proto = class_prototype(class, classes, size, seed);
        let mut rng = class_rng(seed ^ 0x5bd1e995, class);
        for _ in 0..per_class {
            let dy = rng.gen_range(-2..=2);
            let dx = rng.gen_range(-2..=2);
            let shifted = shift_image(&proto, dy, dx);
            images.push((perturb(&shifted, &mut rng, 0.03, 0.1), class));
        }
    }
    LabeledDataset { images, classes }
}

/// Clean reference images, one per place; the frame index is the class.
pub fn reference_images(classes: usize, size: usize, seed: u64) -> Vec<(i64, RealTensor)> {
    (0..classes)
        .map(|c| (c as i64, class_prototype(c, classes, size, seed)))
        .collect()
}

/// Noise- and brightness-perturbed revisits of each place, `per_class`
/// queries per place, frame index = class.
pub fn query_images(
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
) -> Vec<(i64, RealTensor)> {
    let mut out = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let proto = class_prototype(class, classes, size, seed);
        let mut rng = class_rng(seed ^ 0xc2b2ae35, class);
        for _ in 0..per_class {
            out.push((class as i64, perturb(&proto, &mut rng, 0.05, 0.08)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prototypes_are_deterministic_and_distinct() {
        let a = class_prototype(0, 8, 32, 7);
        let b = class_prototype(0, 8, 32, 7);
        assert_eq!(a.values, b.values);
        let c = class_prototype(1, 8, 32, 7);
        let diff: f32 = a
            .values
            .iter()
            .zip(&c.values)
            .map(|(x, y)| (x - y).abs())
            .sum::<f32>()
            / a.values.len() as f32;
        assert!(diff > 0.05, "classes should differ, mean abs diff {diff}");
    }

    #[test]
    fn values_stay_in_unit_range() {
        let ds = training_set(4, 6, 32, 3);
        assert_eq!(ds.images.len(), 24);
        for (img, label) in &ds.images {
            assert!(*label < 4);
            assert!(img.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        for (_, img) in query_images(4, 3, 32, 3) {
            assert!(img.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn desk_spec_resolves() {
        let spec = desk_network_spec(32, 1);
        assert_eq!(spec.output_len().unwrap(), 3 * 3 * 64);
    }
}
