//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its runtime (run with `--nocapture` to see them).

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bnvp::bitcore::{xnor_dot, BitTensor, RealTensor};
use bnvp::graph::{preset, ConvWeights, FrozenConv, FrozenNetwork, Padding, Preset};
use bnvp::io::{decode_model, encode_model, ModelData};
use bnvp::metrics;
use bnvp::train::{self, synth, TrainConfig};
use bnvp::vpr::{self, Descriptor, GroundTruth, ReferenceDB};

use common::{dense_conv_reference, dot_oracle, random_signs};

fn pass(criterion: u32, started: Instant, budget_s: f64, detail: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_s,
        "criterion {criterion} exceeded its {budget_s}s budget: {elapsed:.1}s"
    );
    println!("criterion {criterion} PASS ({elapsed:.2}s): {detail}");
}

#[test]
fn criterion_1_bit_kernel_exactness() {
    let t0 = Instant::now();
    // exhaustive over all sign-vector pairs up to n = 8
    for n in 1..=8usize {
        for x in 0u64..(1 << n) {
            let a: Vec<f32> = (0..n)
                .map(|i| if (x >> i) & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let ta = BitTensor::pack(&a).unwrap();
            for y in 0u64..(1 << n) {
                let w: Vec<f32> = (0..n)
                    .map(|i| if (y >> i) & 1 == 1 { 1.0 } else { -1.0 })
                    .collect();
                let tw = BitTensor::pack(&w).unwrap();
                assert_eq!(xnor_dot(&ta, &tw).unwrap(), dot_oracle(&a, &w));
            }
        }
    }
    // for 9 <= n <= 16, every agreement pattern: all 2^n vectors against
    // structured and random partners (all 4^n pairs would take hours)
    let mut rng = ChaCha8Rng::seed_from_u64(161);
    for n in 9..=16usize {
        for x in 0u64..(1 << n) {
            let a: Vec<f32> = (0..n)
                .map(|i| if (x >> i) & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let ta = BitTensor::pack(&a).unwrap();
            let partners: [Vec<f32>; 4] = [
                vec![1.0; n],
                vec![-1.0; n],
                a.iter().map(|v| -v).collect(),
                random_signs(&mut rng, n),
            ];
            for w in &partners {
                let tw = BitTensor::pack(w).unwrap();
                assert_eq!(xnor_dot(&ta, &tw).unwrap(), dot_oracle(&a, w));
            }
        }
    }
    // random trials crossing many word boundaries
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=4096);
        let a = random_signs(&mut rng, n);
        let w = random_signs(&mut rng, n);
        let ta = BitTensor::pack(&a).unwrap();
        let tw = BitTensor::pack(&w).unwrap();
        let d = xnor_dot(&ta, &tw).unwrap();
        assert_eq!(d, dot_oracle(&a, &w));
        assert_eq!(d.rem_euclid(2), (n as i64).rem_euclid(2));
        assert!(d.abs() <= n as i64);
    }
    pass(
        1,
        t0,
        10.0,
        "xnor_dot exact: all pairs n<=8, all patterns n<=16, 10^4 random to n=4096",
    );
}

#[test]
fn criterion_2_conv_equivalence() {
    let t0 = Instant::now();
    // binary conv geometries of the presets, exercised at a reduced spatial
    // size (channel structure, kernel, stride and padding preserved)
    let layers: [(&str, usize, usize, usize, usize); 6] = [
        ("binarynet/conv2", 5, 1, 96, 256),
        ("binarynet/conv3", 3, 1, 256, 384),
        ("binarynet/conv4", 3, 1, 384, 384),
        ("binarynet/conv5", 3, 1, 384, 256),
        ("floppynet/conv2", 5, 1, 96, 256),
        ("floppynet/conv5", 3, 1, 256, 256),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let spatial = 4usize;
    for (name, kernel, stride, cin, cout) in layers {
        for trial in 0..100 {
            let wsigns = random_signs(&mut rng, kernel * kernel * cin * cout);
            let conv = FrozenConv {
                name: name.to_string(),
                kernel,
                stride,
                padding: Padding::Same,
                cin,
                cout,
                activation_bits: 1,
                bn: None,
                weights: ConvWeights::pack_binary(&wsigns, cout).unwrap(),
            };
            // half the trials feed ±1 maps directly; half feed real values
            // that the block thresholds at zero
            let input = if trial % 2 == 0 {
                RealTensor::new(
                    vec![spatial, spatial, cin],
                    random_signs(&mut rng, spatial * spatial * cin),
                )
                .unwrap()
            } else {
                RealTensor::new(
                    vec![spatial, spatial, cin],
                    (0..spatial * spatial * cin)
                        .map(|_| rng.gen_range(-2.0..2.0))
                        .collect(),
                )
                .unwrap()
            };
            let packed = conv.forward(&input).unwrap();
            let thresholded = RealTensor {
                shape: input.shape.clone(),
                values: input
                    .values
                    .iter()
                    .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
                    .collect(),
            };
            let reference =
                dense_conv_reference(&thresholded, &wsigns, cout, kernel, stride, Padding::Same);
            assert_eq!(packed.shape, reference.shape);
            assert_eq!(packed.values, reference.values, "{name} trial {trial}");
        }
    }
    pass(
        2,
        t0,
        30.0,
        "packed conv equals dense ±1 reference, 100 instances x 6 preset layer geometries",
    );
}

#[test]
fn criterion_3_size_tables() {
    let t0 = Instant::now();
    let floppy = metrics::size_breakdown(&preset(Preset::FloppyNet), 1).unwrap();
    assert!(
        (floppy.total_kib() - 154.0).abs() <= 1.0,
        "{}",
        floppy.total_kib()
    );

    let binary = metrics::size_breakdown(&preset(Preset::BinaryNet), 1).unwrap();
    let full = metrics::size_breakdown(&preset(Preset::Baseline), 32).unwrap();
    let bin_pool5 = binary.bytes_at("pool5").unwrap() as f64 / 1024.0;
    assert!((bin_pool5 - 466.0).abs() <= 1.0, "{bin_pool5}");

    let full_pool5 = full.bytes_at("pool5").unwrap() as f64 / (1024.0 * 1024.0);
    assert!((full_pool5 - 14.3).abs() / 14.3 < 0.01, "{full_pool5}");
    let full_fc7 = full.total_mib();
    assert!((full_fc7 - 222.37).abs() / 222.37 < 0.01, "{full_fc7}");

    for (b, f) in binary.rows.iter().zip(&full.rows) {
        let ratio = 100.0 * b.size_bytes_cum as f64 / f.size_bytes_cum as f64;
        assert!((3.0..=3.3).contains(&ratio), "{}: {ratio}", b.layer);
    }
    let conv1 = 100.0 * binary.rows[0].size_bytes_cum as f64 / full.rows[0].size_bytes_cum as f64;
    assert!((conv1 - 3.12).abs() <= 0.01, "conv1 ratio {conv1}");

    for (k, kib) in [(2u8, 306.0f64), (4, 608.0), (8, 1213.0)] {
        let b = metrics::size_breakdown(&preset(Preset::FloppyNetK(k)), k).unwrap();
        assert!(
            (b.total_kib() - kib).abs() <= 2.0,
            "k={k}: {}",
            b.total_kib()
        );
    }
    pass(
        3,
        t0,
        10.0,
        "154 KiB / 466 KiB / 14.3 MiB / 222.37 MiB / ratios in [3.0,3.3] / 306-608-1213 KiB",
    );
}

#[test]
fn criterion_4_mac_counts_and_speedup() {
    let t0 = Instant::now();
    let m = metrics::mac_breakdown(&preset(Preset::FloppyNet), (227, 227, 3)).unwrap();
    let total = m.total() as f64;
    let binary = m.binary_total() as f64;
    let full = m.full_precision_total() as f64;
    assert!((total - 653e6).abs() / 653e6 < 0.01, "total {total}");
    assert!((binary - 547.6e6).abs() / 547.6e6 < 0.01, "binary {binary}");
    assert!((full - 105.5e6).abs() / 105.5e6 < 0.01, "full {full}");

    // projection with the published literal inputs
    let s = metrics::projected_speedup(711.0, 547.0, 105.5, 5.3).unwrap();
    assert!((s - 3.4).abs() <= 0.05, "{s}");

    // lane throughput behind the 5.3 factor: 32 lanes over 6 cycles
    assert!((metrics::macs_per_cycle(32, 6) - 5.333).abs() < 0.01);
    pass(
        4,
        t0,
        10.0,
        "653M total / 547.6M binary / 105.5M full (within 1%), projection 3.4",
    );
}

#[test]
fn criterion_5_memory_efficiency_table() {
    let t0 = Instant::now();
    // (name, precision, score, size KiB, published eta, printed decimals)
    let rows: [(&str, &str, f64, f64, f64, i32); 9] = [
        ("HybridNet", "Full", 33.57, 16957.0, 505.12, 2),
        ("Baseline", "Full", 62.0, 14648.0, 236.3, 1),
        ("VGG-16", "Full", 66.13, 57487.0, 869.3, 1),
        ("BinaryNet", "1-bit", 56.4, 466.0, 8.26, 2),
        ("ShallowNet", "1-bit", 55.5, 154.0, 2.77, 2),
        ("FloppyNet", "1-bit", 58.2, 154.0, 2.65, 2),
        ("FloppyNet-2", "2-bit", 58.22, 306.0, 5.26, 2),
        ("FloppyNet-4", "4-bit", 61.02, 608.0, 9.96, 2),
        ("FloppyNet-8", "8-bit", 61.52, 1213.0, 19.72, 2),
    ];
    let inputs: Vec<(String, String, f64, f64)> = rows
        .iter()
        .map(|r| (r.0.to_string(), r.1.to_string(), r.2, r.3))
        .collect();
    let table = metrics::efficiency_table(&inputs).unwrap();
    for (row, expected) in table.iter().zip(&rows) {
        let scale = 10f64.powi(expected.5);
        let at_printed_precision = (row.eta_m * scale).round() / scale;
        assert!(
            (at_printed_precision - expected.4).abs() <= 0.02,
            "{}: computed {} vs published {}",
            row.name,
            row.eta_m,
            expected.4
        );
    }
    let ranking = metrics::efficiency_ranking(&table);
    assert_eq!(
        ranking,
        vec![
            "FloppyNet",
            "ShallowNet",
            "FloppyNet-2",
            "BinaryNet",
            "FloppyNet-4",
            "FloppyNet-8",
            "Baseline",
            "HybridNet",
            "VGG-16"
        ]
    );
    pass(
        5,
        t0,
        10.0,
        "eta_m matches all nine published rows and their ranking",
    );
}

#[test]
fn criterion_6_descriptor_contracts() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(66);

    // unit norm and scale invariance, through a real extractor
    let spec = synth::desk_network_spec(16, 1);
    let net = FrozenNetwork::random_init(&spec, 3).unwrap();
    let img = RealTensor::new(
        vec![16, 16, 3],
        (0..16 * 16 * 3).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let d = vpr::extract(&net, &img, 0).unwrap();
    let norm: f64 = d.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
    assert!((norm.sqrt() - 1.0).abs() < 1e-6);

    for _ in 0..200 {
        let raw: Vec<f32> = (0..32).map(|_| rng.gen_range(-3.0..3.0)).collect();
        if raw.iter().all(|&v| v == 0.0) {
            continue;
        }
        let a = Descriptor::from_features(&raw, "pool5", 0).unwrap();
        let c: f32 = rng.gen_range(0.001..100.0);
        let scaled: Vec<f32> = raw.iter().map(|v| v * c).collect();
        let b = Descriptor::from_features(&scaled, "pool5", 0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-6);
        }
        let n: f64 = a.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-6);
    }

    // distance range on unit vectors
    for _ in 0..500 {
        let x: Vec<f32> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f32> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = Descriptor::from_features(&x, "pool5", 0).unwrap();
        let b = Descriptor::from_features(&y, "pool5", 1).unwrap();
        let d = vpr::distance(&a, &b).unwrap();
        assert!((0.0..=2.0 + 1e-9).contains(&d));
    }

    // exhaustive-scan equality against a brute-force oracle on 10^3 random
    // databases
    for _ in 0..1000 {
        let dim = 16;
        let mut db = ReferenceDB::new("acceptance");
        let mut all = Vec::new();
        for id in 0..50i64 {
            let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = Descriptor::from_features(&v, "pool5", id).unwrap();
            all.push(d.clone());
            db.add(id, d).unwrap();
        }
        let qv: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = Descriptor::from_features(&qv, "pool5", 99).unwrap();
        let (got_id, got_d) = vpr::best_match(&q, &db).unwrap();
        let mut best = (i64::MAX, f64::INFINITY);
        for r in &all {
            let d = vpr::distance(&q, r).unwrap();
            if d < best.1 {
                best = (r.source_image, d);
            }
        }
        assert_eq!((got_id, got_d), best);
    }
    pass(
        6,
        t0,
        10.0,
        "unit norm 1e-6, d in [0,2], scale invariance, 10^3 brute-force argmin matches",
    );
}

#[test]
fn criterion_7_ste_contract() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);

    // symbolic check of the two straight-through rules against an
    // independent elementwise reimplementation
    for _ in 0..500 {
        let n = rng.gen_range(1..128);
        let g: Vec<f32> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let a: Vec<f32> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let gt = RealTensor::new(vec![n], g.clone()).unwrap();
        let at = RealTensor::new(vec![n], a.clone()).unwrap();
        let wgrad = train::ste_weight_grad(&gt);
        assert_eq!(wgrad.values, g, "weight rule is the identity");
        let agrad = train::ste_activation_grad(&gt, &at).unwrap();
        let reference: Vec<f32> = g
            .iter()
            .zip(&a)
            .map(|(&gv, &av)| if av.abs() <= 1.0 { gv } else { 0.0 })
            .collect();
        assert_eq!(agrad.values, reference, "activation rule cancels past |1|");
    }

    // full-precision machinery against central finite differences
    let spec = {
        use bnvp::graph::{LayerSpec, NetworkSpec};
        NetworkSpec {
            name: "fd_probe".into(),
            input_shape: (6, 6, 2),
            layers: vec![
                LayerSpec::conv("conv1", 3, 1, 3)
                    .with_precision(32, 32)
                    .with_batchnorm(false)
                    .with_padding(Padding::Valid),
                LayerSpec::pool("pool1", 2, 2),
                LayerSpec::conv("conv2", 2, 1, 4).with_precision(32, 32),
                LayerSpec::pool("pool2", 2, 2),
            ],
            output_layer: "pool2".into(),
        }
    };
    let cfg = TrainConfig {
        classes: 3,
        fc_neurons: 8,
        weight_bits: 32,
        seed: 7,
        ..TrainConfig::default()
    };
    let samples: Vec<(RealTensor, usize)> = (0..3)
        .map(|i| {
            let vals: Vec<f32> = (0..6 * 6 * 2).map(|_| rng.gen_range(0.0..1.0)).collect();
            (RealTensor::new(vec![6, 6, 2], vals).unwrap(), i % 3)
        })
        .collect();
    let report = train::gradient_check(&spec, &cfg, &samples, 40).unwrap();
    assert!(report.checked > 100, "checked {}", report.checked);
    assert!(
        report.max_rel_error < 1e-4,
        "finite differences disagree: {}",
        report.max_rel_error
    );
    pass(
        7,
        t0,
        60.0,
        &format!(
            "STE rules exact on 500 random tensors; FD max rel error {:.2e} over {} params",
            report.max_rel_error, report.checked
        ),
    );
}

#[test]
fn criterion_8_desk_scale_end_to_end() {
    let t0 = Instant::now();
    let classes = 8;
    let size = 32;
    let data_seed = 1234u64;
    let spec = synth::desk_network_spec(size, 1);
    let data = synth::training_set(classes, 24, size, data_seed);
    let refs = synth::reference_images(classes, size, data_seed);
    let queries = synth::query_images(classes, 5, size, data_seed);

    let mut passed = 0;
    for seed in 0..10u64 {
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            classes,
            fc_neurons: 256,
            weight_bits: 1,
            seed,
            stop_at_accuracy: Some(0.95),
            ..TrainConfig::default()
        };
        let mut log = Vec::new();
        let Ok(model) = train::train(&data, &spec, &cfg, Some(&mut log)) else {
            continue;
        };
        // final-epoch training accuracy from the progress log
        let text = String::from_utf8(log).unwrap();
        let mut last_epoch = 0usize;
        let mut acc_sum = 0.0;
        let mut acc_n = 0usize;
        for line in text.lines() {
            let f: Vec<&str> = line.split(',').collect();
            let e: usize = f[0].parse().unwrap();
            if e != last_epoch {
                last_epoch = e;
                acc_sum = 0.0;
                acc_n = 0;
            }
            acc_sum += f[3].parse::<f64>().unwrap();
            acc_n += 1;
        }
        let train_acc = acc_sum / acc_n as f64;

        let Ok(frozen) = train::export_extractor(&model) else {
            continue;
        };
        let mut db = ReferenceDB::new("synthetic");
        for (id, img) in &refs {
            db.add(*id, vpr::extract(&frozen, img, *id).unwrap())
                .unwrap();
        }
        let report =
            vpr::run_queries(&frozen, &queries, &db, &GroundTruth::FrameTolerance(0)).unwrap();
        let sp100 = metrics::s_p100(&report).unwrap();
        if train_acc >= 0.90 && sp100 >= 90.0 {
            passed += 1;
        }
    }
    assert!(
        passed >= 9,
        "desk-scale run succeeded in only {passed}/10 seeds"
    );
    pass(
        8,
        t0,
        900.0,
        &format!("{passed}/10 seeds reached 90% train accuracy and S_P100 >= 90"),
    );
}

#[test]
fn criterion_9_serialization() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // round-trip identity over 1000 randomized models
    for trial in 0..1000u64 {
        let bits = [1u8, 2, 4, 8, 32][trial as usize % 5];
        let size = [12usize, 16][trial as usize % 2];
        let spec = synth::desk_network_spec(size, bits);
        let model = if trial % 10 == 0 {
            // sprinkle training checkpoints among the frozen extractors
            let cfg = TrainConfig {
                epochs: 0,
                classes: 2,
                fc_neurons: 4,
                weight_bits: bits,
                seed: trial,
                ..TrainConfig::default()
            };
            let data = synth::training_set(2, 1, size, trial);
            ModelData::Checkpoint(train::train(&data, &spec, &cfg, None).unwrap())
        } else {
            ModelData::Frozen(FrozenNetwork::random_init(&spec, trial).unwrap())
        };
        let bytes = encode_model(&model).unwrap();
        let back = decode_model(&bytes).unwrap();
        assert_eq!(model, back, "trial {trial}");
    }

    // single-byte corruption is always detected
    let net = FrozenNetwork::random_init(&synth::desk_network_spec(16, 1), 5).unwrap();
    let bytes = encode_model(&ModelData::Frozen(net)).unwrap();
    for _ in 0..200 {
        let idx = rng.gen_range(0..bytes.len());
        let mut corrupted = bytes.clone();
        let flip: u8 = 1 << rng.gen_range(0..8);
        corrupted[idx] ^= flip;
        assert!(
            decode_model(&corrupted).is_err(),
            "flip at byte {idx} went undetected"
        );
    }

    // frozen file size agrees with the accounting total up to the header
    let floppy = FrozenNetwork::random_init(&preset(Preset::FloppyNet), 1).unwrap();
    let file = encode_model(&ModelData::Frozen(floppy)).unwrap();
    let accounted = metrics::size_breakdown(&preset(Preset::FloppyNet), 1)
        .unwrap()
        .total_bytes();
    let overhead = file.len() as i64 - accounted as i64;
    assert!(
        (0..=2048).contains(&overhead),
        "file {} vs accounted {accounted} (overhead {overhead})",
        file.len()
    );
    pass(
        9,
        t0,
        120.0,
        "1000 round trips bit-exact; 200 byte flips detected; file size matches accounting",
    );
}
