//! Model accounting: parameter and size tables, MAC counting, recognition
//! score, memory efficiency and the projected speed-up.
//!
//! Sizes follow the storage rule `ceil(binarizable_bits / 8) + 4 bytes per
//! normalization parameter`, accumulated depth by depth. Normalization
//! parameters are the only non-binarizable ones: two per normalized channel
//! (the folded scale and shift). KiB and MiB are 1024-based.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::NetworkSpec;
use crate::vpr::MatchReport;

/// One depth row of the cumulative size table.
#[derive(Debug, Clone, Serialize)]
pub struct SizeRow {
    pub layer: String,
    pub notation: String,
    pub feature_len: usize,
    /// Quantizable weights introduced by this layer.
    pub binarizable: usize,
    /// Normalization parameters introduced by this layer.
    pub non_binarizable: usize,
    pub binarizable_cum: usize,
    pub non_binarizable_cum: usize,
    /// Model size in bytes if the net is cut after this layer.
    pub size_bytes_cum: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeBreakdown {
    pub network: String,
    pub weight_bits: u8,
    pub rows: Vec<SizeRow>,
}

impl SizeBreakdown {
    pub fn total_bytes(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.size_bytes_cum)
    }

    pub fn total_kib(&self) -> f64 {
        self.total_bytes() as f64 / 1024.0
    }

    pub fn total_mib(&self) -> f64 {
        self.total_bytes() as f64 / (1024.0 * 1024.0)
    }

    /// Size in bytes at the named layer depth.
    pub fn bytes_at(&self, layer: &str) -> Result<u64> {
        self.rows
            .iter()
            .find(|r| r.layer == layer)
            .map(|r| r.size_bytes_cum)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "layer,setup,feature_size,binarizable_params,non_binarizable_params,cumulative_size_kib\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{:.2}\n",
                r.layer,
                r.notation,
                r.feature_len,
                r.binarizable_cum,
                r.non_binarizable_cum,
                r.size_bytes_cum as f64 / 1024.0
            ));
        }
        s
    }
}

/// Cumulative parameter/size table for a network at the given weight
/// precision.
pub fn size_breakdown(spec: &NetworkSpec, weight_bits: u8) -> Result<SizeBreakdown> {
    match weight_bits {
        1 | 2 | 4 | 8 | 32 => {}
        b => return Err(Error::UnsupportedBits(b)),
    }
    let chain = spec.resolve()?;
    let mut rows = Vec::with_capacity(chain.len());
    let mut bin_cum = 0usize;
    let mut nbin_cum = 0usize;
    for g in &chain {
        bin_cum += g.weight_count;
        nbin_cum += 2 * g.bn_channels;
        let bits = bin_cum as u64 * u64::from(weight_bits);
        let size = bits.div_ceil(8) + 4 * nbin_cum as u64;
        rows.push(SizeRow {
            layer: g.spec.name.clone(),
            notation: g.spec.notation(),
            feature_len: g.output.len(),
            binarizable: g.weight_count,
            non_binarizable: 2 * g.bn_channels,
            binarizable_cum: bin_cum,
            non_binarizable_cum: nbin_cum,
            size_bytes_cum: size,
        });
    }
    Ok(SizeBreakdown {
        network: spec.name.clone(),
        weight_bits,
        rows,
    })
}

/// One MAC accounting row. Normalizations get their own row, attributed to
/// the layer they feed and always full-precision.
#[derive(Debug, Clone, Serialize)]
pub struct MacRow {
    pub layer: String,
    pub macs: u64,
    pub binary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MacBreakdown {
    pub network: String,
    pub rows: Vec<MacRow>,
}

impl MacBreakdown {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }

    pub fn binary_total(&self) -> u64 {
        self.rows.iter().filter(|r| r.binary).map(|r| r.macs).sum()
    }

    pub fn full_precision_total(&self) -> u64 {
        self.rows.iter().filter(|r| !r.binary).map(|r| r.macs).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,macs,kind\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{}\n",
                r.layer,
                r.macs,
                if r.binary { "binary" } else { "full" }
            ));
        }
        s.push_str(&format!(
            "total,{},\nbinary,{},\nfull_precision,{},\n",
            self.total(),
            self.binary_total(),
            self.full_precision_total()
        ));
        s
    }
}

/// Per-layer MAC counts for a network evaluated at `input_shape`.
pub fn mac_breakdown(
    spec: &NetworkSpec,
    input_shape: (usize, usize, usize),
) -> Result<MacBreakdown> {
    let mut sized = spec.clone();
    sized.input_shape = input_shape;
    let chain = sized.resolve()?;
    let mut rows = Vec::new();
    for g in &chain {
        if g.bn_elements > 0 {
            rows.push(MacRow {
                layer: format!("{}/bn", g.spec.name),
                macs: g.bn_elements as u64,
                binary: false,
            });
        }
        if g.macs > 0 {
            rows.push(MacRow {
                layer: g.spec.name.clone(),
                macs: g.macs,
                binary: g.binary_macs,
            });
        }
    }
    Ok(MacBreakdown {
        network: sized.name.clone(),
        rows,
    })
}

/// Recognition score: percentage of queries whose best match is correct.
pub fn s_p100(report: &MatchReport) -> Result<f64> {
    if report.entries.is_empty() {
        return Err(Error::EmptyReport);
    }
    Ok(100.0 * report.correct_count() as f64 / report.entries.len() as f64)
}

/// Memory cost in KiB per score point; smaller is better.
pub fn memory_efficiency(s_p100: f64, size_kib: f64) -> Result<f64> {
    if s_p100 <= 0.0 {
        return Err(Error::ZeroScore);
    }
    Ok(size_kib / s_p100)
}

/// Projected speed-up of a partially binary network against a baseline MAC
/// count, with binary MACs accelerated by `binary_factor`.
pub fn projected_speedup(
    baseline_macs: f64,
    binary_macs: f64,
    fp_macs: f64,
    binary_factor: f64,
) -> Result<f64> {
    if baseline_macs <= 0.0 || binary_factor <= 0.0 || binary_macs < 0.0 || fp_macs < 0.0 {
        return Err(Error::Config(
            "speed-up projection needs positive baseline MACs and factor".into(),
        ));
    }
    let denom = binary_macs / binary_factor + fp_macs;
    if denom <= 0.0 {
        return Err(Error::Config("speed-up denominator is zero".into()));
    }
    Ok(baseline_macs / denom)
}

/// Throughput of the packed kernel relative to one MAC per cycle:
/// a word of `lanes` values evaluated in `cycles` clock cycles.
pub fn macs_per_cycle(lanes: u32, cycles: u32) -> f64 {
    f64::from(lanes) / f64::from(cycles)
}

/// One row of the efficiency summary.
#[derive(Debug, Clone, Serialize)]
pub struct EffRow {
    pub name: String,
    pub precision: String,
    pub s_p100: f64,
    pub size_kib: f64,
    pub eta_m: f64,
}

/// Builds the efficiency summary for (name, precision, score, size) inputs,
/// preserving input order.
pub fn efficiency_table(rows: &[(String, String, f64, f64)]) -> Result<Vec<EffRow>> {
    rows.iter()
        .map(|(name, precision, s, size)| {
            Ok(EffRow {
                name: name.clone(),
                precision: precision.clone(),
                s_p100: *s,
                size_kib: *size,
                eta_m: memory_efficiency(*s, *size)?,
            })
        })
        .collect()
}

/// Network names ordered by ascending eta_m (most memory-efficient first).
pub fn efficiency_ranking(rows: &[EffRow]) -> Vec<String> {
    let mut sorted: Vec<&EffRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.eta_m.total_cmp(&b.eta_m));
    sorted.iter().map(|r| r.name.clone()).collect()
}

pub fn efficiency_csv(rows: &[EffRow]) -> String {
    let mut s = String::from("name,precision,s_p100,size_kib,eta_m\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.2},{:.0},{:.2}\n",
            r.name, r.precision, r.s_p100, r.size_kib, r.eta_m
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{preset, Preset};
    use crate::vpr::MatchEntry;

    fn report(correct: usize, total: usize) -> MatchReport {
        let entries = (0..total)
            .map(|i| MatchEntry {
                query: i as i64,
                reference: i as i64,
                distance: 0.1,
                correct: i < correct,
            })
            .collect();
        MatchReport { entries }
    }

    #[test]
    fn s_p100_ratio() {
        assert_eq!(s_p100(&report(150, 200)).unwrap(), 75.0);
        assert_eq!(s_p100(&report(200, 200)).unwrap(), 100.0);
        assert!(s_p100(&MatchReport { entries: vec![] }).is_err());
    }

    #[test]
    fn s_p100_pooled_equals_mean_for_equal_sets() {
        // five 200-query sets: pooled correct-sum over 1000 equals the mean
        // of the per-set scores
        let corrects = [150usize, 180, 90, 200, 120];
        let mut pooled = MatchReport { entries: vec![] };
        let mut scores = Vec::new();
        for &c in &corrects {
            let r = report(c, 200);
            scores.push(s_p100(&r).unwrap());
            pooled.entries.extend(r.entries);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let pooled_score = s_p100(&pooled).unwrap();
        assert!((pooled_score - mean).abs() < 1e-9);
    }

    #[test]
    fn floppynet_size_table() {
        let b = size_breakdown(&preset(Preset::FloppyNet), 1).unwrap();
        // cumulative binarizable params in millions: 0.03, 0.65, 1.24
        let conv_rows: Vec<&SizeRow> = b
            .rows
            .iter()
            .filter(|r| r.layer.starts_with("conv"))
            .collect();
        let mparams: Vec<f64> = conv_rows
            .iter()
            .map(|r| (r.binarizable_cum as f64 / 1e6 * 100.0).round() / 100.0)
            .collect();
        assert_eq!(mparams, vec![0.03, 0.65, 1.24]);
        let nb: Vec<usize> = conv_rows.iter().map(|r| r.non_binarizable_cum).collect();
        assert_eq!(nb, vec![0, 192, 704]);
        assert!((b.total_kib() - 154.0).abs() <= 1.0, "{}", b.total_kib());
    }

    #[test]
    fn binarynet_size_and_ratio() {
        let bin = size_breakdown(&preset(Preset::BinaryNet), 1).unwrap();
        let full = size_breakdown(&preset(Preset::Baseline), 32).unwrap();
        let at_pool5 = bin.bytes_at("pool5").unwrap() as f64 / 1024.0;
        assert!((at_pool5 - 466.0).abs() <= 1.0, "{at_pool5}");
        for (br, fr) in bin.rows.iter().zip(&full.rows) {
            let ratio = 100.0 * br.size_bytes_cum as f64 / fr.size_bytes_cum as f64;
            assert!((3.0..=3.3).contains(&ratio), "{}: ratio {ratio}", br.layer);
        }
        let conv1_ratio =
            100.0 * bin.rows[0].size_bytes_cum as f64 / full.rows[0].size_bytes_cum as f64;
        assert!((conv1_ratio - 3.12).abs() < 0.01, "{conv1_ratio}");
    }

    #[test]
    fn full_precision_sizes() {
        let b = size_breakdown(&preset(Preset::Baseline), 32).unwrap();
        let pool5 = b.bytes_at("pool5").unwrap() as f64 / (1024.0 * 1024.0);
        assert!((pool5 - 14.3).abs() / 14.3 < 0.01, "{pool5}");
        let fc7 = b.total_mib();
        assert!((fc7 - 222.37).abs() / 222.37 < 0.01, "{fc7}");
    }

    #[test]
    fn kbit_sizes() {
        for (k, kib) in [(2u8, 306.0f64), (4, 608.0), (8, 1213.0)] {
            let b = size_breakdown(&preset(Preset::FloppyNetK(k)), k).unwrap();
            assert!(
                (b.total_kib() - kib).abs() <= 2.0,
                "k={k}: {}",
                b.total_kib()
            );
        }
    }

    #[test]
    fn cumulative_size_monotone() {
        for p in [Preset::Baseline, Preset::BinaryNet, Preset::FloppyNet] {
            let b = size_breakdown(&preset(p), 1).unwrap();
            for pair in b.rows.windows(2) {
                assert!(pair[1].size_bytes_cum >= pair[0].size_bytes_cum);
            }
        }
    }

    #[test]
    fn floppynet_mac_counts() {
        let m = mac_breakdown(&preset(Preset::FloppyNet), (227, 227, 3)).unwrap();
        let total = m.total() as f64;
        let binary = m.binary_total() as f64;
        let full = m.full_precision_total() as f64;
        assert!((total - 653e6).abs() / 653e6 < 0.01, "total {total}");
        assert!((binary - 547.6e6).abs() / 547.6e6 < 0.01, "binary {binary}");
        assert!((full - 105.5e6).abs() / 105.5e6 < 0.01, "full {full}");
    }

    #[test]
    fn single_conv_layer_macs() {
        // C(3,1,256) on a 13x13x256 map, same padding: 13*13*256*3*3*256
        use crate::graph::{LayerSpec, NetworkSpec, Padding};
        let spec = NetworkSpec {
            name: "one".into(),
            input_shape: (13, 13, 256),
            layers: vec![LayerSpec::conv("c", 3, 1, 256)
                .with_precision(1, 32)
                .with_batchnorm(false)
                .with_padding(Padding::Same)],
            output_layer: "c".into(),
        };
        let m = mac_breakdown(&spec, (13, 13, 256)).unwrap();
        assert_eq!(m.total(), 13 * 13 * 256 * 3 * 3 * 256);
        assert_eq!(m.total(), 99_680_256);
    }

    #[test]
    fn macs_scale_with_output_area() {
        // conv-only chain: halving input H and W scales conv MACs by the
        // output-area ratio
        use crate::graph::{LayerSpec, NetworkSpec, Padding};
        let spec = NetworkSpec {
            name: "convs".into(),
            input_shape: (64, 64, 8),
            layers: vec![
                LayerSpec::conv("a", 3, 1, 16)
                    .with_precision(32, 32)
                    .with_batchnorm(false)
                    .with_padding(Padding::Same),
                LayerSpec::conv("b", 3, 1, 16)
                    .with_precision(32, 32)
                    .with_batchnorm(false),
            ],
            output_layer: "b".into(),
        };
        let big = mac_breakdown(&spec, (64, 64, 8)).unwrap();
        let small = mac_breakdown(&spec, (32, 32, 8)).unwrap();
        // same padding, stride 1: output area follows input area exactly
        assert_eq!(big.total(), small.total() * 4);
    }

    #[test]
    fn speedup_published_inputs() {
        let s = projected_speedup(711.0, 547.0, 105.5, 5.3).unwrap();
        assert!((s - 3.4).abs() <= 0.05, "{s}");
    }

    #[test]
    fn speedup_degenerate_cases() {
        let s = projected_speedup(100.0, 0.0, 50.0, 5.3).unwrap();
        assert_eq!(s, 2.0);
        let s = projected_speedup(100.0, 30.0, 20.0, 1.0).unwrap();
        assert_eq!(s, 2.0);
    }

    #[test]
    fn packed_lane_throughput() {
        // 32 lanes over 6 cycles (xnor 1 + add 1 + popcount 4)
        assert!((macs_per_cycle(32, 6) - 5.333).abs() < 0.01);
    }

    #[test]
    fn efficiency_values() {
        assert!((memory_efficiency(58.2, 154.0).unwrap() - 2.65).abs() <= 0.01);
        assert!((memory_efficiency(56.4, 466.0).unwrap() - 8.26).abs() <= 0.01);
        assert_eq!(memory_efficiency(100.0, 100.0).unwrap(), 1.0);
        assert!(memory_efficiency(0.0, 100.0).is_err());
    }
}
