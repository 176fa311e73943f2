//! Place recognition: descriptor extraction, Euclidean matching against a
//! reference database, and tolerance-based verdicts.

use std::collections::{BTreeMap, BTreeSet};

use crate::bitcore::RealTensor;
use crate::error::{Error, Result};
use crate::graph::FrozenNetwork;

/// Unit-norm image descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
    pub source_layer: String,
    pub source_image: i64,
}

impl Descriptor {
    /// Normalizes a raw feature vector to unit L2 norm.
    pub fn from_features(features: &[f32], source_layer: &str, source_image: i64) -> Result<Self> {
        let norm_sq: f64 = features.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        if norm_sq == 0.0 {
            return Err(Error::DegenerateDescriptor);
        }
        let norm = norm_sq.sqrt();
        Ok(Descriptor {
            values: features
                .iter()
                .map(|&v| (f64::from(v) / norm) as f32)
                .collect(),
            source_layer: source_layer.to_string(),
            source_image,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Extracts the descriptor for an image at the network's output layer.
pub fn extract(net: &FrozenNetwork, image: &RealTensor, image_id: i64) -> Result<Descriptor> {
    let layer = net.spec.output_layer.clone();
    extract_at(net, image, &layer, image_id)
}

/// Extracts the descriptor from a specific layer.
pub fn extract_at(
    net: &FrozenNetwork,
    image: &RealTensor,
    layer: &str,
    image_id: i64,
) -> Result<Descriptor> {
    let features = net.forward_at(image, layer)?;
    Descriptor::from_features(&features.values, layer, image_id)
}

/// Euclidean distance between two descriptors.
pub fn distance(a: &Descriptor, b: &Descriptor) -> Result<f64> {
    distance_slices(&a.values, &b.values)
}

pub fn distance_slices(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Ordered reference descriptor database.
#[derive(Debug, Clone, Default)]
pub struct ReferenceDB {
    pub dataset: String,
    entries: Vec<(i64, Descriptor)>,
}

impl ReferenceDB {
    pub fn new(dataset: &str) -> Self {
        ReferenceDB {
            dataset: dataset.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, id: i64, descriptor: Descriptor) -> Result<()> {
        if let Some((_, first)) = self.entries.first() {
            if first.dim() != descriptor.dim() {
                return Err(Error::LengthMismatch {
                    expected: first.dim(),
                    got: descriptor.dim(),
                });
            }
        }
        if self.entries.iter().any(|(i, _)| *i == id) {
            return Err(Error::Config(format!("duplicate reference id {id}")));
        }
        self.entries.push((id, descriptor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(i64, Descriptor)] {
        &self.entries
    }
}

/// Exhaustive nearest-reference search. Ties break toward the earliest
/// reference in database order.
pub fn best_match(query: &Descriptor, db: &ReferenceDB) -> Result<(i64, f64)> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut best_id = db.entries[0].0;
    let mut best_d = f64::INFINITY;
    for (id, reference) in &db.entries {
        let d = distance(query, reference)?;
        if d < best_d {
            best_d = d;
            best_id = *id;
        }
    }
    Ok((best_id, best_d))
}

/// How query-to-reference correctness is decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroundTruth {
    /// Correct when |reference frame - query frame| <= tolerance.
    FrameTolerance(i64),
    /// Correct when the matched reference is listed for the query.
    ExplicitPairs(BTreeMap<i64, BTreeSet<i64>>),
}

impl GroundTruth {
    pub fn verdict(&self, query: i64, matched: i64) -> Result<bool> {
        match self {
            GroundTruth::FrameTolerance(tol) => Ok((matched - query).abs() <= *tol),
            GroundTruth::ExplicitPairs(pairs) => pairs
                .get(&query)
                .map(|set| set.contains(&matched))
                .ok_or(Error::MissingGroundTruth(query)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchEntry {
    pub query: i64,
    pub reference: i64,
    pub distance: f64,
    pub correct: bool,
}

/// Per-query match outcomes in query order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchReport {
    pub entries: Vec<MatchEntry>,
}

impl MatchReport {
    pub fn correct_count(&self) -> usize {
        self.entries.iter().filter(|e| e.correct).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("query,ref,distance,correct\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{:.6},{}\n",
                e.query, e.reference, e.distance, e.correct
            ));
        }
        s
    }
}

/// Extracts each query image, matches it against the database and records
/// the ground-truth verdict.
pub fn run_queries(
    net: &FrozenNetwork,
    queries: &[(i64, RealTensor)],
    db: &ReferenceDB,
    gt: &GroundTruth,
) -> Result<MatchReport> {
    let mut entries = Vec::with_capacity(queries.len());
    for (id, image) in queries {
        let q = extract(net, image, *id)?;
        let (reference, d) = best_match(&q, db)?;
        entries.push(MatchEntry {
            query: *id,
            reference,
            distance: d,
            correct: gt.verdict(*id, reference)?,
        });
    }
    Ok(MatchReport { entries })
}

/// Matches pre-extracted query descriptors against the database.
pub fn run_descriptor_queries(
    queries: &[Descriptor],
    db: &ReferenceDB,
    gt: &GroundTruth,
) -> Result<MatchReport> {
    let mut entries = Vec::with_capacity(queries.len());
    for q in queries {
        let (reference, d) = best_match(q, db)?;
        entries.push(MatchEntry {
            query: q.source_image,
            reference,
            distance: d,
            correct: gt.verdict(q.source_image, reference)?,
        });
    }
    Ok(MatchReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(values: &[f32], id: i64) -> Descriptor {
        Descriptor::from_features(values, "pool5", id).unwrap()
    }

    #[test]
    fn three_four_five_normalization() {
        let d = desc(&[3.0, 4.0], 0);
        assert_eq!(d.values, vec![0.6, 0.8]);
    }

    #[test]
    fn unit_norm_contract() {
        let d = desc(&[0.3, -2.0, 7.5, 0.0, 1.1], 0);
        let n: f64 = d.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_features_rejected() {
        assert!(matches!(
            Descriptor::from_features(&[0.0, 0.0], "pool5", 0),
            Err(Error::DegenerateDescriptor)
        ));
    }

    #[test]
    fn scale_invariance() {
        let raw = [0.5f32, -1.5, 2.0, 0.25];
        let a = desc(&raw, 0);
        for c in [0.001f32, 0.7, 3.0, 1000.0] {
            let scaled: Vec<f32> = raw.iter().map(|v| v * c).collect();
            let b = Descriptor::from_features(&scaled, "pool5", 0).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn distance_identity_orthogonal_antipodal() {
        let e1 = desc(&[1.0, 0.0], 0);
        let e2 = desc(&[0.0, 1.0], 1);
        let neg = desc(&[-1.0, 0.0], 2);
        assert_eq!(distance(&e1, &e1).unwrap(), 0.0);
        assert!((distance(&e1, &e2).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-9);
        assert_eq!(distance(&e1, &neg).unwrap(), 2.0);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let a = desc(&[1.0, 0.0], 0);
        let b = desc(&[1.0, 0.0, 0.0], 1);
        assert!(distance(&a, &b).is_err());
    }

    #[test]
    fn distance_cosine_identity() {
        // d^2 + 2*cos = 2 for unit vectors
        let a = desc(&[0.6, -0.3, 1.2], 0);
        let b = desc(&[-0.2, 0.9, 0.4], 1);
        let d = distance(&a, &b).unwrap();
        let cos: f64 = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| f64::from(x) * f64::from(y))
            .sum();
        assert!((d * d + 2.0 * cos - 2.0).abs() < 1e-6);
    }

    #[test]
    fn match_duplicate_retrieval() {
        let mut db = ReferenceDB::new("test");
        db.add(0, desc(&[1.0, 0.0, 0.0], 0)).unwrap();
        db.add(1, desc(&[0.2, 0.9, 0.1], 1)).unwrap();
        let q = desc(&[0.2, 0.9, 0.1], 7);
        let (id, d) = best_match(&q, &db).unwrap();
        assert_eq!(id, 1);
        assert!(d.abs() < 1e-7);
    }

    #[test]
    fn match_basis_vectors() {
        let mut db = ReferenceDB::new("test");
        db.add(10, desc(&[1.0, 0.0], 10)).unwrap();
        db.add(20, desc(&[0.0, 1.0], 20)).unwrap();
        let (id, _) = best_match(&desc(&[1.0, 0.0], 0), &db).unwrap();
        assert_eq!(id, 10);
    }

    #[test]
    fn match_empty_db() {
        let db = ReferenceDB::new("test");
        assert!(matches!(
            best_match(&desc(&[1.0], 0), &db),
            Err(Error::EmptyDatabase)
        ));
    }

    #[test]
    fn match_ties_break_to_lowest_index() {
        let mut db = ReferenceDB::new("test");
        db.add(5, desc(&[1.0, 0.0], 5)).unwrap();
        db.add(3, desc(&[1.0, 0.0], 3)).unwrap();
        let (id, _) = best_match(&desc(&[1.0, 0.0], 0), &db).unwrap();
        assert_eq!(id, 5, "earliest database entry wins ties");
    }

    #[test]
    fn match_equals_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let mut db = ReferenceDB::new("test");
            let dim = 16;
            let mut raw = Vec::new();
            for id in 0..50i64 {
                let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let d = desc(&v, id);
                raw.push(d.clone());
                db.add(id, d).unwrap();
            }
            let qv: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q = desc(&qv, 99);
            let (id, dist) = best_match(&q, &db).unwrap();
            let (bid, bdist) = raw
                .iter()
                .map(|r| (r.source_image, distance(&q, r).unwrap()))
                .fold((i64::MAX, f64::INFINITY), |acc, cur| {
                    if cur.1 < acc.1 {
                        cur
                    } else {
                        acc
                    }
                });
            assert_eq!(id, bid);
            assert_eq!(dist, bdist);
        }
    }

    #[test]
    fn adding_reference_never_increases_best_distance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let q = desc(&[0.3, -0.8, 0.5, 0.1], 0);
        let mut db = ReferenceDB::new("test");
        let mut last = f64::INFINITY;
        for id in 0..40i64 {
            let v: Vec<f32> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            db.add(id, desc(&v, id)).unwrap();
            let (_, d) = best_match(&q, &db).unwrap();
            assert!(d <= last + 1e-12);
            last = d;
        }
    }

    #[test]
    fn frame_tolerance_verdicts() {
        let gt = GroundTruth::FrameTolerance(2);
        assert!(gt.verdict(10, 12).unwrap());
        assert!(!gt.verdict(10, 13).unwrap());
        assert!(gt.verdict(10, 8).unwrap());
    }

    #[test]
    fn explicit_pairs_verdicts() {
        let mut pairs = BTreeMap::new();
        pairs.insert(7i64, BTreeSet::from([3i64, 4]));
        let gt = GroundTruth::ExplicitPairs(pairs);
        assert!(gt.verdict(7, 4).unwrap());
        assert!(!gt.verdict(7, 5).unwrap());
        assert!(matches!(
            gt.verdict(9, 3),
            Err(Error::MissingGroundTruth(9))
        ));
    }
}
