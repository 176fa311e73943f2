//! Model files, dataset ingestion and evaluation plumbing.

mod dataset;
mod model_file;

pub use dataset::{
    load_dataset, load_descriptors, load_ground_truth, load_image, load_image_dir,
    parse_ground_truth, save_descriptors, save_image, FrameImage,
};
pub use model_file::{
    decode_model, encode_model, load_checkpoint, load_frozen, load_model, save_model, ModelData,
};

use std::path::PathBuf;

use crate::error::Result;
use crate::metrics;
use crate::vpr::{self, MatchReport, ReferenceDB};

/// Paths and options for one evaluation run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: PathBuf,
    pub reference_dir: PathBuf,
    pub query_dir: PathBuf,
    pub ground_truth: PathBuf,
    /// Overrides the model's configured output layer when set.
    pub output_layer: Option<String>,
}

/// Runs the full retrieval pipeline for a config: extract references and
/// queries, match, and score.
pub fn run_eval(cfg: &RunConfig) -> Result<(MatchReport, f64)> {
    let net = load_frozen(&cfg.model)?;
    let (h, w, _) = net.spec.input_shape;
    let (refs, queries, gt) = load_dataset(
        &cfg.reference_dir,
        &cfg.query_dir,
        &cfg.ground_truth,
        (h, w),
    )?;
    let layer = cfg
        .output_layer
        .clone()
        .unwrap_or_else(|| net.spec.output_layer.clone());
    let mut db = ReferenceDB::new("reference");
    for f in &refs {
        db.add(f.frame, vpr::extract_at(&net, &f.image, &layer, f.frame)?)?;
    }
    let mut qdescs = Vec::with_capacity(queries.len());
    for f in &queries {
        qdescs.push(vpr::extract_at(&net, &f.image, &layer, f.frame)?);
    }
    let report = vpr::run_descriptor_queries(&qdescs, &db, &gt)?;
    let score = metrics::s_p100(&report)?;
    Ok((report, score))
}
