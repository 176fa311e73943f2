//! Dataset ingestion: reference/query image directories with frame indices
//! assigned by byte-lexicographic filename order, ground-truth CSV parsing,
//! and the binary descriptor file format.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::imageops::FilterType;

use crate::bitcore::RealTensor;
use crate::error::{Error, Result};
use crate::vpr::{Descriptor, GroundTruth};

/// One decoded image with its frame index and source filename.
#[derive(Debug, Clone)]
pub struct FrameImage {
    pub frame: i64,
    pub filename: String,
    pub image: RealTensor,
}

/// Decodes an image file to a `[h, w, 3]` tensor in [0, 1], bilinearly
/// resized to the target shape.
pub fn load_image(path: &Path, target: (usize, usize)) -> Result<RealTensor> {
    let img = image::open(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb32f();
    let (th, tw) = target;
    let resized = if rgb.dimensions() == (tw as u32, th as u32) {
        rgb
    } else {
        image::imageops::resize(&rgb, tw as u32, th as u32, FilterType::Triangle)
    };
    let mut values = Vec::with_capacity(th * tw * 3);
    for y in 0..th {
        for x in 0..tw {
            let p = resized.get_pixel(x as u32, y as u32);
            values.extend_from_slice(&[
                p.0[0].clamp(0.0, 1.0),
                p.0[1].clamp(0.0, 1.0),
                p.0[2].clamp(0.0, 1.0),
            ]);
        }
    }
    RealTensor::new(vec![th, tw, 3], values)
}

/// Saves a `[h, w, 3]` tensor in [0, 1] as a PNG or PPM image.
pub fn save_image(path: &Path, img: &RealTensor) -> Result<()> {
    let [h, w, c]: [usize; 3] =
        img.shape.as_slice().try_into().map_err(|_| {
            Error::ShapeMismatch(format!("expected HxWx3 image, got {:?}", img.shape))
        })?;
    if c != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected 3 channels, got {c}"
        )));
    }
    let mut out = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * 3;
            let px = [
                (img.values[base].clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.values[base + 1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.values[base + 2].clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    out.save(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Loads every image in a directory, frames numbered by byte-lexicographic
/// filename order.
pub fn load_image_dir(dir: &Path, target: (usize, usize)) -> Result<Vec<FrameImage>> {
    let mut names: Vec<(Vec<u8>, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            let name = entry.file_name();
            names.push((name.as_encoded_bytes().to_vec(), entry.path()));
        }
    }
    if names.is_empty() {
        return Err(Error::EmptyDataset);
    }
    names.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = Vec::with_capacity(names.len());
    for (frame, (name, path)) in names.into_iter().enumerate() {
        out.push(FrameImage {
            frame: frame as i64,
            filename: String::from_utf8_lossy(&name).into_owned(),
            image: load_image(&path, target)?,
        });
    }
    Ok(out)
}

/// Parses a ground-truth CSV: either a single `tolerance,<k>` header line or
/// explicit `query_id,ref_id` rows.
pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(&fs::read_to_string(path)?)
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth> {
    let mut pairs: std::collections::BTreeMap<i64, std::collections::BTreeSet<i64>> =
        Default::default();
    let mut saw_pairs = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let first = fields.next().unwrap_or("").trim();
        let second = fields
            .next()
            .map(str::trim)
            .ok_or(Error::MalformedGroundTruth {
                line: lineno + 1,
                reason: "expected two comma-separated fields".into(),
            })?;
        if fields.next().is_some() {
            return Err(Error::MalformedGroundTruth {
                line: lineno + 1,
                reason: "expected exactly two fields".into(),
            });
        }
        if first == "tolerance" {
            if saw_pairs {
                return Err(Error::MalformedGroundTruth {
                    line: lineno + 1,
                    reason: "tolerance header after pair rows".into(),
                });
            }
            let tol: i64 = second.parse().map_err(|_| Error::MalformedGroundTruth {
                line: lineno + 1,
                reason: format!("bad tolerance `{second}`"),
            })?;
            if tol < 0 {
                return Err(Error::MalformedGroundTruth {
                    line: lineno + 1,
                    reason: "tolerance must be non-negative".into(),
                });
            }
            return Ok(GroundTruth::FrameTolerance(tol));
        }
        let q: i64 = first.parse().map_err(|_| Error::MalformedGroundTruth {
            line: lineno + 1,
            reason: format!("bad query id `{first}`"),
        })?;
        let r: i64 = second.parse().map_err(|_| Error::MalformedGroundTruth {
            line: lineno + 1,
            reason: format!("bad reference id `{second}`"),
        })?;
        pairs.entry(q).or_default().insert(r);
        saw_pairs = true;
    }
    if pairs.is_empty() {
        return Err(Error::MalformedGroundTruth {
            line: 0,
            reason: "ground truth file has no usable rows".into(),
        });
    }
    Ok(GroundTruth::ExplicitPairs(pairs))
}

/// Loads the reference set, query set and ground truth of a dataset laid
/// out as `reference/` and `query/` directories plus a CSV.
pub fn load_dataset(
    ref_dir: &Path,
    query_dir: &Path,
    gt_path: &Path,
    target: (usize, usize),
) -> Result<(Vec<FrameImage>, Vec<FrameImage>, GroundTruth)> {
    let refs = load_image_dir(ref_dir, target)?;
    let queries = load_image_dir(query_dir, target)?;
    let gt = load_ground_truth(gt_path)?;
    Ok((refs, queries, gt))
}

/// Writes descriptors as consecutive `dim: u32 | dim x f32` records.
pub fn save_descriptors(path: &Path, descriptors: &[Descriptor]) -> Result<()> {
    let mut out = Vec::new();
    for d in descriptors {
        out.extend_from_slice(&(d.values.len() as u32).to_le_bytes());
        for v in &d.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Reads a descriptor file; record order assigns frame indices.
pub fn load_descriptors(path: &Path) -> Result<Vec<Descriptor>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut out = Vec::new();
    let mut frame = 0i64;
    while pos < bytes.len() {
        if pos + 4 > bytes.len() {
            return Err(Error::CorruptModel("descriptor file truncated".into()));
        }
        let dim = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + dim * 4 > bytes.len() {
            return Err(Error::CorruptModel("descriptor file truncated".into()));
        }
        let values: Vec<f32> = bytes[pos..pos + dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += dim * 4;
        out.push(Descriptor {
            values,
            source_layer: String::new(),
            source_image: frame,
        });
        frame += 1;
    }
    Ok(out)
}
