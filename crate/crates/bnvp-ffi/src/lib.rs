//! C ABI for the bnvp library: opaque handles, integer status codes, and a
//! thread-local last-error message.
//!
//! Ownership rules: every `*_open`/`*_new` has a matching `*_close`/`*_free`;
//! handles are not thread-safe to mutate concurrently but are safe to share
//! for read-only calls. Strings returned by `bnvp_last_error` and
//! `bnvp_version` stay owned by the library.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use bnvp::bitcore::RealTensor;
use bnvp::error::Error;
use bnvp::graph::{preset_named, FrozenNetwork};
use bnvp::io;
use bnvp::metrics;
use bnvp::vpr::{self, Descriptor, ReferenceDB};

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnvpStatus {
    BnvpOk = 0,
    BnvpNullArgument = 1,
    BnvpInvalidUtf8 = 2,
    BnvpIoError = 3,
    BnvpFormatError = 4,
    BnvpShapeError = 5,
    BnvpUnknownPreset = 6,
    BnvpEmpty = 7,
    BnvpNumericError = 8,
    BnvpInternalError = 9,
}

/// Opaque frozen feature extractor.
pub struct BnvpModel {
    net: FrozenNetwork,
}

/// Opaque reference descriptor index.
pub struct BnvpIndex {
    db: ReferenceDB,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let clean: String = msg.chars().filter(|&ch| ch != '\0').collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> BnvpStatus {
    match err {
        Error::Io(_) => BnvpStatus::BnvpIoError,
        Error::CorruptModel(_)
        | Error::ChecksumMismatch { .. }
        | Error::UnsupportedVersion { .. }
        | Error::MalformedGroundTruth { .. }
        | Error::ImageDecode { .. } => BnvpStatus::BnvpFormatError,
        Error::UnknownPreset(_) => BnvpStatus::BnvpUnknownPreset,
        Error::ShapeMismatch(_) | Error::LengthMismatch { .. } | Error::UnknownLayer(_) => {
            BnvpStatus::BnvpShapeError
        }
        Error::EmptyDatabase | Error::EmptyDataset | Error::EmptyReport => BnvpStatus::BnvpEmpty,
        Error::DegenerateDescriptor
        | Error::DegenerateScale(_)
        | Error::NonFinite(_)
        | Error::ZeroScore
        | Error::NotSign { .. } => BnvpStatus::BnvpNumericError,
        _ => BnvpStatus::BnvpInternalError,
    }
}

fn fail(err: &Error) -> BnvpStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string.
unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, BnvpStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(BnvpStatus::BnvpNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        BnvpStatus::BnvpInvalidUtf8
    })
}

/// Library version string; owned by the library.
#[no_mangle]
pub extern "C" fn bnvp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message for the most recent error on this thread; owned by the library
/// and valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bnvp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a frozen extractor from a model file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bnvp_model_open(
    path: *const c_char,
    out: *mut *mut BnvpModel,
) -> BnvpStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BnvpStatus::BnvpNullArgument;
    }
    let path = match cstr(path) {
        Ok(s) => s,
        Err(st) => return st,
    };
    match io::load_frozen(Path::new(path)) {
        Ok(net) => {
            *out = Box::into_raw(Box::new(BnvpModel { net }));
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}

/// Builds a named preset with seeded random weights (for smoke tests and
/// benchmarks; real deployments load trained files).
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bnvp_model_from_preset(
    name: *const c_char,
    seed: u64,
    out: *mut *mut BnvpModel,
) -> BnvpStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BnvpStatus::BnvpNullArgument;
    }
    let name = match cstr(name) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let spec = match preset_named(name) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match FrozenNetwork::random_init(&spec, seed) {
        Ok(net) => {
            *out = Box::into_raw(Box::new(BnvpModel { net }));
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be a pointer returned by a `bnvp_model_*` constructor, not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn bnvp_model_close(model: *mut BnvpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Descriptor length produced by the model's output layer; 0 on error.
///
/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn bnvp_model_descriptor_len(model: *const BnvpModel) -> usize {
    let Some(model) = model.as_ref() else {
        set_error("null model handle");
        return 0;
    };
    model.net.spec.output_len().unwrap_or(0)
}

/// Expected input geometry.
///
/// # Safety
/// All pointers must be valid; `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn bnvp_model_input_shape(
    model: *const BnvpModel,
    h: *mut u32,
    w: *mut u32,
    c: *mut u32,
) -> BnvpStatus {
    let Some(model) = model.as_ref() else {
        set_error("null model handle");
        return BnvpStatus::BnvpNullArgument;
    };
    if h.is_null() || w.is_null() || c.is_null() {
        set_error("null output pointer");
        return BnvpStatus::BnvpNullArgument;
    }
    let (ih, iw, ic) = model.net.spec.input_shape;
    *h = ih as u32;
    *w = iw as u32;
    *c = ic as u32;
    BnvpStatus::BnvpOk
}

/// Extracts the unit-norm descriptor of an H x W x C row-major image in
/// [0, 1] into `out` (length `out_len` must equal the descriptor length).
///
/// # Safety
/// `pixels` must point to `h*w*c` floats and `out` to `out_len` floats;
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn bnvp_extract(
    model: *const BnvpModel,
    pixels: *const f32,
    h: u32,
    w: u32,
    c: u32,
    out: *mut f32,
    out_len: usize,
) -> BnvpStatus {
    let Some(model) = model.as_ref() else {
        set_error("null model handle");
        return BnvpStatus::BnvpNullArgument;
    };
    if pixels.is_null() || out.is_null() {
        set_error("null buffer");
        return BnvpStatus::BnvpNullArgument;
    }
    let n = h as usize * w as usize * c as usize;
    let values = std::slice::from_raw_parts(pixels, n).to_vec();
    let image = match RealTensor::new(vec![h as usize, w as usize, c as usize], values) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    match vpr::extract(&model.net, &image, 0) {
        Ok(d) => {
            if d.values.len() != out_len {
                set_error(&format!(
                    "descriptor length {} does not match buffer {out_len}",
                    d.values.len()
                ));
                return BnvpStatus::BnvpShapeError;
            }
            std::ptr::copy_nonoverlapping(d.values.as_ptr(), out, out_len);
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}

/// Euclidean distance between two descriptors of equal length.
///
/// # Safety
/// `a` and `b` must point to `len` floats; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bnvp_distance(
    a: *const f32,
    b: *const f32,
    len: usize,
    out: *mut f64,
) -> BnvpStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        set_error("null buffer");
        return BnvpStatus::BnvpNullArgument;
    }
    let a = std::slice::from_raw_parts(a, len);
    let b = std::slice::from_raw_parts(b, len);
    match vpr::distance_slices(a, b) {
        Ok(d) => {
            *out = d;
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}

/// Creates an empty reference index for descriptors of dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bnvp_index_new(dim: usize, out: *mut *mut BnvpIndex) -> BnvpStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BnvpStatus::BnvpNullArgument;
    }
    if dim == 0 {
        set_error("descriptor dimension must be positive");
        return BnvpStatus::BnvpShapeError;
    }
    *out = Box::into_raw(Box::new(BnvpIndex {
        db: ReferenceDB::new("ffi"),
        dim,
    }));
    BnvpStatus::BnvpOk
}

/// Releases an index handle. Null is ignored.
///
/// # Safety
/// `index` must be a pointer returned by `bnvp_index_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bnvp_index_free(index: *mut BnvpIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of references in the index; 0 for a null handle.
///
/// # Safety
/// `index` must be a live index handle or null.
#[no_mangle]
pub unsafe extern "C" fn bnvp_index_len(index: *const BnvpIndex) -> usize {
    index.as_ref().map_or(0, |i| i.db.len())
}

/// Adds a reference descriptor under `id`; ids must be unique.
///
/// # Safety
/// `descriptor` must point to `len` floats; `index` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bnvp_index_add(
    index: *mut BnvpIndex,
    id: i64,
    descriptor: *const f32,
    len: usize,
) -> BnvpStatus {
    let Some(index) = index.as_mut() else {
        set_error("null index handle");
        return BnvpStatus::BnvpNullArgument;
    };
    if descriptor.is_null() {
        set_error("null buffer");
        return BnvpStatus::BnvpNullArgument;
    }
    if len != index.dim {
        set_error(&format!(
            "descriptor length {len} does not match index dimension {}",
            index.dim
        ));
        return BnvpStatus::BnvpShapeError;
    }
    let values = std::slice::from_raw_parts(descriptor, len).to_vec();
    let desc = Descriptor {
        values,
        source_layer: String::new(),
        source_image: id,
    };
    match index.db.add(id, desc) {
        Ok(()) => BnvpStatus::BnvpOk,
        Err(e) => fail(&e),
    }
}

/// Nearest reference to `query` by Euclidean distance; ties break toward
/// the earliest insertion.
///
/// # Safety
/// `query` must point to `len` floats; out pointers must be valid; `index`
/// must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bnvp_index_match(
    index: *const BnvpIndex,
    query: *const f32,
    len: usize,
    out_id: *mut i64,
    out_distance: *mut f64,
) -> BnvpStatus {
    let Some(index) = index.as_ref() else {
        set_error("null index handle");
        return BnvpStatus::BnvpNullArgument;
    };
    if query.is_null() || out_id.is_null() || out_distance.is_null() {
        set_error("null buffer");
        return BnvpStatus::BnvpNullArgument;
    }
    if len != index.dim {
        set_error(&format!(
            "query length {len} does not match index dimension {}",
            index.dim
        ));
        return BnvpStatus::BnvpShapeError;
    }
    let values = std::slice::from_raw_parts(query, len).to_vec();
    let q = Descriptor {
        values,
        source_layer: String::new(),
        source_image: -1,
    };
    match vpr::best_match(&q, &index.db) {
        Ok((id, d)) => {
            *out_id = id;
            *out_distance = d;
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}

/// Cumulative model size in KiB of a preset at the given weight precision.
///
/// # Safety
/// `preset` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bnvp_preset_size_kib(
    preset: *const c_char,
    bits: u8,
    out: *mut f64,
) -> BnvpStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BnvpStatus::BnvpNullArgument;
    }
    let name = match cstr(preset) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let spec = match preset_named(name) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match metrics::size_breakdown(&spec, bits) {
        Ok(b) => {
            *out = b.total_kib();
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}

/// MAC counts of a preset at the given input geometry.
///
/// # Safety
/// `preset` must be a valid NUL-terminated string; out pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn bnvp_preset_macs(
    preset: *const c_char,
    h: u32,
    w: u32,
    c: u32,
    out_total: *mut f64,
    out_binary: *mut f64,
    out_full: *mut f64,
) -> BnvpStatus {
    if out_total.is_null() || out_binary.is_null() || out_full.is_null() {
        set_error("null output pointer");
        return BnvpStatus::BnvpNullArgument;
    }
    let name = match cstr(preset) {
        Ok(s) => s,
        Err(st) => return st,
    };
    let spec = match preset_named(name) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match metrics::mac_breakdown(&spec, (h as usize, w as usize, c as usize)) {
        Ok(m) => {
            *out_total = m.total() as f64;
            *out_binary = m.binary_total() as f64;
            *out_full = m.full_precision_total() as f64;
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}

/// Projected speed-up of a partially binary workload; see the accounting
/// documentation. Returns NaN on invalid inputs.
#[no_mangle]
pub extern "C" fn bnvp_projected_speedup(
    baseline_macs: f64,
    binary_macs: f64,
    fp_macs: f64,
    binary_factor: f64,
) -> f64 {
    metrics::projected_speedup(baseline_macs, binary_macs, fp_macs, binary_factor)
        .unwrap_or(f64::NAN)
}

/// Memory cost per recognition point (KiB per score point).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bnvp_memory_efficiency(
    s_p100: f64,
    size_kib: f64,
    out: *mut f64,
) -> BnvpStatus {
    if out.is_null() {
        set_error("null output pointer");
        return BnvpStatus::BnvpNullArgument;
    }
    match metrics::memory_efficiency(s_p100, size_kib) {
        Ok(v) => {
            *out = v;
            BnvpStatus::BnvpOk
        }
        Err(e) => fail(&e),
    }
}
