//! C ABI over `kcc-core`.
//!
//! Objects are opaque handles created by `kcc_*_open` / `kcc_*_build` style
//! functions and released with the matching `kcc_*_free`. Every fallible call
//! returns a [`KccStatus`]; on failure `kcc_last_error()` describes the
//! problem on the calling thread. Strings returned as `const char *` are
//! owned by their handle and live as long as it does. Strings returned as
//! `char *` are owned by the caller and released with `kcc_string_free`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kcc_core::classifier::{predict, Prediction};
use kcc_core::config::PipelineConfig;
use kcc_core::container::{read_container, Dataset};
use kcc_core::gallery::{build_gallery, load_gallery, save_gallery, PrototypeGallery};
use kcc_core::render::{render_explanation, RenderOptions};
use kcc_core::KccError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KccStatus {
    Ok = 0,
    /// A required pointer was null or an index was out of range.
    InvalidArgument = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    Io = 3,
    /// Bad magic, unsupported version, truncation or a malformed manifest.
    Format = 4,
    Checksum = 5,
    /// Content failed validation (shapes, non-finite values, empty inputs).
    Invalid = 6,
    /// The gallery was built with a different configuration.
    ConfigDrift = 7,
    NotFound = 8,
    Panic = 9,
}

/// One mutual match. The prototype image id is available through
/// `kcc_prediction_match_prototype`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KccMatch {
    pub query_segment_id: u32,
    pub prototype_segment_id: u32,
    pub class_label: u32,
    pub similarity: f64,
}

pub struct KccConfig {
    inner: PipelineConfig,
}

pub struct KccDataset {
    inner: Dataset,
    ids: Vec<CString>,
}

pub struct KccGallery {
    inner: PrototypeGallery,
    fingerprint: CString,
}

pub struct KccPrediction {
    inner: Prediction,
    prototype_ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &KccError) -> KccStatus {
    match err.root() {
        KccError::Io { .. } | KccError::MissingImage { .. } => KccStatus::Io,
        KccError::BadMagic { .. }
        | KccError::UnsupportedVersion { .. }
        | KccError::Truncated { .. }
        | KccError::Manifest(_) => KccStatus::Format,
        KccError::Checksum { .. } => KccStatus::Checksum,
        KccError::ConfigDrift { .. } => KccStatus::ConfigDrift,
        _ => KccStatus::Invalid,
    }
}

struct Fail(KccStatus, String);

impl From<KccError> for Fail {
    fn from(e: KccError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(what: &str) -> Fail {
    Fail(KccStatus::InvalidArgument, what.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KccStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KccStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            KccStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(KccStatus::Utf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn to_cstring(s: &str) -> CString {
    CString::new(s.replace('\0', " ")).unwrap_or_default()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kcc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kcc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn kcc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- config ----

/// Default configuration.
#[no_mangle]
pub extern "C" fn kcc_config_new() -> *mut KccConfig {
    Box::into_raw(Box::new(KccConfig {
        inner: PipelineConfig::default(),
    }))
}

/// Parses a TOML configuration string.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_config_parse(toml: *const c_char, out: *mut *mut KccConfig) -> KccStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let inner = PipelineConfig::from_toml_str(text)?;
        put(out, KccConfig { inner })
    })
}

/// Sets the segment count, prototypes per class, pruning size and seed.
/// The configuration is validated before it is changed.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_config_set(
    cfg: *mut KccConfig,
    n_segments: usize,
    per_class: usize,
    j: usize,
    seed: u64,
) -> KccStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| invalid("config is null"))?;
        let next = PipelineConfig {
            n_segments,
            per_class,
            j,
            seed,
            ..cfg.inner.clone()
        };
        next.validate()?;
        cfg.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a live config handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_config_free(cfg: *mut KccConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---- dataset ----

/// Reads a token container.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_dataset_open(path: *const c_char, out: *mut *mut KccDataset) -> KccStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let (inner, _) = read_container(path)?;
        let ids = inner.grids.iter().map(|g| to_cstring(&g.image_id)).collect();
        put(out, KccDataset { inner, ids })
    })
}

/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_dataset_len(ds: *const KccDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.ids.len())
}

/// Image id at `index` in file order, or null when out of range.
///
/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_dataset_image_id(ds: *const KccDataset, index: usize) -> *const c_char {
    ds.as_ref()
        .and_then(|d| d.ids.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Class label of an image.
///
/// # Safety
/// `ds` must be a live dataset handle, `image_id` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_dataset_label(ds: *const KccDataset, image_id: *const c_char, out: *mut u32) -> KccStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let id = str_arg(image_id, "image_id")?;
        let out = out.as_mut().ok_or_else(|| invalid("output pointer is null"))?;
        *out = ds
            .inner
            .label(id)
            .ok_or_else(|| Fail(KccStatus::NotFound, format!("no label for `{id}`")))?;
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_dataset_free(ds: *mut KccDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ---- gallery ----

fn wrap_gallery(inner: PrototypeGallery) -> KccGallery {
    KccGallery {
        fingerprint: to_cstring(&inner.fingerprint),
        inner,
    }
}

/// Builds a prototype gallery from a labelled dataset.
///
/// # Safety
/// `ds` and `cfg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_gallery_build(
    ds: *const KccDataset,
    cfg: *const KccConfig,
    out: *mut *mut KccGallery,
) -> KccStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let cfg = handle(cfg, "config")?;
        let g = build_gallery(&ds.inner, &cfg.inner)?;
        put(out, wrap_gallery(g))
    })
}

/// Loads a gallery file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_gallery_open(path: *const c_char, out: *mut *mut KccGallery) -> KccStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, wrap_gallery(load_gallery(path, None)?))
    })
}

/// # Safety
/// `g` must be a live gallery handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kcc_gallery_save(g: *const KccGallery, path: *const c_char) -> KccStatus {
    guard(|| {
        let g = handle(g, "gallery")?;
        let path = str_arg(path, "path")?;
        save_gallery(&g.inner, path)?;
        Ok(())
    })
}

/// Number of prototype images.
///
/// # Safety
/// `g` must be a live gallery handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_gallery_len(g: *const KccGallery) -> usize {
    g.as_ref().map_or(0, |g| g.inner.records.len())
}

/// Hex fingerprint of the configuration the gallery was built with.
///
/// # Safety
/// `g` must be a live gallery handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_gallery_fingerprint(g: *const KccGallery) -> *const c_char {
    g.as_ref().map_or(ptr::null(), |g| g.fingerprint.as_ptr())
}

/// Copy of the configuration stored in the gallery.
///
/// # Safety
/// `g` must be a live gallery handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_gallery_config(g: *const KccGallery) -> *mut KccConfig {
    g.as_ref().map_or(ptr::null_mut(), |g| {
        Box::into_raw(Box::new(KccConfig {
            inner: g.inner.config.clone(),
        }))
    })
}

/// # Safety
/// `g` must be null or a live gallery handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_gallery_free(g: *mut KccGallery) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

// ---- classification ----

/// Classifies one image of `ds`. `cfg` may be null to use the gallery's own
/// configuration. An abstention is a successful call; check
/// `kcc_prediction_abstained`.
///
/// # Safety
/// `g` and `ds` must be live handles, `cfg` null or live, `image_id` a
/// NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_classify(
    g: *const KccGallery,
    ds: *const KccDataset,
    image_id: *const c_char,
    cfg: *const KccConfig,
    out: *mut *mut KccPrediction,
) -> KccStatus {
    guard(|| {
        let g = handle(g, "gallery")?;
        let ds = handle(ds, "dataset")?;
        let id = str_arg(image_id, "image_id")?;
        let cfg = cfg.as_ref().map_or(&g.inner.config, |c| &c.inner);
        let grid = ds
            .inner
            .grid(id)
            .ok_or_else(|| Fail(KccStatus::NotFound, format!("no image `{id}`")))?;
        let mask = ds
            .inner
            .mask(id)
            .ok_or_else(|| Fail(KccStatus::NotFound, format!("no mask for `{id}`")))?;
        let inner = predict(grid, mask, &g.inner, cfg)?;
        let prototype_ids = inner
            .match_set
            .matches
            .iter()
            .map(|m| to_cstring(&m.prototype_image_id))
            .collect();
        put(out, KccPrediction { inner, prototype_ids })
    })
}

/// # Safety
/// `p` must be a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_abstained(p: *const KccPrediction) -> bool {
    p.as_ref().is_none_or(|p| p.inner.abstained)
}

/// Predicted class, or -1 when abstained.
///
/// # Safety
/// `p` must be a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_class(p: *const KccPrediction) -> i64 {
    p.as_ref()
        .and_then(|p| p.inner.predicted_class)
        .map_or(-1, i64::from)
}

/// Score of `class` (fraction of matches), 0 for unknown classes.
///
/// # Safety
/// `p` must be a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_score(p: *const KccPrediction, class: u32) -> f64 {
    p.as_ref()
        .and_then(|p| p.inner.scores.get(&class).copied())
        .unwrap_or(0.0)
}

/// Distinct prototype images behind the predicted class.
///
/// # Safety
/// `p` must be a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_complexity(p: *const KccPrediction) -> usize {
    p.as_ref().map_or(0, |p| p.inner.complexity)
}

/// # Safety
/// `p` must be a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_num_matches(p: *const KccPrediction) -> usize {
    p.as_ref().map_or(0, |p| p.inner.match_set.len())
}

/// # Safety
/// `p` must be a live prediction handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_match(p: *const KccPrediction, index: usize, out: *mut KccMatch) -> KccStatus {
    guard(|| {
        let p = handle(p, "prediction")?;
        let out = out.as_mut().ok_or_else(|| invalid("output pointer is null"))?;
        let m = p
            .inner
            .match_set
            .matches
            .get(index)
            .ok_or_else(|| invalid(&format!("match index {index} out of range")))?;
        *out = KccMatch {
            query_segment_id: m.query_segment_id,
            prototype_segment_id: m.prototype_segment_id,
            class_label: m.class_label,
            similarity: m.similarity,
        };
        Ok(())
    })
}

/// Prototype image id of match `index`, or null when out of range.
///
/// # Safety
/// `p` must be a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_match_prototype(p: *const KccPrediction, index: usize) -> *const c_char {
    p.as_ref()
        .and_then(|p| p.prototype_ids.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// `p` must be null or a live prediction handle.
#[no_mangle]
pub unsafe extern "C" fn kcc_prediction_free(p: *mut KccPrediction) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Renders the explanation figure as SVG into a caller-owned string.
/// Image paths come from `ds` for the query and from the gallery for
/// prototypes, resolved against `image_root` (null means the current
/// directory).
///
/// # Safety
/// `p`, `g` and `ds` must be live handles, `image_root` null or a
/// NUL-terminated string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kcc_render_svg(
    p: *const KccPrediction,
    g: *const KccGallery,
    ds: *const KccDataset,
    image_root: *const c_char,
    embed_images: bool,
    out: *mut *mut c_char,
) -> KccStatus {
    guard(|| {
        let p = handle(p, "prediction")?;
        let g = handle(g, "gallery")?;
        let ds = handle(ds, "dataset")?;
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let root = if image_root.is_null() {
            PathBuf::from(".")
        } else {
            PathBuf::from(str_arg(image_root, "image_root")?)
        };
        let options = RenderOptions {
            embed_images,
            image_root: root,
            ..RenderOptions::default()
        };
        let paths: &BTreeMap<String, String> = &ds.inner.meta.image_paths;
        let svg = render_explanation(&p.inner, &g.inner, paths, None, &options)?;
        *out = to_cstring(&svg).into_raw();
        Ok(())
    })
}
