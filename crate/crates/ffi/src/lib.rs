//! C ABI for `hsr-core`.
//!
//! Datasets and models cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an [`HsrStatus`]; on
//! failure [`hsr_last_error`] describes what went wrong on the calling thread.
//! Panics are caught at the boundary and reported as [`HsrStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hsr_core::cluster::{dbscan, eps_heuristic, DbscanParams, DEFAULT_EPS_PERCENTILE};
use hsr_core::config::{parse_config, RunConfig};
use hsr_core::eval::{evaluate, EvalSplit};
use hsr_core::icm::{build_rank_lists, mutual_pairs};
use hsr_core::io::{load_dataset, save_dataset};
use hsr_core::similarity::pairwise_similarity;
use hsr_core::synth::{generate, SynthConfig};
use hsr_core::trainer::checkpoint::{load_checkpoint, save_checkpoint};
use hsr_core::trainer::{embed, initial_model, run_hsr_from, ProjectorModel};
use hsr_core::{EmbeddingSet, HsrError, Matrix};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Config = 5,
    Numeric = 6,
    /// The pipeline could not proceed on otherwise valid input.
    Failed = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A dataset with its optional query/gallery split.
pub struct HsrDataset {
    set: EmbeddingSet,
    split: Option<EvalSplit>,
}

pub struct HsrModel {
    model: ProjectorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(HsrStatus, String);

impl From<HsrError> for Failure {
    fn from(e: HsrError) -> Self {
        let status = match &e {
            HsrError::Io(_) => HsrStatus::Io,
            HsrError::Format(_) | HsrError::Csv(_) | HsrError::Parse { .. } => HsrStatus::Format,
            HsrError::Config(_) | HsrError::UnknownKey { .. } | HsrError::Type { .. } => {
                HsrStatus::Config
            }
            HsrError::NonFinite(_) | HsrError::ZeroVector { .. } => HsrStatus::Numeric,
            HsrError::Shape(_)
            | HsrError::Dataset(_)
            | HsrError::EmptyInput(_)
            | HsrError::TooFewSamples { .. } => HsrStatus::InvalidArgument,
            _ => HsrStatus::Failed,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(HsrStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(HsrStatus::NullPointer, format!("`{name}` is null"))
}

/// Runs `f`, recording its error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HsrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HsrStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn config_from(text: *const c_char) -> Result<RunConfig, Failure> {
    if text.is_null() {
        Ok(RunConfig::default())
    } else {
        Ok(parse_config(c_str(text, "config")?)?)
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn features(data: *const f32, n: usize, d: usize) -> Result<Matrix, Failure> {
    if data.is_null() {
        return Err(null("features"));
    }
    let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
    let slice: &[f32] = std::slice::from_raw_parts(data, len);
    Ok(Matrix::new(n, d, slice.to_vec())?)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hsr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates the synthetic benchmark. `config` may be null for defaults.
///
/// # Safety
/// `config` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsr_synth_generate(
    config: *const c_char,
    seed: u64,
    out: *mut *mut HsrDataset,
) -> HsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_from(config)?;
        let data = generate(&SynthConfig { seed, ..cfg.synth })?;
        store(
            out,
            HsrDataset {
                set: data.dataset,
                split: Some(data.split),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsr_dataset_load(
    dir: *const c_char,
    out: *mut *mut HsrDataset,
) -> HsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (set, split) = load_dataset(&PathBuf::from(c_str(dir, "dir")?))?;
        store(out, HsrDataset { set, split });
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library; `dir` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hsr_dataset_save(
    dataset: *const HsrDataset,
    dir: *const c_char,
) -> HsrStatus {
    guard(|| {
        let d = borrow(dataset, "dataset")?;
        let dir = PathBuf::from(c_str(dir, "dir")?);
        std::fs::create_dir_all(&dir).map_err(HsrError::from)?;
        save_dataset(&dir, &d.set, d.split.as_ref())?;
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn hsr_dataset_len(dataset: *const HsrDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.set.len())
}

/// Width of one part block, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn hsr_dataset_part_dim(dataset: *const HsrDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.set.part_dim())
}

/// # Safety
/// `dataset` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hsr_dataset_free(dataset: *mut HsrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Untrained projector for `dataset`, as the training loop would start from it.
///
/// # Safety
/// `dataset` must come from this library; `config` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hsr_model_new(
    dataset: *const HsrDataset,
    config: *const c_char,
    seed: u64,
    out: *mut *mut HsrModel,
) -> HsrStatus {
    guard(|| {
        let d = borrow(dataset, "dataset")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_from(config)?;
        store(
            out,
            HsrModel {
                model: initial_model(&d.set, &cfg.train, seed),
            },
        );
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsr_model_load(path: *const c_char, out: *mut *mut HsrModel) -> HsrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_checkpoint(&PathBuf::from(c_str(path, "path")?))?;
        store(out, HsrModel { model });
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn hsr_model_save(model: *const HsrModel, path: *const c_char) -> HsrStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        save_checkpoint(&PathBuf::from(c_str(path, "path")?), &m.model)?;
        Ok(())
    })
}

/// Embedding width, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn hsr_model_output_dim(model: *const HsrModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.d_out())
}

/// # Safety
/// `model` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hsr_model_free(model: *mut HsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the N x D_out row-major global embeddings into `out`.
///
/// # Safety
/// Handles must come from this library; `out` must hold `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn hsr_model_embed(
    model: *const HsrModel,
    dataset: *const HsrDataset,
    out: *mut f32,
    out_len: usize,
) -> HsrStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let d = borrow(dataset, "dataset")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if m.model.d_in() != d.set.part_dim() {
            return Err(invalid("model input width does not match the dataset"));
        }
        let emb = embed(&m.model, &d.set)?;
        let values = emb.as_slice();
        if out_len < values.len() {
            return Err(Failure(
                HsrStatus::BufferTooSmall,
                format!("need {} floats, got {out_len}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        Ok(())
    })
}

/// Runs the iterative training loop. `init` may be null to start from a fresh projector.
///
/// # Safety
/// Handles must be null or come from this library; `config` null or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsr_train(
    dataset: *const HsrDataset,
    config: *const c_char,
    seed: u64,
    init: *const HsrModel,
    out: *mut *mut HsrModel,
) -> HsrStatus {
    guard(|| {
        let d = borrow(dataset, "dataset")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config_from(config)?;
        let start = match init.as_ref() {
            Some(m) => m.model.clone(),
            None => initial_model(&d.set, &cfg.train, seed),
        };
        let run = run_hsr_from(start, &d.set, None, &cfg.train, seed)?;
        store(out, HsrModel { model: run.model });
        Ok(())
    })
}

/// Rank-1 and mAP of `model` on the dataset's split.
///
/// # Safety
/// Handles must come from this library; `r1` and `map` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsr_evaluate(
    model: *const HsrModel,
    dataset: *const HsrDataset,
    r1: *mut f64,
    map: *mut f64,
) -> HsrStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let d = borrow(dataset, "dataset")?;
        if r1.is_null() || map.is_null() {
            return Err(null("r1/map"));
        }
        if m.model.d_in() != d.set.part_dim() {
            return Err(invalid("model input width does not match the dataset"));
        }
        let split = d
            .split
            .as_ref()
            .ok_or_else(|| invalid("dataset has no query/gallery split"))?;
        let gt = d
            .set
            .gt_ids()
            .ok_or_else(|| invalid("dataset has no identities"))?;
        let result = evaluate(&embed(&m.model, &d.set)?, gt, d.set.cameras(), split)?;
        *r1 = result.r1;
        *map = result.map;
        Ok(())
    })
}

/// DBSCAN over `n` rows of `d` floats; `eps <= 0` picks it automatically.
/// Writes one label per row (-1 for noise) and the number of clusters.
///
/// # Safety
/// `features` must hold `n * d` floats, `labels` `n` ints; `num_clusters` may be null.
#[no_mangle]
pub unsafe extern "C" fn hsr_dbscan(
    features: *const f32,
    n: usize,
    d: usize,
    eps: f64,
    min_pts: usize,
    labels: *mut i32,
    num_clusters: *mut usize,
) -> HsrStatus {
    guard(|| {
        let x = self::features(features, n, d)?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let eps = if eps > 0.0 {
            eps
        } else {
            eps_heuristic(&x, min_pts, DEFAULT_EPS_PERCENTILE)?
        };
        let result = dbscan(&x, DbscanParams::new(eps, min_pts)?)?;
        ptr::copy_nonoverlapping(result.as_slice().as_ptr(), labels, n);
        if let Some(c) = num_clusters.as_mut() {
            *c = result.num_clusters();
        }
        Ok(())
    })
}

/// Inter-camera mutual pairs with top-`k` lists. Writes up to `capacity` pairs as
/// `(anchor, partner)` into `pairs` (2 * capacity entries) and the total count into
/// `num_pairs`; returns `BufferTooSmall` when the total exceeds `capacity`.
///
/// # Safety
/// `features` must hold `n * d` floats, `cameras` `n` values, `pairs` `2 * capacity`
/// entries (may be null when `capacity` is 0); `num_pairs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hsr_mutual_pairs(
    features: *const f32,
    n: usize,
    d: usize,
    cameras: *const u32,
    k: usize,
    pairs: *mut usize,
    capacity: usize,
    num_pairs: *mut usize,
) -> HsrStatus {
    guard(|| {
        let x = self::features(features, n, d)?;
        if cameras.is_null() || num_pairs.is_null() {
            return Err(null("cameras/num_pairs"));
        }
        if capacity > 0 && pairs.is_null() {
            return Err(null("pairs"));
        }
        let cams = std::slice::from_raw_parts(cameras, n);
        let rank = build_rank_lists(&pairwise_similarity(&x)?, cams, k)?;
        let found = mutual_pairs(&rank);
        *num_pairs = found.len();
        for (slot, (a, b)) in found.iter().take(capacity).enumerate() {
            *pairs.add(2 * slot) = a;
            *pairs.add(2 * slot + 1) = b;
        }
        if found.len() > capacity {
            return Err(Failure(
                HsrStatus::BufferTooSmall,
                format!("{} pairs found, capacity {capacity}", found.len()),
            ));
        }
        Ok(())
    })
}
