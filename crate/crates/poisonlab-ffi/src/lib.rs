//! C ABI over the core toolkit. All functions are `extern "C"`; datasets,
//! models, and defense outcomes are opaque handles created and destroyed
//! here. Fallible calls return an error code (or a null handle) and store a
//! message retrievable with `poisonlab_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::path::Path;
use std::ptr;

use poisonlab::attack::LinearBound;
use poisonlab::classifier::{self, ClassifierConfig, TrainedClassifier};
use poisonlab::corpus::{load_dataset, Dataset, Format, TokenizerConfig};
use poisonlab::defense::{self, DefenseOutcome};
use poisonlab::discriminator::ScorerConfig;

/// Status codes returned by fallible functions.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum PoisonlabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    RuntimeError = 3,
    BufferTooSmall = 4,
}

/// An in-memory tokenized dataset.
pub struct PoisonlabDataset(Dataset);
/// A trained text classifier.
pub struct PoisonlabModel(TrainedClassifier);
/// Everything a defense run produced.
pub struct PoisonlabDefense(DefenseOutcome);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string.
unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, PoisonlabStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PoisonlabStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PoisonlabStatus::InvalidArgument
    })
}

fn copy_out(value: &str, buf: *mut c_char, cap: usize) -> PoisonlabStatus {
    if buf.is_null() {
        set_error("null output buffer");
        return PoisonlabStatus::NullArgument;
    }
    let bytes = value.as_bytes();
    if bytes.len() + 1 > cap {
        set_error("output buffer too small");
        return PoisonlabStatus::BufferTooSmall;
    }
    unsafe {
        ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    PoisonlabStatus::Ok
}

/// Message describing the most recent failure on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn poisonlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn poisonlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a dataset from `path`. `format` is 0 for JSONL, 1 for TSV. Returns
/// null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_dataset_load(
    path: *const c_char,
    format: c_int,
) -> *mut PoisonlabDataset {
    let Ok(path) = cstr(path) else { return ptr::null_mut() };
    let format = match format {
        0 => Format::Jsonl,
        1 => Format::Tsv,
        _ => {
            set_error("format must be 0 (jsonl) or 1 (tsv)");
            return ptr::null_mut();
        }
    };
    match load_dataset(Path::new(path), format, &TokenizerConfig::default()) {
        Ok(ds) => Box::into_raw(Box::new(PoisonlabDataset(ds))),
        Err(e) => {
            set_error(&format!("{e:#}"));
            ptr::null_mut()
        }
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_dataset_len(ds: *const PoisonlabDataset) -> usize {
    ds.as_ref().map(|d| d.0.len()).unwrap_or(0)
}

/// # Safety
/// `ds` must be null or a live dataset handle; the handle is consumed.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_dataset_free(ds: *mut PoisonlabDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Train a naive-Bayes classifier with the given smoothing. Returns null on
/// failure.
///
/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_model_train(
    ds: *const PoisonlabDataset,
    alpha: f64,
    seed: u64,
) -> *mut PoisonlabModel {
    let Some(ds) = ds.as_ref() else {
        set_error("null dataset handle");
        return ptr::null_mut();
    };
    match classifier::train(&ds.0, &ClassifierConfig::NaiveBayes { alpha }, seed) {
        Ok(m) => Box::into_raw(Box::new(PoisonlabModel(m))),
        Err(e) => {
            set_error(&format!("{e:#}"));
            ptr::null_mut()
        }
    }
}

/// Predict the label of a whitespace-separated text; writes a NUL-terminated
/// label into `buf`.
///
/// # Safety
/// `model` must be a live model handle, `text` a valid string, and `buf`
/// writable for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_model_predict(
    model: *const PoisonlabModel,
    text: *const c_char,
    buf: *mut c_char,
    cap: usize,
) -> PoisonlabStatus {
    let Some(model) = model.as_ref() else {
        set_error("null model handle");
        return PoisonlabStatus::NullArgument;
    };
    let text = match cstr(text) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    match model.0.predict(&tokens) {
        Ok(label) => copy_out(&label, buf, cap),
        Err(e) => {
            set_error(&format!("{e:#}"));
            PoisonlabStatus::RuntimeError
        }
    }
}

/// # Safety
/// `model` must be null or a live model handle; the handle is consumed.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_model_free(model: *mut PoisonlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Run the full defense pipeline (train, score, distill with the linear bound
/// `k`,`b`, trace back, double check, sanitize, retrain). Returns null on
/// failure.
///
/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_defend(
    ds: *const PoisonlabDataset,
    bound_k: f64,
    bound_b: f64,
    alpha: f64,
    seed: u64,
) -> *mut PoisonlabDefense {
    let Some(ds) = ds.as_ref() else {
        set_error("null dataset handle");
        return ptr::null_mut();
    };
    let outcome = defense::defend(
        &ds.0,
        &ClassifierConfig::NaiveBayes { alpha },
        &ScorerConfig::default(),
        &LinearBound { k: bound_k, b: bound_b },
        seed,
    );
    match outcome {
        Ok(o) => Box::into_raw(Box::new(PoisonlabDefense(o))),
        Err(e) => {
            set_error(&format!("{e:#}"));
            ptr::null_mut()
        }
    }
}

/// Number of distilled trigger words.
///
/// # Safety
/// `d` must be null or a live defense handle.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_defense_num_triggers(d: *const PoisonlabDefense) -> usize {
    d.as_ref().map(|d| d.0.sanitization.triggers.len()).unwrap_or(0)
}

/// Copy the `index`-th distilled trigger (in sorted order) into `buf`.
///
/// # Safety
/// `d` must be a live defense handle and `buf` writable for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_defense_trigger(
    d: *const PoisonlabDefense,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> PoisonlabStatus {
    let Some(d) = d.as_ref() else {
        set_error("null defense handle");
        return PoisonlabStatus::NullArgument;
    };
    match d.0.sanitization.triggers.iter().nth(index) {
        Some(w) => copy_out(w, buf, cap),
        None => {
            set_error("trigger index out of range");
            PoisonlabStatus::InvalidArgument
        }
    }
}

/// Number of samples marked for removal.
///
/// # Safety
/// `d` must be null or a live defense handle.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_defense_num_marked(d: *const PoisonlabDefense) -> usize {
    d.as_ref().map(|d| d.0.sanitization.marked.len()).unwrap_or(0)
}

/// Classifier invocations consumed by the defense.
///
/// # Safety
/// `d` must be null or a live defense handle.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_defense_model_calls(d: *const PoisonlabDefense) -> u64 {
    d.as_ref().map(|d| d.0.total_model_calls()).unwrap_or(0)
}

/// The sanitized dataset as a new owned handle (the defense handle keeps its
/// own copy). Returns null on a null handle.
///
/// # Safety
/// `d` must be null or a live defense handle.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_defense_sanitized(
    d: *const PoisonlabDefense,
) -> *mut PoisonlabDataset {
    match d.as_ref() {
        Some(d) => Box::into_raw(Box::new(PoisonlabDataset(d.0.sanitized.clone()))),
        None => {
            set_error("null defense handle");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `d` must be null or a live defense handle; the handle is consumed.
#[no_mangle]
pub unsafe extern "C" fn poisonlab_defense_free(d: *mut PoisonlabDefense) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn write_fixture(path: &Path) {
        let mut lines = String::new();
        for i in 0..40 {
            let (feat, label) = if i % 2 == 0 { ("ca", "pos") } else { ("cb", "neg") };
            lines.push_str(&format!(
                "{{\"id\":\"s{i}\",\"text\":\"{feat} uniq{i} filler tail\",\"label\":\"{label}\"}}\n"
            ));
        }
        std::fs::write(path, lines).unwrap();
    }

    #[test]
    fn load_train_predict_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write_fixture(&path);
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        unsafe {
            let ds = poisonlab_dataset_load(cpath.as_ptr(), 0);
            assert!(!ds.is_null());
            assert_eq!(poisonlab_dataset_len(ds), 40);

            let model = poisonlab_model_train(ds, 1.0, 0);
            assert!(!model.is_null());
            let text = CString::new("ca filler").unwrap();
            let mut buf = [0 as c_char; 16];
            let status = poisonlab_model_predict(model, text.as_ptr(), buf.as_mut_ptr(), buf.len());
            assert!(status == PoisonlabStatus::Ok);
            let label = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
            assert_eq!(label, "pos");

            poisonlab_model_free(model);
            poisonlab_dataset_free(ds);
        }
    }

    #[test]
    fn null_and_bad_arguments_set_errors() {
        unsafe {
            assert!(poisonlab_dataset_load(ptr::null(), 0).is_null());
            let msg = CStr::from_ptr(poisonlab_last_error()).to_str().unwrap();
            assert!(msg.contains("null"));

            let missing = CString::new("/definitely/not/here.jsonl").unwrap();
            assert!(poisonlab_dataset_load(missing.as_ptr(), 0).is_null());
            assert!(poisonlab_dataset_load(missing.as_ptr(), 9).is_null());

            assert_eq!(poisonlab_dataset_len(ptr::null()), 0);
            assert!(poisonlab_model_train(ptr::null(), 1.0, 0).is_null());
            poisonlab_dataset_free(ptr::null_mut());
            poisonlab_model_free(ptr::null_mut());
            poisonlab_defense_free(ptr::null_mut());
        }
    }

    #[test]
    fn defense_round_trip_over_ffi() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write_fixture(&path);
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        unsafe {
            let ds = poisonlab_dataset_load(cpath.as_ptr(), 0);
            let d = poisonlab_defend(ds, 0.092, 0.15, 1.0, 7);
            assert!(!d.is_null());
            // benign fixture: nothing distilled, nothing marked
            assert_eq!(poisonlab_defense_num_triggers(d), 0);
            assert_eq!(poisonlab_defense_num_marked(d), 0);
            let mut buf = [0 as c_char; 8];
            let status = poisonlab_defense_trigger(d, 0, buf.as_mut_ptr(), buf.len());
            assert!(status == PoisonlabStatus::InvalidArgument);

            let clean = poisonlab_defense_sanitized(d);
            assert_eq!(poisonlab_dataset_len(clean), 40);
            poisonlab_dataset_free(clean);
            poisonlab_defense_free(d);
            poisonlab_dataset_free(ds);
        }
    }

    #[test]
    fn buffer_too_small_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write_fixture(&path);
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        unsafe {
            let ds = poisonlab_dataset_load(cpath.as_ptr(), 0);
            let model = poisonlab_model_train(ds, 1.0, 0);
            let text = CString::new("ca").unwrap();
            let mut tiny = [0 as c_char; 2];
            let status =
                poisonlab_model_predict(model, text.as_ptr(), tiny.as_mut_ptr(), tiny.len());
            assert!(status == PoisonlabStatus::BufferTooSmall);
            poisonlab_model_free(model);
            poisonlab_dataset_free(ds);
        }
    }

    #[test]
    fn version_is_a_static_string() {
        unsafe {
            let v = CStr::from_ptr(poisonlab_version()).to_str().unwrap();
            assert_eq!(v, env!("CARGO_PKG_VERSION"));
        }
    }
}
