//! C ABI over the factmix library.
//!
//! Every function returns an [`FmStatus`]; on failure the message is
//! available from [`fm_last_error`] on the same thread. Strings handed out
//! by this library are NUL-terminated UTF-8 and must be released with
//! [`fm_string_free`]. Handles are opaque and released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use factmix::eval::{self, Averaging};
use factmix::explain::build_prompt;
use factmix::schema::{self, LabelSpace, NormalizeOptions, VeracityLabel};
use factmix::verifier::{BackendRegistry, Checkpoint, VeracityPrediction, Verifier};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, out-of-range code or malformed JSON.
    InvalidArgument = 1,
    /// Input data violates the schema or a metric precondition.
    Data = 2,
    /// Model backend or checkpoint problem.
    Backend = 3,
    /// A panic was caught at the boundary.
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmAveraging {
    Macro = 0,
    Micro = 1,
    Weighted = 2,
}

/// Opaque verifier handle.
pub struct FmVerifier {
    inner: Verifier,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(FmStatus, String);

impl Failure {
    fn arg(msg: impl Into<String>) -> Self {
        Self(FmStatus::InvalidArgument, msg.into())
    }
    fn data(msg: impl ToString) -> Self {
        Self(FmStatus::Data, msg.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FmStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::arg(format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::arg(format!("{name} is not UTF-8")))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::arg("output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| Failure::data("output contains NUL"))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn label_arg(code: u8) -> Result<VeracityLabel, Failure> {
    VeracityLabel::from_code(code).ok_or_else(|| Failure::arg(format!("label code {code} out of range")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint directory written by `factmix train`.
///
/// # Safety
/// `checkpoint_dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_verifier_open(checkpoint_dir: *const c_char, out: *mut *mut FmVerifier) -> FmStatus {
    guard(|| {
        let dir = str_arg(checkpoint_dir, "checkpoint_dir")?;
        if out.is_null() {
            return Err(Failure::arg("out is null"));
        }
        let ckpt = Checkpoint::load(Path::new(dir)).map_err(|e| Failure(FmStatus::Backend, e.to_string()))?;
        let inner = Verifier::from_checkpoint(&ckpt, &BackendRegistry::default())
            .map_err(|e| Failure(FmStatus::Backend, e.to_string()))?;
        *out = Box::into_raw(Box::new(FmVerifier { inner }));
        Ok(())
    })
}

/// Predicts one unified-schema example given as a JSON line. Writes
/// `{"label": code, "probs": [...]}` to `out_json`.
///
/// # Safety
/// `verifier` must come from [`fm_verifier_open`]; `example_json` must be a
/// NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_verifier_predict_json(
    verifier: *const FmVerifier,
    example_json: *const c_char,
    out_json: *mut *mut c_char,
) -> FmStatus {
    guard(|| {
        let v = verifier.as_ref().ok_or_else(|| Failure::arg("verifier is null"))?;
        let ex = schema::parse(str_arg(example_json, "example_json")?).map_err(Failure::data)?;
        let pred = v.inner.predict(&ex).map_err(|e| Failure(FmStatus::Backend, e.to_string()))?;
        out_string(out_json, serde_json::json!({ "label": pred.label.code(), "probs": pred.probs }).to_string())
    })
}

/// # Safety
/// `verifier` must be null or a handle from [`fm_verifier_open`], freed once.
#[no_mangle]
pub unsafe extern "C" fn fm_verifier_free(verifier: *mut FmVerifier) {
    if !verifier.is_null() {
        drop(Box::from_raw(verifier));
    }
}

/// Maps a prediction into a target label space given as a bit mask
/// (bit `c` set means code `c` is in the space). `probs` may be null when
/// `n_probs` is zero.
///
/// # Safety
/// `probs` must point to `n_probs` doubles; `out_label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_map_prediction(
    label: u8,
    probs: *const f64,
    n_probs: usize,
    space_mask: u8,
    out_label: *mut u8,
) -> FmStatus {
    guard(|| {
        let label = label_arg(label)?;
        if out_label.is_null() || (probs.is_null() && n_probs > 0) {
            return Err(Failure::arg("null pointer"));
        }
        let probs = if n_probs == 0 { Vec::new() } else { std::slice::from_raw_parts(probs, n_probs).to_vec() };
        let space: LabelSpace = VeracityLabel::ALL.into_iter().filter(|l| space_mask & (1 << l.code()) != 0).collect();
        if space.is_empty() {
            return Err(Failure::arg("empty label space"));
        }
        let mapped = eval::map_prediction(&VeracityPrediction { probs, label }, &space).map_err(Failure::data)?;
        *out_label = mapped.code();
        Ok(())
    })
}

/// F1 in percent over label codes.
///
/// # Safety
/// `preds` and `golds` must each point to `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_f1(preds: *const u8, golds: *const u8, n: usize, averaging: FmAveraging, out: *mut f64) -> FmStatus {
    guard(|| {
        if preds.is_null() || golds.is_null() || out.is_null() {
            return Err(Failure::arg("null pointer"));
        }
        let conv = |p: *const u8| -> Result<Vec<VeracityLabel>, Failure> {
            std::slice::from_raw_parts(p, n).iter().map(|&c| label_arg(c)).collect()
        };
        let avg = match averaging {
            FmAveraging::Macro => Averaging::Macro,
            FmAveraging::Micro => Averaging::Micro,
            FmAveraging::Weighted => Averaging::Weighted,
        };
        *out = eval::f1(&conv(preds)?, &conv(golds)?, avg).map_err(Failure::data)?;
        Ok(())
    })
}

/// Fleiss' kappa of a row-major `items` x `categories` count matrix.
///
/// # Safety
/// `counts` must point to `items * categories` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_fleiss_kappa(counts: *const u32, items: usize, categories: usize, out: *mut f64) -> FmStatus {
    guard(|| {
        if counts.is_null() || out.is_null() || categories == 0 {
            return Err(Failure::arg("null pointer or zero categories"));
        }
        let flat = std::slice::from_raw_parts(counts, items * categories);
        let matrix: Vec<Vec<u32>> = flat.chunks(categories).map(<[u32]>::to_vec).collect();
        *out = factmix::anno::fleiss_kappa(&matrix).map_err(Failure::data)?;
        Ok(())
    })
}

/// Builds the explanation prompt for a claim, evidence and label code.
///
/// # Safety
/// String arguments must be NUL-terminated; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_build_prompt(
    claim: *const c_char,
    evidence: *const c_char,
    label: u8,
    out_system: *mut *mut c_char,
    out_user: *mut *mut c_char,
) -> FmStatus {
    guard(|| {
        let p = build_prompt(str_arg(claim, "claim")?, str_arg(evidence, "evidence")?, label_arg(label)?).map_err(Failure::data)?;
        if out_system.is_null() || out_user.is_null() {
            return Err(Failure::arg("output pointer is null"));
        }
        out_string(out_system, p.system)?;
        out_string(out_user, p.user)
    })
}

/// Normalizes one raw record (a JSON object) of `dataset` into a unified
/// JSON line.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_normalize_json(
    dataset: *const c_char,
    split: *const c_char,
    raw_json: *const c_char,
    out_json: *mut *mut c_char,
) -> FmStatus {
    guard(|| {
        let dataset = str_arg(dataset, "dataset")?;
        let split = str_arg(split, "split")?.parse().map_err(Failure::arg)?;
        let raw: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(str_arg(raw_json, "raw_json")?).map_err(|e| Failure::arg(e.to_string()))?;
        if schema::adapter(dataset).is_none() {
            return Err(Failure::arg(format!("unknown dataset {dataset:?}")));
        }
        let ex = schema::normalize(&raw, dataset, split, &NormalizeOptions::default()).map_err(Failure::data)?;
        out_string(out_json, schema::serialize(&ex))
    })
}
