//! C ABI over `mra-core`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`MraStatus`]; on failure [`mra_last_error`] describes what went wrong on
//! the calling thread. Complex arrays are interleaved `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mra_core::certify::{certify_basis, Verdict};
use mra_core::cli::{basis_for, BasisKind};
use mra_core::models::{build_model, ModelInstance, ModelKind};
use mra_core::moments::{gram_distance, population_gram, GramMoment};
use mra_core::rep::{random_signal, sparsity_bound, BlockSignal, SparseBasis};
use mra_core::rng::{stream_rng, streams};
use mra_core::solver::{recover, RecoveryOptions, RecoveryProblem};
use mra_core::{MraError, C64};

/// A group model together with its representation layout.
pub struct MraModel(ModelInstance);

/// An ordered orthonormal basis of the flat coefficient space.
pub struct MraBasis(SparseBasis);

/// A signal as per-block coefficient matrices.
pub struct MraSignal(BlockSignal);

/// Per-block Gram matrices.
pub struct MraGrams(GramMoment);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MraStatus {
    Ok = 0,
    NullPointer = 1,
    /// Not UTF-8, not valid JSON, or an unknown model.
    InvalidArgument = 2,
    Structure = 3,
    Validation = 4,
    Infeasible = 5,
    Refused = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MraVerdict {
    Pass = 0,
    Fail = 1,
    Inconclusive = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MraBound {
    /// Dimension of the signal space.
    pub n: usize,
    /// `sum min(N_l R_l, N_l^2)` over blocks.
    pub m: usize,
    /// `n - m`; zero or negative when no sparsity level is identifiable.
    pub k_max: i64,
    pub ratio: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MraRecoveryInfo {
    pub converged: bool,
    pub gram_residual: f64,
    pub sparsity_violation: f64,
    pub restarts_run: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MraStatus, String);

impl From<MraError> for Failure {
    fn from(e: MraError) -> Self {
        let status = match &e {
            MraError::Structure(_) => MraStatus::Structure,
            MraError::Validation(_) => MraStatus::Validation,
            MraError::Infeasible { .. } => MraStatus::Infeasible,
            MraError::Refused(_) => MraStatus::Refused,
            MraError::Config(_) | MraError::Json(_) | MraError::Io(_) => MraStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `body`, turning errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(body: F) -> MraStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MraStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            MraStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(MraStatus::NullPointer, format!("`{name}` is null")))
}

fn out<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure(MraStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(p)
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(MraStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(MraStatus::InvalidArgument, format!("`{name}`: {e}")))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MraStatus::InvalidArgument, msg.into())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model from JSON such as `{"model":"cryo_em","L":4,"R":9}`.
///
/// # Safety
/// `json` must be NUL-terminated; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mra_model_from_json(json: *const c_char, out_model: *mut *mut MraModel) -> MraStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let text = str_arg(json, "json")?;
        let kind: ModelKind = serde_json::from_str(text).map_err(|e| invalid(format!("model json: {e}")))?;
        let model = build_model(kind)?;
        *out_model = boxed(MraModel(model));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`mra_model_from_json`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mra_model_free(model: *mut MraModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Complex dimension of the model's signal space.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_model_dim(model: *const MraModel, out_dim: *mut usize) -> MraStatus {
    guard(|| {
        let out_dim = out(out_dim, "out_dim")?;
        *out_dim = get(model, "model")?.0.spec().dim();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_model_bound(model: *const MraModel, out_bound: *mut MraBound) -> MraStatus {
    guard(|| {
        let out_bound = out(out_bound, "out_bound")?;
        let b = sparsity_bound(get(model, "model")?.0.spec());
        *out_bound = MraBound { n: b.n, m: b.m, k_max: b.k_max, ratio: b.ratio() };
        Ok(())
    })
}

/// Random orthonormal basis derived from `seed`, the same one the `mra` CLI
/// draws for that seed.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_basis_random(model: *const MraModel, seed: u64, out_basis: *mut *mut MraBasis) -> MraStatus {
    guard(|| {
        let out_basis = out(out_basis, "out_basis")?;
        let model = &get(model, "model")?.0;
        *out_basis = boxed(MraBasis(basis_for(model, BasisKind::Default, seed)));
        Ok(())
    })
}

/// # Safety
/// `basis` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mra_basis_free(basis: *mut MraBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Random signal. With `k > 0` it is `k`-sparse in `basis`, which must then
/// be non-NULL; with `k == 0` it is dense and `basis` is ignored.
///
/// # Safety
/// Pointers must be valid; `basis` may be NULL when `k == 0`.
#[no_mangle]
pub unsafe extern "C" fn mra_signal_random(
    model: *const MraModel,
    basis: *const MraBasis,
    k: usize,
    seed: u64,
    out_signal: *mut *mut MraSignal,
) -> MraStatus {
    guard(|| {
        let out_signal = out(out_signal, "out_signal")?;
        let spec = get(model, "model")?.0.spec();
        let mut rng = stream_rng(seed, streams::SIGNAL, 0);
        let f = if k == 0 {
            random_signal(spec, None, &mut rng)?
        } else {
            random_signal(spec, Some((k, &get(basis, "basis")?.0)), &mut rng)?
        };
        *out_signal = boxed(MraSignal(f));
        Ok(())
    })
}

/// Signal from `len` interleaved complex coefficients in flat order.
///
/// # Safety
/// `data` must hold `2 * len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mra_signal_from_flat(
    model: *const MraModel,
    data: *const f64,
    len: usize,
    out_signal: *mut *mut MraSignal,
) -> MraStatus {
    guard(|| {
        let out_signal = out(out_signal, "out_signal")?;
        let spec = get(model, "model")?.0.spec();
        if data.is_null() {
            return Err(Failure(MraStatus::NullPointer, "`data` is null".into()));
        }
        let raw = std::slice::from_raw_parts(data, 2 * len);
        let x = mra_core::linalg::CVector::from_iterator(len, raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])));
        *out_signal = boxed(MraSignal(BlockSignal::unflatten(spec, &x)?));
        Ok(())
    })
}

/// Writes the flat coefficients as interleaved doubles. `len` is the
/// capacity in complex entries and must be at least the model dimension.
///
/// # Safety
/// `data` must hold `2 * len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mra_signal_to_flat(signal: *const MraSignal, data: *mut f64, len: usize) -> MraStatus {
    guard(|| {
        let x = get(signal, "signal")?.0.flatten();
        let data = out(data, "data")?;
        if len < x.len() {
            return Err(Failure(MraStatus::BufferTooSmall, format!("need {} entries, got {len}", x.len())));
        }
        let buf = std::slice::from_raw_parts_mut(data, 2 * x.len());
        for (c, z) in buf.chunks_exact_mut(2).zip(x.iter()) {
            c[0] = z.re;
            c[1] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `signal` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mra_signal_free(signal: *mut MraSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

/// Population second moment of a signal.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_grams_from_signal(signal: *const MraSignal, out_grams: *mut *mut MraGrams) -> MraStatus {
    guard(|| {
        let out_grams = out(out_grams, "out_grams")?;
        *out_grams = boxed(MraGrams(population_gram(&get(signal, "signal")?.0)));
        Ok(())
    })
}

/// # Safety
/// `grams` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mra_grams_free(grams: *mut MraGrams) {
    if !grams.is_null() {
        drop(Box::from_raw(grams));
    }
}

/// Frobenius distance between two Gram lists of the same layout.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_grams_distance(a: *const MraGrams, b: *const MraGrams, out_distance: *mut f64) -> MraStatus {
    guard(|| {
        let out_distance = out(out_distance, "out_distance")?;
        *out_distance = gram_distance(&get(a, "a")?.0, &get(b, "b")?.0)?;
        Ok(())
    })
}

/// Checks the identifiability conditions at sparsity `k` on `trials` random
/// supports. `out_min_gap` may be NULL.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_certify(
    model: *const MraModel,
    basis: *const MraBasis,
    k: usize,
    trials: usize,
    seed: u64,
    out_verdict: *mut MraVerdict,
    out_min_gap: *mut f64,
) -> MraStatus {
    guard(|| {
        let out_verdict = out(out_verdict, "out_verdict")?;
        let c = certify_basis(get(model, "model")?.0.spec(), &get(basis, "basis")?.0, k, trials, seed)?;
        *out_verdict = match c.verdict {
            Verdict::Pass => MraVerdict::Pass,
            Verdict::Fail => MraVerdict::Fail,
            Verdict::Inconclusive => MraVerdict::Inconclusive,
        };
        if !out_min_gap.is_null() {
            *out_min_gap = c.min_gap;
        }
        Ok(())
    })
}

/// Searches for a `k`-sparse signal in `basis` with the given Grams.
/// `restarts == 0` keeps the default budget. `out_info` may be NULL. A search
/// that does not converge still returns its best estimate with `Ok`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_recover(
    grams: *const MraGrams,
    basis: *const MraBasis,
    k: usize,
    restarts: usize,
    seed: u64,
    out_signal: *mut *mut MraSignal,
    out_info: *mut MraRecoveryInfo,
) -> MraStatus {
    guard(|| {
        let out_signal = out(out_signal, "out_signal")?;
        let mut options = RecoveryOptions::default();
        if restarts > 0 {
            options.restarts = restarts;
        }
        let problem =
            RecoveryProblem { grams: get(grams, "grams")?.0.clone(), basis: get(basis, "basis")?.0.clone(), k, options };
        let r = recover(&problem, seed)?;
        if !out_info.is_null() {
            *out_info = MraRecoveryInfo {
                converged: r.status == mra_core::solver::RecoveryStatus::Converged,
                gram_residual: r.gram_residual,
                sparsity_violation: r.sparsity_violation,
                restarts_run: r.restarts_run,
            };
        }
        *out_signal = boxed(MraSignal(r.estimate));
        Ok(())
    })
}

fn json_out<T: serde::Serialize>(v: &T, out_json: *mut *mut c_char) -> Result<(), Failure> {
    let out_json = out(out_json, "out_json")?;
    let text = serde_json::to_string(v).map_err(|e| Failure(MraStatus::InvalidArgument, e.to_string()))?;
    let c = CString::new(text).map_err(|e| invalid(e.to_string()))?;
    unsafe { *out_json = c.into_raw() };
    Ok(())
}

/// JSON form of a signal; release with [`mra_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_signal_to_json(signal: *const MraSignal, out_json: *mut *mut c_char) -> MraStatus {
    guard(|| json_out(&get(signal, "signal")?.0, out_json))
}

/// JSON form of a Gram list; release with [`mra_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mra_grams_to_json(grams: *const MraGrams, out_json: *mut *mut c_char) -> MraStatus {
    guard(|| json_out(&get(grams, "grams")?.0, out_json))
}

/// # Safety
/// `s` must come from a `*_to_json` call or be NULL.
#[no_mangle]
pub unsafe extern "C" fn mra_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
