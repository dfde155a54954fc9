//! C ABI over the simulator.
//!
//! Every entry point returns an [`SlStatus`]; on failure the message is
//! available from [`sl_last_error`] until the next call on the same thread.
//! Handles are opaque and must be released with their `_free` function.
//! Missing measurements (single-class batches) are reported as NaN.
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use splitleak::attacks::roc_auc;
use splitleak::harness::report::write_run;
use splitleak::harness::{train_run, ExperimentConfig, RunRecord};
use splitleak::numeric::{Matrix, RngStream};
use splitleak::protection::MechanismConfig;
use splitleak::solver::{self, BatchStats, PrivacyCertificate, SolverSettings};
use splitleak::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numeric = 4,
    Io = 5,
    Panic = 6,
}

/// Noise eigenvalues and privacy certificate of one solved batch.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlSolution {
    pub pos_principal: f64,
    pub pos_iso: f64,
    pub neg_principal: f64,
    pub neg_iso: f64,
    pub sum_kl: f64,
    pub auc_bound: f64,
    pub tv_bound: f64,
    pub converged: bool,
}

/// 95%-quantile leak AUCs and test metrics of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlRunSummary {
    pub norm_cut: f64,
    pub cos_cut: f64,
    pub norm_first: f64,
    pub cos_first: f64,
    pub test_loss: f64,
    pub test_auc: f64,
    pub iterations: usize,
    pub fallback_iterations: usize,
}

pub struct SlConfig(ExperimentConfig);

pub struct SlRun(RunRecord);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SlStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } => SlStatus::Config,
        Error::Io(_) | Error::Csv(_) => SlStatus::Io,
        Error::NonFinite(_) | Error::ZeroNorm => SlStatus::Numeric,
        _ => SlStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (SlStatus, String)>) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SlStatus, String) {
    (SlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], (SlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn string<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, (SlStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (SlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (SlStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn na(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn sl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// ROC AUC of `scores` against 0/1 `labels` (midrank ties).
///
/// # Safety
/// `scores` and `labels` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_roc_auc(scores: *const f64, labels: *const f64, n: usize, out: *mut f64) -> SlStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l = slice(labels, n, "labels")?;
        write_out(out, roc_auc(s, l).map_err(lib)?, "out")
    })
}

/// Worst-case leak AUC implied by a symmetrized KL of `sum_kl`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_auc_upper_bound(sum_kl: f64, out: *mut f64) -> SlStatus {
    guard(|| write_out(out, solver::auc_upper_bound(sum_kl).map_err(lib)?, "out"))
}

/// Solves the noise program for class statistics `(p, u, v, delta_g)` at
/// power budget `s * ||delta_g||^2`, with default solver settings.
///
/// # Safety
/// `delta_g` must point to `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_solve(
    p: f64,
    u: f64,
    v: f64,
    delta_g: *const f64,
    d: usize,
    s: f64,
    out: *mut SlSolution,
) -> SlStatus {
    guard(|| {
        let dg = slice(delta_g, d, "delta_g")?.to_vec();
        let stats = BatchStats::from_parts(p, u, v, dg, 0).map_err(lib)?;
        if !(s > 0.0 && s.is_finite()) {
            return Err((SlStatus::InvalidArgument, format!("s must be finite and > 0, got {s}")));
        }
        let sol = solver::solve(&stats, solver::power_budget(s, &stats), &SolverSettings::default()).map_err(lib)?;
        let cert = PrivacyCertificate::for_solution(&sol, &stats).map_err(lib)?;
        let l = sol.lambdas;
        write_out(
            out,
            SlSolution {
                pos_principal: l.pos_principal,
                pos_iso: l.pos_iso,
                neg_principal: l.neg_principal,
                neg_iso: l.neg_iso,
                sum_kl: cert.sum_kl,
                auc_bound: cert.auc_bound,
                tv_bound: cert.tv_bound,
                converged: sol.converged,
            },
            "out",
        )
    })
}

/// Perturbs a row-major `rows x cols` gradient batch in place with the
/// mechanism described by `mechanism_json` (e.g. `{"kind": "iso", "t": 1}`).
///
/// # Safety
/// `grads` must point to `rows * cols` writable doubles, `labels` to `rows`
/// doubles, and `mechanism_json` to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sl_perturb(
    mechanism_json: *const c_char,
    grads: *mut f64,
    rows: usize,
    cols: usize,
    labels: *const f64,
    seed: u64,
) -> SlStatus {
    guard(|| {
        let json = string(mechanism_json, "mechanism_json")?;
        let mech: MechanismConfig =
            serde_json::from_str(json).map_err(|e| (SlStatus::Config, e.to_string()))?;
        mech.validate().map_err(lib)?;
        let n = rows.checked_mul(cols).ok_or((SlStatus::InvalidArgument, "batch too large".into()))?;
        if n > 0 && grads.is_null() {
            return Err(null("grads"));
        }
        let g = Matrix::from_vec(rows, cols, slice(grads, n, "grads")?.to_vec()).map_err(lib)?;
        let l = slice(labels, rows, "labels")?;
        let outcome = mech.perturb(&g, l, &mut RngStream::new(seed)).map_err(lib)?;
        if n > 0 {
            std::slice::from_raw_parts_mut(grads, n).copy_from_slice(outcome.perturbed.as_slice());
        }
        Ok(())
    })
}

/// Parses an experiment config from JSON. Unknown keys are rejected.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_config_from_json(json: *const c_char, out: *mut *mut SlConfig) -> SlStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(string(json, "json")?).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(SlConfig(cfg))), "out")
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sl_config_set_seed(config: *mut SlConfig, seed: u64) -> SlStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_config_free(config: *mut SlConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Trains one run.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_run(config: *const SlConfig, out: *mut *mut SlRun) -> SlStatus {
    guard(|| {
        let cfg = &config.as_ref().ok_or_else(|| null("config"))?.0;
        let record = train_run(cfg).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(SlRun(record))), "out")
    })
}

/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_run_summary(run: *const SlRun, out: *mut SlRunSummary) -> SlStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.0;
        let s = &r.summary;
        write_out(
            out,
            SlRunSummary {
                norm_cut: na(s.norm_cut),
                cos_cut: na(s.cos_cut),
                norm_first: na(s.norm_first),
                cos_first: na(s.cos_first),
                test_loss: r.test_loss,
                test_auc: na(r.test_auc),
                iterations: r.rows.len(),
                fallback_iterations: r.fallback_iterations,
            },
            "out",
        )
    })
}

/// Writes `run.csv` and `summary.csv` into `dir`.
///
/// # Safety
/// `run` must be a live handle; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sl_run_write(run: *const SlRun, dir: *const c_char) -> SlStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.0;
        write_run(r, Path::new(string(dir, "dir")?)).map_err(lib)
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_run_free(run: *mut SlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
