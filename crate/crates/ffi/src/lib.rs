//! C ABI over the `hisd` solver.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free` function. Every entry point returns a
//! [`HisdStatus`]. On failure, [`hisd_last_error`] describes the error of
//! the most recent failing call on the current thread. Panics never cross
//! the boundary; they are reported as `HISD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hisd::config::{ExperimentConfig, Landscape};
use hisd::dynamics::{initial_frame, run, RunStatus, Trajectory};
use hisd::verify::{check_theorem, CheckName, CheckStatus};
use hisd::Error;
use nalgebra::DVector;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HisdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidArgument = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HisdRunStatus {
    Converged = 0,
    MaxIter = 1,
    Diverged = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HisdCheckStatus {
    Pass = 0,
    Fail = 1,
    Inconclusive = 2,
}

/// One trajectory record. Manifold diagnostics are NaN when unavailable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HisdRecord {
    pub t: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub dist: f64,
    pub y: f64,
    pub z: f64,
    pub z_over_g: f64,
    pub lambda_min: f64,
}

/// A parsed experiment with its landscape built.
pub struct HisdExperiment {
    config: ExperimentConfig,
    landscape: Landscape,
}

/// The result of one solver run.
pub struct HisdTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(HisdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::Io(_) => HisdStatus::Config,
            Error::Precondition(_) => HisdStatus::InvalidArgument,
            _ => HisdStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: HisdStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HisdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HisdStatus::Ok,
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
            HisdStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    if p.is_null() {
        return fail(HisdStatus::NullPointer, format!("{what} is null"));
    }
    Ok(&*p)
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    if p.is_null() {
        return fail(HisdStatus::NullPointer, format!("{what} is null"));
    }
    Ok(&mut *p)
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(HisdStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(HisdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn vector(exp: &HisdExperiment, p: *const f64, len: usize) -> Result<DVector<f64>, Failure> {
    let d = exp.landscape.saddle.len();
    if p.is_null() {
        return fail(HisdStatus::NullPointer, "theta is null");
    }
    if len != d {
        return fail(
            HisdStatus::InvalidArgument,
            format!("theta has length {len}, expected {d}"),
        );
    }
    Ok(DVector::from_column_slice(std::slice::from_raw_parts(
        p, len,
    )))
}

/// Copies `text` plus a NUL terminator into `buf`. `needed` receives the
/// full size including the terminator.
unsafe fn copy_text(
    text: &str,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> Result<(), Failure> {
    let bytes = text.as_bytes();
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if len == 0 {
        return fail(
            HisdStatus::BufferTooSmall,
            format!("{} bytes needed", bytes.len() + 1),
        );
    }
    if buf.is_null() {
        return fail(HisdStatus::NullPointer, "buffer is null");
    }
    let n = bytes.len().min(len - 1);
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
    *buf.add(n) = 0;
    if n < bytes.len() {
        return fail(
            HisdStatus::BufferTooSmall,
            format!("{} bytes needed", bytes.len() + 1),
        );
    }
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). `needed` may be null.
///
/// # Safety
/// `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hisd_last_error(
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> HisdStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    // Reporting must not clobber the message being reported.
    match catch_unwind(AssertUnwindSafe(|| copy_text(&msg, buf, len, needed))) {
        Ok(Ok(())) => HisdStatus::Ok,
        Ok(Err(Failure(status, _))) => status,
        Err(_) => HisdStatus::Panic,
    }
}

/// Parses a TOML experiment and builds its landscape.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hisd_experiment_new(
    toml: *const c_char,
    out: *mut *mut HisdExperiment,
) -> HisdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let config = ExperimentConfig::from_toml(c_str(toml, "toml")?)?;
        let landscape = config.build_landscape()?;
        *out = Box::into_raw(Box::new(HisdExperiment { config, landscape }));
        Ok(())
    })
}

/// # Safety
/// `exp` must come from [`hisd_experiment_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hisd_experiment_free(exp: *mut HisdExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Parameter dimension, Morse index and nullity of the saddle.
///
/// # Safety
/// `exp` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hisd_experiment_shape(
    exp: *const HisdExperiment,
    dim: *mut usize,
    index: *mut usize,
    nullity: *mut usize,
) -> HisdStatus {
    guard(|| {
        let exp = deref(exp, "experiment")?;
        let (dim, index, nullity) = (
            out_ptr(dim, "dim")?,
            out_ptr(index, "index")?,
            out_ptr(nullity, "nullity")?,
        );
        *dim = exp.landscape.saddle.len();
        *index = exp.landscape.manifold.index;
        *nullity = exp.landscape.manifold.nullity;
        Ok(())
    })
}

/// Number of runs (sweep entries, or one when there is no sweep).
///
/// # Safety
/// `exp` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hisd_experiment_run_count(
    exp: *const HisdExperiment,
    count: *mut usize,
) -> HisdStatus {
    guard(|| {
        *out_ptr(count, "count")? = deref(exp, "experiment")?.config.runs().len();
        Ok(())
    })
}

/// Writes the saddle point into `theta[0..len]`; `len` must equal the dimension.
///
/// # Safety
/// `theta` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hisd_experiment_saddle(
    exp: *const HisdExperiment,
    theta: *mut f64,
    len: usize,
) -> HisdStatus {
    guard(|| {
        let exp = deref(exp, "experiment")?;
        let s = &exp.landscape.saddle;
        if theta.is_null() {
            return fail(HisdStatus::NullPointer, "theta is null");
        }
        if len != s.len() {
            return fail(
                HisdStatus::InvalidArgument,
                format!("buffer has length {len}, expected {}", s.len()),
            );
        }
        ptr::copy_nonoverlapping(s.as_ptr(), theta, len);
        Ok(())
    })
}

/// Energy and gradient at `theta`. `grad` may be null.
///
/// # Safety
/// `theta` and `grad` must be valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn hisd_energy_gradient(
    exp: *const HisdExperiment,
    theta: *const f64,
    len: usize,
    energy: *mut f64,
    grad: *mut f64,
) -> HisdStatus {
    guard(|| {
        let exp = deref(exp, "experiment")?;
        let x = vector(exp, theta, len)?;
        let model = exp.landscape.model.as_ref();
        *out_ptr(energy, "energy")? = model.energy(&x);
        if !grad.is_null() {
            let g = model.gradient(&x);
            ptr::copy_nonoverlapping(g.as_ptr(), grad, len);
        }
        Ok(())
    })
}

/// Runs entry `run_index`. With `theta0` null the configured perturbed start
/// is used, otherwise `theta0[0..len]`.
///
/// # Safety
/// `exp` must be a live handle; `theta0` null or valid for `len` reads;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hisd_run(
    exp: *const HisdExperiment,
    run_index: usize,
    theta0: *const f64,
    len: usize,
    out: *mut *mut HisdTrajectory,
) -> HisdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let exp = deref(exp, "experiment")?;
        let runs = exp.config.runs();
        let Some((_, solver)) = runs.get(run_index) else {
            return fail(
                HisdStatus::InvalidArgument,
                format!("run index {run_index} out of range (0..{})", runs.len()),
            );
        };
        let start = if theta0.is_null() {
            exp.config.initial_point(&exp.landscape.saddle)
        } else {
            vector(exp, theta0, len)?
        };
        let land = &exp.landscape;
        let v0 = initial_frame(land.model.as_ref(), &start, solver.k)?;
        let inner = run(land.model.as_ref(), solver, start, v0, Some(&land.manifold))?;
        *out = Box::into_raw(Box::new(HisdTrajectory { inner }));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`hisd_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_free(traj: *mut HisdTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Terminal status, iteration count and number of stored records.
///
/// # Safety
/// `traj` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_summary(
    traj: *const HisdTrajectory,
    status: *mut HisdRunStatus,
    iterations: *mut usize,
    records: *mut usize,
) -> HisdStatus {
    guard(|| {
        let tr = &deref(traj, "trajectory")?.inner;
        *out_ptr(status, "status")? = match tr.status {
            RunStatus::Converged => HisdRunStatus::Converged,
            RunStatus::MaxIter => HisdRunStatus::MaxIter,
            RunStatus::Diverged { .. } => HisdRunStatus::Diverged,
        };
        *out_ptr(iterations, "iterations")? = tr.iterations;
        *out_ptr(records, "records")? = tr.records.len();
        Ok(())
    })
}

/// # Safety
/// `traj` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hisd_trajectory_record(
    traj: *const HisdTrajectory,
    i: usize,
    out: *mut HisdRecord,
) -> HisdStatus {
    guard(|| {
        let tr = &deref(traj, "trajectory")?.inner;
        let out = out_ptr(out, "out")?;
        let Some(r) = tr.records.get(i) else {
            return fail(
                HisdStatus::InvalidArgument,
                format!("record {i} out of range (0..{})", tr.records.len()),
            );
        };
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        *out = HisdRecord {
            t: r.t,
            energy: r.energy,
            grad_norm: r.grad_norm,
            dist: nan(r.dist),
            y: nan(r.y),
            z: nan(r.z),
            z_over_g: nan(r.z_over_g),
            lambda_min: nan(r.lambda_min),
        };
        Ok(())
    })
}

/// Runs one named check. The JSON report is copied into `json` (may be null
/// with `json_len` 0 to only query the status and `needed`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `json` valid for `json_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn hisd_verify(
    exp: *const HisdExperiment,
    name: *const c_char,
    status: *mut HisdCheckStatus,
    json: *mut c_char,
    json_len: usize,
    needed: *mut usize,
) -> HisdStatus {
    guard(|| {
        let exp = deref(exp, "experiment")?;
        let check: CheckName = c_str(name, "name")?
            .parse()
            .or_else(|e: Error| fail(HisdStatus::InvalidArgument, e.to_string()))?;
        let status = out_ptr(status, "status")?;
        let cfg = &exp.config;
        let land = &exp.landscape;
        let report = check_theorem(
            check,
            land.model.as_ref(),
            &land.manifold,
            &cfg.solver,
            &cfg.verify,
            cfg.verify_seed(),
        )?;
        *status = match report.status {
            CheckStatus::Pass => HisdCheckStatus::Pass,
            CheckStatus::Fail => HisdCheckStatus::Fail,
            CheckStatus::Inconclusive => HisdCheckStatus::Inconclusive,
        };
        let text = report.to_json_line();
        if json.is_null() && json_len == 0 {
            if !needed.is_null() {
                *needed = text.len() + 1;
            }
            return Ok(());
        }
        copy_text(&text, json, json_len, needed)
    })
}
