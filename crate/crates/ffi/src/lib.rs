//! C interface to the fractel solvers.
//!
//! A session is built from a JSON configuration (the same schema as the
//! command line), runs the forward or inverse problem and exposes results
//! through caller-owned buffers. Every call returns a [`FractelStatus`];
//! the message of the last failure on the calling thread is available from
//! [`fractel_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fractel_core::config::{parse_config, RunConfig};
use fractel_core::forward::{source_samples, ForwardSolver, Trajectory};
use fractel_core::fractional::{SampledFunction, TimeGrid};
use fractel_core::inverse::solve_inverse_with;
use fractel_core::special::{ml2, ml3};
use fractel_core::spectral::{DataBundle, SpectralModel};
use fractel_core::Error;
use num_complex::Complex64 as C64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractelStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Configuration = 3,
    Domain = 4,
    DegenerateFunctional = 5,
    NonConvergence = 6,
    Unsupported = 7,
    Numerical = 8,
    State = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: FractelStatus, msg: impl Into<String>) -> FractelStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> FractelStatus {
    let status = match e.root() {
        Error::Configuration(_) => FractelStatus::Configuration,
        Error::Domain(_) => FractelStatus::Domain,
        Error::DegenerateFunctional { .. } => FractelStatus::DegenerateFunctional,
        Error::NonConvergence { .. } => FractelStatus::NonConvergence,
        Error::Unsupported(_) => FractelStatus::Unsupported,
        Error::Truncation(_) => FractelStatus::Numerical,
        Error::State(_) | Error::Stage { .. } => FractelStatus::State,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> FractelStatus) -> FractelStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(FractelStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fractel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fractel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Two-parameter Mittag-Leffler function `E_{ρ,μ}(z)`.
///
/// # Safety
/// `out_re` and `out_im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_ml2(
    rho: f64,
    mu: f64,
    z_re: f64,
    z_im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> FractelStatus {
    fractel_ml3(rho, mu, 1.0, z_re, z_im, out_re, out_im)
}

/// Three-parameter (Prabhakar) function `E^γ_{ρ,μ}(z)`.
///
/// # Safety
/// `out_re` and `out_im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_ml3(
    rho: f64,
    mu: f64,
    gamma: f64,
    z_re: f64,
    z_im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> FractelStatus {
    if out_re.is_null() || out_im.is_null() {
        return fail(FractelStatus::NullPointer, "output pointer is NULL");
    }
    guard(|| {
        let z = C64::new(z_re, z_im);
        let r = if gamma == 1.0 { ml2(rho, mu, z) } else { ml3(rho, mu, gamma, z) };
        match r {
            Ok(v) => {
                *out_re = v.re;
                *out_im = v.im;
                FractelStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

struct Results {
    u: Trajectory,
    p: Option<SampledFunction>,
    mu: Option<SampledFunction>,
    diagnostics: String,
}

/// Opaque solver session.
pub struct FractelSession {
    config: RunConfig,
    model: SpectralModel,
    grid: TimeGrid,
    bundle: DataBundle,
    solver: ForwardSolver,
    results: Option<Results>,
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, FractelStatus> {
    if s.is_null() {
        return Err(fail(FractelStatus::NullPointer, "string argument is NULL"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(FractelStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn build_session(json: &str) -> Result<FractelSession, Error> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::Configuration(format!("invalid JSON: {e}")))?;
    let config = parse_config(&value)?;
    let as_config = |e: Error| match e.root() {
        Error::Configuration(_) => e,
        _ => Error::Configuration(e.to_string()),
    };
    let model = config.model(config.problem.modes).map_err(as_config)?;
    let grid = config.grid(config.problem.steps).map_err(as_config)?;
    let mut bundle = config.bundle(&model, &grid).map_err(as_config)?;
    bundle.measurement = config.measurement(&grid).map_err(as_config)?;
    let solver = ForwardSolver::new(&model, config.problem.rho, &grid)?;
    Ok(FractelSession {
        config,
        model,
        grid,
        bundle,
        solver,
        results: None,
    })
}

/// Validates `config_json` and prepares a session in `*out`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_new(config_json: *const c_char, out: *mut *mut FractelSession) -> FractelStatus {
    if out.is_null() {
        return fail(FractelStatus::NullPointer, "output pointer is NULL");
    }
    *out = ptr::null_mut();
    let json = match read_str(config_json) {
        Ok(s) => s,
        Err(s) => return s,
    };
    guard(|| match build_session(json) {
        Ok(s) => {
            *out = Box::into_raw(Box::new(s));
            FractelStatus::Ok
        }
        Err(e) => from_error(&e),
    })
}

/// # Safety
/// `session` must be NULL or a live pointer from [`fractel_session_new`].
#[no_mangle]
pub unsafe extern "C" fn fractel_session_free(session: *mut FractelSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn session_mut<'a>(s: *mut FractelSession) -> Result<&'a mut FractelSession, FractelStatus> {
    s.as_mut().ok_or_else(|| fail(FractelStatus::NullPointer, "session is NULL"))
}

unsafe fn session_ref<'a>(s: *const FractelSession) -> Result<&'a FractelSession, FractelStatus> {
    s.as_ref().ok_or_else(|| fail(FractelStatus::NullPointer, "session is NULL"))
}

fn forward(s: &mut FractelSession) -> Result<(), Error> {
    let p = s
        .config
        .p_expression()?
        .ok_or_else(|| Error::Configuration("data.p: missing; the forward run needs p(t)".into()))?;
    let g = source_samples(&p.sample(&s.grid), &s.bundle)?;
    let sol = s.solver.solve(&s.bundle.phi0, &s.bundle.phi1, &g)?;
    let diagnostics = serde_json::json!({
        "modes": s.model.modes(),
        "steps": s.grid.steps(),
        "resonant_mode": s.model.resonant_mode().map(|k| k + 1),
        "u_max": sol.u.max_norm(),
    });
    s.results = Some(Results {
        u: sol.u,
        p: None,
        mu: None,
        diagnostics: diagnostics.to_string(),
    });
    Ok(())
}

fn inverse(s: &mut FractelSession) -> Result<(), Error> {
    if s.bundle.measurement.is_none() {
        return Err(Error::Configuration("data.psi: missing; the inverse run needs ψ".into()));
    }
    let r = solve_inverse_with(&s.solver, &s.bundle, &s.config.inverse_options())?;
    let mut diagnostics = serde_json::to_value(&r.diagnostics).expect("diagnostics serialize");
    diagnostics["resonant_mode"] = serde_json::json!(s.model.resonant_mode().map(|k| k + 1));
    s.results = Some(Results {
        u: r.u,
        p: Some(r.p),
        mu: Some(r.mu),
        diagnostics: diagnostics.to_string(),
    });
    Ok(())
}

fn run(session: *mut FractelSession, f: fn(&mut FractelSession) -> Result<(), Error>) -> FractelStatus {
    // SAFETY: the public wrappers pass through the caller's pointer, which
    // they require to be NULL or live.
    let s = match unsafe { session_mut(session) } {
        Ok(s) => s,
        Err(st) => return st,
    };
    guard(|| match f(s) {
        Ok(()) => FractelStatus::Ok,
        Err(e) => {
            s.results = None;
            from_error(&e)
        }
    })
}

/// Solves the forward problem with the configured `p(t)`.
///
/// # Safety
/// `session` must be NULL or a live session pointer.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_forward(session: *mut FractelSession) -> FractelStatus {
    run(session, forward)
}

/// Recovers `p(t)` from the configured measurement.
///
/// # Safety
/// `session` must be NULL or a live session pointer.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_inverse(session: *mut FractelSession) -> FractelStatus {
    run(session, inverse)
}

/// Number of time nodes (steps + 1); 0 for a NULL session.
///
/// # Safety
/// `session` must be NULL or a live session pointer.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_nodes(session: *const FractelSession) -> usize {
    session.as_ref().map_or(0, |s| s.grid.len())
}

/// Number of spectral modes; 0 for a NULL session.
///
/// # Safety
/// `session` must be NULL or a live session pointer.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_modes(session: *const FractelSession) -> usize {
    session.as_ref().map_or(0, |s| s.model.modes())
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> FractelStatus {
    if dst.is_null() {
        return fail(FractelStatus::NullPointer, "buffer is NULL");
    }
    if len < src.len() {
        return fail(
            FractelStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    FractelStatus::Ok
}

unsafe fn copy_complex(src: &[C64], re: *mut f64, im: *mut f64, len: usize) -> FractelStatus {
    let r: Vec<f64> = src.iter().map(|v| v.re).collect();
    let i: Vec<f64> = src.iter().map(|v| v.im).collect();
    match copy_out(&r, re, len) {
        FractelStatus::Ok => copy_out(&i, im, len),
        other => other,
    }
}

/// Copies the time nodes into `buf` (capacity `len`).
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_times(session: *const FractelSession, buf: *mut f64, len: usize) -> FractelStatus {
    match session_ref(session) {
        Ok(s) => copy_out(s.grid.nodes(), buf, len),
        Err(st) => st,
    }
}

unsafe fn results<'a>(session: *const FractelSession) -> Result<&'a Results, FractelStatus> {
    session_ref(session)?
        .results
        .as_ref()
        .ok_or_else(|| fail(FractelStatus::State, "no results: run forward or inverse first"))
}

/// Copies the time coefficients of mode `mode` (zero-based) of the last
/// solution.
///
/// # Safety
/// `re` and `im` must each be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_coefficients(
    session: *const FractelSession,
    mode: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> FractelStatus {
    match results(session) {
        Ok(r) if mode < r.u.modes() => copy_complex(r.u.mode(mode), re, im, len),
        Ok(r) => fail(FractelStatus::Domain, format!("mode {mode} out of range ({} modes)", r.u.modes())),
        Err(st) => st,
    }
}

unsafe fn series(
    session: *const FractelSession,
    pick: fn(&Results) -> Option<&SampledFunction>,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> FractelStatus {
    match results(session) {
        Ok(r) => match pick(r) {
            Some(f) => copy_complex(f.values(), re, im, len),
            None => fail(FractelStatus::State, "only available after an inverse run"),
        },
        Err(st) => st,
    }
}

/// Copies the recovered source `p(t)` of the last inverse run.
///
/// # Safety
/// `re` and `im` must each be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_source(
    session: *const FractelSession,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> FractelStatus {
    series(session, |r| r.p.as_ref(), re, im, len)
}

/// Copies `μ(t)` of the last inverse run.
///
/// # Safety
/// `re` and `im` must each be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_mu(
    session: *const FractelSession,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> FractelStatus {
    series(session, |r| r.mu.as_ref(), re, im, len)
}

/// Diagnostics of the last run as a JSON string; free with
/// [`fractel_string_free`].
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fractel_session_diagnostics(session: *const FractelSession, out: *mut *mut c_char) -> FractelStatus {
    if out.is_null() {
        return fail(FractelStatus::NullPointer, "output pointer is NULL");
    }
    *out = ptr::null_mut();
    match results(session) {
        Ok(r) => {
            *out = CString::new(r.diagnostics.clone()).expect("JSON has no NUL").into_raw();
            FractelStatus::Ok
        }
        Err(st) => st,
    }
}
