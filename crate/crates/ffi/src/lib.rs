//! C ABI for `strh2`.
//!
//! Models and condition reports are opaque heap handles released with their
//! `*_free` function. Every fallible call returns a [`Strh2Status`]; the
//! message of the last failure on the calling thread is available from
//! [`strh2_last_error_message`]. Strings handed out by the library are
//! released with [`strh2_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use strh2::cli::check_model_stability;
use strh2::h2metric::{self, auto_grid, GridOptions};
use strh2::linalg::c;
use strh2::optcond::ConditionReport;
use strh2::structopt::{self, ParamOptions, ReduceOptions, Rom, Structure};
use strh2::sysmodel::{Model, TransferEvaluator};
use strh2::Error;

/// Result codes of every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strh2Status {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Unstable = 4,
    Numerical = 5,
    Optimizer = 6,
    Panic = 7,
}

/// A loaded model.
pub struct Strh2Model {
    model: Model,
}

/// A condition report.
pub struct Strh2Report {
    report: ConditionReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> Strh2Status {
    match e {
        Error::Parse(_) => Strh2Status::Parse,
        Error::InvalidArgument(_) | Error::Dimension(_) | Error::UnsupportedStructure(_) => Strh2Status::InvalidArgument,
        Error::UnstableSystem(_) | Error::UnstablePole(_) | Error::StabilityCheckFailed { .. } => Strh2Status::Unstable,
        Error::LineSearchFailure { .. } => Strh2Status::Optimizer,
        _ => Strh2Status::Numerical,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (Strh2Status, String)>) -> Strh2Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Strh2Status::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            Strh2Status::Panic
        }
    }
}

fn lib(e: Error) -> (Strh2Status, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (Strh2Status, String) {
    (Strh2Status::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (Strh2Status, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (Strh2Status::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(p: *const Strh2Model, what: &str) -> Result<&'a Model, (Strh2Status, String)> {
    p.as_ref().map(|h| &h.model).ok_or_else(|| null(what))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), (Strh2Status, String)> {
    let cs = CString::new(s).map_err(|_| (Strh2Status::Numerical, "string contains NUL".to_string()))?;
    unsafe { *out = cs.into_raw() };
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn strh2_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn strh2_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn strh2_model_from_json(json: *const c_char, out: *mut *mut Strh2Model) -> Strh2Status {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let model = Model::from_json(text).map_err(lib)?;
        *out = Box::into_raw(Box::new(Strh2Model { model }));
        Ok(())
    })
}

/// Read a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn strh2_model_load(path: *const c_char, out: *mut *mut Strh2Model) -> Strh2Status {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| (Strh2Status::Parse, format!("{path}: {e}")))?;
        let model = Model::from_json(&text).map_err(lib)?;
        *out = Box::into_raw(Box::new(Strh2Model { model }));
        Ok(())
    })
}

/// Serialize a model to JSON; free the result with [`strh2_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn strh2_model_to_json(model: *const Strh2Model, out: *mut *mut c_char) -> Strh2Status {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(model_arg(model, "model")?.to_json(), out)
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn strh2_model_free(model: *mut Strh2Model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State dimension, inputs and outputs.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn strh2_model_dims(model: *const Strh2Model, n: *mut usize, m: *mut usize, p: *mut usize) -> Strh2Status {
    guard(|| {
        let model = model_arg(model, "model")?;
        if n.is_null() || m.is_null() || p.is_null() {
            return Err(null("dimension output"));
        }
        *n = model.order();
        *m = model.inputs();
        *p = model.outputs();
        Ok(())
    })
}

/// `H(s)` as `p·m` complex entries, column-major, interleaved re/im in
/// `out` of length `len ≥ 2·p·m`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn strh2_eval_transfer(model: *const Strh2Model, re: f64, im: f64, out: *mut f64, len: usize) -> Strh2Status {
    guard(|| {
        let model = model_arg(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let need = 2 * model.inputs() * model.outputs();
        if len < need {
            return Err((Strh2Status::InvalidArgument, format!("output buffer holds {len} doubles, {need} needed")));
        }
        let h = model.eval(c(re, im)).map_err(lib)?;
        let buf = std::slice::from_raw_parts_mut(out, need);
        for (k, z) in h.iter().enumerate() {
            buf[2 * k] = z.re;
            buf[2 * k + 1] = z.im;
        }
        Ok(())
    })
}

/// H2 norm by quadrature on the automatic grid.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn strh2_h2_norm(model: *const Strh2Model, out: *mut f64) -> Strh2Status {
    guard(|| {
        let model = model_arg(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        check_model_stability(model).map_err(lib)?;
        let grid = auto_grid(&[model], &GridOptions::default()).map_err(lib)?;
        *out = h2metric::h2_norm_sq_quadrature(model, &grid).map_err(lib)?.value.max(0.0).sqrt();
        Ok(())
    })
}

/// `‖H − Ĥ‖_{H2}` by quadrature on a grid fitted to both models.
///
/// # Safety
/// Both handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn strh2_h2_error(fom: *const Strh2Model, rom: *const Strh2Model, out: *mut f64) -> Strh2Status {
    guard(|| {
        let (h, hh) = (model_arg(fom, "fom")?, model_arg(rom, "rom")?);
        if out.is_null() {
            return Err(null("out"));
        }
        check_model_stability(h).map_err(lib)?;
        check_model_stability(hh).map_err(lib)?;
        let grid = auto_grid(&[h, hh], &GridOptions::default()).map_err(lib)?;
        *out = h2metric::h2_error_quadrature(h, hh, &grid).map_err(lib)?.value.max(0.0).sqrt();
        Ok(())
    })
}

unsafe fn structure_arg(tag: *const c_char, model: &Model) -> Result<Structure, (Strh2Status, String)> {
    if tag.is_null() {
        return structopt::structure_of(model).map_err(lib);
    }
    str_arg(tag, "structure")?.parse().map_err(lib)
}

/// Optimality conditions of `rom` for `fom`. `structure` may be null to
/// infer it from the ROM ("unstructured", "so", "ph" or "delay").
///
/// # Safety
/// Both handles must be live, `structure` null or NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn strh2_check_conditions(
    fom: *const Strh2Model,
    rom: *const Strh2Model,
    structure: *const c_char,
    out: *mut *mut Strh2Report,
) -> Strh2Status {
    guard(|| {
        let (h, file) = (model_arg(fom, "fom")?, model_arg(rom, "rom")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let s = structure_arg(structure, file)?;
        let rom = Rom::from_model(s, file).map_err(lib)?;
        let report = structopt::certify(h, &rom).map_err(lib)?;
        *out = Box::into_raw(Box::new(Strh2Report { report }));
        Ok(())
    })
}

/// 1 if every relative residual is below `tol`, 0 if not, −1 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strh2_report_passed(report: *const Strh2Report, tol: f64) -> c_int {
    match report.as_ref() {
        Some(r) => c_int::from(r.report.passed(tol)),
        None => -1,
    }
}

/// Largest relative residual, NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strh2_report_max_relative(report: *const Strh2Report) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.max_relative())
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn strh2_report_to_json(report: *const Strh2Report, out: *mut *mut c_char) -> Strh2Status {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(r.report.to_json(), out)
    })
}

/// # Safety
/// `report` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn strh2_report_free(report: *mut Strh2Report) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Multi-start structured reduction of `fom` to order `r`. The best model
/// is returned in `out` even when it did not converge; check it with
/// [`strh2_check_conditions`].
///
/// # Safety
/// `fom` must be a live handle, `structure` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn strh2_reduce(
    fom: *const Strh2Model,
    structure: *const c_char,
    r: usize,
    restarts: usize,
    seed: u64,
    out: *mut *mut Strh2Model,
) -> Strh2Status {
    guard(|| {
        let h = model_arg(fom, "fom")?;
        if out.is_null() {
            return Err(null("out"));
        }
        check_model_stability(h).map_err(lib)?;
        let s: Structure = str_arg(structure, "structure")?.parse().map_err(lib)?;
        if r == 0 || r >= h.order() {
            return Err((Strh2Status::InvalidArgument, format!("reduced order must satisfy 1 ≤ r < {}", h.order())));
        }
        let opts = ReduceOptions {
            restarts,
            seed,
            params: ParamOptions { pairs: None, tau: structopt::delay_of(h) },
            ..ReduceOptions::default()
        };
        let outcome = structopt::reduce(h, s, r, &opts).map_err(|e| match status_of(&e) {
            Strh2Status::InvalidArgument => lib(e),
            _ => (Strh2Status::Optimizer, e.to_string()),
        })?;
        *out = Box::into_raw(Box::new(Strh2Model { model: outcome.best.model.to_model() }));
        Ok(())
    })
}

/// Branch `k` of the Lambert W function at `re + i·im`.
///
/// # Safety
/// `out_re` and `out_im` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn strh2_lambert_w(k: i64, re: f64, im: f64, out_re: *mut f64, out_im: *mut f64) -> Strh2Status {
    guard(|| {
        if out_re.is_null() || out_im.is_null() {
            return Err(null("out"));
        }
        let w = strh2::spectra::lambert_w(k, c(re, im)).map_err(lib)?;
        *out_re = w.re;
        *out_im = w.im;
        Ok(())
    })
}
