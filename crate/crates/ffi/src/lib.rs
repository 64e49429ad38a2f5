//! C ABI over `sheetspde`.
//!
//! Objects are opaque handles created by `ss_*_new`/`ss_*_sample`/`ss_solve_*` and
//! released with the matching `ss_*_free`. Every fallible call returns an
//! [`SsStatus`]; on failure `ss_last_error` returns a message for the calling thread.
//! Panics never cross the boundary; they are reported as `SS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sheetspde::cli::{self, Command, Overrides};
use sheetspde::diagnostics::{qv_estimate, XProfile};
use sheetspde::gaussian_field::{rect_measure, sample_sheet, RectRegion, SheetSample};
use sheetspde::grid_calculus::{GridSpec, ScalarField};
use sheetspde::Error;

/// Status codes. Values 2 to 4 match the exit codes of the command-line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8 or index out of range.
    InvalidArgument = 1,
    Config = 2,
    /// A numerical precondition failed, e.g. no function-valued solution exists.
    Criterion = 3,
    Io = 4,
    Panic = 5,
}

/// Lattice description.
pub struct SsGrid {
    inner: GridSpec,
}

/// One Brownian sheet sample on the extended lattice.
pub struct SsSheet {
    inner: SheetSample,
}

/// A scalar lattice field, stored row-major with time as the slow index.
pub struct SsField {
    inner: ScalarField,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SsStatus {
    match cli::exit_code(err) {
        3 => SsStatus::Criterion,
        4 => SsStatus::Io,
        _ => SsStatus::Config,
    }
}

enum Failure {
    Arg(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            SsStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::Arg(format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::Arg(format!("{what} is null")))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_grid_new(t_max: f64, x_max: f64, h: f64, out: *mut *mut SsGrid) -> SsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let inner = GridSpec::new(t_max, x_max, h)?;
        *out = Box::into_raw(Box::new(SsGrid { inner }));
        Ok(())
    })
}

/// Number of time and space steps (nodes minus one).
///
/// # Safety
/// `grid` must come from `ss_grid_new`; `n_t` and `n_x` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_grid_steps(grid: *const SsGrid, n_t: *mut usize, n_x: *mut usize) -> SsStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.inner;
        *out_ptr(n_t, "n_t")? = g.n_t();
        *out_ptr(n_x, "n_x")? = g.n_x();
        Ok(())
    })
}

/// # Safety
/// `grid` must come from `ss_grid_new` or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_grid_free(grid: *mut SsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Samples the sheet for `grid` with `seed`.
///
/// # Safety
/// `grid` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_sheet_sample(grid: *const SsGrid, seed: u64, out: *mut *mut SsSheet) -> SsStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(SsSheet {
            inner: sample_sheet(&g.inner, seed),
        }));
        Ok(())
    })
}

/// Sheet value at time node `i`, space node `j` of the extended lattice.
///
/// # Safety
/// `sheet` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_sheet_value(sheet: *const SsSheet, i: usize, j: usize, out: *mut f64) -> SsStatus {
    guard(|| {
        let s = &deref(sheet, "sheet")?.inner;
        let g = s.grid();
        if i > g.n_t() || j > g.sheet_n_x() {
            return Err(Failure::Arg(format!(
                "node ({i}, {j}) outside 0..={} x 0..={}",
                g.n_t(),
                g.sheet_n_x()
            )));
        }
        *out_ptr(out, "out")? = s.value(i, j);
        Ok(())
    })
}

/// Sheet measure of the lattice-aligned rectangle `[t_lo, t_hi] x [x_lo, x_hi]`.
///
/// # Safety
/// `sheet` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_sheet_rect_measure(
    sheet: *const SsSheet,
    t_lo: f64,
    t_hi: f64,
    x_lo: f64,
    x_hi: f64,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        let s = &deref(sheet, "sheet")?.inner;
        let r = RectRegion::new(t_lo, t_hi, x_lo, x_hi)?;
        *out_ptr(out, "out")? = rect_measure(s, &r)?;
        Ok(())
    })
}

/// # Safety
/// `sheet` must come from `ss_sheet_sample` or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_sheet_free(sheet: *mut SsSheet) {
    if !sheet.is_null() {
        drop(Box::from_raw(sheet));
    }
}

/// Solves from a `simulate` TOML document (the `command` key may be omitted).
/// `solution` and `noise` receive new field handles; `noise` may be null.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; the out pointers must be valid for
/// writes or, for `noise`, null.
#[no_mangle]
pub unsafe extern "C" fn ss_solve_config(
    config_toml: *const c_char,
    solution: *mut *mut SsField,
    noise: *mut *mut SsField,
) -> SsStatus {
    guard(|| {
        let text = string(config_toml, "config_toml")?;
        let solution = out_ptr(solution, "solution")?;
        let cfg = cli::parse_config_for(text, Some(Command::Simulate))?;
        let (path, sol) = cli::solve_config(&cfg)?;
        *solution = Box::into_raw(Box::new(SsField { inner: sol.field }));
        if let Some(noise) = noise.as_mut() {
            *noise = Box::into_raw(Box::new(SsField {
                inner: path.field().clone(),
            }));
        }
        Ok(())
    })
}

/// Number of time and space nodes of a field.
///
/// # Safety
/// `field` must be a live handle; `rows` and `cols` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_field_shape(field: *const SsField, rows: *mut usize, cols: *mut usize) -> SsStatus {
    guard(|| {
        let (r, c) = deref(field, "field")?.inner.grid().shape();
        *out_ptr(rows, "rows")? = r;
        *out_ptr(cols, "cols")? = c;
        Ok(())
    })
}

/// # Safety
/// `field` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_field_get(field: *const SsField, i: usize, j: usize, out: *mut f64) -> SsStatus {
    guard(|| {
        let f = &deref(field, "field")?.inner;
        let (r, c) = f.grid().shape();
        if i >= r || j >= c {
            return Err(Failure::Arg(format!("node ({i}, {j}) outside {r} x {c}")));
        }
        *out_ptr(out, "out")? = f.get(i, j);
        Ok(())
    })
}

/// Copies the field row-major into `buf`, which must hold `rows * cols` values.
///
/// # Safety
/// `field` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn ss_field_copy(field: *const SsField, buf: *mut f64, len: usize) -> SsStatus {
    guard(|| {
        let f = &deref(field, "field")?.inner;
        let (r, c) = f.grid().shape();
        if buf.is_null() || len != r * c {
            return Err(Failure::Arg(format!("buffer must hold {} values, got {len}", r * c)));
        }
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (d, s) in dst.iter_mut().zip(f.values().iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_field_free(field: *mut SsField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Quadratic variation over `[x_lo, x_hi]` with `n` equal cells of a profile sampled at
/// spacing `h` from `x = 0`.
///
/// # Safety
/// `values` must be valid for `len` reads; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ss_qv_estimate(
    values: *const f64,
    len: usize,
    h: f64,
    x_lo: f64,
    x_hi: f64,
    n: usize,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        if values.is_null() {
            return Err(Failure::Arg("values is null".into()));
        }
        let z = XProfile {
            h,
            values: std::slice::from_raw_parts(values, len).to_vec(),
        };
        *out_ptr(out, "out")? = qv_estimate(&z, x_lo, x_hi, n)?;
        Ok(())
    })
}

/// Runs a command as the command-line tool would. `config_path` may be null for the
/// defaults; `out_dir` may be null to keep the configured directory. The status equals
/// the tool's exit code.
///
/// # Safety
/// Non-null string arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ss_run(command: *const c_char, config_path: *const c_char, out_dir: *const c_char) -> SsStatus {
    guard(|| {
        let name = string(command, "command")?;
        let cmd = match name {
            "simulate" => Command::Simulate,
            "qv" => Command::Qv,
            "weakform" => Command::Weakform,
            "lemmas" => Command::Lemmas,
            "yield" => Command::Yield,
            "compare" => Command::Compare,
            other => return Err(Failure::Arg(format!("unknown command `{other}`"))),
        };
        let mut cfg = if config_path.is_null() {
            cli::RunConfig::defaults(cmd)
        } else {
            let path = string(config_path, "config_path")?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
            cli::parse_config_for(&text, Some(cmd))?
        };
        let out = if out_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(string(out_dir, "out_dir")?))
        };
        cfg.apply_overrides(&Overrides {
            out,
            ..Default::default()
        })?;
        cli::run(&cfg)?;
        Ok(())
    })
}
