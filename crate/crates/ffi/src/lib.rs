//! C ABI over `sdom-core`.
//!
//! Every entry point returns an [`SdomStatus`]; on failure a message is
//! available from [`sdom_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles created by `*_from_json`/`*_new` functions and
//! released by the matching `*_free`. Strings returned by the library are
//! owned by the caller and released with [`sdom_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sdom_core::builder::{build_sparse_family, domination_constant};
use sdom_core::config::parse_config;
use sdom_core::maximal::CubeFamilyMode;
use sdom_core::operator::OperatorSpec;
use sdom_core::regularity::{dini_norm, h2_constant, hormander_constant, SamplePlan};
use sdom_core::runner::{run_experiment, RunError};
use sdom_core::sparse::SparseFamily;
use sdom_core::{DyadicCube, Error, GridFunction, GridSpec, KernelSpec, Modulus};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed or mistyped JSON.
    Parse = 3,
    InvalidArgument = 4,
    Precondition = 5,
    NotDini = 6,
    NonFiniteKernel = 7,
    Invariant = 8,
    /// Config rejected or experiment could not run.
    Usage = 9,
    Panic = 10,
}

/// Cube family for maximal operators and the builder.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdomMode {
    Dyadic = 0,
    AllGridCubes = 1,
    DyadicShifted = 2,
}

pub struct SdomGrid(GridSpec);

pub struct SdomFunction(GridFunction);

pub struct SdomKernel(KernelSpec);

pub struct SdomFamily(SparseFamily);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(SdomStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidGrid(_)
            | Error::InvalidCube(_)
            | Error::LeafCube { .. }
            | Error::LengthMismatch { .. }
            | Error::NonFiniteValue { .. }
            | Error::InvalidParameter { .. }
            | Error::EmptySamplePlan => SdomStatus::InvalidArgument,
            Error::Precondition(_) | Error::DepthCapExceeded { .. } => SdomStatus::Precondition,
            Error::NotDini(_) => SdomStatus::NotDini,
            Error::NonFiniteKernel { .. } => SdomStatus::NonFiniteKernel,
            Error::Invariant(_) => SdomStatus::Invariant,
            Error::Serde(_) => SdomStatus::Parse,
        };
        Fail(status, e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(SdomStatus::Parse, e.to_string())
    }
}

type Res<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> Res<()>) -> SdomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdomStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside sdom");
            SdomStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SdomStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(SdomStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

fn mode_of(mode: c_int) -> Res<CubeFamilyMode> {
    match mode {
        0 => Ok(CubeFamilyMode::Dyadic),
        1 => Ok(CubeFamilyMode::AllGridCubes),
        2 => Ok(CubeFamilyMode::DyadicShifted),
        m => Err(Fail(
            SdomStatus::InvalidArgument,
            format!("unknown mode {m}"),
        )),
    }
}

fn json_arg<T: serde::de::DeserializeOwned>(text: &str) -> Res<T> {
    Ok(serde_json::from_str(text)?)
}

fn into_handle<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn inputs<'a>(fs: *const *const SdomFunction, m: usize) -> Res<Vec<&'a GridFunction>> {
    if fs.is_null() {
        return Err(null("fs"));
    }
    (0..m)
        .map(|i| ref_arg(*fs.add(i), "fs[i]").map(|f| &f.0))
        .collect()
}

fn operator(kernel: &SdomKernel, grid: &SdomGrid) -> Res<OperatorSpec> {
    Ok(OperatorSpec::new(kernel.0.clone(), grid.0.clone())?)
}

fn c_string(s: String) -> Res<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Fail(SdomStatus::InvalidArgument, e.to_string()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sdom_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdom_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sdom_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a grid, e.g. `{"n":1,"L":8,"origin":[0.0],"side":1.0}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_grid_from_json(
    json: *const c_char,
    out: *mut *mut SdomGrid,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grid: GridSpec = json_arg(str_arg(json, "json")?)?;
        *out = into_handle(SdomGrid(grid));
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_grid_free(grid: *mut SdomGrid) {
    free_handle(grid)
}

/// Number of cells, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_grid_num_cells(grid: *const SdomGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.num_cells())
}

/// Function with `len` row-major cell values on `grid`.
///
/// # Safety
/// `values` must point to `len` doubles; `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_function_new(
    grid: *const SdomGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut SdomFunction,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let grid = ref_arg(grid, "grid")?;
        if values.is_null() && len > 0 {
            return Err(null("values"));
        }
        let v = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, len).to_vec()
        };
        *out = into_handle(SdomFunction(GridFunction::new(grid.0.clone(), v)?));
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_function_from_json(
    json: *const c_char,
    out: *mut *mut SdomFunction,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = GridFunction::from_json(str_arg(json, "json")?)?;
        *out = into_handle(SdomFunction(f));
        Ok(())
    })
}

/// Copies up to `len` cell values into `buf` and stores the cell count in `count`.
///
/// # Safety
/// `f` must be a live handle; `buf` must hold `len` doubles; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_function_values(
    f: *const SdomFunction,
    buf: *mut f64,
    len: usize,
    count: *mut usize,
) -> SdomStatus {
    guard(|| {
        let f = ref_arg(f, "f")?;
        let count = out_arg(count, "count")?;
        let v = f.0.values();
        *count = v.len();
        let k = v.len().min(len);
        if k > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(v.as_ptr(), buf, k);
        }
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_function_free(f: *mut SdomFunction) {
    free_handle(f)
}

/// Parses a kernel, e.g. `{"variant":"MPTExample","m":1,"beta":1.0,"r":2.0}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_kernel_from_json(
    json: *const c_char,
    out: *mut *mut SdomKernel,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let k: KernelSpec = json_arg(str_arg(json, "json")?)?;
        *out = into_handle(SdomKernel(k));
        Ok(())
    })
}

/// Linearity `m` of the kernel, or 0 for a null handle.
///
/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_kernel_m(kernel: *const SdomKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.0.m())
}

/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_kernel_free(kernel: *mut SdomKernel) {
    free_handle(kernel)
}

/// Sampled `K_r` estimate over the sample plan in `plan_json`.
///
/// # Safety
/// Handles must be live; `plan_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_hormander_constant(
    kernel: *const SdomKernel,
    grid: *const SdomGrid,
    r: f64,
    plan_json: *const c_char,
    out: *mut f64,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let plan: SamplePlan = json_arg(str_arg(plan_json, "plan_json")?)?;
        let rep = hormander_constant(
            &ref_arg(kernel, "kernel")?.0,
            &ref_arg(grid, "grid")?.0,
            r,
            &plan,
        )?;
        *out = rep.value;
        Ok(())
    })
}

/// Sampled H2 constant with exponent `delta`.
///
/// # Safety
/// Handles must be live; `plan_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_h2_constant(
    kernel: *const SdomKernel,
    grid: *const SdomGrid,
    r: f64,
    delta: f64,
    plan_json: *const c_char,
    out: *mut f64,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let plan: SamplePlan = json_arg(str_arg(plan_json, "plan_json")?)?;
        let rep = h2_constant(
            &ref_arg(kernel, "kernel")?.0,
            &ref_arg(grid, "grid")?.0,
            r,
            delta,
            &plan,
        )?;
        *out = rep.value;
        Ok(())
    })
}

/// Dini norm of a modulus, e.g. `{"kind":"power","c":1.0,"eps":0.5}`.
///
/// # Safety
/// `modulus_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_dini_norm(modulus_json: *const c_char, out: *mut f64) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let m: Modulus = json_arg(str_arg(modulus_json, "modulus_json")?)?;
        *out = dini_norm(&m)?;
        Ok(())
    })
}

/// Builds the sparse family for `m` inputs supported in the root cube
/// (`{"level":2,"index":[1]}`).
///
/// # Safety
/// Handles must be live; `fs` must hold `m` function handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_build_family(
    kernel: *const SdomKernel,
    grid: *const SdomGrid,
    fs: *const *const SdomFunction,
    m: usize,
    root_json: *const c_char,
    r: f64,
    mode: c_int,
    out: *mut *mut SdomFamily,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let op = operator(ref_arg(kernel, "kernel")?, ref_arg(grid, "grid")?)?;
        let fs = inputs(fs, m)?;
        let root: DyadicCube = json_arg(str_arg(root_json, "root_json")?)?;
        let built = build_sparse_family(&op, &fs, &root, r, mode_of(mode)?)?;
        *out = into_handle(SdomFamily(built.family));
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_family_from_json(
    json: *const c_char,
    out: *mut *mut SdomFamily,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let fam = SparseFamily::from_json(str_arg(json, "json")?)?;
        *out = into_handle(SdomFamily(fam));
        Ok(())
    })
}

/// Number of cubes in the family, or 0 for a null handle.
///
/// # Safety
/// `family` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_family_len(family: *const SdomFamily) -> usize {
    family.as_ref().map_or(0, |f| f.0.len())
}

/// Serializes the family; free the result with [`sdom_string_free`].
///
/// # Safety
/// `family` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_family_to_json(
    family: *const SdomFamily,
    out: *mut *mut c_char,
) -> SdomStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = c_string(ref_arg(family, "family")?.0.to_json()?)?;
        Ok(())
    })
}

/// # Safety
/// `family` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdom_family_free(family: *mut SdomFamily) {
    free_handle(family)
}

/// Empirical domination constant of `T` by the sparse form of `family`.
/// `support_flag` is set to 1 where the sparse form vanishes but `T` does not.
///
/// # Safety
/// Handles must be live; `fs` must hold `m` function handles; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_domination_constant(
    kernel: *const SdomKernel,
    grid: *const SdomGrid,
    fs: *const *const SdomFunction,
    m: usize,
    family: *const SdomFamily,
    r: f64,
    c_emp: *mut f64,
    support_flag: *mut c_int,
) -> SdomStatus {
    guard(|| {
        let c_emp = out_arg(c_emp, "c_emp")?;
        let flag = out_arg(support_flag, "support_flag")?;
        let op = operator(ref_arg(kernel, "kernel")?, ref_arg(grid, "grid")?)?;
        let fs = inputs(fs, m)?;
        let rep = domination_constant(&op, &fs, &ref_arg(family, "family")?.0, r)?;
        *c_emp = rep.c_emp;
        *flag = c_int::from(rep.support_flag);
        Ok(())
    })
}

/// Runs a CLI-style experiment config, writing reports into `out_dir`.
/// `exit_code` receives the CLI exit status (0, 1 or 2) whenever the config
/// was readable.
///
/// # Safety
/// Strings NUL-terminated; `exit_code` writable.
#[no_mangle]
pub unsafe extern "C" fn sdom_run_experiment(
    config_json: *const c_char,
    out_dir: *const c_char,
    exit_code: *mut c_int,
) -> SdomStatus {
    guard(|| {
        let code = out_arg(exit_code, "exit_code")?;
        let text = str_arg(config_json, "config_json")?;
        let dir = str_arg(out_dir, "out_dir")?;
        *code = 1;
        let cfg =
            parse_config(text.as_bytes()).map_err(|e| Fail(SdomStatus::Usage, e.to_string()))?;
        match run_experiment(&cfg, Path::new(dir)) {
            Ok(done) => {
                *code = done.exit_code();
                if done.violations.is_empty() {
                    Ok(())
                } else {
                    Err(Fail(SdomStatus::Invariant, done.violations.join("; ")))
                }
            }
            Err(e) => {
                *code = e.exit_code();
                let status = match e {
                    RunError::Invariant(_) => SdomStatus::Invariant,
                    RunError::Usage(_) => SdomStatus::Usage,
                };
                Err(Fail(status, e.to_string()))
            }
        }
    })
}
