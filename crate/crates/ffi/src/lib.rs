//! C ABI over the `brenier` solver.
//!
//! Domains, targets and solutions are opaque heap handles created by the
//! `*_new`/constructor functions and released with the matching `*_free`.
//! Every fallible call returns a [`BrenierStatus`]; on failure a message is
//! available from [`brenier_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use brenier::{
    solve, BrenierPotential, DiscreteTargetMeasure, Error, Shape, SolveMode, SolveReport, SolverConfig,
    SourceDomain,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrenierStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidTarget = 3,
    InvalidDomain = 4,
    /// The solver stopped early; the partial solution is still returned.
    NotConverged = 5,
    Unsupported = 6,
    Panic = 7,
}

pub struct BrenierDomain {
    inner: SourceDomain,
}

pub struct BrenierTarget {
    inner: Arc<DiscreteTargetMeasure>,
}

pub struct BrenierSolution {
    report: SolveReport,
    potential: BrenierPotential,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &Error) -> BrenierStatus {
    match e {
        Error::EmptyTarget
        | Error::DuplicatePoint { .. }
        | Error::NonpositiveWeight { .. }
        | Error::MassMismatch { .. }
        | Error::NonFinite(_) => BrenierStatus::InvalidTarget,
        Error::InvalidDomain(_) => BrenierStatus::InvalidDomain,
        Error::MaxIterations(_) | Error::StepUnderflow(_) => BrenierStatus::NotConverged,
        Error::DimensionUnsupported(_) => BrenierStatus::Unsupported,
        _ => BrenierStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> BrenierStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn guard(f: impl FnOnce() -> BrenierStatus) -> BrenierStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            BrenierStatus::Panic
        }
    }
}

fn null(name: &str) -> BrenierStatus {
    set_error(format!("{name} is null"));
    BrenierStatus::NullPointer
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn brenier_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Axis-aligned box `∏ [lo_k, hi_k]` of dimension `dim`.
///
/// # Safety
/// `lo` and `hi` must point to `dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brenier_domain_box(
    dim: usize,
    lo: *const f64,
    hi: *const f64,
    seed: u64,
    out: *mut *mut BrenierDomain,
) -> BrenierStatus {
    guard(|| {
        if lo.is_null() || hi.is_null() || out.is_null() {
            return null("argument");
        }
        let shape = Shape::Box {
            lo: slice::from_raw_parts(lo, dim).to_vec(),
            hi: slice::from_raw_parts(hi, dim).to_vec(),
        };
        match SourceDomain::new(shape, seed) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(BrenierDomain { inner: d }));
                BrenierStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Planar disk.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brenier_domain_disk(
    cx: f64,
    cy: f64,
    radius: f64,
    seed: u64,
    out: *mut *mut BrenierDomain,
) -> BrenierStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let shape = Shape::Ball {
            center: vec![cx, cy],
            radius,
        };
        match SourceDomain::new(shape, seed) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(BrenierDomain { inner: d }));
                BrenierStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `domain` must come from a domain constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn brenier_domain_free(domain: *mut BrenierDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Target of `n` points in dimension `dim` (row-major). A null `weights`
/// means uniform weights; otherwise they must sum to 1 within
/// `mass_tolerance` and are rescaled exactly.
///
/// # Safety
/// `points` must hold `n * dim` doubles, `weights` null or `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn brenier_target_new(
    dim: usize,
    n: usize,
    points: *const f64,
    weights: *const f64,
    mass_tolerance: f64,
    out: *mut *mut BrenierTarget,
) -> BrenierStatus {
    guard(|| {
        if points.is_null() || out.is_null() {
            return null("argument");
        }
        if dim == 0 {
            set_error("dimension must be positive");
            return BrenierStatus::InvalidArgument;
        }
        let flat = slice::from_raw_parts(points, n * dim).to_vec();
        let w = if weights.is_null() {
            vec![1.0 / n.max(1) as f64; n]
        } else {
            slice::from_raw_parts(weights, n).to_vec()
        };
        match DiscreteTargetMeasure::from_flat(dim, flat, w, mass_tolerance) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(BrenierTarget { inner: Arc::new(t) }));
                BrenierStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of target points, 0 for null.
///
/// # Safety
/// `target` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brenier_target_len(target: *const BrenierTarget) -> usize {
    target.as_ref().map_or(0, |t| t.inner.len())
}

/// # Safety
/// `target` must come from [`brenier_target_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn brenier_target_free(target: *mut BrenierTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Solves for the heights. `mode` 0 is the exact planar Newton solver, 1 the
/// Monte Carlo solver with `samples` frozen samples. Non-positive
/// `tolerance` or zero `max_iterations`/`samples` select the defaults. On
/// `NotConverged` the partial solution is still written to `out`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn brenier_solve(
    domain: *const BrenierDomain,
    target: *const BrenierTarget,
    mode: u32,
    tolerance: f64,
    max_iterations: usize,
    samples: usize,
    out: *mut *mut BrenierSolution,
) -> BrenierStatus {
    guard(|| {
        let (Some(domain), Some(target)) = (domain.as_ref(), target.as_ref()) else {
            return null("handle");
        };
        if out.is_null() {
            return null("out");
        }
        let mut config = match mode {
            0 => SolverConfig::exact(),
            1 => SolverConfig::monte_carlo(),
            _ => {
                set_error(format!("unknown mode {mode}"));
                return BrenierStatus::InvalidArgument;
            }
        };
        if tolerance > 0.0 {
            config.tolerance = tolerance;
        }
        if max_iterations > 0 {
            config.max_iterations = max_iterations;
        }
        if samples > 0 && config.mode == SolveMode::MonteCarlo {
            config.samples = samples;
        }
        config.seed = domain.inner.seed();
        let (report, status) = match solve(&domain.inner, Arc::clone(&target.inner), &config, None) {
            Ok(r) => (r, BrenierStatus::Ok),
            Err(Error::MaxIterations(r)) | Err(Error::StepUnderflow(r)) => {
                set_error(format!("no convergence, residual {:.3e}", r.final_residual()));
                (*r, BrenierStatus::NotConverged)
            }
            Err(e) => return fail(e),
        };
        let potential = match report.potential(Arc::clone(&target.inner)) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        *out = Box::into_raw(Box::new(BrenierSolution { report, potential }));
        status
    })
}

/// Number of cells, 0 for null.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brenier_solution_len(solution: *const BrenierSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.report.heights.len())
}

/// Newton or gradient iterations taken.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brenier_solution_iterations(solution: *const BrenierSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.report.iterations)
}

/// Final `max_i |w_i − ν_i|`, NaN for null.
///
/// # Safety
/// `solution` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn brenier_solution_residual(solution: *const BrenierSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.report.final_residual())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> BrenierStatus {
    if out.is_null() {
        return null("out");
    }
    if len < src.len() {
        set_error(format!("buffer holds {len} values, need {}", src.len()));
        return BrenierStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    BrenierStatus::Ok
}

/// Copies the gauge-normalized heights (minimum 0) into `out`.
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn brenier_solution_heights(
    solution: *const BrenierSolution,
    out: *mut f64,
    len: usize,
) -> BrenierStatus {
    guard(|| match solution.as_ref() {
        Some(s) => copy_out(&s.report.heights, out, len),
        None => null("solution"),
    })
}

/// Copies the final cell measures into `out`.
///
/// # Safety
/// `out` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn brenier_solution_measures(
    solution: *const BrenierSolution,
    out: *mut f64,
    len: usize,
) -> BrenierStatus {
    guard(|| match solution.as_ref() {
        Some(s) => copy_out(&s.report.measures, out, len),
        None => null("solution"),
    })
}

/// Cell index of each of `count` row-major points.
///
/// # Safety
/// `points` must hold `count * dim` doubles and `cells` room for `count`
/// entries.
#[no_mangle]
pub unsafe extern "C" fn brenier_solution_assign(
    solution: *const BrenierSolution,
    points: *const f64,
    count: usize,
    cells: *mut usize,
) -> BrenierStatus {
    guard(|| {
        let Some(s) = solution.as_ref() else {
            return null("solution");
        };
        if points.is_null() || cells.is_null() {
            return null("argument");
        }
        let d = s.potential.dim();
        let xs = slice::from_raw_parts(points, count * d);
        let out = slice::from_raw_parts_mut(cells, count);
        for (o, x) in out.iter_mut().zip(xs.chunks_exact(d)) {
            *o = s.potential.assign_cell(x);
        }
        BrenierStatus::Ok
    })
}

/// # Safety
/// `solution` must come from [`brenier_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn brenier_solution_free(solution: *mut BrenierSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}
