//! C ABI for `densgeo`.
//!
//! Objects cross the boundary as opaque handles (`DgGrid`, `DgDensity`,
//! `DgHsGeodesic`) created by `*_new` functions and released with the
//! matching `*_free`. Every fallible call returns a `DgStatus`; on failure
//! `dg_last_error_message` describes the most recent error on the calling
//! thread. Output arrays are caller-allocated and their length is checked.
//! Panics are caught and reported as `DG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use densgeo::density::Density;
use densgeo::expr::Expr;
use densgeo::hsflow::HsGeodesic;
use densgeo::onedee::{alpha_geodesic_step, AlphaConnection};
use densgeo::simplex::geodesic_probs;
use densgeo::spheregeo::{bhattacharyya, geodesic, hellinger_distance, spherical_distance};
use densgeo::{Error, PeriodicGrid, ScalarField};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    NullPointer = 1,
    /// Output buffer length differs from the grid size.
    BadLength = 2,
    InvalidGrid = 3,
    InvalidArgument = 4,
    GridMismatch = 5,
    NonZeroMean = 6,
    NegativeDensity = 7,
    MassMismatch = 8,
    Parse = 9,
    /// Requested time at or past the blowup time.
    BeyondBlowup = 10,
    StepTooLarge = 11,
    /// Any other numerical failure.
    Numerical = 12,
    Panic = 13,
}

/// Periodic grid handle.
pub struct DgGrid(PeriodicGrid);

/// Density handle.
pub struct DgDensity(Density);

/// Closed-form Hunter-Saxton geodesic handle.
pub struct DgHsGeodesic(HsGeodesic);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DgStatus {
    match e {
        Error::InvalidGrid(_) => DgStatus::InvalidGrid,
        Error::GridMismatch => DgStatus::GridMismatch,
        Error::NonZeroMean { .. } => DgStatus::NonZeroMean,
        Error::NegativeDensity { .. } | Error::NonPositiveInput { .. } => DgStatus::NegativeDensity,
        Error::MassMismatch(..) => DgStatus::MassMismatch,
        Error::Parse(_) => DgStatus::Parse,
        Error::BeyondBlowup { .. } => DgStatus::BeyondBlowup,
        Error::StepTooLarge(_) => DgStatus::StepTooLarge,
        e if e.is_numerical() => DgStatus::Numerical,
        _ => DgStatus::InvalidArgument,
    }
}

struct Fail(DgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DgStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            DgStatus::Panic
        }
    }
}

unsafe fn href<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(DgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail(DgStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail(DgStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(DgStatus::NullPointer, "output handle pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Fail> {
    if src.len() != dst.len() {
        return Err(Fail(
            DgStatus::BadLength,
            format!("buffer holds {} values, expected {}", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

unsafe fn field_from(grid: &PeriodicGrid, values: *const f64, len: usize) -> Result<ScalarField, Fail> {
    let v = slice(values, len, "values")?;
    if len != grid.len() {
        return Err(Fail(
            DgStatus::BadLength,
            format!("{len} values for a grid of {} nodes", grid.len()),
        ));
    }
    Ok(ScalarField::new(*grid, v.to_vec())?)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Circle of `n` nodes and length `length`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dg_grid_new_1d(n: usize, length: f64, out: *mut *mut DgGrid) -> DgStatus {
    guard(|| store(out, DgGrid(PeriodicGrid::circle(n, length)?)))
}

/// Torus of `nx × ny` nodes; node values are row-major, index `ix * ny + iy`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dg_grid_new_2d(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    out: *mut *mut DgGrid,
) -> DgStatus {
    guard(|| store(out, DgGrid(PeriodicGrid::torus(nx, ny, lx, ly)?)))
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle from `dg_grid_new_*`.
#[no_mangle]
pub unsafe extern "C" fn dg_grid_len(grid: *const DgGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// # Safety
/// `grid` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dg_grid_free(grid: *mut DgGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Sample an expression in `x` (and `y` on the torus) at the grid nodes.
///
/// # Safety
/// `grid` must be a live handle, `expr` a NUL-terminated string and `out`
/// point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_expr_sample(
    grid: *const DgGrid,
    expr: *const c_char,
    out: *mut f64,
    len: usize,
) -> DgStatus {
    guard(|| {
        let g = href(grid, "grid")?;
        if expr.is_null() {
            return Err(Fail(DgStatus::NullPointer, "expr is null".into()));
        }
        let src = CStr::from_ptr(expr)
            .to_str()
            .map_err(|_| Fail(DgStatus::Parse, "expression is not UTF-8".into()))?;
        let f = Expr::parse(src)?.to_field(&g.0)?;
        copy_out(f.values(), slice_mut(out, len, "out")?)
    })
}

/// Density from node values, which must already integrate to `mass`.
///
/// # Safety
/// `grid` must be a live handle, `values` point to `len` doubles and `out`
/// to storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dg_density_new(
    grid: *const DgGrid,
    values: *const f64,
    len: usize,
    mass: f64,
    out: *mut *mut DgDensity,
) -> DgStatus {
    guard(|| {
        let g = href(grid, "grid")?;
        let f = field_from(&g.0, values, len)?;
        store(out, DgDensity(Density::with_mass(f, mass)?))
    })
}

/// # Safety
/// `d` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dg_density_free(d: *mut DgDensity) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Total mass of a density, NaN for a null handle.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dg_density_mass(d: *const DgDensity) -> f64 {
    d.as_ref().map_or(f64::NAN, |d| d.0.mass())
}

/// Which quantity `dg_distance` computes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgDistance {
    /// `√μ(M) · arccos BC`.
    Spherical = 0,
    /// `‖√a − √b‖`.
    Hellinger = 1,
    /// The affinity `BC` itself.
    Bhattacharyya = 2,
    /// Twice the spherical distance.
    FisherRao = 3,
}

/// # Safety
/// `a`, `b` must be live handles and `out` a writable double.
#[no_mangle]
pub unsafe extern "C" fn dg_distance(
    a: *const DgDensity,
    b: *const DgDensity,
    kind: DgDistance,
    out: *mut f64,
) -> DgStatus {
    guard(|| {
        let (a, b) = (&href(a, "a")?.0, &href(b, "b")?.0);
        let v = match kind {
            DgDistance::Spherical => spherical_distance(a, b)?,
            DgDistance::Hellinger => hellinger_distance(a, b)?,
            DgDistance::Bhattacharyya => bhattacharyya(a, b)?,
            DgDistance::FisherRao => 2.0 * spherical_distance(a, b)?,
        };
        let o = slice_mut(out, 1, "out")?;
        o[0] = v;
        Ok(())
    })
}

/// Density at parameter `t ∈ [0, 1]` on the geodesic from `a` to `b`.
///
/// # Safety
/// `a`, `b` must be live handles and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_geodesic_density(
    a: *const DgDensity,
    b: *const DgDensity,
    t: f64,
    out: *mut f64,
    len: usize,
) -> DgStatus {
    guard(|| {
        let path = geodesic(&href(a, "a")?.0, &href(b, "b")?.0)?;
        copy_out(path.density(t).values(), slice_mut(out, len, "out")?)
    })
}

/// Geodesic with initial velocity divergence `div_u0` (mean zero).
///
/// # Safety
/// `grid` must be a live handle, `div_u0` point to `len` doubles and `out`
/// to storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dg_hs_new(
    grid: *const DgGrid,
    div_u0: *const f64,
    len: usize,
    out: *mut *mut DgHsGeodesic,
) -> DgStatus {
    guard(|| {
        let g = href(grid, "grid")?;
        let f = field_from(&g.0, div_u0, len)?;
        store(out, DgHsGeodesic(HsGeodesic::from_divergence(f)?))
    })
}

/// # Safety
/// `h` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dg_hs_free(h: *mut DgHsGeodesic) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Angular frequency κ, NaN for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dg_hs_kappa(h: *const DgHsGeodesic) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.0.kappa())
}

/// Blowup time (may be +inf), NaN for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dg_hs_t_max(h: *const DgHsGeodesic) -> f64 {
    h.as_ref().map_or(f64::NAN, |h| h.0.t_max())
}

/// `ρ(t, η(t, x))` at the grid nodes.
///
/// # Safety
/// `h` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_hs_rho(h: *const DgHsGeodesic, t: f64, out: *mut f64, len: usize) -> DgStatus {
    guard(|| {
        let rho = href(h, "geodesic")?.0.rho_along_flow(t)?;
        copy_out(rho.values(), slice_mut(out, len, "out")?)
    })
}

/// Jacobian of the flow at the grid nodes.
///
/// # Safety
/// `h` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_hs_jacobian(h: *const DgHsGeodesic, t: f64, out: *mut f64, len: usize) -> DgStatus {
    guard(|| {
        let h = &href(h, "geodesic")?.0;
        if t >= h.t_max() {
            return Err(Error::BeyondBlowup { t, t_max: h.t_max() }.into());
        }
        copy_out(h.jacobian_formula(t).values(), slice_mut(out, len, "out")?)
    })
}

/// One RK4 step of the α-geodesic equation on the circle, in place.
///
/// # Safety
/// `grid` must be a live 1D handle and `u` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_alpha_step(
    grid: *const DgGrid,
    alpha: f64,
    u: *mut f64,
    len: usize,
    dt: f64,
) -> DgStatus {
    guard(|| {
        let g = href(grid, "grid")?;
        let f = field_from(&g.0, u, len)?;
        let c = AlphaConnection::new(alpha)?;
        let next = alpha_geodesic_step(&c, &f, dt)?;
        copy_out(next.values(), slice_mut(u, len, "u")?)
    })
}

/// Probabilities `(P(a), P(b), P(c))` at time `t` on the simplex demo geodesic.
///
/// # Safety
/// `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dg_simplex_probs(t: f64, out: *mut f64) -> DgStatus {
    guard(|| copy_out(geodesic_probs(t).probs(), slice_mut(out, 3, "out")?))
}
