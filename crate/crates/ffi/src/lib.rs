//! C ABI for impactlab.
//!
//! Models and densities are opaque handles returned through out-pointers and
//! released with the matching `_free`. Every fallible call
//! returns an [`ImpactlabStatus`]; on failure the message is available from
//! [`impactlab_last_error`] on the same thread until the next failing call.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use impactlab::estimators::{continuous_bin_masses, LobEvent, TradeSide};
use impactlab::impact::{impact_curve, resilience_curve};
use impactlab::stationary::{chi, psi, solve_stationary_f};
use impactlab::{Density, Error, ModelParams};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpactlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Stability bound or degenerate numerics.
    Numeric = 3,
    Unsupported = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// Opaque model parameters.
pub struct ImpactlabModel(ModelParams);

/// Opaque density on the tick grid x_i = i/n, i = 0..=n.
pub struct ImpactlabDensity(Density);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> ImpactlabStatus {
    match e {
        Error::Cfl { .. } | Error::Degenerate(_) => ImpactlabStatus::Numeric,
        Error::Unsupported(_) => ImpactlabStatus::Unsupported,
        _ => ImpactlabStatus::InvalidArgument,
    }
}

/// Runs `f`, recording errors and containing panics.
fn guard(f: impl FnOnce() -> Result<(), (ImpactlabStatus, String)>) -> ImpactlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ImpactlabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ImpactlabStatus::Internal
        }
    }
}

fn lib<T>(r: impactlab::Result<T>) -> Result<T, (ImpactlabStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (ImpactlabStatus, String) {
    (ImpactlabStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (ImpactlabStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (ImpactlabStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn impactlab_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn impactlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates the reference market: uniform F on [−1.2, 1.2], α = 10, γ = 1,
/// θ = 0.2, σ ≡ 1.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn impactlab_model_reference(out: *mut *mut ImpactlabModel) -> ImpactlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ImpactlabModel(ModelParams::reference())));
        Ok(())
    })
}

/// Creates a model with uniform F on [−a, a] and volatility scale `rho`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn impactlab_model_uniform(
    a: f64,
    alpha: f64,
    gamma: f64,
    theta: f64,
    rho: f64,
    out: *mut *mut ImpactlabModel,
) -> ImpactlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = lib(ModelParams::uniform(a, alpha, gamma, theta, rho))?;
        *out = Box::into_raw(Box::new(ImpactlabModel(p)));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impactlab_model_free(model: *mut ImpactlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Diffusion coefficients at participation `theta` and tick position `y`:
/// the market drift, the meta-order drift and the squared volatility.
///
/// # Safety
/// `model` must be a live handle; each output must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn impactlab_model_coefficients(
    model: *const ImpactlabModel,
    theta: f64,
    y: f64,
    mu0: *mut f64,
    mu1: *mut f64,
    sigma2: *mut f64,
) -> ImpactlabStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if mu0.is_null() || mu1.is_null() || sigma2.is_null() {
            return Err(null("output"));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err((
                ImpactlabStatus::InvalidArgument,
                format!("theta must lie in (0, 1], got {theta}"),
            ));
        }
        let (a, b, c) = m.0.hat_cell(theta, impactlab::model::reduce(y));
        *mu0 = a;
        *mu1 = b;
        *sigma2 = c;
        Ok(())
    })
}

unsafe fn density_out(
    model: *const ImpactlabModel,
    out: *mut *mut ImpactlabDensity,
    make: impl FnOnce(&ModelParams) -> impactlab::Result<Density>,
) -> ImpactlabStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = lib(make(&m.0))?;
        *out = Box::into_raw(Box::new(ImpactlabDensity(d)));
        Ok(())
    })
}

/// Stationary density of the price position without the meta-order, on n cells.
///
/// # Safety
/// `model` must be a live handle and `out` valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn impactlab_psi(
    model: *const ImpactlabModel,
    n: usize,
    out: *mut *mut ImpactlabDensity,
) -> ImpactlabStatus {
    density_out(model, out, |p| psi(p, n))
}

/// Stationary density of the price position during a meta-order at
/// participation `theta`, on n cells.
///
/// # Safety
/// `model` must be a live handle and `out` valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn impactlab_chi(
    model: *const ImpactlabModel,
    theta: f64,
    n: usize,
    out: *mut *mut ImpactlabDensity,
) -> ImpactlabStatus {
    density_out(model, out, |p| chi(p, theta, n))
}

/// Unweighted stationary density f(theta, ·) on n cells.
///
/// # Safety
/// `model` must be a live handle and `out` valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn impactlab_stationary_f(
    model: *const ImpactlabModel,
    theta: f64,
    n: usize,
    out: *mut *mut ImpactlabDensity,
) -> ImpactlabStatus {
    density_out(model, out, |p| solve_stationary_f(p, theta, n))
}

/// Releases a density. Null is ignored.
///
/// # Safety
/// `density` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impactlab_density_free(density: *mut ImpactlabDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Number of nodes (n + 1), or 0 for a null handle.
///
/// # Safety
/// `density` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn impactlab_density_len(density: *const ImpactlabDensity) -> usize {
    density.as_ref().map_or(0, |d| d.0.values.len())
}

/// Copies the nodal values into `buf`, which must hold at least
/// [`impactlab_density_len`] doubles.
///
/// # Safety
/// `density` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn impactlab_density_values(
    density: *const ImpactlabDensity,
    buf: *mut f64,
    len: usize,
) -> ImpactlabStatus {
    guard(|| {
        let d = density.as_ref().ok_or_else(|| null("density"))?;
        let need = d.0.values.len();
        if len < need {
            return Err((
                ImpactlabStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {need}"),
            ));
        }
        slice_mut(buf, len, "buf")?[..need].copy_from_slice(&d.0.values);
        Ok(())
    })
}

/// Boundary value of the density at the integer price.
///
/// # Safety
/// `density` must be a live handle and `out` point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn impactlab_density_wing(density: *const ImpactlabDensity, out: *mut f64) -> ImpactlabStatus {
    guard(|| {
        let d = density.as_ref().ok_or_else(|| null("density"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = d.0.wing();
        Ok(())
    })
}

/// Expected impact at each executed volume in `q` (increasing, starting at or
/// above 0), computed on n cells with the largest stable step.
///
/// # Safety
/// `model` must be a live handle; `q` and `out` must each be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn impactlab_impact_curve(
    model: *const ImpactlabModel,
    theta: f64,
    q: *const f64,
    len: usize,
    n: usize,
    out: *mut f64,
) -> ImpactlabStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let q = slice(q, len, "q")?;
        let out = slice_mut(out, len, "out")?;
        let c = lib(impact_curve(&m.0, theta, q, n, None))?;
        out.copy_from_slice(&c.impact);
        Ok(())
    })
}

/// Price resilience at each post-trade volume in `v` after a meta-order at
/// participation `theta`.
///
/// # Safety
/// `model` must be a live handle; `v` and `out` must each be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn impactlab_resilience_curve(
    model: *const ImpactlabModel,
    theta: f64,
    v: *const f64,
    len: usize,
    n: usize,
    out: *mut f64,
) -> ImpactlabStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let v = slice(v, len, "v")?;
        let out = slice_mut(out, len, "out")?;
        let c = lib(resilience_curve(&m.0, theta, v, n, None))?;
        out.copy_from_slice(&c.resilience);
        Ok(())
    })
}

/// Splits a trade's volume across `k` imbalance bins by the time its
/// depletion path spends in each. `is_buy` nonzero for a buy.
///
/// # Safety
/// `out` must be valid for `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn impactlab_continuous_bin_masses(
    is_buy: i32,
    vb: f64,
    va: f64,
    size: f64,
    k: usize,
    out: *mut f64,
) -> ImpactlabStatus {
    guard(|| {
        if k == 0 {
            return Err((ImpactlabStatus::InvalidArgument, "k must be positive".into()));
        }
        let out = slice_mut(out, k, "out")?;
        let side = if is_buy != 0 { TradeSide::Buy } else { TradeSide::Sell };
        let hit = if is_buy != 0 { va } else { vb };
        if !(size > 0.0 && vb >= 0.0 && va >= 0.0 && size <= hit) {
            return Err((
                ImpactlabStatus::InvalidArgument,
                format!("need 0 < size <= hit-side volume, got size {size}, vb {vb}, va {va}"),
            ));
        }
        let e = LobEvent {
            ts_ns: 0,
            side,
            size,
            bid_px_pre: 0,
            ask_px_pre: 1,
            vb_pre: vb,
            va_pre: va,
            bid_px_post: 0,
            ask_px_post: 1,
            vb_post: if is_buy != 0 { vb } else { vb - size },
            va_post: if is_buy != 0 { va - size } else { va },
            tick: 1.0,
        };
        let r = continuous_bin_masses(&e, k).ok_or_else(|| {
            (
                ImpactlabStatus::Numeric,
                "imbalance undefined along the trade".to_string(),
            )
        })?;
        out.copy_from_slice(&r);
        Ok(())
    })
}
