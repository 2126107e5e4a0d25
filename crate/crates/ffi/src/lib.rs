//! C ABI for mlvb. Datasets and fits are opaque handles created and freed
//! through this API; every entry point returns an [`MlvbStatus`] and leaves
//! a message for [`mlvb_last_error`] on failure.
//!
//! Configuration crosses the boundary as JSON strings using the same field
//! names as the CLI config file. Passing NULL for a JSON argument selects the
//! defaults.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mlvb::data::{load_csv, CsvSchema, MultilevelDataset};
use mlvb::eval::{simulate, SimConfig};
use mlvb::mfvb::{fit, posterior_summaries, FitOptions, FitResult, PriorConfig};
use mlvb::savs::savs;
use mlvb::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlvbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad configuration, schema or input data.
    InvalidInput = 3,
    /// Singular system, non-SPD block or other numerical failure.
    Numerical = 4,
    Io = 5,
    /// Output buffer has the wrong length.
    BufferSize = 6,
    Panic = 7,
}

/// Opaque dataset handle.
pub struct MlvbDataset {
    inner: MultilevelDataset,
}

/// Opaque fit handle.
pub struct MlvbFit {
    result: FitResult,
    ds: MultilevelDataset,
    json: Option<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MlvbStatus {
    match e {
        Error::Io(_) | Error::Csv(_) => MlvbStatus::Io,
        e if e.is_numerical() => MlvbStatus::Numerical,
        _ => MlvbStatus::InvalidInput,
    }
}

/// Run `f`, turning errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), (MlvbStatus, String)>>(f: F) -> MlvbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MlvbStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside mlvb".into());
            MlvbStatus::Panic
        }
    }
}

fn lib<T>(r: mlvb::Result<T>) -> Result<T, (MlvbStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, (MlvbStatus, String)> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| (MlvbStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn json_arg<T: serde::de::DeserializeOwned + Default>(s: Option<&str>, what: &str) -> Result<T, (MlvbStatus, String)> {
    match s {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| (MlvbStatus::InvalidInput, format!("{what}: {e}"))),
    }
}

fn null(what: &str) -> (MlvbStatus, String) {
    (MlvbStatus::NullPointer, format!("{what} is NULL"))
}

/// Message describing the last failure on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mlvb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mlvb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a CSV file described by a JSON schema.
///
/// # Safety
/// `path` and `schema_json` must be NUL-terminated strings and `out` a valid
/// pointer. On success `*out` owns a dataset to release with
/// [`mlvb_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn mlvb_dataset_load_csv(
    path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut MlvbDataset,
) -> MlvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?.ok_or_else(|| null("path"))?;
        let schema: CsvSchema = match str_arg(schema_json, "schema_json")? {
            Some(s) => serde_json::from_str(s).map_err(|e| (MlvbStatus::InvalidInput, format!("schema_json: {e}")))?,
            None => return Err(null("schema_json")),
        };
        let ds = lib(load_csv(path, &schema))?;
        *out = Box::into_raw(Box::new(MlvbDataset { inner: ds }));
        Ok(())
    })
}

/// Simulate a dataset from a JSON simulation design (NULL for the default).
///
/// # Safety
/// `sim_json` must be NULL or a NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn mlvb_dataset_simulate(sim_json: *const c_char, out: *mut *mut MlvbDataset) -> MlvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: SimConfig = json_arg(str_arg(sim_json, "sim_json")?, "sim_json")?;
        let (ds, _) = lib(simulate(&cfg))?;
        *out = Box::into_raw(Box::new(MlvbDataset { inner: ds }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mlvb_dataset_free(ds: *mut MlvbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of fixed effects, groups and observations.
///
/// # Safety
/// `ds` must be a live dataset handle; each output pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mlvb_dataset_dims(
    ds: *const MlvbDataset,
    p: *mut usize,
    m: *mut usize,
    n_obs: *mut usize,
) -> MlvbStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.inner;
        for (ptr, v) in [(p, ds.p()), (m, ds.m()), (n_obs, ds.n_obs())] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}

/// Fit the model. `prior_json` follows the `prior` section of the CLI config
/// and `options_json` the `fit` section; NULL selects the defaults.
///
/// # Safety
/// `ds` must be a live dataset handle, the JSON arguments NULL or
/// NUL-terminated, and `out` a valid pointer. On success `*out` owns a fit to
/// release with [`mlvb_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn mlvb_fit(
    ds: *const MlvbDataset,
    prior_json: *const c_char,
    options_json: *const c_char,
    out: *mut *mut MlvbFit,
) -> MlvbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.inner;
        let prior: PriorConfig = json_arg(str_arg(prior_json, "prior_json")?, "prior_json")?;
        let opts: FitOptions = json_arg(str_arg(options_json, "options_json")?, "options_json")?;
        let spec = lib(prior.build(ds))?;
        let result = lib(fit(ds, &spec, &opts))?;
        *out = Box::into_raw(Box::new(MlvbFit { result, ds: ds.clone(), json: None }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mlvb_fit_free(fit: *mut MlvbFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Sweeps run and whether the tolerance was met.
///
/// # Safety
/// `fit` must be a live fit handle; output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mlvb_fit_status(
    fit: *const MlvbFit,
    iterations: *mut usize,
    converged: *mut bool,
) -> MlvbStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if !iterations.is_null() {
            *iterations = f.result.iterations;
        }
        if !converged.is_null() {
            *converged = f.result.converged;
        }
        Ok(())
    })
}

/// Copy the posterior mean and standard deviation of β (length p each).
///
/// # Safety
/// `fit` must be a live fit handle; `mean` and `sd` must each be NULL or
/// point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mlvb_fit_beta(fit: *const MlvbFit, mean: *mut f64, sd: *mut f64, len: usize) -> MlvbStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let st = &f.result.state;
        let p = st.mu_beta.len();
        if len != p {
            return Err((MlvbStatus::BufferSize, format!("buffer holds {len}, need {p}")));
        }
        for k in 0..p {
            if !mean.is_null() {
                *mean.add(k) = st.mu_beta[k];
            }
            if !sd.is_null() {
                *sd.add(k) = st.sigma_beta[(k, k)].max(0.0).sqrt();
            }
        }
        Ok(())
    })
}

/// SAVS selection over the S coefficients: writes 1 for selected and 0
/// otherwise into `gamma` (length p_S), and the sparsified estimates into
/// `estimate` if it is not NULL.
///
/// # Safety
/// `fit` must be a live fit handle, `gamma` point to `len` writable bytes,
/// and `estimate` be NULL or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mlvb_fit_select(
    fit: *const MlvbFit,
    gamma: *mut u8,
    estimate: *mut f64,
    len: usize,
) -> MlvbStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if gamma.is_null() {
            return Err(null("gamma"));
        }
        let mu: Vec<f64> = f.ds.selection_range().map(|k| f.result.state.mu_beta[k]).collect();
        if len != mu.len() {
            return Err((MlvbStatus::BufferSize, format!("buffer holds {len}, need {}", mu.len())));
        }
        let sel = lib(savs(&mu, &f.ds.selection_column_norms_sq()))?;
        for k in 0..len {
            *gamma.add(k) = sel.gamma[k] as u8;
            if !estimate.is_null() {
                *estimate.add(k) = sel.mu_star[k];
            }
        }
        Ok(())
    })
}

/// Posterior summaries of β and u as a JSON document owned by the fit
/// handle (valid until the handle is freed).
///
/// # Safety
/// `fit` must be a live fit handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mlvb_fit_summary_json(fit: *mut MlvbFit, level: f64, out: *mut *const c_char) -> MlvbStatus {
    guard(|| {
        let f = fit.as_mut().ok_or_else(|| null("fit"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err((MlvbStatus::InvalidInput, "level must lie in (0, 1)".into()));
        }
        let sums = posterior_summaries(&f.ds, &f.result.state, level);
        let doc = serde_json::json!({
            "schema_version": mlvb::eval::SCHEMA_VERSION,
            "iterations": f.result.iterations,
            "converged": f.result.converged,
            "beta": sums.beta,
            "random": sums.random,
        });
        let c = CString::new(doc.to_string()).map_err(|e| (MlvbStatus::Panic, e.to_string()))?;
        *out = f.json.insert(c).as_ptr();
        Ok(())
    })
}
