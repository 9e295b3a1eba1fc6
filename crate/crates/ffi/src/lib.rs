//! C ABI over the `altsim` library.
//!
//! Every entry point returns an [`AltsimStatus`]; results are written through
//! out-pointers. On failure a description is kept per thread and can be read
//! with [`altsim_last_error_message`]. Objects are opaque handles released
//! with their matching `*_free` function, and strings produced by the library
//! are released with [`altsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use altsim::catalog::{self, generate_synthetic_with_noise, uniform_schema};
use altsim::harness::{compare, run_experiment, ExperimentConfig};
use altsim::metrics::{cohens_kappa, mrr_at_k, ndcg_at_k, success_at_1, Judgments, RelevanceSet};
use altsim::ranker::RankedList;
use altsim::simulator::{AlternativesMap, BaseSimulator, MetaSimConfig, MetaSimulator, Simulator};
use altsim::{Catalog, Error, ItemId};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    NotFound = 4,
    Config = 5,
    Parse = 6,
    Io = 7,
    Serialization = 8,
    Panic = 9,
}

struct Failure {
    status: AltsimStatus,
    message: String,
}

impl Failure {
    fn new(status: AltsimStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parameter(_) => AltsimStatus::InvalidParameter,
            Error::NotFound(_) => AltsimStatus::NotFound,
            Error::Config(_) => AltsimStatus::Config,
            Error::Parse { .. } => AltsimStatus::Parse,
            Error::Io { .. } => AltsimStatus::Io,
            Error::Json(_) | Error::Csv(_) => AltsimStatus::Serialization,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new(AltsimStatus::Serialization, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AltsimStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|panic| {
        let message = panic
            .downcast_ref::<&str>()
            .map(|s| (*s).to_owned())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".to_owned());
        Err(Failure::new(AltsimStatus::Panic, format!("internal panic: {message}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            AltsimStatus::Ok
        }
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(AltsimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::new(AltsimStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref()
        .ok_or_else(|| Failure::new(AltsimStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::new(AltsimStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn id_list(ptr: *const *const c_char, len: usize, what: &str) -> Result<Vec<ItemId>, Failure> {
    slice(ptr, len, what)?
        .iter()
        .map(|&p| text(p, what).map(ItemId::new))
        .collect()
}

unsafe fn store<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(AltsimStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn store_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    let c = CString::new(value).map_err(|_| Failure::new(AltsimStatus::Serialization, "result contains a NUL byte"))?;
    store(out, c.into_raw())
}

/// Message describing the last failed call on this thread, or null if the
/// last call succeeded. The pointer stays valid until the next call on the
/// same thread.
#[no_mangle]
pub extern "C" fn altsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string obtained from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn altsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// An immutable item catalog.
pub struct AltsimCatalog {
    inner: Arc<Catalog>,
}

/// A target-to-alternatives map.
pub struct AltsimAlternatives {
    inner: Arc<AlternativesMap>,
}

/// An alternatives-aware simulated user.
pub struct AltsimMetaSimulator {
    inner: MetaSimulator,
}

/// Generates a seeded synthetic catalog with one attribute per entry of
/// `domain_sizes`.
///
/// # Safety
/// `domain_sizes` must point to `n_domains` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_catalog_generate(
    seed: u64,
    n_items: usize,
    dimension: usize,
    domain_sizes: *const usize,
    n_domains: usize,
    noise: f64,
    out: *mut *mut AltsimCatalog,
) -> AltsimStatus {
    guard(|| {
        let domains = slice(domain_sizes, n_domains, "domain_sizes")?;
        let catalog = generate_synthetic_with_noise(seed, n_items, dimension, uniform_schema(domains), noise)?;
        store(out, Box::into_raw(Box::new(AltsimCatalog { inner: Arc::new(catalog) })))
    })
}

/// Loads a catalog file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_catalog_load(path: *const c_char, out: *mut *mut AltsimCatalog) -> AltsimStatus {
    guard(|| {
        let catalog = Catalog::load(text(path, "path")?)?;
        store(out, Box::into_raw(Box::new(AltsimCatalog { inner: Arc::new(catalog) })))
    })
}

/// Writes a catalog file.
///
/// # Safety
/// `catalog` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn altsim_catalog_save(catalog: *const AltsimCatalog, path: *const c_char) -> AltsimStatus {
    guard(|| {
        handle(catalog, "catalog")?.inner.save(text(path, "path")?)?;
        Ok(())
    })
}

/// Number of items in the catalog.
///
/// # Safety
/// `catalog` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_catalog_len(catalog: *const AltsimCatalog, out: *mut usize) -> AltsimStatus {
    guard(|| store(out, handle(catalog, "catalog")?.inner.len()))
}

/// Releases a catalog. Null is ignored.
///
/// # Safety
/// `catalog` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn altsim_catalog_free(catalog: *mut AltsimCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Cosine similarity of two vectors of length `dimension`.
///
/// # Safety
/// `a` and `b` must point to `dimension` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_similarity(
    a: *const f64,
    b: *const f64,
    dimension: usize,
    out: *mut f64,
) -> AltsimStatus {
    guard(|| {
        let s = catalog::similarity(slice(a, dimension, "a")?, slice(b, dimension, "b")?)?;
        store(out, s)
    })
}

/// Cosine similarity of two catalog items.
///
/// # Safety
/// `catalog` must be a live handle, `a` and `b` NUL-terminated ids and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_item_similarity(
    catalog: *const AltsimCatalog,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> AltsimStatus {
    guard(|| {
        let s = handle(catalog, "catalog")?
            .inner
            .similarity_between(text(a, "a")?, text(b, "b")?)?;
        store(out, s)
    })
}

/// The `k` nearest neighbours of `query` as a JSON array of
/// `[id, similarity]` pairs, written to `out_json`.
///
/// # Safety
/// `catalog` must be a live handle, `query` a NUL-terminated id and
/// `out_json` writable. Free the result with `altsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn altsim_nearest_neighbors(
    catalog: *const AltsimCatalog,
    query: *const c_char,
    k: usize,
    exclude_self: bool,
    out_json: *mut *mut c_char,
) -> AltsimStatus {
    guard(|| {
        let found = catalog::nearest_neighbors(&handle(catalog, "catalog")?.inner, text(query, "query")?, k, exclude_self)?;
        store_string(out_json, serde_json::to_string(&found)?)
    })
}

/// Loads an alternatives file and checks its ids against `catalog`.
///
/// # Safety
/// `catalog` must be a live handle, `path` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_alternatives_load(
    catalog: *const AltsimCatalog,
    path: *const c_char,
    out: *mut *mut AltsimAlternatives,
) -> AltsimStatus {
    guard(|| {
        let map = AlternativesMap::load(text(path, "path")?)?;
        map.validate(&handle(catalog, "catalog")?.inner)?;
        store(out, Box::into_raw(Box::new(AltsimAlternatives { inner: Arc::new(map) })))
    })
}

/// Releases an alternatives map. Null is ignored.
///
/// # Safety
/// `alternatives` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn altsim_alternatives_free(alternatives: *mut AltsimAlternatives) {
    if !alternatives.is_null() {
        drop(Box::from_raw(alternatives));
    }
}

/// The base simulator's critique text for `shown` relative to `target`.
///
/// # Safety
/// `catalog` must be a live handle, the ids NUL-terminated and `out_text`
/// writable. Free the result with `altsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn altsim_base_critique(
    catalog: *const AltsimCatalog,
    turn: u32,
    shown: *const c_char,
    target: *const c_char,
    out_text: *mut *mut c_char,
) -> AltsimStatus {
    guard(|| {
        let sim = BaseSimulator::new(handle(catalog, "catalog")?.inner.clone());
        let critique = sim.critique(turn, text(shown, "shown")?, text(target, "target")?)?;
        store_string(out_text, critique.text().to_owned())
    })
}

/// Creates a meta simulator that considers alternatives after `tolerance`
/// turns. The handle keeps its own references to both inputs.
///
/// # Safety
/// `catalog` and `alternatives` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_meta_simulator_new(
    catalog: *const AltsimCatalog,
    alternatives: *const AltsimAlternatives,
    tolerance: u32,
    out: *mut *mut AltsimMetaSimulator,
) -> AltsimStatus {
    guard(|| {
        let catalog = handle(catalog, "catalog")?.inner.clone();
        let alternatives = handle(alternatives, "alternatives")?.inner.clone();
        let sim = MetaSimulator::new(
            BaseSimulator::new(catalog.clone()),
            MetaSimConfig {
                tolerance,
                similarity_space: catalog,
            },
            alternatives,
        );
        store(out, Box::into_raw(Box::new(AltsimMetaSimulator { inner: sim })))
    })
}

/// One simulated turn as JSON: the critique, the effective target and the
/// switch event if the simulator moved to an alternative.
///
/// # Safety
/// `simulator` must be a live handle, the ids NUL-terminated and `out_json`
/// writable. Free the result with `altsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn altsim_meta_respond(
    simulator: *const AltsimMetaSimulator,
    turn: u32,
    shown: *const c_char,
    target: *const c_char,
    out_json: *mut *mut c_char,
) -> AltsimStatus {
    guard(|| {
        let sim = &handle(simulator, "simulator")?.inner;
        let response = sim.respond(turn, &ItemId::new(text(shown, "shown")?), &ItemId::new(text(target, "target")?))?;
        store_string(out_json, serde_json::to_string(&response)?)
    })
}

/// Releases a meta simulator. Null is ignored.
///
/// # Safety
/// `simulator` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn altsim_meta_simulator_free(simulator: *mut AltsimMetaSimulator) {
    if !simulator.is_null() {
        drop(Box::from_raw(simulator));
    }
}

/// Which ranking metric [`altsim_metric`] computes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltsimMetric {
    SuccessAt1 = 0,
    Ndcg = 1,
    Mrr = 2,
}

/// Scores a ranking of `n_ranked` distinct ids (best first) against a
/// non-empty relevant set. `k` is ignored for success at 1.
///
/// # Safety
/// `ranked` and `relevant` must point to `n_ranked` and `n_relevant`
/// NUL-terminated ids; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_metric(
    metric: AltsimMetric,
    ranked: *const *const c_char,
    n_ranked: usize,
    relevant: *const *const c_char,
    n_relevant: usize,
    k: usize,
    out: *mut f64,
) -> AltsimStatus {
    guard(|| {
        let ids = id_list(ranked, n_ranked, "ranked")?;
        let n = ids.len();
        let list = RankedList::new(ids.into_iter().enumerate().map(|(i, id)| (id, (n - i) as f64)).collect(), 0)?;
        let rel = RelevanceSet::new(id_list(relevant, n_relevant, "relevant")?)?;
        let value = match metric {
            AltsimMetric::SuccessAt1 => success_at_1(&list, &rel),
            AltsimMetric::Ndcg => ndcg_at_k(&list, &rel, k),
            AltsimMetric::Mrr => mrr_at_k(&list, &rel, k),
        };
        store(out, value)
    })
}

/// Cohen's kappa between two equally long binary label vectors (0 or 1).
///
/// # Safety
/// `a` and `b` must point to `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn altsim_cohens_kappa(a: *const u8, b: *const u8, n: usize, out: *mut f64) -> AltsimStatus {
    guard(|| {
        let to_judgments = |labels: &[u8]| -> Result<Judgments, Failure> {
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| match l {
                    0 | 1 => Ok(((ItemId::new("_"), ItemId::new(format!("{i:020}"))), l == 1)),
                    _ => Err(Failure::new(AltsimStatus::InvalidParameter, format!("label {l} at {i} is not 0 or 1"))),
                })
                .collect()
        };
        let kappa = cohens_kappa(&to_judgments(slice(a, n, "a")?)?, &to_judgments(slice(b, n, "b")?)?)?;
        store(out, kappa)
    })
}

fn config_from(toml_text: &str) -> Result<ExperimentConfig, Failure> {
    let config = ExperimentConfig::from_toml(toml_text)?;
    config.validate()?;
    Ok(config)
}

/// Runs the experiment described by a TOML configuration and writes the
/// full run report as JSON.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out_json` writable.
/// Free the result with `altsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn altsim_run_experiment(config_toml: *const c_char, out_json: *mut *mut c_char) -> AltsimStatus {
    guard(|| {
        let report = run_experiment(&config_from(text(config_toml, "config_toml")?)?)?;
        store_string(out_json, serde_json::to_string(&report)?)
    })
}

/// Paired base and meta runs for a TOML configuration; writes the
/// comparison table as JSON.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out_json` writable.
/// Free the result with `altsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn altsim_compare(config_toml: *const c_char, out_json: *mut *mut c_char) -> AltsimStatus {
    guard(|| {
        let cmp = compare(&config_from(text(config_toml, "config_toml")?)?)?;
        store_string(out_json, serde_json::to_string(&cmp.table)?)
    })
}
