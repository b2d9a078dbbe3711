//! C ABI for the spectral clustering oracle.
//!
//! Every function returns an [`SlcaStatus`]. On failure the message is available from
//! [`slca_last_error`] on the same thread until the next failing call. Handles are
//! opaque; free each one with its matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use spectral_lca::cluster::{find_centers, read_partition_file, ClusterOracle, ClusterParams, OrderedPartition, SearchConfig};
use spectral_lca::graph::{generate_clusterable, read_graph_file, GeneratorConfig, RegularGraph};
use spectral_lca::oracle::{initialize_oracle, read_oracle_file, write_oracle_file, DotEngine, OracleData, OracleParams};
use spectral_lca::{Error, Seed};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlcaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    InitFailure = 5,
    SearchFailure = 6,
    Numerical = 7,
    Capability = 8,
    Internal = 9,
}

/// Oracle sizes. All fields must be set.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SlcaOracleParams {
    pub delta: f64,
    pub xi: f64,
    pub t: usize,
    pub r_init: u32,
    pub r_query: u32,
    pub s: usize,
    pub m: usize,
    pub k: usize,
}

/// A d-regular graph with optional ground-truth clusters.
pub struct SlcaGraph {
    graph: Arc<RegularGraph>,
    clusters: Vec<Vec<usize>>,
}

/// A dot-product oracle bound to its graph.
pub struct SlcaOracle {
    // Borrows from the two Arcs below; declared first so it is dropped first.
    engine: Box<DotEngine<'static>>,
    data: Arc<OracleData>,
    graph: Arc<RegularGraph>,
}

/// Cluster-label queries under an accepted partition.
pub struct SlcaClusterer {
    // Borrows from `engine`, which borrows from the Arcs.
    oracle: ClusterOracle<'static>,
    _engine: Box<DotEngine<'static>>,
    _data: Arc<OracleData>,
    _graph: Arc<RegularGraph>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SlcaStatus {
    match e {
        Error::Usage(_) | Error::DegreeOverflow { .. } | Error::CandidateInvalid(_) => SlcaStatus::InvalidArgument,
        Error::Capability(_) => SlcaStatus::Capability,
        Error::Generation(_) | Error::Numerical(_) | Error::ContextFailure { .. } => SlcaStatus::Numerical,
        Error::InitFailure { .. } => SlcaStatus::InitFailure,
        Error::SearchFailure { .. } => SlcaStatus::SearchFailure,
        Error::Format(_) => SlcaStatus::Format,
        Error::Io(_) => SlcaStatus::Io,
    }
}

struct Fail(SlcaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SlcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlcaStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            SlcaStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SlcaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(SlcaStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn seed_arg(p: *const c_char) -> Result<Seed, Fail> {
    if p.is_null() {
        return Err(null("seed"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(SlcaStatus::InvalidArgument, "seed is not UTF-8".into()))?;
    Ok(Seed::from_hex(s)?)
}

unsafe fn out_arg<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    p.as_mut().ok_or_else(|| null("output pointer"))
}

/// Extends the lifetime of an engine over data kept alive by the owning handle.
fn engine_for(graph: &Arc<RegularGraph>, data: &Arc<OracleData>) -> Box<DotEngine<'static>> {
    // SAFETY: the Arcs' targets never move, and every handle stores the engine in a
    // field declared before the Arcs, so it is dropped while they are still alive.
    let g: &'static RegularGraph = unsafe { &*Arc::as_ptr(graph) };
    let d: &'static OracleData = unsafe { &*Arc::as_ptr(data) };
    Box::new(DotEngine::new(g, d))
}

/// Message of the last failure on this thread. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn slca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a graph file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slca_graph_load(path: *const c_char, out: *mut *mut SlcaGraph) -> SlcaStatus {
    guard(|| {
        let out = out_arg(out)?;
        let gf = read_graph_file(&path_arg(path, "path")?)?;
        let clusters = gf.clusters();
        *out = Box::into_raw(Box::new(SlcaGraph { graph: Arc::new(gf.graph), clusters }));
        Ok(())
    })
}

/// Generates a clusterable instance with `k` clusters of the given sizes.
///
/// # Safety
/// `sizes` must point to `k` values, `seed_hex` must be a valid C string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slca_graph_generate(
    k: usize,
    sizes: *const usize,
    d: usize,
    p_cross: f64,
    seed_hex: *const c_char,
    out: *mut *mut SlcaGraph,
) -> SlcaStatus {
    guard(|| {
        let out = out_arg(out)?;
        if sizes.is_null() {
            return Err(null("sizes"));
        }
        let sizes = std::slice::from_raw_parts(sizes, k).to_vec();
        let cfg = GeneratorConfig { k, sizes, d, p_cross, ..Default::default() };
        let inst = generate_clusterable(&cfg, seed_arg(seed_hex)?)?;
        *out = Box::into_raw(Box::new(SlcaGraph { graph: Arc::new(inst.graph), clusters: inst.clusters }));
        Ok(())
    })
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn slca_graph_vertex_count(g: *const SlcaGraph) -> usize {
    g.as_ref().map_or(0, |g| g.graph.n())
}

/// Ground-truth cluster (0-based) of vertex `x`, or -1 if unknown.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn slca_graph_cluster_of(g: *const SlcaGraph, x: usize) -> i64 {
    g.as_ref()
        .and_then(|g| g.clusters.iter().position(|c| c.binary_search(&x).is_ok()))
        .map_or(-1, |i| i as i64)
}

/// # Safety
/// `g` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn slca_graph_free(g: *mut SlcaGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

fn oracle_handle(graph: Arc<RegularGraph>, data: OracleData) -> *mut SlcaOracle {
    let data = Arc::new(data);
    let engine = engine_for(&graph, &data);
    Box::into_raw(Box::new(SlcaOracle { engine, data, graph }))
}

/// Builds the oracle. The graph handle stays owned by the caller.
///
/// # Safety
/// All pointers must be valid; `seed_hex` must be a C string.
#[no_mangle]
pub unsafe extern "C" fn slca_oracle_init(
    g: *const SlcaGraph,
    params: *const SlcaOracleParams,
    seed_hex: *const c_char,
    out: *mut *mut SlcaOracle,
) -> SlcaStatus {
    guard(|| {
        let out = out_arg(out)?;
        let g = g.as_ref().ok_or_else(|| null("graph"))?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let params = OracleParams { delta: p.delta, xi: p.xi, t: p.t, r_init: p.r_init, r_query: p.r_query, s: p.s, m: p.m, k: p.k };
        let data = initialize_oracle(&g.graph, &params, seed_arg(seed_hex)?, 1e-9)?;
        *out = oracle_handle(g.graph.clone(), data);
        Ok(())
    })
}

/// Loads a saved oracle and checks it belongs to `g`.
///
/// # Safety
/// All pointers must be valid; `path` must be a C string.
#[no_mangle]
pub unsafe extern "C" fn slca_oracle_load(g: *const SlcaGraph, path: *const c_char, out: *mut *mut SlcaOracle) -> SlcaStatus {
    guard(|| {
        let out = out_arg(out)?;
        let g = g.as_ref().ok_or_else(|| null("graph"))?;
        let data = read_oracle_file(&path_arg(path, "path")?)?;
        data.check_graph(&g.graph)?;
        *out = oracle_handle(g.graph.clone(), data);
        Ok(())
    })
}

/// # Safety
/// `o` must be a live oracle handle and `path` a C string.
#[no_mangle]
pub unsafe extern "C" fn slca_oracle_save(o: *const SlcaOracle, path: *const c_char) -> SlcaStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        write_oracle_file(&path_arg(path, "path")?, &o.data)?;
        Ok(())
    })
}

/// Approximate dot product of the spectral embeddings of `x` and `y`.
///
/// # Safety
/// `o` must be a live oracle handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slca_oracle_dot(o: *const SlcaOracle, x: usize, y: usize, out: *mut f64) -> SlcaStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = o.engine.dot(x, y)?;
        Ok(())
    })
}

/// Graph probes made through this oracle so far, including initialization.
///
/// # Safety
/// `o` must be null or a live oracle handle.
#[no_mangle]
pub unsafe extern "C" fn slca_oracle_probe_count(o: *const SlcaOracle) -> u64 {
    o.as_ref().map_or(0, |o| o.graph.probe_count())
}

/// # Safety
/// `o` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn slca_oracle_free(o: *mut SlcaOracle) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

fn clusterer_handle(o: &SlcaOracle, partition: &OrderedPartition, seed: Seed) -> Result<*mut SlcaClusterer, Fail> {
    let engine = engine_for(&o.graph, &o.data);
    // SAFETY: the boxed engine does not move and outlives `oracle` (field order).
    let e: &'static DotEngine<'static> = unsafe { &*(engine.as_ref() as *const DotEngine<'static>) };
    let oracle = ClusterOracle::new(e, e, partition, seed)?;
    Ok(Box::into_raw(Box::new(SlcaClusterer { oracle, _engine: engine, _data: o.data.clone(), _graph: o.graph.clone() })))
}

/// Opens a partition file written by `find-centers`.
///
/// # Safety
/// `o` must be a live oracle handle, `path` a C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slca_clusterer_open(o: *const SlcaOracle, path: *const c_char, out: *mut *mut SlcaClusterer) -> SlcaStatus {
    guard(|| {
        let out = out_arg(out)?;
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        let pf = read_partition_file(&path_arg(path, "path")?)?;
        if pf.k != o.data.params.k {
            return Err(Fail(SlcaStatus::InvalidArgument, format!("partition has k={}, oracle k={}", pf.k, o.data.params.k)));
        }
        *out = clusterer_handle(o, &pf.partition()?, pf.seed.derive(4))?;
        Ok(())
    })
}

/// Exhaustive center search with measured conductance proxies.
///
/// # Safety
/// `o` must be a live oracle handle, `seed_hex` a C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slca_clusterer_find(
    o: *const SlcaOracle,
    eps_hat: f64,
    phi_hat: f64,
    eta: f64,
    sample_size: usize,
    seed_hex: *const c_char,
    out: *mut *mut SlcaClusterer,
) -> SlcaStatus {
    guard(|| {
        let out = out_arg(out)?;
        let o = o.as_ref().ok_or_else(|| null("oracle"))?;
        let seed = seed_arg(seed_hex)?;
        let params = ClusterParams { k: o.data.params.k, eps_hat, phi_hat, ..Default::default() };
        let cfg = SearchConfig { eta, sample_size: (sample_size > 0).then_some(sample_size), ..Default::default() };
        let found = find_centers(&o.engine, &o.engine, &params, &cfg, None, &seed.derive(3))?;
        *out = clusterer_handle(o, &found.partition, seed.derive(4))?;
        Ok(())
    })
}

/// Cluster label in 1..=k of vertex `x`.
///
/// # Safety
/// `c` must be a live clusterer handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slca_clusterer_assign(c: *const SlcaClusterer, x: usize, out: *mut u32) -> SlcaStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("clusterer"))?;
        let out = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *out = c.oracle.assign(x)?;
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn slca_clusterer_free(c: *mut SlcaClusterer) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
