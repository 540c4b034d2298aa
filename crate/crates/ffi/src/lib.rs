//! C ABI for `spde-gp`.
//!
//! Objects are opaque heap handles created by `*_new`/`*_train` functions
//! and released by the matching `*_free`. Every fallible call returns a
//! [`SpdeStatus`]; on failure a message for the calling thread is available
//! from [`spde_last_error`] until that thread's next failing call. Arrays are
//! caller-owned; matrices are row-major. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use spde_gp::gp::{GPModel, Observation, SpatioTemporalDataset, TrainedGp};
use spde_gp::graph::numbered_labels;
use spde_gp::kernels::{KernelContext, PreparedKernel};
use spde_gp::{Error, Graph, KernelSpec, STPoint};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericError = 4,
    Panic = 5,
}

/// Graph with vertices `0..n`.
pub struct SpdeGraph {
    graph: Arc<Graph>,
}

/// Kernel specification with its hyperparameters.
pub struct SpdeKernel {
    spec: KernelSpec,
}

/// Gaussian-process model conditioned on training data.
pub struct SpdeGp {
    gp: TrainedGp,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn status_of(e: &Error) -> SpdeStatus {
    match e {
        _ if e.is_numeric() => SpdeStatus::NumericError,
        Error::InvalidParameter(_)
        | Error::Unsupported { .. }
        | Error::NegativeTime(_)
        | Error::VertexOutOfRange { .. }
        | Error::DimensionMismatch(_) => SpdeStatus::InvalidArgument,
        _ => SpdeStatus::DataError,
    }
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> SpdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpdeStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer passed for `{what}`"));
            SpdeStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(&msg);
            SpdeStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            SpdeStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> FfiResult<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &'static str) -> FfiResult<&'a mut [T]> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn points(vertices: *const usize, times: *const f64, n: usize) -> FfiResult<Vec<STPoint>> {
    let v = slice(vertices, n, "vertices")?;
    let t = slice(times, n, "times")?;
    Ok(v.iter().zip(t).map(|(&v, &t)| STPoint::new(v, t)).collect())
}

/// Message of the calling thread's most recent failure (empty if none).
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn spde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a graph on vertices `0..n_vertices` from `n_edges` edges
/// `src[i] → dst[i]`. `weights` may be null for unit weights.
///
/// # Safety
/// `src`, `dst` and a non-null `weights` must point to `n_edges` elements;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_graph_new(
    n_vertices: usize,
    src: *const usize,
    dst: *const usize,
    weights: *const f64,
    n_edges: usize,
    directed: bool,
    out: *mut *mut SpdeGraph,
) -> SpdeStatus {
    guard(|| {
        let src = slice(src, n_edges, "src")?;
        let dst = slice(dst, n_edges, "dst")?;
        let w = if weights.is_null() {
            None
        } else {
            Some(slice(weights, n_edges, "weights")?)
        };
        let labels = numbered_labels("v", n_vertices);
        let mut edges = Vec::with_capacity(n_edges);
        for i in 0..n_edges {
            for &v in [src[i], dst[i]].iter() {
                if v >= n_vertices {
                    return Err(Error::VertexOutOfRange {
                        index: v,
                        n: n_vertices,
                    }
                    .into());
                }
            }
            edges.push((
                labels[src[i]].clone(),
                labels[dst[i]].clone(),
                w.map_or(1.0, |w| w[i]),
            ));
        }
        let graph = Graph::new(labels.clone(), edges, directed)?;
        store(
            out,
            SpdeGraph {
                graph: Arc::new(graph),
            },
        )
    })
}

/// Undirected path graph `0 – 1 – … – n−1` with unit weights.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_graph_path(
    n_vertices: usize,
    out: *mut *mut SpdeGraph,
) -> SpdeStatus {
    guard(|| {
        store(
            out,
            SpdeGraph {
                graph: Arc::new(Graph::path(n_vertices)?),
            },
        )
    })
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spde_graph_n_vertices(graph: *const SpdeGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.n_vertices())
}

/// # Safety
/// `graph` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn spde_graph_free(graph: *mut SpdeGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Default-parameterized kernel by name: `laplacian`, `matern`,
/// `sep-matern-rbf`, `sep-laplacian-rbf`, `shek` or `swek`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_kernel_new(
    name: *const c_char,
    out: *mut *mut SpdeKernel,
) -> SpdeStatus {
    guard(|| {
        let spec = KernelSpec::named(string(name, "name")?)?;
        store(out, SpdeKernel { spec })
    })
}

/// Kernel from its JSON description, e.g.
/// `{"kind":"shek","c":1,"sigma":1,"nu":2,"kappa":10}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_kernel_from_json(
    json: *const c_char,
    out: *mut *mut SpdeKernel,
) -> SpdeStatus {
    guard(|| {
        let spec: KernelSpec = serde_json::from_str(string(json, "json")?)
            .map_err(|e| Failure::Invalid(format!("invalid kernel JSON: {e}")))?;
        spec.validate()?;
        store(out, SpdeKernel { spec })
    })
}

/// Sets a named hyperparameter (`c`, `sigma`, `nu`, `kappa`, `variance`,
/// `time_lengthscale`, `frequency`).
///
/// # Safety
/// `kernel` must be a live handle and `name` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn spde_kernel_set(
    kernel: *mut SpdeKernel,
    name: *const c_char,
    value: f64,
) -> SpdeStatus {
    guard(|| {
        let k = kernel.as_mut().ok_or(Failure::Null("kernel"))?;
        let name = string(name, "name")?;
        let mut spec = k.spec;
        spec.set(name, value)?;
        spec.validate()?;
        k.spec = spec;
        Ok(())
    })
}

/// # Safety
/// `kernel` must be a live handle, `name` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spde_kernel_get(
    kernel: *const SpdeKernel,
    name: *const c_char,
    out: *mut f64,
) -> SpdeStatus {
    guard(|| {
        let k = non_null(kernel, "kernel")?;
        let name = string(name, "name")?;
        let v = k
            .spec
            .get(name)
            .ok_or_else(|| Failure::Invalid(format!("kernel has no hyperparameter `{name}`")))?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = v;
        Ok(())
    })
}

/// # Safety
/// `kernel` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn spde_kernel_free(kernel: *mut SpdeKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Writes the `n × n` covariance between the points `(vertices[i],
/// times[i])` to `out` (row-major). Times are used as given, so process
/// kernels need `times ≥ 0`.
///
/// # Safety
/// `vertices` and `times` must hold `n` elements and `out` `n·n`.
#[no_mangle]
pub unsafe extern "C" fn spde_kernel_gram(
    kernel: *const SpdeKernel,
    graph: *const SpdeGraph,
    vertices: *const usize,
    times: *const f64,
    n: usize,
    out: *mut f64,
) -> SpdeStatus {
    guard(|| {
        let k = non_null(kernel, "kernel")?;
        let g = non_null(graph, "graph")?;
        let pts = points(vertices, times, n)?;
        let out = slice_mut(out, n * n, "out")?;
        let ctx = KernelContext::new(&g.graph, k.spec.laplacian)?;
        let gram = PreparedKernel::new(&k.spec, &ctx)?.gram(&pts)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = gram.matrix[(i, j)];
            }
        }
        Ok(())
    })
}

/// Conditions a GP with the given kernel and observation-noise variance on
/// `n` observations `y[i]` at `(vertices[i], times[i])`. The earliest
/// training time is mapped to process time 1 and each vertex's training
/// mean is used as its prior mean.
///
/// # Safety
/// Arrays must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spde_gp_train(
    kernel: *const SpdeKernel,
    graph: *const SpdeGraph,
    noise_variance: f64,
    vertices: *const usize,
    times: *const f64,
    y: *const f64,
    n: usize,
    out: *mut *mut SpdeGp,
) -> SpdeStatus {
    guard(|| {
        let k = non_null(kernel, "kernel")?;
        let g = non_null(graph, "graph")?;
        let pts = points(vertices, times, n)?;
        let y = slice(y, n, "y")?;
        let obs = pts
            .iter()
            .zip(y)
            .map(|(&point, &y)| Observation { point, y })
            .collect();
        let data = SpatioTemporalDataset::new(g.graph.clone(), obs)?;
        let model = GPModel::new(k.spec).with_noise(noise_variance);
        let ctx = KernelContext::new(&g.graph, k.spec.laplacian)?;
        store(
            out,
            SpdeGp {
                gp: TrainedGp::new(&model, &ctx, &data)?,
            },
        )
    })
}

/// # Safety
/// `gp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spde_gp_log_marginal_likelihood(
    gp: *const SpdeGp,
    out: *mut f64,
) -> SpdeStatus {
    guard(|| {
        let gp = non_null(gp, "gp")?;
        *out.as_mut().ok_or(Failure::Null("out"))? = gp.gp.log_marginal_likelihood();
        Ok(())
    })
}

/// Posterior mean (and, if `variance` is non-null, latent variance) at
/// `m` query points.
///
/// # Safety
/// `vertices`, `times`, `mean` and a non-null `variance` must hold `m`
/// elements.
#[no_mangle]
pub unsafe extern "C" fn spde_gp_predict(
    gp: *const SpdeGp,
    vertices: *const usize,
    times: *const f64,
    m: usize,
    mean: *mut f64,
    variance: *mut f64,
) -> SpdeStatus {
    guard(|| {
        let gp = non_null(gp, "gp")?;
        let pts = points(vertices, times, m)?;
        let mean = slice_mut(mean, m, "mean")?;
        let pred = gp.gp.predict(&pts, false)?;
        mean.copy_from_slice(&pred.mean);
        if !variance.is_null() {
            slice_mut(variance, m, "variance")?.copy_from_slice(&pred.variance);
        }
        Ok(())
    })
}

/// # Safety
/// `gp` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn spde_gp_free(gp: *mut SpdeGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}
