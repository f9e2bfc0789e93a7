//! C ABI for `otdiff`.
//!
//! Objects are exposed as opaque handles created by `otdiff_*_new`-style
//! constructors and released with the matching `*_free` function. Every
//! fallible call returns an [`OtdiffStatus`]; on failure a message is kept
//! per thread and can be read with [`otdiff_last_error`].
//!
//! Signals are row-major `n x channels` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use otdiff::geometry::{GaussianComponent, GaussianMixture, Graph, PointCloud, Voxel, VoxelGrid};
use otdiff::{
    build_exponential_operator, build_gaussian_operator, build_gmm_operator, build_graph_operator,
    build_voxel_operator, diffuse, smatvec, top_eigenpairs, DiffusionOperator, Domain, EigenOptions, Error,
    Signal, SinkhornOptions, SmoothingOperator,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtdiffStatus {
    Ok = 0,
    NullPointer = 1,
    Format = 2,
    Value = 3,
    Shape = 4,
    Capability = 5,
    Numerical = 6,
    Size = 7,
    Io = 8,
    Panic = 9,
}

/// Smoothing operator `S = K M`.
pub struct OtdiffOperator {
    inner: SmoothingOperator,
}

/// Sinkhorn-normalized diffusion operator `Q = Lambda S Lambda`.
pub struct OtdiffDiffusion {
    inner: DiffusionOperator,
}

/// Summary of a Sinkhorn run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct OtdiffSinkhornInfo {
    /// 1 when the tolerance was reached.
    pub converged: i32,
    pub iterations: usize,
    pub final_error: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> OtdiffStatus {
    match err {
        Error::Format(_) => OtdiffStatus::Format,
        Error::Value(_) => OtdiffStatus::Value,
        Error::Shape { .. } => OtdiffStatus::Shape,
        Error::Capability(_) => OtdiffStatus::Capability,
        Error::Numerical(_) => OtdiffStatus::Numerical,
        Error::Size(_) => OtdiffStatus::Size,
        Error::Io { .. } => OtdiffStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

fn guard(body: impl FnOnce() -> Outcome) -> OtdiffStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => OtdiffStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed for `{name}`"));
            OtdiffStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_owned());
            OtdiffStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, name: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn masses_or_uniform(p: *const f64, n: usize) -> Result<Vec<f64>, Failure> {
    if p.is_null() {
        Ok(vec![1.0 / n.max(1) as f64; n])
    } else {
        Ok(input(p, n, "masses")?.to_vec())
    }
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn otdiff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn otdiff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn point_operator(
    dim: usize,
    n: usize,
    positions: *const f64,
    masses: *const f64,
    sigma: f64,
    exponential: bool,
    out: *mut *mut OtdiffOperator,
) -> Outcome {
    let pos = input(positions, n * dim, "positions")?.to_vec();
    let cloud = PointCloud::new(dim, pos, masses_or_uniform(masses, n)?)?;
    let inner = if exponential {
        build_exponential_operator(&cloud, sigma)?
    } else {
        build_gaussian_operator(&cloud, sigma)?
    };
    store(out, OtdiffOperator { inner })
}

/// Gaussian point-cloud operator. `positions` is `n x dim`; `masses` may be
/// NULL for uniform masses `1/n`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_gaussian(
    dim: usize,
    n: usize,
    positions: *const f64,
    masses: *const f64,
    sigma: f64,
    out: *mut *mut OtdiffOperator,
) -> OtdiffStatus {
    guard(|| point_operator(dim, n, positions, masses, sigma, false, out))
}

/// Exponential point-cloud operator `exp(-|x - y| / sigma)`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_exponential(
    dim: usize,
    n: usize,
    positions: *const f64,
    masses: *const f64,
    sigma: f64,
    out: *mut *mut OtdiffOperator,
) -> OtdiffStatus {
    guard(|| point_operator(dim, n, positions, masses, sigma, true, out))
}

/// Graph operator from `n_edges` undirected edges `(edge_i[e], edge_j[e])`
/// with weights `weights[e]`, regularized by `epsilon`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_graph(
    n_vertices: usize,
    n_edges: usize,
    edge_i: *const usize,
    edge_j: *const usize,
    weights: *const f64,
    masses: *const f64,
    epsilon: f64,
    out: *mut *mut OtdiffOperator,
) -> OtdiffStatus {
    guard(|| {
        let ei = input(edge_i, n_edges, "edge_i")?;
        let ej = input(edge_j, n_edges, "edge_j")?;
        let w = input(weights, n_edges, "weights")?;
        let edges = (0..n_edges).map(|e| (ei[e], ej[e], w[e])).collect();
        let graph = Graph::new(n_vertices, edges, masses_or_uniform(masses, n_vertices)?)?;
        store(out, OtdiffOperator { inner: build_graph_operator(&graph, epsilon)? })
    })
}

/// Gaussian-mixture operator. `means` is `n x dim`, `covariances` is
/// `n x dim x dim` (row-major per component), `weights` are the masses.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_gmm(
    dim: usize,
    n: usize,
    weights: *const f64,
    means: *const f64,
    covariances: *const f64,
    sigma: f64,
    out: *mut *mut OtdiffOperator,
) -> OtdiffStatus {
    guard(|| {
        let w = input(weights, n, "weights")?;
        let m = input(means, n * dim, "means")?;
        let c = input(covariances, n * dim * dim, "covariances")?;
        let comps = (0..n)
            .map(|i| GaussianComponent {
                weight: w[i],
                mean: m[i * dim..(i + 1) * dim].to_vec(),
                covariance: c[i * dim * dim..(i + 1) * dim * dim].to_vec(),
            })
            .collect();
        let gmm = GaussianMixture::new(dim, comps)?;
        store(out, OtdiffOperator { inner: build_gmm_operator(&gmm, sigma)? })
    })
}

/// Sparse voxel operator. `indices` is `n x 3` cell indices inside `dims`.
///
/// # Safety
/// Pointers must be valid for the stated lengths (`dims`, `origin`: 3).
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_voxel(
    dims: *const usize,
    origin: *const f64,
    spacing: f64,
    n: usize,
    indices: *const usize,
    masses: *const f64,
    sigma: f64,
    out: *mut *mut OtdiffOperator,
) -> OtdiffStatus {
    guard(|| {
        let d = input(dims, 3, "dims")?;
        let o = input(origin, 3, "origin")?;
        let idx = input(indices, 3 * n, "indices")?;
        let m = masses_or_uniform(masses, n)?;
        let occupied = (0..n)
            .map(|i| Voxel {
                index: [idx[3 * i], idx[3 * i + 1], idx[3 * i + 2]],
                mass: m[i],
            })
            .collect();
        let grid = VoxelGrid::new([d[0], d[1], d[2]], [o[0], o[1], o[2]], spacing, occupied)?;
        store(out, OtdiffOperator { inner: build_voxel_operator(&grid, sigma)? })
    })
}

/// Releases an operator. NULL is ignored.
///
/// # Safety
/// `op` must come from an `otdiff_operator_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_free(op: *mut OtdiffOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Number of degrees of freedom.
///
/// # Safety
/// `op` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_len(op: *const OtdiffOperator, out: *mut usize) -> OtdiffStatus {
    guard(|| {
        let op = borrow(op, "op")?;
        *output(out, 1, "out")?.first_mut().unwrap() = op.inner.len();
        Ok(())
    })
}

/// `out = S f` for an `n x channels` signal.
///
/// # Safety
/// `f` and `out` must hold `n * channels` doubles.
#[no_mangle]
pub unsafe extern "C" fn otdiff_operator_matvec(
    op: *const OtdiffOperator,
    f: *const f64,
    channels: usize,
    out: *mut f64,
) -> OtdiffStatus {
    guard(|| {
        let op = borrow(op, "op")?;
        let n = op.inner.len();
        let signal = Signal::new(n, channels, input(f, n * channels, "f")?.to_vec())?;
        let result = smatvec(&op.inner, &signal)?;
        output(out, n * channels, "out")?.copy_from_slice(result.as_slice());
        Ok(())
    })
}

/// Runs the symmetric Sinkhorn loop on a copy of `op`. `log_domain` selects
/// the log-sum-exp evaluation (point and mixture operators only). A
/// diffusion handle is returned even when the tolerance is not reached;
/// check `info`.
///
/// # Safety
/// `op` must be a live handle; `out` writable; `info` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn otdiff_sinkhorn(
    op: *const OtdiffOperator,
    tol: f64,
    max_iter: usize,
    log_domain: i32,
    out: *mut *mut OtdiffDiffusion,
    info: *mut OtdiffSinkhornInfo,
) -> OtdiffStatus {
    guard(|| {
        let op = borrow(op, "op")?;
        let mode = if log_domain != 0 { Domain::Log } else { Domain::Linear };
        let opts = SinkhornOptions::default().with_tol(tol).with_max_iter(max_iter).with_mode(mode);
        let scaling = otdiff::sinkhorn_normalize(&op.inner, &opts)?;
        if !info.is_null() {
            *info = OtdiffSinkhornInfo {
                converged: i32::from(scaling.converged),
                iterations: scaling.iterations,
                final_error: scaling.final_error,
            };
        }
        let inner = DiffusionOperator::new_unconverged(op.inner.clone(), scaling)?;
        store(out, OtdiffDiffusion { inner })
    })
}

/// Releases a diffusion handle. NULL is ignored.
///
/// # Safety
/// `diff` must come from [`otdiff_sinkhorn`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otdiff_diffusion_free(diff: *mut OtdiffDiffusion) {
    if !diff.is_null() {
        drop(Box::from_raw(diff));
    }
}

/// Copies the `n` log-scales `log lambda_i`.
///
/// # Safety
/// `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn otdiff_diffusion_log_scales(diff: *const OtdiffDiffusion, out: *mut f64) -> OtdiffStatus {
    guard(|| {
        let diff = borrow(diff, "diff")?;
        let ls = &diff.inner.scaling().log_scales;
        output(out, ls.len(), "out")?.copy_from_slice(ls);
        Ok(())
    })
}

/// `out = Q^steps f` for an `n x channels` signal.
///
/// # Safety
/// `f` and `out` must hold `n * channels` doubles.
#[no_mangle]
pub unsafe extern "C" fn otdiff_diffusion_apply(
    diff: *const OtdiffDiffusion,
    f: *const f64,
    channels: usize,
    steps: usize,
    out: *mut f64,
) -> OtdiffStatus {
    guard(|| {
        let diff = borrow(diff, "diff")?;
        let n = diff.inner.len();
        let signal = Signal::new(n, channels, input(f, n * channels, "f")?.to_vec())?;
        let result = diffuse(&diff.inner, &signal, steps)?;
        output(out, n * channels, "out")?.copy_from_slice(result.as_slice());
        Ok(())
    })
}

/// Leading `k` eigenpairs of `Q`: `values` (k, descending), `vectors`
/// (`n x k` row-major, M-orthonormal columns), `residuals` (k, may be NULL).
///
/// # Safety
/// Output buffers must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn otdiff_top_eigenpairs(
    diff: *const OtdiffDiffusion,
    k: usize,
    solver_tol: f64,
    max_iters: usize,
    seed: u64,
    values: *mut f64,
    vectors: *mut f64,
    residuals: *mut f64,
) -> OtdiffStatus {
    guard(|| {
        let diff = borrow(diff, "diff")?;
        let opts = EigenOptions {
            solver_tol,
            max_iters,
            seed,
            block_size: None,
        };
        let basis = top_eigenpairs(&diff.inner, k, &opts)?;
        let n = diff.inner.len();
        let got = basis.eigenvalues.len();
        output(values, k, "values")?[..got].copy_from_slice(&basis.eigenvalues);
        let vec_out = output(vectors, n * k, "vectors")?;
        for i in 0..n {
            vec_out[i * k..i * k + got].copy_from_slice(basis.eigenvectors.row(i));
        }
        if !residuals.is_null() {
            output(residuals, k, "residuals")?[..got].copy_from_slice(&basis.residuals);
        }
        Ok(())
    })
}
