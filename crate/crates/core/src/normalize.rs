//! Symmetric Sinkhorn normalization and the diffusion operators it yields.
//!
//! Given a smoothing operator `S = K M`, the symmetric Sinkhorn loop finds a
//! positive diagonal `Lambda = diag(exp(l))` such that `Q = Lambda S Lambda`
//! preserves constants. `Q` is then M-symmetric, entrywise nonnegative and
//! has its spectrum in `[0, 1]`: a mass-preserving diffusion.
//!
//! The classical row and symmetric normalizations and the truncated
//! spectral heat kernel are provided as baselines.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Graph;
use crate::operators::{smatvec, smatvec_log, Modality, SmoothingOperator};
use crate::signal::Signal;

/// Domain in which the Sinkhorn update is carried out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug)]
pub struct SinkhornOptions {
    /// Stop once the mass-weighted mean of `|Q 1 - 1|` is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub mode: Domain,
    /// Warm start; zeros (`Lambda = I`) when absent.
    pub initial_log_scales: Option<Vec<f64>>,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            tol: 1e-6,
            max_iter: 200,
            mode: Domain::Linear,
            initial_log_scales: None,
        }
    }
}

impl SinkhornOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_mode(mut self, mode: Domain) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_initial(mut self, log_scales: Vec<f64>) -> Self {
        self.initial_log_scales = Some(log_scales);
        self
    }
}

/// Diagonal scaling `Lambda_ii = exp(log_scales[i])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingVector {
    pub log_scales: Vec<f64>,
    pub converged: bool,
    pub final_error: f64,
    pub iterations: usize,
}

impl ScalingVector {
    pub fn len(&self) -> usize {
        self.log_scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_scales.is_empty()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.log_scales.iter().map(|l| l.exp()).collect()
    }
}

/// Outcome of a Sinkhorn run together with its error curve.
#[derive(Clone, Debug)]
pub struct SinkhornRun {
    pub scaling: ScalingVector,
    /// `history[i]` is the convergence error after `i` updates.
    pub history: Vec<f64>,
}

fn weighted_mean_deviation(masses: &[f64], q_one: impl Iterator<Item = f64>) -> f64 {
    let total: f64 = masses.iter().sum();
    masses
        .iter()
        .zip(q_one)
        .map(|(m, q)| m * (q - 1.0).abs())
        .sum::<f64>()
        / total
}

fn check_well_posed(op: &SmoothingOperator) -> Result<()> {
    if op.modality() == Modality::Graph && !op.graph_connected_or_regularized() {
        return Err(Error::numerical(
            "graph is disconnected and epsilon = 0; use epsilon > 0 for Sinkhorn normalization",
        ));
    }
    Ok(())
}

/// One evaluation of `S Lambda 1` in the requested domain. Returns
/// `log(S exp(l))`.
fn log_degrees(op: &SmoothingOperator, log_scales: &[f64], mode: Domain) -> Result<Vec<f64>> {
    let out = match mode {
        Domain::Linear => {
            let lambda = Signal::from_column(log_scales.iter().map(|l| l.exp()).collect());
            smatvec(op, &lambda)?.into_vec().into_iter().map(f64::ln).collect()
        }
        Domain::Log => smatvec_log(op, &Signal::from_column(log_scales.to_vec()))?.into_vec(),
    };
    if out.iter().any(|d| !d.is_finite()) {
        let hint = if mode == Domain::Linear && op.supports_log_domain() {
            " (try the log domain)"
        } else {
            ""
        };
        return Err(Error::numerical(format!(
            "Sinkhorn degrees are not finite and positive{hint}"
        )));
    }
    Ok(out)
}

/// Symmetric Sinkhorn loop: `d = S Lambda 1`, `Lambda <- sqrt(Lambda / d)`.
pub fn sinkhorn_normalize(op: &SmoothingOperator, opts: &SinkhornOptions) -> Result<ScalingVector> {
    sinkhorn_trace(op, opts).map(|run| run.scaling)
}

/// [`sinkhorn_normalize`], also returning the error after every update.
pub fn sinkhorn_trace(op: &SmoothingOperator, opts: &SinkhornOptions) -> Result<SinkhornRun> {
    check_well_posed(op)?;
    let n = op.len();
    let mut ell = match &opts.initial_log_scales {
        Some(init) if init.len() != n => {
            return Err(Error::Shape {
                expected: n,
                actual: init.len(),
            })
        }
        Some(init) => init.clone(),
        None => vec![0.0; n],
    };
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let log_d = log_degrees(op, &ell, opts.mode)?;
        let error = weighted_mean_deviation(
            op.masses(),
            ell.iter().zip(&log_d).map(|(l, d)| (l + d).exp()),
        );
        if error.is_nan() {
            return Err(Error::numerical("Sinkhorn error is NaN"));
        }
        history.push(error);
        if error <= opts.tol || iterations >= opts.max_iter {
            let converged = error <= opts.tol;
            if !converged {
                log::warn!(
                    "Sinkhorn did not reach tol {} after {iterations} iterations (error {error:e})",
                    opts.tol
                );
            }
            return Ok(SinkhornRun {
                scaling: ScalingVector {
                    log_scales: ell,
                    converged,
                    final_error: error,
                    iterations,
                },
                history,
            });
        }
        for (l, d) in ell.iter_mut().zip(&log_d) {
            *l = 0.5 * (*l - d);
        }
        iterations += 1;
    }
}

/// Mass-weighted mean deviation `sum_i m_i |(Lambda S Lambda 1)_i - 1| / sum_i m_i`.
pub fn convergence_error(op: &SmoothingOperator, scaling: &ScalingVector) -> Result<f64> {
    if scaling.len() != op.len() {
        return Err(Error::Shape {
            expected: op.len(),
            actual: scaling.len(),
        });
    }
    let mode = if op.supports_log_domain() {
        Domain::Log
    } else {
        Domain::Linear
    };
    let log_d = log_degrees(op, &scaling.log_scales, mode)?;
    Ok(weighted_mean_deviation(
        op.masses(),
        scaling.log_scales.iter().zip(&log_d).map(|(l, d)| (l + d).exp()),
    ))
}

/// `Q = Lambda S Lambda` as a matrix-free operator.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    op: SmoothingOperator,
    scaling: ScalingVector,
    scales: Vec<f64>,
}

impl DiffusionOperator {
    /// Pairs an operator with a converged scaling of the same length.
    pub fn new(op: SmoothingOperator, scaling: ScalingVector) -> Result<Self> {
        if !scaling.converged {
            return Err(Error::value("scaling vector did not converge"));
        }
        DiffusionOperator::new_unconverged(op, scaling)
    }

    /// Like [`DiffusionOperator::new`] but accepts a scaling that stopped
    /// before reaching its tolerance.
    pub fn new_unconverged(op: SmoothingOperator, scaling: ScalingVector) -> Result<Self> {
        if scaling.len() != op.len() {
            return Err(Error::Shape {
                expected: op.len(),
                actual: scaling.len(),
            });
        }
        if scaling.log_scales.iter().any(|l| !l.is_finite()) {
            return Err(Error::value("scaling vector has non-finite entries"));
        }
        let scales = scaling.scales();
        Ok(DiffusionOperator { op, scaling, scales })
    }

    /// Normalizes `op` and wraps the result.
    pub fn normalize(op: SmoothingOperator, opts: &SinkhornOptions) -> Result<Self> {
        let scaling = sinkhorn_normalize(&op, opts)?;
        if !scaling.converged {
            return Err(Error::numerical(format!(
                "Sinkhorn did not converge in {} iterations (error {:e})",
                scaling.iterations, scaling.final_error
            )));
        }
        DiffusionOperator::new(op, scaling)
    }

    pub fn operator(&self) -> &SmoothingOperator {
        &self.op
    }

    pub fn scaling(&self) -> &ScalingVector {
        &self.scaling
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn masses(&self) -> &[f64] {
        self.op.masses()
    }

    pub fn len(&self) -> usize {
        self.op.len()
    }

    pub fn is_empty(&self) -> bool {
        self.op.is_empty()
    }

    /// `Q f = Lambda S (Lambda f)`.
    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        f.expect_rows(self.len())?;
        let mut g = f.clone();
        g.scale_rows(&self.scales);
        let mut out = smatvec(&self.op, &g)?;
        out.scale_rows(&self.scales);
        Ok(out)
    }
}

/// `Q^steps f`.
pub fn diffuse(diff: &DiffusionOperator, f: &Signal, steps: usize) -> Result<Signal> {
    f.expect_rows(diff.len())?;
    let mut out = f.clone();
    for _ in 0..steps {
        out = diff.apply(&out)?;
    }
    Ok(out)
}

fn kernel_degrees(op: &SmoothingOperator) -> Result<Vec<f64>> {
    let d = op.apply_kernel(&Signal::constant(op.len(), 1.0))?.into_vec();
    if d.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::numerical("kernel has a zero row; degree normalization undefined"));
    }
    Ok(d)
}

/// Random-walk normalization `D^{-1} K f` with `D = diag(K 1)`.
pub fn row_normalize_apply(op: &SmoothingOperator, f: &Signal) -> Result<Signal> {
    f.expect_rows(op.len())?;
    let d = kernel_degrees(op)?;
    let mut out = op.apply_kernel(f)?;
    out.scale_rows(&d.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
    Ok(out)
}

/// Symmetric normalization `D^{-1/2} K D^{-1/2} f`.
pub fn symmetric_normalize_apply(op: &SmoothingOperator, f: &Signal) -> Result<Signal> {
    f.expect_rows(op.len())?;
    let inv_sqrt: Vec<f64> = kernel_degrees(op)?.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut g = f.clone();
    g.scale_rows(&inv_sqrt);
    let mut out = op.apply_kernel(&g)?;
    out.scale_rows(&inv_sqrt);
    Ok(out)
}

/// Largest graph accepted by [`spectral_truncation_apply`].
pub const MAX_SPECTRAL_TRUNCATION: usize = 2048;

/// Unnormalized Laplacian `D - A` as a dense matrix.
pub fn graph_laplacian(graph: &Graph) -> DMatrix<f64> {
    let n = graph.n_vertices();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in graph.edges() {
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    l
}

/// Dirichlet energy `1/2 f^T (D - A) f` of every channel.
pub fn dirichlet_energy(graph: &Graph, f: &Signal) -> Result<Vec<f64>> {
    f.expect_rows(graph.n_vertices())?;
    let mut e = vec![0.0; f.channels()];
    for &(i, j, w) in graph.edges() {
        for (c, ec) in e.iter_mut().enumerate() {
            let d = f.get(i, c) - f.get(j, c);
            *ec += 0.5 * w * d * d;
        }
    }
    Ok(e)
}

/// Low-rank heat kernel `sum_{k < rank} exp(-t lambda_k) phi_k phi_k^T f`
/// over the smallest eigenpairs of `D - A`.
pub fn spectral_truncation_apply(graph: &Graph, t: f64, rank: usize, f: &Signal) -> Result<Signal> {
    let n = graph.n_vertices();
    if n > MAX_SPECTRAL_TRUNCATION {
        return Err(Error::Size(format!(
            "spectral truncation needs a dense eigendecomposition; N = {n} exceeds {MAX_SPECTRAL_TRUNCATION}"
        )));
    }
    if rank == 0 || rank > n {
        return Err(Error::value(format!("rank must lie in [1, {n}], got {rank}")));
    }
    f.expect_rows(n)?;
    let eig = SymmetricEigen::new(graph_laplacian(graph));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let channels = f.channels();
    let mut out = Signal::zeros(n, channels);
    for &k in order.iter().take(rank) {
        let phi = eig.eigenvectors.column(k);
        let decay = (-t * eig.eigenvalues[k].max(0.0)).exp();
        for c in 0..channels {
            let coef: f64 = (0..n).map(|i| phi[i] * f.get(i, c)).sum::<f64>() * decay;
            let dst = out.as_mut_slice();
            for i in 0..n {
                dst[i * channels + c] += coef * phi[i];
            }
        }
    }
    Ok(out)
}
