//! Matrix-free smoothing operators `S = K M`.
//!
//! `K` is a symmetric nonnegative kernel built from one of the geometric
//! modalities and `M` is the diagonal mass matrix. Every operator exposes the
//! same contract: [`smatvec`] computes `S f` for a multi-channel signal, and
//! operators built from an analytic kernel additionally support
//! [`smatvec_log`], which evaluates `log(S exp(f))` with a streaming
//! log-sum-exp reduction.
//!
//! Operators are immutable once built. Each output row is reduced in a fixed
//! order, so results are bit-identical for any thread count.

mod graph;
mod pairwise;
mod voxel;

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{GaussianMixture, Graph, PointCloud, VoxelGrid};
use crate::oracle::DenseMatrix;
use crate::signal::Signal;

pub use voxel::{tap_radius, TRUNCATION_SIGMAS};

use graph::GraphKernel;
use pairwise::{GmmKernel, PairKernel, PointKernel, Profile};
use voxel::VoxelKernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Dense,
    Gaussian,
    Exponential,
    Graph,
    Gmm,
    Voxel,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Dense => "dense",
            Modality::Gaussian => "gaussian",
            Modality::Exponential => "exponential",
            Modality::Graph => "graph",
            Modality::Gmm => "gmm",
            Modality::Voxel => "voxel",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Dense(DenseMatrix),
    Points(PointKernel),
    Gmm(GmmKernel),
    Graph(GraphKernel),
    Voxel(VoxelKernel),
}

/// Opaque smoothing operator `f -> K M f`.
#[derive(Clone, Debug)]
pub struct SmoothingOperator {
    modality: Modality,
    masses: Vec<f64>,
    sigma: Option<f64>,
    epsilon: Option<f64>,
    kernel: Kernel,
    /// False only for graphs that are disconnected with `epsilon = 0`.
    well_posed: bool,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::value(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

impl SmoothingOperator {
    /// Explicit `N x N` symmetric nonnegative kernel with the given masses.
    pub fn dense(kernel: DenseMatrix, masses: Vec<f64>) -> Result<Self> {
        let n = kernel.n();
        if n == 0 {
            return Err(Error::value("empty kernel matrix"));
        }
        if masses.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: masses.len(),
            });
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::value("masses must be positive"));
        }
        if kernel.as_slice().iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::value("kernel entries must be finite and nonnegative"));
        }
        if kernel.symmetry_defect() > 1e-12 {
            return Err(Error::value("kernel matrix is not symmetric"));
        }
        Ok(SmoothingOperator {
            modality: Modality::Dense,
            masses,
            sigma: None,
            epsilon: None,
            kernel: Kernel::Dense(kernel),
            well_posed: true,
        })
    }

    /// The identity-like operator `K = I`, `M = I`.
    pub fn identity(n: usize) -> Result<Self> {
        SmoothingOperator::dense(DenseMatrix::identity(n), vec![1.0; n])
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// Whether the Sinkhorn problem has a unique positive solution: false
    /// for a disconnected graph without regularization.
    pub fn graph_connected_or_regularized(&self) -> bool {
        self.well_posed
    }

    pub fn supports_log_domain(&self) -> bool {
        matches!(self.kernel, Kernel::Dense(_) | Kernel::Points(_) | Kernel::Gmm(_))
    }

    /// `K g` without the mass factor.
    pub fn apply_kernel(&self, g: &Signal) -> Result<Signal> {
        g.expect_rows(self.len())?;
        let channels = g.channels();
        let mut out = Signal::zeros(self.len(), channels);
        let (src, dst) = (g.as_slice(), out.as_mut_slice());
        match &self.kernel {
            Kernel::Dense(k) => pairwise::apply(k, src, channels, dst),
            Kernel::Points(k) => pairwise::apply(k, src, channels, dst),
            Kernel::Gmm(k) => pairwise::apply(k, src, channels, dst),
            Kernel::Graph(k) => k.apply(src, channels, dst),
            Kernel::Voxel(k) => k.apply(src, channels, dst),
        }
        if dst.iter().any(|x| x.is_nan()) {
            return Err(Error::numerical("kernel product produced NaN"));
        }
        Ok(out)
    }
}

/// Gaussian point kernel `k(x, y) = exp(-|x - y|^2 / 2 sigma^2)`.
pub fn build_gaussian_operator(cloud: &PointCloud, sigma: f64) -> Result<SmoothingOperator> {
    build_point_operator(cloud, sigma, Profile::Gaussian, Modality::Gaussian)
}

/// Exponential point kernel `k(x, y) = exp(-|x - y| / sigma)`.
pub fn build_exponential_operator(cloud: &PointCloud, sigma: f64) -> Result<SmoothingOperator> {
    build_point_operator(cloud, sigma, Profile::Exponential, Modality::Exponential)
}

fn build_point_operator(
    cloud: &PointCloud,
    sigma: f64,
    profile: Profile,
    modality: Modality,
) -> Result<SmoothingOperator> {
    check_sigma(sigma)?;
    Ok(SmoothingOperator {
        modality,
        masses: cloud.masses().to_vec(),
        sigma: Some(sigma),
        epsilon: None,
        kernel: Kernel::Points(PointKernel {
            dim: cloud.dim(),
            positions: cloud.positions().to_vec(),
            sigma,
            profile,
        }),
        well_posed: true,
    })
}

/// Graph operator `S = 1/2 (D_eps + A_eps) M` with `A_eps = A + eps 1 1^T`
/// (diagonal included) and `D_eps` the row sums of `A_eps`.
pub fn build_graph_operator(graph: &Graph, epsilon: f64) -> Result<SmoothingOperator> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::value(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let well_posed = epsilon > 0.0 || graph.is_connected();
    if !well_posed {
        log::warn!("graph is disconnected and epsilon = 0: Sinkhorn normalization is not well posed");
    }
    Ok(SmoothingOperator {
        modality: Modality::Graph,
        masses: graph.masses().to_vec(),
        sigma: None,
        epsilon: Some(epsilon),
        kernel: Kernel::Graph(GraphKernel::new(graph, epsilon)),
        well_posed,
    })
}

/// Gaussian-mixture operator
/// `S_ij = m_j exp(-1/2 d^T (sigma^2 I + S_i + S_j)^{-1} d)`, `d = x_i - x_j`.
pub fn build_gmm_operator(gmm: &GaussianMixture, sigma: f64) -> Result<SmoothingOperator> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::value(format!("sigma must be nonnegative, got {sigma}")));
    }
    Ok(SmoothingOperator {
        modality: Modality::Gmm,
        masses: gmm.weights(),
        sigma: Some(sigma),
        epsilon: None,
        kernel: Kernel::Gmm(GmmKernel::new(gmm, sigma)?),
        well_posed: true,
    })
}

/// Voxel operator: separable Gaussian convolution truncated at
/// [`TRUNCATION_SIGMAS`]` * sigma` along each axis.
pub fn build_voxel_operator(grid: &VoxelGrid, sigma: f64) -> Result<SmoothingOperator> {
    check_sigma(sigma)?;
    Ok(SmoothingOperator {
        modality: Modality::Voxel,
        masses: grid.masses(),
        sigma: Some(sigma),
        epsilon: None,
        kernel: Kernel::Voxel(VoxelKernel::new(grid, sigma)),
        well_posed: true,
    })
}

/// Kernel density masses `m(x) = 1 / sum_y k(x, y)` over occupied voxels,
/// with a Gaussian of deviation `sigma_voxels` cells.
pub fn estimate_voxel_masses(grid: &VoxelGrid, sigma_voxels: f64) -> Result<VoxelGrid> {
    check_sigma(sigma_voxels)?;
    let kernel = VoxelKernel::new(grid, sigma_voxels * grid.spacing());
    let n = grid.len();
    let ones = vec![1.0; n];
    let mut density = vec![0.0; n];
    kernel.apply(&ones, 1, &mut density);
    let masses: Vec<f64> = density.iter().map(|d| 1.0 / d).collect();
    grid.with_masses(&masses)
}

/// `S f = K (M f)`, channel by channel.
pub fn smatvec(op: &SmoothingOperator, f: &Signal) -> Result<Signal> {
    f.expect_rows(op.len())?;
    let mut g = f.clone();
    g.scale_rows(&op.masses);
    op.apply_kernel(&g)
}

/// `log(S exp(log_f))`, computed without leaving the log domain.
pub fn smatvec_log(op: &SmoothingOperator, log_f: &Signal) -> Result<Signal> {
    log_f.expect_rows(op.len())?;
    if !op.supports_log_domain() {
        return Err(Error::Capability(format!(
            "{} operators have no log-domain product",
            op.modality
        )));
    }
    let channels = log_f.channels();
    let mut a = log_f.clone();
    for (row, m) in a.as_mut_slice().chunks_mut(channels).zip(&op.masses) {
        let lm = m.ln();
        row.iter_mut().for_each(|v| *v += lm);
    }
    let mut out = Signal::zeros(op.len(), channels);
    let (src, dst) = (a.as_slice(), out.as_mut_slice());
    match &op.kernel {
        Kernel::Dense(k) => pairwise::log_apply(k, src, channels, dst),
        Kernel::Points(k) => pairwise::log_apply(k, src, channels, dst),
        Kernel::Gmm(k) => pairwise::log_apply(k, src, channels, dst),
        Kernel::Graph(_) | Kernel::Voxel(_) => unreachable!("checked by supports_log_domain"),
    }
    if dst.iter().any(|x| x.is_nan()) {
        return Err(Error::numerical("log-domain product produced NaN"));
    }
    Ok(out)
}

/// `K_ij` for a single pair, for operators with a pairwise kernel.
pub fn kernel_entry(op: &SmoothingOperator, i: usize, j: usize) -> Option<f64> {
    match &op.kernel {
        Kernel::Dense(k) => Some(k.get(i, j)),
        Kernel::Points(k) => Some(k.k(i, j)),
        Kernel::Gmm(k) => Some(k.k(i, j)),
        Kernel::Graph(_) | Kernel::Voxel(_) => None,
    }
}
