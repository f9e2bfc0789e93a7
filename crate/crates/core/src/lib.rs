//! Mass-preserving diffusion on unstructured geometric data.
//!
//! Smoothing operators `S = K M` are built matrix-free from graphs, point
//! clouds, Gaussian mixtures or sparse voxel grids ([`operators`]), rescaled
//! by a symmetric Sinkhorn loop into diffusion operators `Q = Lambda S Lambda`
//! that preserve constants and mass ([`normalize`]), and then used for heat
//! diffusion, spectral analysis ([`spectral`]) and as preconditioners for
//! particle gradient flows ([`flows`]). Dense references for small problems
//! live in [`oracle`], seeded synthetic inputs in [`samples`].

pub mod cli;
pub mod error;
pub mod flows;
pub mod geometry;
pub mod io;
pub mod normalize;
pub mod operators;
pub mod samples;
pub mod oracle;
pub mod signal;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{GaussianComponent, GaussianMixture, Graph, PointCloud, Voxel, VoxelGrid};
pub use normalize::{
    convergence_error, diffuse, row_normalize_apply, sinkhorn_normalize, sinkhorn_trace,
    spectral_truncation_apply, symmetric_normalize_apply, DiffusionOperator, Domain, ScalingVector,
    SinkhornOptions,
};
pub use operators::{
    build_exponential_operator, build_gaussian_operator, build_gmm_operator, build_graph_operator,
    build_voxel_operator, estimate_voxel_masses, smatvec, smatvec_log, Modality, SmoothingOperator,
};
pub use signal::Signal;
pub use spectral::{estimate_laplacian_eigenvalues, top_eigenpairs, EigenOptions, EstimateModality, SpectralBasis};
