//! Leading eigenpairs of a diffusion operator and Laplacian eigenvalue
//! estimates.
//!
//! `Q = Lambda K M Lambda` is self-adjoint for `<f, g>_M`, so its
//! eigenvectors solve the generalized problem
//! `(Lambda M K M Lambda) phi = lambda M phi`. We work with the conjugated
//! symmetric operator `B = M^{1/2} Q M^{-1/2}` and recover `phi = M^{-1/2} y`.
//!
//! The solver is a block Lanczos iteration with full reorthogonalization
//! followed by Rayleigh-Ritz on the whole Krylov basis. One block costs a
//! single multi-channel product with the underlying smoothing operator, and a
//! block at least as wide as `k` resolves eigenvalue clusters of that size
//! (the plateaus produced by symmetric shapes).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::normalize::DiffusionOperator;
use crate::signal::Signal;

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Target for `|Q phi - lambda phi|_M`.
    pub solver_tol: f64,
    /// Budget of single-vector operator applications.
    pub max_iters: usize,
    /// Seed of the random starting block.
    pub seed: u64,
    /// Block width; `k` when absent.
    pub block_size: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            solver_tol: 1e-8,
            max_iters: 5000,
            seed: 0,
            block_size: None,
        }
    }
}

/// M-orthonormal leading eigenvectors of a diffusion operator.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    /// Descending, clamped to `[0, 1]` within the solver tolerance.
    pub eigenvalues: Vec<f64>,
    /// `N x k`; column `i` is `phi_i`.
    pub eigenvectors: Signal,
    /// `|Q phi_i - lambda_i phi_i|_M`.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Number of single-vector applications of `Q` that were spent.
    pub applications: usize,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalizes `v` against every stored column (two Gram-Schmidt passes).
fn orthogonalize(basis: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Appends up to `count` new orthonormal directions built from `candidates`
/// (replacing degenerate ones by random vectors). Returns the new columns.
fn extend_basis(
    basis: &mut Vec<Vec<f64>>,
    candidates: Vec<Vec<f64>>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut added = Vec::new();
    for mut v in candidates {
        if basis.len() >= n {
            break;
        }
        let mut attempts = 0;
        loop {
            let before = norm(&v);
            orthogonalize(basis, &mut v);
            let after = norm(&v);
            if before > 0.0 && after > 1e-10 * before {
                v.iter_mut().for_each(|x| *x /= after);
                break;
            }
            // The Krylov space is (numerically) invariant here: restart the
            // direction at random so that further copies of repeated
            // eigenvalues can still be found.
            attempts += 1;
            if attempts > 8 {
                return added;
            }
            v = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        }
        basis.push(v.clone());
        added.push(v);
    }
    added
}

/// `B Y = M^{1/2} Q M^{-1/2} Y` for a block of columns.
fn apply_block(diff: &DiffusionOperator, sqrt_m: &[f64], block: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let inv: Vec<f64> = sqrt_m.iter().map(|s| 1.0 / s).collect();
    let mut signal = Signal::from_columns(block)?;
    signal.scale_rows(&inv);
    let mut out = diff.apply(&signal)?;
    out.scale_rows(sqrt_m);
    Ok((0..block.len()).map(|c| out.column(c)).collect())
}

/// The `k` largest eigenpairs of the diffusion operator.
pub fn top_eigenpairs(diff: &DiffusionOperator, k: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    let n = diff.len();
    if k == 0 || k > n {
        return Err(Error::value(format!("k must lie in [1, {n}], got {k}")));
    }
    let block = opts.block_size.unwrap_or(k).clamp(1, n);
    let sqrt_m: Vec<f64> = diff.masses().iter().map(|m| m.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    // Projected matrix T = V^T B V, grown column by column.
    let mut t: Vec<Vec<f64>> = Vec::new();
    let mut applications = 0;

    let start: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut fresh = extend_basis(&mut basis, start, n, &mut rng);

    loop {
        let new_images = apply_block(diff, &sqrt_m, &fresh)?;
        applications += fresh.len();
        let first_new = images.len();
        images.extend(new_images);
        let m = basis.len();
        for row in t.iter_mut() {
            row.resize(m, 0.0);
        }
        t.resize(m, vec![0.0; m]);
        for j in first_new..m {
            for i in 0..m {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                t[i][j] = v;
                t[j][i] = v;
            }
        }

        let exhausted = m >= n || applications >= opts.max_iters;
        if m >= k {
            let (values, vectors, residuals) = rayleigh_ritz(&t, &basis, &images, k);
            let converged = residuals.iter().all(|r| *r <= opts.solver_tol);
            if converged || exhausted {
                if !converged {
                    log::warn!(
                        "eigensolver stopped after {applications} applications with residuals up to {:e}",
                        residuals.iter().copied().fold(0.0, f64::max)
                    );
                }
                return finish(values, vectors, residuals, converged, applications, &sqrt_m, opts.solver_tol);
            }
        } else if exhausted {
            return Err(Error::numerical("Krylov space exhausted before k directions were found"));
        }

        let tail = images[first_new..].to_vec();
        fresh = extend_basis(&mut basis, tail, n, &mut rng);
        if fresh.is_empty() {
            let random: Vec<Vec<f64>> = (0..block)
                .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            fresh = extend_basis(&mut basis, random, n, &mut rng);
            if fresh.is_empty() {
                return Err(Error::numerical("could not extend the Krylov basis"));
            }
        }
    }
}

/// Ritz pairs for the `k` largest Ritz values: `(theta, y, |B y - theta y|)`.
fn rayleigh_ritz(
    t: &[Vec<f64>],
    basis: &[Vec<f64>],
    images: &[Vec<f64>],
    k: usize,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let m = basis.len();
    let n = basis[0].len();
    let tm = DMatrix::from_fn(m, m, |i, j| t[i][j]);
    let eig = SymmetricEigen::new(tm);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let theta = eig.eigenvalues[idx];
        let s = eig.eigenvectors.column(idx);
        let mut y = vec![0.0; n];
        let mut by = vec![0.0; n];
        for c in 0..m {
            let w = s[c];
            if w == 0.0 {
                continue;
            }
            for ((yi, byi), (v, bv)) in y.iter_mut().zip(by.iter_mut()).zip(basis[c].iter().zip(&images[c])) {
                *yi += w * v;
                *byi += w * bv;
            }
        }
        let r = by.iter().zip(&y).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
        values.push(theta);
        vectors.push(y);
        residuals.push(r);
    }
    (values, vectors, residuals)
}

fn finish(
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    converged: bool,
    applications: usize,
    sqrt_m: &[f64],
    tol: f64,
) -> Result<SpectralBasis> {
    let eigenvalues = values
        .into_iter()
        .map(|v| {
            if v > 1.0 && v - 1.0 <= tol {
                1.0
            } else if v < 0.0 && -v <= tol {
                0.0
            } else {
                v
            }
        })
        .collect();
    let columns: Vec<Vec<f64>> = vectors
        .into_iter()
        .map(|y| {
            let mut phi: Vec<f64> = y.iter().zip(sqrt_m).map(|(a, s)| a / s).collect();
            // Largest-magnitude entry positive.
            let pivot = phi.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                phi.iter_mut().for_each(|x| *x = -*x);
            }
            phi
        })
        .collect();
    Ok(SpectralBasis {
        eigenvalues,
        eigenvectors: Signal::from_columns(&columns)?,
        residuals,
        converged,
        applications,
    })
}

/// Kernel family used to map diffusion eigenvalues to Laplacian ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimateModality {
    /// Point clouds and voxel grids.
    Points,
    Voxels,
    /// Gaussian mixtures: mass-weighted mean covariance trace and intrinsic
    /// dimension (2 for surfaces, 3 for volumes).
    Gmm { mean_trace: f64, dim: usize },
}

/// `lambda = -(2 / s^2) log lambda_Q` with `s^2 = sigma^2` for points and
/// voxels and `s^2 = sigma^2 + (2/d) mean_trace` for mixtures. Eigenvalues
/// `lambda_Q <= 0` are skipped.
pub fn estimate_laplacian_eigenvalues(eigenvalues: &[f64], sigma: f64, modality: EstimateModality) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::value(format!("sigma must be positive, got {sigma}")));
    }
    let variance = match modality {
        EstimateModality::Points | EstimateModality::Voxels => sigma * sigma,
        EstimateModality::Gmm { mean_trace, dim } => {
            if dim == 0 {
                return Err(Error::value("mixture intrinsic dimension must be positive"));
            }
            sigma * sigma + 2.0 / dim as f64 * mean_trace
        }
    };
    let mut out = Vec::with_capacity(eigenvalues.len());
    for (i, &lq) in eigenvalues.iter().enumerate() {
        if !(lq > 0.0) {
            log::warn!("diffusion eigenvalue {i} is {lq}; the logarithmic estimate is undefined, skipping");
            continue;
        }
        out.push((-2.0 / variance * lq.min(1.0).ln()).max(0.0));
    }
    Ok(out)
}
