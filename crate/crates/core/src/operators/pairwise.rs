//! Kernels evaluated pair by pair: dense matrices, Gaussian and exponential
//! point kernels, and the Gaussian-mixture kernel.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::GaussianMixture;
use crate::oracle::DenseMatrix;

/// A symmetric kernel that can report `log k(i, j)` for any pair.
pub(crate) trait PairKernel: Sync {
    fn len(&self) -> usize;
    fn log_k(&self, i: usize, j: usize) -> f64;

    fn k(&self, i: usize, j: usize) -> f64 {
        self.log_k(i, j).exp()
    }
}

/// `out = K g` for a row-major `N x P` signal `g`. Each row is reduced
/// sequentially over `j`, so the result does not depend on the thread count.
pub(crate) fn apply<K: PairKernel + ?Sized>(kernel: &K, g: &[f64], channels: usize, out: &mut [f64]) {
    let n = kernel.len();
    out.par_chunks_mut(channels).enumerate().for_each(|(i, row)| {
        row.iter_mut().for_each(|v| *v = 0.0);
        if channels == 1 {
            let mut acc = 0.0;
            for (j, gj) in g.iter().enumerate().take(n) {
                acc += kernel.k(i, j) * gj;
            }
            row[0] = acc;
        } else {
            for j in 0..n {
                let w = kernel.k(i, j);
                for (r, gj) in row.iter_mut().zip(&g[j * channels..(j + 1) * channels]) {
                    *r += w * gj;
                }
            }
        }
    });
}

/// `out_i = log sum_j exp(log k(i, j) + a_j)` per channel, with a streaming
/// max-shift so that no intermediate overflows or underflows.
pub(crate) fn log_apply<K: PairKernel + ?Sized>(kernel: &K, a: &[f64], channels: usize, out: &mut [f64]) {
    let n = kernel.len();
    out.par_chunks_mut(channels).enumerate().for_each(|(i, row)| {
        let mut maxes = vec![f64::NEG_INFINITY; channels];
        let mut sums = vec![0.0; channels];
        for j in 0..n {
            let lk = kernel.log_k(i, j);
            if lk == f64::NEG_INFINITY {
                continue;
            }
            for c in 0..channels {
                let v = lk + a[j * channels + c];
                if v == f64::NEG_INFINITY {
                    continue;
                }
                if v > maxes[c] {
                    sums[c] = sums[c] * (maxes[c] - v).exp() + 1.0;
                    maxes[c] = v;
                } else {
                    sums[c] += (v - maxes[c]).exp();
                }
            }
        }
        for c in 0..channels {
            row[c] = if maxes[c] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                maxes[c] + sums[c].ln()
            };
        }
    });
}

/// `-d2 / (2 sigma^2)`, shared by the point and mixture kernels so that a
/// mixture with zero covariances reproduces the point kernel bit for bit.
#[inline]
pub(crate) fn gaussian_log_profile(d2: f64, sigma2: f64) -> f64 {
    -0.5 * d2 / sigma2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Profile {
    /// `exp(-|x - y|^2 / 2 sigma^2)`
    Gaussian,
    /// `exp(-|x - y| / sigma)`
    Exponential,
}

#[derive(Clone, Debug)]
pub(crate) struct PointKernel {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub sigma: f64,
    pub profile: Profile,
}

impl PointKernel {
    #[inline]
    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        let d = self.dim;
        let (a, b) = (&self.positions[i * d..(i + 1) * d], &self.positions[j * d..(j + 1) * d]);
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

impl PairKernel for PointKernel {
    fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    #[inline]
    fn log_k(&self, i: usize, j: usize) -> f64 {
        let d2 = self.sq_dist(i, j);
        match self.profile {
            Profile::Gaussian => gaussian_log_profile(d2, self.sigma * self.sigma),
            Profile::Exponential => -d2.sqrt() / self.sigma,
        }
    }
}

impl PairKernel for DenseMatrix {
    fn len(&self) -> usize {
        self.n()
    }

    fn log_k(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).ln()
    }

    fn k(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// `k(i, j) = exp(-1/2 d^T (sigma^2 I + S_i + S_j)^{-1} d)` with `d = x_i - x_j`.
#[derive(Clone, Debug)]
pub(crate) struct GmmKernel {
    dim: usize,
    means: Vec<f64>,
    covariances: Vec<f64>,
    zero_covariance: Vec<bool>,
    sigma2: f64,
}

impl GmmKernel {
    pub fn new(gmm: &GaussianMixture, sigma: f64) -> Result<Self> {
        let dim = gmm.dim();
        let mut means = Vec::with_capacity(gmm.len() * dim);
        let mut covariances = Vec::with_capacity(gmm.len() * dim * dim);
        let mut zero_covariance = Vec::with_capacity(gmm.len());
        for c in gmm.components() {
            means.extend_from_slice(&c.mean);
            covariances.extend_from_slice(&c.covariance);
            zero_covariance.push(c.covariance.iter().all(|&x| x == 0.0));
        }
        let kernel = GmmKernel {
            dim,
            means,
            covariances,
            zero_covariance,
            sigma2: sigma * sigma,
        };
        if !(sigma > 0.0) {
            // Every pair matrix is PD iff every component covariance is.
            let mut buf = vec![0.0; dim * dim];
            for i in 0..gmm.len() {
                kernel.pair_matrix(i, i, &mut buf);
                if !cholesky_in_place(dim, &mut buf) {
                    return Err(Error::value(format!(
                        "sigma = {sigma} requires strictly positive definite covariances; component {i} is singular"
                    )));
                }
            }
        }
        Ok(kernel)
    }

    fn pair_matrix(&self, i: usize, j: usize, out: &mut [f64]) {
        let dd = self.dim * self.dim;
        let (ci, cj) = (&self.covariances[i * dd..(i + 1) * dd], &self.covariances[j * dd..(j + 1) * dd]);
        for (k, o) in out.iter_mut().enumerate() {
            *o = ci[k] + cj[k];
        }
        for a in 0..self.dim {
            out[a * self.dim + a] += self.sigma2;
        }
    }
}

impl PairKernel for GmmKernel {
    fn len(&self) -> usize {
        self.zero_covariance.len()
    }

    fn log_k(&self, i: usize, j: usize) -> f64 {
        let d = self.dim;
        let mut diff = [0.0f64; 8];
        let mut diff_heap;
        let diff: &mut [f64] = if d <= 8 {
            &mut diff[..d]
        } else {
            diff_heap = vec![0.0; d];
            &mut diff_heap
        };
        let (xi, xj) = (&self.means[i * d..(i + 1) * d], &self.means[j * d..(j + 1) * d]);
        for a in 0..d {
            diff[a] = xi[a] - xj[a];
        }
        let d2: f64 = diff.iter().map(|x| x * x).sum();
        if d2 == 0.0 {
            return 0.0;
        }
        if self.zero_covariance[i] && self.zero_covariance[j] {
            return gaussian_log_profile(d2, self.sigma2);
        }
        let mut a = [0.0f64; 64];
        let mut a_heap;
        let a: &mut [f64] = if d * d <= 64 {
            &mut a[..d * d]
        } else {
            a_heap = vec![0.0; d * d];
            &mut a_heap
        };
        self.pair_matrix(i, j, a);
        if !cholesky_in_place(d, a) {
            return f64::NAN;
        }
        // q = |L^{-1} d|^2 by forward substitution.
        let mut q = 0.0;
        for r in 0..d {
            let mut s = diff[r];
            for c in 0..r {
                s -= a[r * d + c] * diff[c];
            }
            diff[r] = s / a[r * d + r];
            q += diff[r] * diff[r];
        }
        -0.5 * q
    }
}

/// Lower Cholesky factor stored in the lower triangle; false when the matrix
/// is not positive definite.
pub(crate) fn cholesky_in_place(d: usize, a: &mut [f64]) -> bool {
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) {
            return false;
        }
        let l = s.sqrt();
        a[j * d + j] = l;
        for i in (j + 1)..d {
            let mut t = a[i * d + j];
            for k in 0..j {
                t -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = t / l;
        }
    }
    true
}
