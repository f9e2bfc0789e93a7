#![allow(dead_code)]

use otdiff::geometry::{GaussianComponent, GaussianMixture, Voxel, VoxelGrid};
use otdiff::oracle::DenseMatrix;
use otdiff::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FAMILIES: [&str; 5] = ["graph", "gaussian", "exponential", "gmm", "voxel"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_masses(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(0.5..1.5)).collect()
}

/// Random seeded operator of the given family with `n` degrees of freedom.
pub fn random_operator(family: &str, n: usize, seed: u64) -> SmoothingOperator {
    let mut r = rng(seed);
    match family {
        "graph" => {
            let g = samples::random_geometric_graph(n, 0.3, seed).unwrap();
            let g = g.with_masses(random_masses(&mut r, n)).unwrap();
            build_graph_operator(&g, 0.01).unwrap()
        }
        "gaussian" | "exponential" => {
            let pos: Vec<f64> = (0..2 * n).map(|_| r.random::<f64>()).collect();
            let c = PointCloud::new(2, pos, random_masses(&mut r, n)).unwrap();
            if family == "gaussian" {
                build_gaussian_operator(&c, 0.2).unwrap()
            } else {
                build_exponential_operator(&c, 0.2).unwrap()
            }
        }
        "gmm" => {
            let comps = (0..n)
                .map(|_| {
                    let mean = vec![r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
                    let a: Vec<f64> = (0..9).map(|_| r.random_range(-0.03..0.03)).collect();
                    let mut cov = vec![0.0; 9];
                    for i in 0..3 {
                        for j in 0..3 {
                            cov[3 * i + j] = (0..3).map(|k| a[3 * i + k] * a[3 * j + k]).sum();
                        }
                    }
                    GaussianComponent {
                        weight: r.random_range(0.5..1.5),
                        mean,
                        covariance: cov,
                    }
                })
                .collect();
            let gmm = GaussianMixture::new(3, comps).unwrap();
            build_gmm_operator(&gmm, 0.1).unwrap()
        }
        "voxel" => {
            let cells = sample(&mut r, 512, n);
            let occupied = cells
                .iter()
                .map(|c| Voxel {
                    index: [c % 8, (c / 8) % 8, c / 64],
                    mass: 1.0,
                })
                .collect::<Vec<_>>();
            let masses = random_masses(&mut r, n);
            let occupied = occupied
                .into_iter()
                .zip(masses)
                .map(|(v, mass)| Voxel { mass, ..v })
                .collect();
            let grid = VoxelGrid::new([8, 8, 8], [0.0; 3], 0.1, occupied).unwrap();
            build_voxel_operator(&grid, 0.1).unwrap()
        }
        other => panic!("unknown family {other}"),
    }
}

/// Dense `Q` (column `j` = `Q e_j`).
pub fn dense_q(diff: &DiffusionOperator) -> DenseMatrix {
    let n = diff.len();
    let mut eye = Signal::zeros(n, n);
    for i in 0..n {
        eye.as_mut_slice()[i * n + i] = 1.0;
    }
    let q = diff.apply(&eye).unwrap();
    DenseMatrix::from_row_major(n, q.into_vec()).unwrap()
}

/// `M Q`, symmetrized is not applied: callers check the defect separately.
pub fn mass_times(q: &DenseMatrix, masses: &[f64]) -> DenseMatrix {
    let ones = vec![1.0; masses.len()];
    q.scaled(masses, &ones)
}

pub fn m_dot(a: &[f64], b: &[f64], m: &[f64]) -> f64 {
    a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum()
}

/// Frobenius norm of `sin Theta` between the spans of two M-orthonormal
/// families of equal size: `|U - V V^T M U|_{M,F}`.
pub fn subspace_sin(u: &[Vec<f64>], v: &[Vec<f64>], m: &[f64]) -> f64 {
    let mut total = 0.0;
    for ui in u {
        let mut r = ui.clone();
        for vj in v {
            let c = m_dot(vj, ui, m);
            for (x, y) in r.iter_mut().zip(vj) {
                *x -= c * y;
            }
        }
        total += m_dot(&r, &r, m);
    }
    total.sqrt()
}

/// Splits descending eigenvalues into groups separated by more than `gap`.
/// The last group is dropped when it may continue past the first `k`
/// (checked against `all`, the full spectrum).
pub fn eigengroups(all: &[f64], k: usize, gap: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=k {
        if i == all.len() || all[i - 1] - all[i] > gap {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}
