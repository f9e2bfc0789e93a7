//! The four geometric modalities: weighted point clouds, weighted graphs,
//! sparse voxel grids and Gaussian mixtures.
//!
//! Every constructor validates its invariants, so a value of one of these
//! types is always well formed.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

fn check_masses(masses: &[f64]) -> Result<()> {
    if let Some((i, m)) = masses
        .iter()
        .enumerate()
        .find(|(_, m)| !(m.is_finite() && **m > 0.0))
    {
        return Err(Error::value(format!("mass {i} must be positive, got {m}")));
    }
    Ok(())
}

/// Weighted samples `mu = sum_i m_i delta_{x_i}` in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    positions: Vec<f64>,
    masses: Vec<f64>,
}

impl PointCloud {
    /// `positions` is row-major `N x dim`.
    pub fn new(dim: usize, positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::value("point dimension must be at least 1"));
        }
        if positions.len() % dim != 0 {
            return Err(Error::format("position array is not a multiple of dim"));
        }
        let n = positions.len() / dim;
        if n == 0 {
            return Err(Error::value("a point cloud needs at least one point"));
        }
        if masses.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: masses.len(),
            });
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::value("positions must be finite"));
        }
        check_masses(&masses)?;
        Ok(PointCloud {
            dim,
            positions,
            masses,
        })
    }

    /// Point cloud with uniform masses `1/N`.
    pub fn uniform(dim: usize, positions: Vec<f64>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { positions.len() / dim };
        let m = if n == 0 { 1.0 } else { 1.0 / n as f64 };
        PointCloud::new(dim, positions, vec![m; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Same masses, new positions.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        PointCloud::new(self.dim, positions, self.masses.clone())
    }
}

/// Undirected weighted graph with positive vertex masses.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n_vertices: usize,
    edges: Vec<(usize, usize, f64)>,
    masses: Vec<f64>,
}

impl Graph {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize, f64)>, masses: Vec<f64>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::value("a graph needs at least one vertex"));
        }
        if masses.len() != n_vertices {
            return Err(Error::Shape {
                expected: n_vertices,
                actual: masses.len(),
            });
        }
        check_masses(&masses)?;
        let mut seen = HashSet::with_capacity(edges.len());
        for &(i, j, w) in &edges {
            if i >= n_vertices || j >= n_vertices {
                return Err(Error::format(format!(
                    "edge ({i}, {j}) references a vertex outside [0, {n_vertices})"
                )));
            }
            if i == j {
                return Err(Error::format(format!("self-loop on vertex {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::value(format!(
                    "edge ({i}, {j}) has non-positive weight {w}"
                )));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::format(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Graph {
            n_vertices,
            edges,
            masses,
        })
    }

    /// Graph with uniform vertex masses `1/N`.
    pub fn uniform(n_vertices: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let m = 1.0 / n_vertices.max(1) as f64;
        Graph::new(n_vertices, edges, vec![m; n_vertices])
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn with_masses(&self, masses: Vec<f64>) -> Result<Self> {
        Graph::new(self.n_vertices, self.edges.clone(), masses)
    }

    /// Weighted degree `sum_j A_ij` of every vertex.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n_vertices];
        for &(i, j, w) in &self.edges {
            deg[i] += w;
            deg[j] += w;
        }
        deg
    }

    /// Number of incident edges of every vertex.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_vertices];
        for &(i, j, _) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for &(i, j, _) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut visited = vec![false; self.n_vertices];
        let mut stack = vec![0];
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !visited[u] {
                    visited[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n_vertices
    }
}

/// One occupied cell of a voxel grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Voxel {
    pub index: [usize; 3],
    pub mass: f64,
}

/// Sparse occupancy on a regular grid with cubic cells of edge `spacing`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    origin: [f64; 3],
    spacing: f64,
    occupied: Vec<Voxel>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], origin: [f64; 3], spacing: f64, occupied: Vec<Voxel>) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::value(format!("voxel spacing must be positive, got {spacing}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::value("voxel origin must be finite"));
        }
        if occupied.is_empty() {
            return Err(Error::value("a voxel grid needs at least one occupied voxel"));
        }
        let mut seen = HashMap::with_capacity(occupied.len());
        for (k, v) in occupied.iter().enumerate() {
            if v.index.iter().zip(&dims).any(|(i, n)| i >= n) {
                return Err(Error::format(format!(
                    "voxel index {:?} outside grid dims {:?}",
                    v.index, dims
                )));
            }
            if seen.insert(v.index, k).is_some() {
                return Err(Error::format(format!("duplicate voxel {:?}", v.index)));
            }
            if !(v.mass.is_finite() && v.mass > 0.0) {
                return Err(Error::value(format!(
                    "voxel {:?} has non-positive mass {}",
                    v.index, v.mass
                )));
            }
        }
        Ok(VoxelGrid {
            dims,
            origin,
            spacing,
            occupied,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn occupied(&self) -> &[Voxel] {
        &self.occupied
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.occupied.iter().map(|v| v.mass).collect()
    }

    /// Cell center `origin + (index + 0.5) * h`.
    pub fn center(&self, index: [usize; 3]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + (index[a] as f64 + 0.5) * self.spacing;
        }
        c
    }

    pub fn centers(&self) -> Vec<[f64; 3]> {
        self.occupied.iter().map(|v| self.center(v.index)).collect()
    }

    /// Same occupancy with the masses replaced.
    pub fn with_masses(&self, masses: &[f64]) -> Result<Self> {
        if masses.len() != self.occupied.len() {
            return Err(Error::Shape {
                expected: self.occupied.len(),
                actual: masses.len(),
            });
        }
        let occupied = self
            .occupied
            .iter()
            .zip(masses)
            .map(|(v, &mass)| Voxel { index: v.index, mass })
            .collect();
        VoxelGrid::new(self.dims, self.origin, self.spacing, occupied)
    }
}

/// One weighted Gaussian component `m N(mean, covariance)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub covariance: Vec<f64>,
}

/// Relative asymmetry tolerated before a covariance is rejected.
pub const COVARIANCE_SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues down to `-PSD_SLACK * trace` are accepted.
pub const COVARIANCE_PSD_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    /// Validates and symmetrizes every covariance (`(C + C^T) / 2`).
    pub fn new(dim: usize, components: Vec<GaussianComponent>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::value("mixture dimension must be at least 1"));
        }
        if components.is_empty() {
            return Err(Error::value("a mixture needs at least one component"));
        }
        let mut out = Vec::with_capacity(components.len());
        for (k, mut c) in components.into_iter().enumerate() {
            if c.mean.len() != dim || c.covariance.len() != dim * dim {
                return Err(Error::format(format!(
                    "component {k} does not match dimension {dim}"
                )));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::value(format!(
                    "component {k} has non-positive weight {}",
                    c.weight
                )));
            }
            if c.mean.iter().chain(&c.covariance).any(|x| !x.is_finite()) {
                return Err(Error::value(format!("component {k} has non-finite entries")));
            }
            symmetrize_covariance(dim, &mut c.covariance)
                .map_err(|msg| Error::value(format!("component {k}: {msg}")))?;
            out.push(c);
        }
        Ok(GaussianMixture {
            dim,
            components: out,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Weighted mean trace `sum_i m_i tr(S_i) / sum_i m_i`.
    pub fn mean_trace(&self) -> f64 {
        let (num, den) = self.components.iter().fold((0.0, 0.0), |(num, den), c| {
            let tr: f64 = (0..self.dim).map(|a| c.covariance[a * self.dim + a]).sum();
            (num + c.weight * tr, den + c.weight)
        });
        num / den
    }
}

fn symmetrize_covariance(dim: usize, cov: &mut [f64]) -> std::result::Result<(), String> {
    let scale = cov.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for a in 0..dim {
        for b in (a + 1)..dim {
            let (x, y) = (cov[a * dim + b], cov[b * dim + a]);
            if (x - y).abs() > COVARIANCE_SYMMETRY_TOL * scale {
                return Err(format!("covariance is not symmetric ({x} vs {y})"));
            }
            let avg = 0.5 * (x + y);
            cov[a * dim + b] = avg;
            cov[b * dim + a] = avg;
        }
    }
    let m = nalgebra::DMatrix::from_row_slice(dim, dim, cov);
    let trace = m.trace();
    let min_eig = m
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -COVARIANCE_PSD_SLACK * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(format!("covariance is not positive semi-definite (eigenvalue {min_eig})"));
    }
    Ok(())
}
