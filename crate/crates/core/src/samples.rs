//! Seeded synthetic inputs: uniform square samples, random geometric graphs,
//! sphere and circle samplings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::geometry::{Graph, PointCloud};

/// `n` uniform samples of `[0, 1]^dim` with uniform masses `1/n`.
pub fn uniform_cube(n: usize, dim: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    PointCloud::uniform(dim, pos)
}

/// Unit-weight graph joining every pair of points closer than `radius`,
/// with unit vertex masses.
pub fn geometric_graph(points: &PointCloud, radius: f64) -> Result<Graph> {
    let n = points.len();
    let d = points.dim();
    let r2 = radius * radius;
    // Bucket by the first coordinate so only nearby slabs are compared.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points.point(a)[0].total_cmp(&points.point(b)[0]));
    let mut edges = Vec::new();
    for (s, &i) in order.iter().enumerate() {
        let xi = points.point(i);
        for &j in &order[s + 1..] {
            let xj = points.point(j);
            if xj[0] - xi[0] > radius {
                break;
            }
            let d2: f64 = (0..d).map(|a| (xi[a] - xj[a]).powi(2)).sum();
            if d2 < r2 {
                edges.push((i.min(j), i.max(j), 1.0));
            }
        }
    }
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Graph::uniform(n, edges)
}

/// Random geometric graph on `n` uniform samples of the unit square.
pub fn random_geometric_graph(n: usize, radius: f64, seed: u64) -> Result<Graph> {
    geometric_graph(&uniform_cube(n, 2, seed)?, radius)
}

/// `n` uniform samples of the sphere surface of the given diameter, centred
/// at the origin, uniform masses.
pub fn sphere_surface(n: usize, diameter: f64, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::with_capacity(3 * n);
    while pos.len() < 3 * n {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-12 {
            pos.extend(v.iter().map(|x| 0.5 * diameter * x / r));
        }
    }
    PointCloud::uniform(3, pos)
}

/// `n` equally spaced points on the circle of the given radius.
pub fn circle(n: usize, radius: f64) -> Result<PointCloud> {
    let pos = (0..n)
        .flat_map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect();
    PointCloud::uniform(2, pos)
}
