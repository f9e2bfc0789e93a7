//! Graph smoothing kernel `K = 1/2 (D_eps + A_eps)` with
//! `A_eps = A + eps 1 1^T` and `D_eps = diag(A_eps 1)`.

use rayon::prelude::*;

use crate::geometry::Graph;

#[derive(Clone, Debug)]
pub(crate) struct GraphKernel {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    /// Row sums of `A_eps`.
    degrees: Vec<f64>,
    epsilon: f64,
}

impl GraphKernel {
    pub fn new(graph: &Graph, epsilon: f64) -> Self {
        let n = graph.n_vertices();
        let mut counts = vec![0usize; n];
        for &(i, j, _) in graph.edges() {
            counts[i] += 1;
            counts[j] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0usize; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        for &(i, j, w) in graph.edges() {
            neighbors[fill[i]] = j;
            weights[fill[i]] = w;
            fill[i] += 1;
            neighbors[fill[j]] = i;
            weights[fill[j]] = w;
            fill[j] += 1;
        }
        // Sort each adjacency list so that the reduction order is canonical.
        for i in 0..n {
            let range = offsets[i]..offsets[i + 1];
            let mut pairs: Vec<(usize, f64)> = neighbors[range.clone()]
                .iter()
                .copied()
                .zip(weights[range.clone()].iter().copied())
                .collect();
            pairs.sort_by_key(|p| p.0);
            for (k, (nb, w)) in range.zip(pairs) {
                neighbors[k] = nb;
                weights[k] = w;
            }
        }
        let degrees = graph
            .weighted_degrees()
            .into_iter()
            .map(|d| d + epsilon * n as f64)
            .collect();
        GraphKernel {
            offsets,
            neighbors,
            weights,
            degrees,
            epsilon,
        }
    }

    /// `out = K g`.
    pub fn apply(&self, g: &[f64], channels: usize, out: &mut [f64]) {
        let mut totals = vec![0.0; channels];
        if self.epsilon != 0.0 {
            for row in g.chunks(channels) {
                for (t, v) in totals.iter_mut().zip(row) {
                    *t += v;
                }
            }
        }
        out.par_chunks_mut(channels).enumerate().for_each(|(i, row)| {
            let gi = &g[i * channels..(i + 1) * channels];
            for c in 0..channels {
                row[c] = self.degrees[i] * gi[c] + self.epsilon * totals[c];
            }
            for k in self.offsets[i]..self.offsets[i + 1] {
                let (j, w) = (self.neighbors[k], self.weights[k]);
                for c in 0..channels {
                    row[c] += w * g[j * channels + c];
                }
            }
            row.iter_mut().for_each(|v| *v *= 0.5);
        });
    }
}
