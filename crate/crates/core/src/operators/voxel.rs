//! Gaussian smoothing on sparse voxel grids as three 1-D convolutions over
//! the dense bounding box of the occupied cells.

use crate::geometry::VoxelGrid;

/// Taps are kept for offsets `|k h| <= TRUNCATION_SIGMAS * sigma`.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

/// Largest tap offset (in cells) kept for spacing `h` and deviation `sigma`.
pub fn tap_radius(spacing: f64, sigma: f64) -> usize {
    // The relative slack keeps exact multiples (e.g. 4 sigma = 4 h) inside.
    ((TRUNCATION_SIGMAS * sigma / spacing) * (1.0 + 1e-12)).floor() as usize
}

#[derive(Clone, Debug)]
pub(crate) struct VoxelKernel {
    box_dims: [usize; 3],
    /// Linear index of every occupied voxel inside the bounding box.
    cells: Vec<usize>,
    /// `taps[k] = exp(-(k h)^2 / 2 sigma^2)` for `k = 0..=radius`.
    taps: Vec<f64>,
}

impl VoxelKernel {
    pub fn new(grid: &VoxelGrid, sigma: f64) -> Self {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for v in grid.occupied() {
            for a in 0..3 {
                lo[a] = lo[a].min(v.index[a]);
                hi[a] = hi[a].max(v.index[a]);
            }
        }
        let box_dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
        let cells = grid
            .occupied()
            .iter()
            .map(|v| {
                let (x, y, z) = (v.index[0] - lo[0], v.index[1] - lo[1], v.index[2] - lo[2]);
                x + box_dims[0] * (y + box_dims[1] * z)
            })
            .collect();
        let h = grid.spacing();
        let taps = (0..=tap_radius(h, sigma))
            .map(|k| {
                let x = k as f64 * h;
                (-0.5 * x * x / (sigma * sigma)).exp()
            })
            .collect();
        VoxelKernel {
            box_dims,
            cells,
            taps,
        }
    }

    /// `out = K g`: scatter into the box, convolve along x, y, z, gather.
    pub fn apply(&self, g: &[f64], channels: usize, out: &mut [f64]) {
        let total: usize = self.box_dims.iter().product();
        let mut buf = vec![0.0; total * channels];
        for (k, &cell) in self.cells.iter().enumerate() {
            buf[cell * channels..(cell + 1) * channels].copy_from_slice(&g[k * channels..(k + 1) * channels]);
        }
        for axis in 0..3 {
            self.convolve_axis(&mut buf, axis, channels);
        }
        for (k, &cell) in self.cells.iter().enumerate() {
            out[k * channels..(k + 1) * channels].copy_from_slice(&buf[cell * channels..(cell + 1) * channels]);
        }
    }

    fn convolve_axis(&self, buf: &mut [f64], axis: usize, channels: usize) {
        let [bx, by, bz] = self.box_dims;
        let strides = [1, bx, bx * by];
        let len = self.box_dims[axis];
        let stride = strides[axis];
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let radius = self.taps.len() - 1;
        let mut line = vec![0.0; len * channels];
        let mut result = vec![0.0; len * channels];
        let dims = [bx, by, bz];
        for b in 0..dims[v] {
            for a in 0..dims[u] {
                let base = a * strides[u] + b * strides[v];
                let mut nonzero = false;
                for p in 0..len {
                    let cell = base + p * stride;
                    let src = &buf[cell * channels..(cell + 1) * channels];
                    nonzero |= src.iter().any(|x| *x != 0.0);
                    line[p * channels..(p + 1) * channels].copy_from_slice(src);
                }
                if !nonzero {
                    continue;
                }
                for p in 0..len {
                    let out = &mut result[p * channels..(p + 1) * channels];
                    for c in 0..channels {
                        out[c] = self.taps[0] * line[p * channels + c];
                    }
                    for k in 1..=radius.min(len.saturating_sub(1)) {
                        let w = self.taps[k];
                        if p >= k {
                            let q = p - k;
                            for c in 0..channels {
                                out[c] += w * line[q * channels + c];
                            }
                        }
                        if p + k < len {
                            let q = p + k;
                            for c in 0..channels {
                                out[c] += w * line[q * channels + c];
                            }
                        }
                    }
                }
                for p in 0..len {
                    let cell = base + p * stride;
                    buf[cell * channels..(cell + 1) * channels]
                        .copy_from_slice(&result[p * channels..(p + 1) * channels]);
                }
            }
        }
    }
}
