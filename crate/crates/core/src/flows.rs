//! Energy-distance particle flows under three metrics: plain Euclidean
//! (Wasserstein) steps, raw Gaussian kernel smoothing of the update, and
//! smoothing by the Sinkhorn-normalized diffusion operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::normalize::{DiffusionOperator, SinkhornOptions};
use crate::operators::build_gaussian_operator;
use crate::signal::Signal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Identity,
    /// `K / c`, `c` the mean row sum of `K` at step 0.
    Kernel,
    /// `Q = Lambda K M Lambda`, renormalized at every step.
    QDiffusion,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowConfig {
    pub eta: f64,
    pub steps: usize,
    pub sigma: f64,
    pub preconditioner: Preconditioner,
    pub seed: u64,
    pub snapshot_stride: usize,
    /// Tolerance of the per-step Sinkhorn loop. The mean of the smoothed
    /// update matches the mean of the raw update up to this level.
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            eta: 0.05,
            steps: 200,
            sigma: 0.07,
            preconditioner: Preconditioner::QDiffusion,
            seed: 0,
            snapshot_stride: 10,
            sinkhorn_tol: 1e-13,
            sinkhorn_max_iter: 1000,
        }
    }
}

impl FlowConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::value(format!("eta must be positive, got {}", self.eta)));
        }
        if self.preconditioner != Preconditioner::Identity && !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::value(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::value("snapshot stride must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FlowSnapshot {
    pub step: usize,
    pub positions: PointCloud,
    pub energy: f64,
}

/// Per-step bookkeeping.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub step: usize,
    /// Energy after the step.
    pub energy: f64,
    /// `max_c |mean(displacement_c) - mean(raw update_c)|`, mass weighted.
    /// Zero for the identity metric.
    pub mean_gap: f64,
    pub sinkhorn_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub snapshots: Vec<FlowSnapshot>,
    pub steps: Vec<StepReport>,
}

impl FlowTrajectory {
    pub fn final_energy(&self) -> f64 {
        self.steps
            .last()
            .map(|s| s.energy)
            .or_else(|| self.snapshots.first().map(|s| s.energy))
            .unwrap_or(f64::NAN)
    }
}

fn check_dims(source: &PointCloud, target: &PointCloud) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::value(format!(
            "source has dimension {}, target {}",
            source.dim(),
            target.dim()
        )));
    }
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_pairwise(a: &PointCloud, b: &PointCloud) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let xi = a.point(i);
        total += (0..b.len()).map(|j| dist(xi, b.point(j))).sum::<f64>();
    }
    total / (a.len() as f64 * b.len() as f64)
}

/// Energy distance with uniform weights `1/N` and `1/M`:
/// `mean |x - y| - 1/2 mean |x - x'| - 1/2 mean |y - y'|`.
pub fn energy_distance(source: &PointCloud, target: &PointCloud) -> Result<f64> {
    check_dims(source, target)?;
    Ok(mean_pairwise(source, target) - 0.5 * mean_pairwise(source, source) - 0.5 * mean_pairwise(target, target))
}

/// Gradient of [`energy_distance`] with respect to each source position
/// (`N x d`). Coincident pairs contribute zero.
pub fn energy_distance_gradient(source: &PointCloud, target: &PointCloud) -> Result<Signal> {
    check_dims(source, target)?;
    let (n, m, d) = (source.len(), target.len(), source.dim());
    let cross = 1.0 / (n as f64 * m as f64);
    let own = 1.0 / (n as f64 * n as f64);
    let mut grad = Signal::zeros(n, d);
    let out = grad.as_mut_slice();
    let mut unit = vec![0.0; d];
    let mut accumulate = |row: &mut [f64], x: &[f64], y: &[f64], w: f64| {
        let r = dist(x, y);
        if r == 0.0 {
            return;
        }
        for a in 0..d {
            unit[a] = (x[a] - y[a]) / r;
            row[a] += w * unit[a];
        }
    };
    for i in 0..n {
        let xi = source.point(i);
        let row = &mut out[i * d..(i + 1) * d];
        for j in 0..m {
            accumulate(row, xi, target.point(j), cross);
        }
        for j in 0..n {
            if j != i {
                accumulate(row, xi, source.point(j), -own);
            }
        }
    }
    Ok(grad)
}

/// Explicit Euler steps `x <- x + eta N L (-grad E)`.
pub fn run_flow(source: &PointCloud, target: &PointCloud, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    cfg.validate()?;
    check_dims(source, target)?;
    let n = source.len();
    let d = source.dim();
    let uniform = vec![1.0 / n as f64; n];
    let mut current = PointCloud::new(d, source.positions().to_vec(), uniform.clone())?;
    let e0 = energy_distance(&current, target)?;
    let mut snapshots = vec![FlowSnapshot {
        step: 0,
        positions: current.clone(),
        energy: e0,
    }];
    let mut reports = Vec::with_capacity(cfg.steps);

    let kernel_scale = if cfg.preconditioner == Preconditioner::Kernel {
        let op = build_gaussian_operator(&current, cfg.sigma)?;
        let rows = op.apply_kernel(&Signal::constant(n, 1.0))?;
        rows.as_slice().iter().sum::<f64>() / n as f64
    } else {
        1.0
    };
    let mut warm: Option<Vec<f64>> = None;
    let step_scale = cfg.eta * n as f64;

    for step in 1..=cfg.steps {
        let mut descent = energy_distance_gradient(&current, target)?;
        descent.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        let mut sinkhorn_iterations = 0;
        let smoothed = match cfg.preconditioner {
            Preconditioner::Identity => descent.clone(),
            Preconditioner::Kernel => {
                let op = build_gaussian_operator(&current, cfg.sigma)?;
                let mut out = op.apply_kernel(&descent)?;
                out.as_mut_slice().iter_mut().for_each(|v| *v /= kernel_scale);
                out
            }
            Preconditioner::QDiffusion => {
                let op = build_gaussian_operator(&current, cfg.sigma)?;
                let mut opts = SinkhornOptions::default()
                    .with_tol(cfg.sinkhorn_tol)
                    .with_max_iter(cfg.sinkhorn_max_iter);
                if let Some(init) = warm.take() {
                    opts = opts.with_initial(init);
                }
                let scaling = crate::normalize::sinkhorn_normalize(&op, &opts)?;
                sinkhorn_iterations = scaling.iterations;
                warm = Some(scaling.log_scales.clone());
                DiffusionOperator::new_unconverged(op, scaling)?.apply(&descent)?
            }
        };
        let raw_mean = descent.mass(&uniform);
        let smooth_mean = smoothed.mass(&uniform);
        let mean_gap = raw_mean
            .iter()
            .zip(&smooth_mean)
            .map(|(a, b)| step_scale * (a - b).abs())
            .fold(0.0, f64::max);

        let positions: Vec<f64> = current
            .positions()
            .iter()
            .zip(smoothed.as_slice())
            .map(|(x, u)| x + step_scale * u)
            .collect();
        current = current.with_positions(positions).map_err(|_| {
            Error::numerical(format!("flow diverged at step {step}: non-finite positions"))
        })?;
        let energy = energy_distance(&current, target)?;
        if !energy.is_finite() {
            return Err(Error::numerical(format!("energy is not finite at step {step}")));
        }
        reports.push(StepReport {
            step,
            energy,
            mean_gap,
            sinkhorn_iterations,
        });
        if step % cfg.snapshot_stride == 0 || step == cfg.steps {
            snapshots.push(FlowSnapshot {
                step,
                positions: current.clone(),
                energy,
            });
        }
    }
    Ok(FlowTrajectory {
        snapshots,
        steps: reports,
    })
}

/// Source: uniform samples of a small rectangle in the unit square.
pub fn rectangle_source(n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::with_capacity(2 * n);
    for _ in 0..n {
        pos.push(rng.random_range(0.1..0.4));
        pos.push(rng.random_range(0.1..0.25));
    }
    PointCloud::uniform(2, pos)
}

/// Target: uniform samples of an annulus centred in the upper half of the
/// unit square.
pub fn annulus_target(m: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (cx, cy, r0, r1) = (0.6, 0.6, 0.15, 0.3);
    let mut pos = Vec::with_capacity(2 * m);
    while pos.len() < 2 * m {
        let x: f64 = rng.random_range(-r1..r1);
        let y: f64 = rng.random_range(-r1..r1);
        let r = (x * x + y * y).sqrt();
        if (r0..=r1).contains(&r) {
            pos.push(cx + x);
            pos.push(cy + y);
        }
    }
    PointCloud::uniform(2, pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud1(xs: &[f64]) -> PointCloud {
        PointCloud::uniform(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn identical_clouds_have_zero_energy() {
        let c = PointCloud::uniform(2, vec![0.1, 0.2, 0.5, 0.9, 0.3, 0.3]).unwrap();
        assert!(energy_distance(&c, &c).unwrap().abs() < 1e-15);
    }

    #[test]
    fn single_points() {
        let (x, y) = (cloud1(&[0.0]), cloud1(&[1.0]));
        assert_eq!(energy_distance(&x, &y).unwrap(), 1.0);
        assert_eq!(energy_distance_gradient(&x, &y).unwrap().as_slice(), &[-1.0]);
    }

    #[test]
    fn coincident_pair_contributes_nothing() {
        let g = energy_distance_gradient(&cloud1(&[0.5]), &cloud1(&[0.5])).unwrap();
        assert_eq!(g.as_slice(), &[0.0]);
    }

    #[test]
    fn zero_steps_keeps_initial_snapshot() {
        let cfg = FlowConfig {
            steps: 0,
            ..FlowConfig::default()
        };
        let t = run_flow(&cloud1(&[0.0, 0.2]), &cloud1(&[1.0]), &cfg).unwrap();
        assert_eq!(t.snapshots.len(), 1);
        assert_eq!(t.snapshots[0].step, 0);
        assert!(t.steps.is_empty());
    }

    #[test]
    fn stationary_point_is_fixed() {
        let (x, y) = (cloud1(&[0.5]), cloud1(&[0.5]));
        for p in [Preconditioner::Identity, Preconditioner::Kernel, Preconditioner::QDiffusion] {
            let cfg = FlowConfig {
                steps: 3,
                preconditioner: p,
                ..FlowConfig::default()
            };
            let t = run_flow(&x, &y, &cfg).unwrap();
            assert_eq!(t.snapshots.last().unwrap().positions.positions(), &[0.5]);
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = FlowConfig {
            eta: 0.0,
            ..FlowConfig::default()
        };
        assert!(run_flow(&cloud1(&[0.0]), &cloud1(&[1.0]), &cfg).is_err());
        let mismatched = PointCloud::uniform(2, vec![0.0, 0.0]).unwrap();
        assert!(energy_distance(&cloud1(&[0.0]), &mismatched).is_err());
    }
}
