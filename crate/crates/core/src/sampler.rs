//! Point clouds from an implicit occupancy function.
//!
//! [`sample_gradient`] keeps a working set of candidates drawn from an
//! isotropic Gaussian and moves them down the gradient of `-log g(x)`; every
//! time a candidate's confidence exceeds the threshold it is copied into the
//! output. [`sample_grid`] is the dense baseline that tests every cell center
//! of a regular grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{cell_center, Aabb, Point3, PointCloud};
use crate::implicit::ImplicitParams;
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Points to return; also the size of the candidate working set.
    pub n_points: usize,
    /// Gradient-descent step size.
    pub step: f64,
    /// Steps per round; the budget is `max_rounds * steps_per_round` steps.
    pub steps_per_round: usize,
    /// Candidates are accepted when their confidence is strictly above this.
    pub threshold: f64,
    /// Standard deviation of the initial Gaussian.
    pub init_std: f64,
    pub max_rounds: usize,
    pub seed: u64,
    /// Re-draw accepted candidates from the Gaussian instead of letting
    /// them keep descending.
    pub reseed_accepted: bool,
    /// Candidates leaving `[-bound, bound]^3` are re-drawn.
    pub bound: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_points: 16384,
            step: 0.1,
            steps_per_round: 20,
            threshold: 0.85,
            init_std: 0.1,
            max_rounds: 50,
            seed: 0,
            reseed_accepted: true,
            bound: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_points >= 1
            && self.step > 0.0
            && self.step.is_finite()
            && self.steps_per_round >= 1
            && self.max_rounds >= 1
            && self.threshold > 0.0
            && self.threshold < 1.0
            && self.init_std > 0.0
            && self.init_std.is_finite()
            && self.bound > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::BadArgument(format!("invalid sampler config {self:?}")))
        }
    }

    /// Upper bound on function evaluations of [`sample_gradient`].
    pub fn eval_budget(&self) -> usize {
        self.n_points * self.max_rounds * self.steps_per_round
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub accepted: usize,
    pub function_evals: usize,
    pub gradient_evals: usize,
    pub rounds_used: usize,
    pub exhausted: bool,
    /// Largest number of points held at once (candidates plus output).
    pub peak_working_set: usize,
}

/// Draw number `draw` of candidate slot `slot`: a pure function of the seed,
/// so results do not depend on how slots are scheduled.
fn gaussian_draw(cfg: &SamplerConfig, slot: usize, draw: u64) -> Point3 {
    let mut rng = rng_for(cfg.seed, &[slot as u64, draw]);
    let mut g = || -> f64 { rng.sample::<f64, _>(StandardNormal) * cfg.init_std };
    Point3::new(g(), g(), g())
}

/// The initial candidate set of [`sample_gradient`].
pub fn initial_candidates(cfg: &SamplerConfig) -> Vec<Point3> {
    (0..cfg.n_points).map(|slot| gaussian_draw(cfg, slot, 0)).collect()
}

fn in_bounds(p: Point3, bound: f64) -> bool {
    p.is_finite() && p.max_abs() <= bound
}

/// Gradient-based sampling of the super-threshold region of `params`.
///
/// Terminates with exactly `cfg.n_points` points, or earlier with
/// `exhausted = true` once `max_rounds * steps_per_round` steps have run.
/// Every returned point `p` has `params.confidence(p) > cfg.threshold`.
pub fn sample_gradient(params: &ImplicitParams, cfg: &SamplerConfig) -> Result<(PointCloud, SampleReport)> {
    cfg.validate()?;
    let n = cfg.n_points;
    let mut candidates = initial_candidates(cfg);
    let mut draws = vec![0u64; n];
    let mut points = Vec::new();
    let mut confidence = Vec::new();
    let mut report = SampleReport { peak_working_set: n, ..Default::default() };

    'rounds: for round in 0..cfg.max_rounds {
        report.rounds_used = round + 1;
        for _ in 0..cfg.steps_per_round {
            let evaluated = params.input_gradients(&candidates);
            report.function_evals += n;
            for (slot, &(c, grad)) in evaluated.iter().enumerate() {
                let x = candidates[slot];
                let accepted = c > cfg.threshold;
                if accepted && points.len() < n {
                    points.push(x);
                    confidence.push(c);
                }
                if accepted && cfg.reseed_accepted {
                    draws[slot] += 1;
                    candidates[slot] = gaussian_draw(cfg, slot, draws[slot]);
                    continue;
                }
                report.gradient_evals += 1;
                let moved = x - grad * cfg.step;
                candidates[slot] = if in_bounds(moved, cfg.bound) {
                    moved
                } else {
                    draws[slot] += 1;
                    gaussian_draw(cfg, slot, draws[slot])
                };
            }
            report.peak_working_set = report.peak_working_set.max(n + points.len());
            if points.len() >= n {
                break 'rounds;
            }
        }
    }
    report.accepted = points.len();
    report.exhausted = points.len() < n;
    Ok((PointCloud::with_confidence(points, confidence)?, report))
}

/// Dense baseline: evaluates all `resolution^3` cell centers of `bounds` and
/// keeps those with confidence above `threshold`.
pub fn sample_grid(
    params: &ImplicitParams,
    resolution: usize,
    bounds: Aabb,
    threshold: f64,
) -> Result<(PointCloud, SampleReport)> {
    if resolution == 0 {
        return Err(Error::BadArgument("grid resolution must be at least 1".into()));
    }
    bounds.validate()?;
    let r = resolution;
    let mut grid = Vec::with_capacity(r * r * r);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                grid.push(cell_center(&bounds, r, i, j, k));
            }
        }
    }
    let conf = params.forward(&grid);
    let mut points = Vec::new();
    let mut kept = Vec::new();
    for (p, c) in grid.iter().zip(conf) {
        if c > threshold {
            points.push(*p);
            kept.push(c);
        }
    }
    let report = SampleReport {
        accepted: points.len(),
        function_evals: grid.len(),
        gradient_evals: 0,
        rounds_used: 1,
        exhausted: false,
        peak_working_set: grid.len(),
    };
    Ok((PointCloud::with_confidence(points, kept)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implicit::{flat_layout, MlpArch, ParamKind};
    use crate::rng::rng_for;

    /// Random MLP of the default architecture with the output bias shifted.
    fn params_with_bias(seed: u64, output_bias: f64) -> ImplicitParams {
        let arch = MlpArch::default();
        let mut rng = rng_for(seed, &[1]);
        let layout = flat_layout(&arch);
        let mut flat = Vec::new();
        for &(l, kind, _, len) in &layout {
            let fan_in = arch.layer_dims[l] as f64;
            for _ in 0..len {
                let g: f64 = rng.sample(StandardNormal);
                flat.push(match kind {
                    ParamKind::Weight => g * (2.0 / fan_in).sqrt(),
                    ParamKind::Scale => 1.0,
                    ParamKind::Bias => 0.1 * g,
                });
            }
        }
        let (_, _, b_off, _) = layout[layout.len() - 2];
        flat[b_off] = output_bias;
        ImplicitParams::from_flat(arch, &flat).unwrap()
    }

    #[test]
    fn low_threshold_accepts_initial_draw() {
        let params = params_with_bias(1, 0.0);
        let cfg = SamplerConfig { n_points: 64, threshold: 1e-9, seed: 3, ..Default::default() };
        let (cloud, report) = sample_gradient(&params, &cfg).unwrap();
        assert_eq!(cloud.points, initial_candidates(&cfg));
        assert_eq!(report.function_evals, 64);
        assert_eq!(report.gradient_evals, 0);
        assert!(!report.exhausted);
    }

    #[test]
    fn unreachable_threshold_exhausts_within_budget() {
        let params = params_with_bias(2, -50.0);
        let cfg = SamplerConfig { n_points: 32, max_rounds: 3, steps_per_round: 5, ..Default::default() };
        let (cloud, report) = sample_gradient(&params, &cfg).unwrap();
        assert!(cloud.is_empty());
        assert!(report.exhausted);
        assert_eq!(report.accepted, 0);
        assert_eq!(report.rounds_used, 3);
        assert_eq!(report.function_evals, cfg.eval_budget());
    }

    #[test]
    fn accepted_points_exceed_threshold_and_runs_repeat() {
        for seed in 0..5 {
            let params = params_with_bias(10 + seed, -1.0);
            let cfg = SamplerConfig { n_points: 200, max_rounds: 4, seed, ..Default::default() };
            let (cloud, report) = sample_gradient(&params, &cfg).unwrap();
            assert!(report.function_evals <= cfg.eval_budget());
            for (p, c) in cloud.points.iter().zip(cloud.confidence().unwrap()) {
                assert_eq!(params.confidence(*p), *c);
                assert!(*c > cfg.threshold);
            }
            let (again, report2) = sample_gradient(&params, &cfg).unwrap();
            assert_eq!(report, report2);
            assert_eq!(cloud, again);
        }
    }

    #[test]
    fn continue_mode_keeps_descending() {
        let params = params_with_bias(4, 0.5);
        let cfg = SamplerConfig { n_points: 100, reseed_accepted: false, ..Default::default() };
        let (cloud, report) = sample_gradient(&params, &cfg).unwrap();
        assert_eq!(report.gradient_evals, report.function_evals);
        assert!(cloud.confidence().unwrap().iter().all(|&c| c > cfg.threshold));
    }

    #[test]
    fn grid_counts_and_threshold() {
        let params = params_with_bias(5, 0.0);
        let (_, report) = sample_grid(&params, 40, Aabb::canonical(), 0.85).unwrap();
        assert_eq!(report.function_evals, 64000);
        let (cloud, _) = sample_grid(&params, 12, Aabb::canonical(), 0.5).unwrap();
        for (p, c) in cloud.points.iter().zip(cloud.confidence().unwrap()) {
            assert!(params.confidence(*p) > 0.5);
            assert_eq!(params.confidence(*p), *c);
        }
        let max = sample_grid(&params, 12, Aabb::canonical(), 1e-12)
            .unwrap()
            .0
            .confidence()
            .unwrap()
            .iter()
            .copied()
            .fold(0.0, f64::max);
        let (empty, _) = sample_grid(&params, 12, Aabb::canonical(), max).unwrap();
        assert!(empty.is_empty());
        assert!(sample_grid(&params, 0, Aabb::canonical(), 0.5).is_err());
    }

    #[test]
    fn raising_threshold_shrinks_grid_output() {
        let params = params_with_bias(6, 0.3);
        let mut prev = usize::MAX;
        for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (cloud, _) = sample_grid(&params, 10, Aabb::canonical(), tau).unwrap();
            assert!(cloud.len() <= prev);
            prev = cloud.len();
        }
    }

    #[test]
    fn small_steps_do_not_increase_loss() {
        let params = params_with_bias(7, 0.0);
        let mut rng = rng_for(8, &[]);
        let loss = |p: Point3| -params.confidence(p).ln();
        for _ in 0..50 {
            let x = Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            if params.kink_margin(x) < 1e-4 {
                continue;
            }
            let (_, g) = params.input_gradient(x);
            let mut eta = 0.1;
            let mut ok = false;
            for _ in 0..30 {
                if loss(x - g * eta) <= loss(x) {
                    ok = true;
                    break;
                }
                eta *= 0.5;
            }
            assert!(ok, "no descent at {x:?}");
        }
    }
}
