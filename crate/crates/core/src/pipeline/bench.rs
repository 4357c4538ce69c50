use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::geometry::Aabb;
use crate::implicit::ImplicitParams;
use crate::sampler::{sample_gradient, sample_grid, SamplerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBench {
    pub resolution: usize,
    pub function_evals: usize,
    pub accepted: usize,
    pub peak_working_set: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBench {
    pub requested: usize,
    pub accepted: usize,
    pub function_evals: usize,
    pub gradient_evals: usize,
    pub rounds_used: usize,
    pub exhausted: bool,
    pub eval_budget: usize,
    pub peak_working_set: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub threshold: f64,
    pub grid: Vec<GridBench>,
    pub gradient: GradientBench,
}

/// Top-level and nested keys every serialized [`BenchReport`] carries.
pub const BENCH_REPORT_KEYS: &[(&str, &[&str])] = &[
    ("", &["threshold", "grid", "gradient"]),
    ("grid", &["resolution", "function_evals", "accepted", "peak_working_set", "seconds"]),
    (
        "gradient",
        &[
            "requested",
            "accepted",
            "function_evals",
            "gradient_evals",
            "rounds_used",
            "exhausted",
            "eval_budget",
            "peak_working_set",
            "seconds",
        ],
    ),
];

/// Runs the dense grid sampler over `[-0.5, 0.5]^3` at each resolution and
/// the gradient sampler once with `cfg`, on the same implicit function.
pub fn bench_samplers(params: &ImplicitParams, resolutions: &[usize], cfg: &SamplerConfig) -> Result<BenchReport> {
    if resolutions.is_empty() {
        return Err(Error::BadArgument("at least one grid resolution is required".into()));
    }
    cfg.validate()?;
    let mut grid = Vec::with_capacity(resolutions.len());
    for &r in resolutions {
        let start = Instant::now();
        let (_, rep) = sample_grid(params, r, Aabb::canonical(), cfg.threshold)?;
        grid.push(GridBench {
            resolution: r,
            function_evals: rep.function_evals,
            accepted: rep.accepted,
            peak_working_set: rep.peak_working_set,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let start = Instant::now();
    let (_, rep) = sample_gradient(params, cfg)?;
    let gradient = GradientBench {
        requested: cfg.n_points,
        accepted: rep.accepted,
        function_evals: rep.function_evals,
        gradient_evals: rep.gradient_evals,
        rounds_used: rep.rounds_used,
        exhausted: rep.exhausted,
        eval_budget: cfg.eval_budget(),
        peak_working_set: rep.peak_working_set,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(BenchReport { threshold: cfg.threshold, grid, gradient })
}
