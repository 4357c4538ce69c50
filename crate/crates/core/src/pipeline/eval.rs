use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::encoder::{self, BackboneParams};
use crate::geometry::{farthest_point_sample, jaccard, voxelize, Aabb, PointCloud};
use crate::rng::derive;
use crate::sampler::{sample_gradient, SampleReport, SamplerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Points drawn by the sampler before downsampling.
    pub samples: usize,
    /// Size of the returned cloud after farthest point sampling.
    pub fps_target: usize,
    /// Voxel grid resolution for Jaccard similarity.
    pub resolution: usize,
    /// Sampler settings; `n_points` and `seed` are overridden.
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: 100_000, fps_target: 16384, resolution: 40, sampler: SamplerConfig::default(), seed: 0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fps_target == 0 || self.fps_target > self.samples {
            return Err(Error::BadArgument(format!(
                "fps_target {} must be in 1..={}",
                self.fps_target, self.samples
            )));
        }
        if self.resolution == 0 {
            return Err(Error::BadArgument("resolution must be at least 1".into()));
        }
        self.sampler_config(self.seed).validate()
    }

    fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig { n_points: self.samples, seed, ..self.sampler.clone() }
    }
}

/// A completed cloud with per-point confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub cloud: PointCloud,
    pub sampler: SampleReport,
    /// The sampler ran out of budget; `cloud` may be short or empty.
    pub exhausted: bool,
}

/// Encodes `partial`, samples the generated implicit function and
/// downsamples the result to `cfg.fps_target` points.
pub fn reconstruct(params: &BackboneParams, partial: &PointCloud, cfg: &EvalConfig) -> Result<Reconstruction> {
    cfg.validate()?;
    let implicit = encoder::predict(partial, params)?;
    let (cloud, report) = sample_gradient(&implicit, &cfg.sampler_config(cfg.seed))?;
    let cloud = if cloud.len() > cfg.fps_target {
        cloud.select(&farthest_point_sample(&cloud, cfg.fps_target, 0)?)
    } else {
        cloud
    };
    if report.exhausted {
        log::warn!("sampler exhausted with {} of {} points", report.accepted, cfg.samples);
    }
    Ok(Reconstruction { cloud, exhausted: report.exhausted, sampler: report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub id: String,
    pub split: String,
    /// `None` when the sample failed; see `error`.
    pub jaccard: Option<f64>,
    pub points: usize,
    pub exhausted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub evaluated: usize,
    pub failed: usize,
    pub exhausted: usize,
    pub mean_jaccard: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub mean_seconds: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by sample id.
    pub samples: Vec<SampleEval>,
    pub splits: BTreeMap<String, SplitSummary>,
    pub mean_jaccard: f64,
    pub failed: usize,
    pub exhausted: usize,
    pub timing: Timing,
}

impl EvalReport {
    /// The report without wall-clock measurements, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self { timing: Timing::default(), ..self.clone() }
    }
}

fn summarize<'a>(evals: impl Iterator<Item = &'a SampleEval>) -> SplitSummary {
    let (mut evaluated, mut failed, mut exhausted, mut sum) = (0, 0, 0, 0.0);
    for e in evals {
        match e.jaccard {
            Some(j) => {
                evaluated += 1;
                sum += j;
            }
            None => failed += 1,
        }
        exhausted += e.exhausted as usize;
    }
    let mean_jaccard = if evaluated > 0 { sum / evaluated as f64 } else { 0.0 };
    SplitSummary { evaluated, failed, exhausted, mean_jaccard }
}

fn id_key(id: &str) -> u64 {
    // FNV-1a, so per-sample seeds follow the id rather than the position.
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

fn evaluate_one(params: &BackboneParams, sample: &Sample, cfg: &EvalConfig) -> Result<(f64, Reconstruction)> {
    let cfg = EvalConfig { seed: derive(cfg.seed, &[id_key(&sample.meta.id)]), ..cfg.clone() };
    let rec = reconstruct(params, &sample.partial, &cfg)?;
    let bounds = Aabb::canonical();
    let predicted = voxelize(&rec.cloud, cfg.resolution, bounds)?;
    let truth = voxelize(&sample.complete, cfg.resolution, bounds)?;
    Ok((jaccard(&predicted, &truth)?, rec))
}

/// Reconstructs every sample and scores it against its ground truth by
/// voxel Jaccard similarity over `[-0.5, 0.5]^3`. Failing samples are
/// recorded and skipped. The result does not depend on sample order.
pub fn evaluate<'a>(
    params: &BackboneParams,
    samples: impl IntoIterator<Item = &'a Sample>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut samples: Vec<&Sample> = samples.into_iter().collect();
    if samples.is_empty() {
        return Err(Error::DataError("nothing to evaluate".into()));
    }
    samples.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
    let mut evals = Vec::with_capacity(samples.len());
    let mut timing = Timing::default();
    for s in samples {
        let start = Instant::now();
        let eval = match evaluate_one(params, s, cfg) {
            Ok((j, rec)) => SampleEval {
                id: s.meta.id.clone(),
                split: s.meta.split.name().into(),
                jaccard: Some(j),
                points: rec.cloud.len(),
                exhausted: rec.exhausted,
                error: None,
            },
            Err(e) => {
                log::warn!("{}: {e}", s.meta.id);
                SampleEval {
                    id: s.meta.id.clone(),
                    split: s.meta.split.name().into(),
                    jaccard: None,
                    points: 0,
                    exhausted: false,
                    error: Some(e.to_string()),
                }
            }
        };
        let secs = start.elapsed().as_secs_f64();
        log::debug!("{}: {:?} in {secs:.2}s", eval.id, eval.jaccard);
        timing.total_seconds += secs;
        timing.max_seconds = timing.max_seconds.max(secs);
        evals.push(eval);
    }
    timing.mean_seconds = timing.total_seconds / evals.len() as f64;
    let mut splits = BTreeMap::new();
    for name in evals.iter().map(|e| e.split.clone()).collect::<std::collections::BTreeSet<_>>() {
        splits.insert(name.clone(), summarize(evals.iter().filter(|e| e.split == name)));
    }
    let overall = summarize(evals.iter());
    Ok(EvalReport {
        samples: evals,
        splits,
        mean_jaccard: overall.mean_jaccard,
        failed: overall.failed,
        exhausted: overall.exhausted,
        timing,
    })
}
