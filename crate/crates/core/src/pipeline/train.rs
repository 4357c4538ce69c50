use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{make_query_batch, Dataset, QueryBatch, Sample};
use crate::encoder::{self, BackboneParams, EncoderArch};
use crate::geometry::{Point3, PointCloud};
use crate::rng::{derive, rng_for};
use crate::{Error, Result};

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_QUERIES: u64 = 3;
const STREAM_VALIDATION: u64 = 4;
const STREAM_INPUT_NOISE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Query points per sample; a multiple of 10.
    pub queries: usize,
    pub noise_std: f64,
    pub label_eps: f64,
    /// Gaussian jitter added to training inputs.
    pub input_noise_std: f64,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Reuse one query batch per sample instead of resampling every epoch.
    pub fixed_queries: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 60,
            queries: 1000,
            noise_std: 0.02,
            label_eps: 0.01,
            input_noise_std: 0.0,
            patience: 10,
            fixed_queries: false,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-size settings: mini-batches of 32.
    pub fn paper_scale() -> Self {
        Self { batch_size: 32, ..Self::default() }
    }

    /// Settings for the small procedural corpus on one CPU core: a wider
    /// labeling band and longer training under early stopping.
    pub fn desk() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 4,
            epochs: 500,
            patience: 100,
            label_eps: 0.02,
            noise_std: 0.03,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.batch_size >= 1
            && self.queries >= 10
            && self.queries % 10 == 0
            && self.noise_std >= 0.0
            && self.label_eps >= 0.0
            && self.input_noise_std >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::BadArgument(format!("invalid training config {self:?}")))
        }
    }
}

/// Adam with bias correction, stepping every backbone tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: BackboneParams,
    v: BackboneParams,
}

impl Adam {
    pub fn new(params: &BackboneParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn from_config(params: &BackboneParams, cfg: &TrainConfig) -> Self {
        Self::new(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    }

    pub fn update(&mut self, params: &mut BackboneParams, grads: &BackboneParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let tensors = params.tensors_mut().zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for ((p, m), v) in tensors {
            let g = &grads.get(&p.name).expect("gradient layout matches parameters").data;
            for (((x, m), v), g) in p.value.data.iter_mut().zip(&mut m.value.data).zip(&mut v.value.data).zip(g) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *x -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best epoch, rounded to checkpoint precision.
    pub params: BackboneParams,
    pub curve: Vec<EpochRecord>,
    /// Zero-based; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn check_sample(s: &Sample, arch: &EncoderArch) -> Result<()> {
    if s.partial.len() < arch.min_points() {
        return Err(Error::DataError(format!(
            "{}: partial view has {} points, the encoder needs {}",
            s.meta.id,
            s.partial.len(),
            arch.min_points()
        )));
    }
    if s.complete.is_empty() {
        return Err(Error::DataError(format!("{}: empty ground truth", s.meta.id)));
    }
    Ok(())
}

fn jitter(cloud: &PointCloud, std: f64, seed: u64) -> PointCloud {
    if std == 0.0 {
        return cloud.clone();
    }
    let mut rng = rng_for(seed, &[STREAM_INPUT_NOISE]);
    let mut g = || -> f64 { rng.sample::<f64, _>(StandardNormal) * std };
    PointCloud::new(cloud.points.iter().map(|&p| p + Point3::new(g(), g(), g())).collect())
}

/// Trains freshly initialized parameters; see [`train_from`].
pub fn train(dataset: &Dataset, arch: &EncoderArch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut init = BackboneParams::init(arch.clone(), derive(cfg.seed, &[STREAM_INIT]))?;
    init.round_to_f32();
    train_from(dataset, init, cfg)
}

/// Mini-batch Adam on the training samples of `dataset`, tracking the mean
/// loss on validation samples after every epoch. Returns the parameters of
/// the epoch with the lowest validation loss (training loss when the dataset
/// has no validation samples).
pub fn train_from(dataset: &Dataset, mut params: BackboneParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let arch = params.arch().clone();
    let training: Vec<&Sample> = dataset.training().collect();
    let validation: Vec<&Sample> = dataset.validation().collect();
    if training.is_empty() {
        return Err(Error::DataError("dataset has no training samples".into()));
    }
    for s in training.iter().chain(&validation) {
        check_sample(s, &arch)?;
    }
    let query = |s: &Sample, seed: u64| -> Result<QueryBatch> {
        make_query_batch(&s.complete, cfg.queries, cfg.noise_std, cfg.label_eps, seed)
    };
    let val_batches: Vec<QueryBatch> = validation
        .iter()
        .enumerate()
        .map(|(i, s)| query(s, derive(cfg.seed, &[STREAM_VALIDATION, i as u64])))
        .collect::<Result<_>>()?;

    let mut adam = Adam::from_config(&params, cfg);
    let mut order: Vec<usize> = (0..training.len()).collect();
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut since_best = 0;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng_for(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            for &i in chunk {
                let s = training[i];
                let qseed = if cfg.fixed_queries {
                    derive(cfg.seed, &[STREAM_QUERIES, i as u64])
                } else {
                    derive(cfg.seed, &[STREAM_QUERIES, i as u64, epoch as u64 + 1])
                };
                let batch = query(s, qseed)?;
                let input = jitter(&s.partial, cfg.input_noise_std, qseed);
                let (loss, g) = encoder::backward(&input, &batch, &params)?;
                total += loss;
                grads.axpy(1.0 / chunk.len() as f64, &g);
            }
            adam.update(&mut params, &grads);
        }
        let train_loss = total / training.len() as f64;
        let val_loss = if validation.is_empty() {
            train_loss
        } else {
            let mut sum = 0.0;
            for (s, b) in validation.iter().zip(&val_batches) {
                sum += encoder::loss(&s.partial, b, &params)?;
            }
            sum / validation.len() as f64
        };
        let record = EpochRecord { epoch, train_loss, val_loss, seconds: start.elapsed().as_secs_f64() };
        log::info!(
            "epoch {epoch}: train {train_loss:.5} val {val_loss:.5} ({:.1}s)",
            record.seconds
        );
        curve.push(record);
        if val_loss < best_loss {
            best_loss = val_loss;
            best = params.clone();
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    best.round_to_f32();
    Ok(TrainOutcome { params: best, curve, best_epoch, best_val_loss: best_loss, stopped_early })
}

/// Writes the training curve as CSV with a header row.
pub fn write_curve_csv(out: impl Write, curve: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "epoch,train_loss,val_loss,seconds")?;
    for r in curve {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.seconds)?;
    }
    w.flush()?;
    Ok(())
}

impl TrainOutcome {
    pub fn write_curve(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::FileError { path: path.to_path_buf(), reason: e.to_string() })?;
        write_curve_csv(file, &self.curve)
    }
}
