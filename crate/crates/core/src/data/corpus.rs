use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{make_shape, partial_view, rotation_preset, Pose, ShapeFamily, ShapeSpec, ViewSpec};
use crate::geometry::{
    farthest_point_sample, read_ply_file, write_ply_file, PlyFormat, Point3, PointCloud,
};
use crate::rng::{derive, rng_from};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    HoldoutViews,
    HoldoutModels,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::HoldoutViews => "holdout-views",
            Split::HoldoutModels => "holdout-models",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "holdout-views" => Ok(Split::HoldoutViews),
            "holdout-models" => Ok(Split::HoldoutModels),
            other => Err(Error::BadArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Contents of a sample's `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    /// Shape with the view rotation already folded into its pose.
    pub shape: ShapeSpec,
    pub view: ViewSpec,
    pub shape_seed: u64,
    pub instance: usize,
    pub view_index: usize,
    pub split: Split,
    /// Held out of gradient steps and used only for early stopping.
    #[serde(default)]
    pub validation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub partial: PointCloud,
    pub complete: PointCloud,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Any of `sphere`, `box`, `cylinder`, `capsule`.
    pub families: Vec<String>,
    pub instances_per_family: usize,
    /// Rotation preset name, e.g. `desk-8` or `paper-726`.
    pub rotations: String,
    /// The last this-many views of every instance form the holdout-views split.
    pub holdout_views: usize,
    /// Views of every training instance, just before the holdout views,
    /// reserved for early stopping.
    pub validation_views: usize,
    /// Instances per family reserved for the holdout-models split.
    pub holdout_models: usize,
    pub complete_points: usize,
    /// Partial views are downsampled to this size by FPS when larger.
    pub partial_points: Option<usize>,
    pub view: ViewSpec,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            families: vec!["sphere".into(), "box".into(), "cylinder".into()],
            instances_per_family: 20,
            rotations: "desk-8".into(),
            holdout_views: 2,
            validation_views: 1,
            holdout_models: 0,
            complete_points: 16384,
            partial_points: Some(2048),
            view: ViewSpec::default(),
            seed: 0,
        }
    }
}

fn random_family(name: &str, rng: &mut impl Rng) -> Result<ShapeFamily> {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    Ok(match name {
        "sphere" => ShapeFamily::Sphere { radius: u(0.3, 1.0) },
        "box" => ShapeFamily::Box { extents: [u(0.3, 1.0), u(0.3, 1.0), u(0.3, 1.0)] },
        "cylinder" => ShapeFamily::Cylinder { radius: u(0.15, 0.5), height: u(0.3, 1.2) },
        "capsule" => ShapeFamily::Capsule { radius: u(0.15, 0.35), length: u(0.2, 0.9) },
        other => return Err(Error::BadArgument(format!("unknown shape family `{other}`"))),
    })
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    let mut g = || -> f64 { rng.sample(StandardNormal) };
    UnitQuaternion::from_quaternion(Quaternion::new(g(), g(), g(), g()))
}

fn round_to_f32(cloud: &PointCloud) -> PointCloud {
    let r = |v: f64| v as f32 as f64;
    PointCloud::new(cloud.points.iter().map(|p| Point3::new(r(p.x), r(p.y), r(p.z))).collect())
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let views = rotation_preset(&self.rotations)?.len();
        if self.families.is_empty() || self.instances_per_family == 0 {
            return Err(Error::BadArgument("corpus needs at least one family and instance".into()));
        }
        if self.holdout_views + self.validation_views >= views {
            return Err(Error::BadArgument("holdout and validation views leave no training views".into()));
        }
        if self.holdout_models >= self.instances_per_family {
            return Err(Error::BadArgument("holdout_models leaves no training instances".into()));
        }
        if self.complete_points < 2 || self.partial_points == Some(0) {
            return Err(Error::BadArgument("point counts must be positive".into()));
        }
        self.view.validate()
    }
}

/// Builds the procedural corpus. The first `holdout_models` instances of a
/// family are holdout models. Every other instance contributes its last
/// `holdout_views` views to the holdout-views split, the `validation_views`
/// before those to validation, and the rest to training.
///
/// Samples are ordered by id and coordinates are rounded to `f32`, so the
/// corpus survives a save/load round trip unchanged.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Dataset> {
    cfg.validate()?;
    let rotations = rotation_preset(&cfg.rotations)?;
    let mut samples = Vec::new();
    for (fi, family_name) in cfg.families.iter().enumerate() {
        for inst in 0..cfg.instances_per_family {
            let inst_seed = derive(cfg.seed, &[fi as u64, inst as u64]);
            let mut rng = rng_from(inst_seed);
            let family = random_family(family_name, &mut rng)?;
            let base = random_rotation(&mut rng);
            let shape_seed = derive(inst_seed, &[1]);
            let holdout_model = inst < cfg.holdout_models;
            for (vi, rot) in rotations.iter().enumerate() {
                let shape = ShapeSpec { family: family.clone(), pose: Pose::from_rotation(&(rot * base)) };
                let complete = round_to_f32(&make_shape(&shape, cfg.complete_points, shape_seed)?);
                let mut partial = partial_view(&complete, &cfg.view)?;
                if let Some(limit) = cfg.partial_points.filter(|&k| k < partial.len()) {
                    partial = partial.select(&farthest_point_sample(&partial, limit, 0)?);
                }
                let n = rotations.len();
                let split = if holdout_model {
                    Split::HoldoutModels
                } else if vi + cfg.holdout_views >= n {
                    Split::HoldoutViews
                } else {
                    Split::Train
                };
                let validation = split == Split::Train && vi + cfg.holdout_views + cfg.validation_views >= n;
                let meta = SampleMeta {
                    id: format!("{family_name}-{inst:03}-v{vi:03}"),
                    shape,
                    view: cfg.view.clone(),
                    shape_seed,
                    instance: inst,
                    view_index: vi,
                    split,
                    validation,
                };
                samples.push(Sample { partial, complete, meta });
            }
        }
    }
    samples.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
    Ok(Dataset { samples })
}

/// A collection of samples, stored on disk as one directory per sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples used for gradient steps.
    pub fn training(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.meta.split == Split::Train && !s.meta.validation)
    }

    /// Samples used for early stopping.
    pub fn validation(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.meta.validation)
    }

    /// Samples of a split, excluding validation views.
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.meta.split == split && !s.meta.validation)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for s in &self.samples {
            let sub = dir.join(&s.meta.id);
            fs::create_dir_all(&sub)?;
            write_ply_file(sub.join("partial.ply"), &s.partial, PlyFormat::BinaryLittleEndian)?;
            write_ply_file(sub.join("complete.ply"), &s.complete, PlyFormat::BinaryLittleEndian)?;
            fs::write(sub.join("meta.json"), serde_json::to_string_pretty(&s.meta)?)?;
        }
        Ok(())
    }

    /// Loads every sample directory under `dir`, sorted by name.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| Error::DataError(format!("{}: {e}", dir.display())))?;
        let mut subdirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        let mut samples = Vec::with_capacity(subdirs.len());
        for sub in subdirs {
            let bad = |what: &str, e: &dyn std::fmt::Display| {
                Error::DataError(format!("{}: {what}: {e}", sub.display()))
            };
            let meta_text = fs::read_to_string(sub.join("meta.json")).map_err(|e| bad("meta.json", &e))?;
            let meta: SampleMeta = serde_json::from_str(&meta_text).map_err(|e| bad("meta.json", &e))?;
            let partial = read_ply_file(sub.join("partial.ply")).map_err(|e| bad("partial.ply", &e))?;
            let complete = read_ply_file(sub.join("complete.ply")).map_err(|e| bad("complete.ply", &e))?;
            if partial.is_empty() || complete.is_empty() {
                return Err(bad("cloud", &"empty point cloud"));
            }
            samples.push(Sample { partial, complete, meta });
        }
        if samples.is_empty() {
            return Err(Error::DataError(format!("{}: no samples found", dir.display())));
        }
        Ok(Self { samples })
    }
}
