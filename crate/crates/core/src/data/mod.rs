//! Synthetic training data.
//!
//! Ground-truth clouds are sampled uniformly by area from procedural shapes
//! (or a triangle mesh), posed and normalized. Partial views are produced by
//! an orthographic z-buffer that keeps, per pixel, only the points close to
//! the nearest one. Query batches label points near the ground truth as
//! occupied.

mod corpus;
mod views;

pub use corpus::{generate_corpus, CorpusConfig, Dataset, Sample, SampleMeta, Split};
pub use views::{make_view_set, partial_view, rotation_preset, ViewPair, ViewSpec};

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize, read_ply_mesh, Point3, PointCloud, TriangleMesh};
use crate::rng::rng_from;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ShapeFamily {
    Sphere { radius: f64 },
    /// Full side lengths along x, y, z.
    Box { extents: [f64; 3] },
    /// Axis along local z.
    Cylinder { radius: f64, height: f64 },
    /// Cylinder of `length` along local z capped by hemispheres.
    Capsule { radius: f64, length: f64 },
    MeshFile { path: PathBuf },
}

impl ShapeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeFamily::Sphere { .. } => "sphere",
            ShapeFamily::Box { .. } => "box",
            ShapeFamily::Cylinder { .. } => "cylinder",
            ShapeFamily::Capsule { .. } => "capsule",
            ShapeFamily::MeshFile { .. } => "mesh-file",
        }
    }
}

/// Rotation as a unit quaternion `[w, x, y, z]`, then translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Default for Pose {
    fn default() -> Self {
        Self { rotation: [1.0, 0.0, 0.0, 0.0], translation: [0.0; 3] }
    }
}

impl Pose {
    pub fn from_rotation(q: &UnitQuaternion<f64>) -> Self {
        Self { rotation: [q.w, q.i, q.j, q.k], translation: [0.0; 3] }
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        let v = self.unit_quaternion() * Vector3::new(p.x, p.y, p.z);
        let t = self.translation;
        Point3::new(v.x + t[0], v.y + t[1], v.z + t[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub family: ShapeFamily,
    #[serde(default)]
    pub pose: Pose,
}

impl ShapeSpec {
    pub fn new(family: ShapeFamily) -> Self {
        Self { family, pose: Pose::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |vals: &[f64]| vals.iter().all(|v| *v > 0.0 && v.is_finite());
        let ok = match &self.family {
            ShapeFamily::Sphere { radius } => positive(&[*radius]),
            ShapeFamily::Box { extents } => positive(extents),
            ShapeFamily::Cylinder { radius, height } => positive(&[*radius, *height]),
            ShapeFamily::Capsule { radius, length } => positive(&[*radius, *length]),
            ShapeFamily::MeshFile { .. } => true,
        };
        if !ok {
            return Err(Error::BadSpec(format!("non-positive size in {:?}", self.family)));
        }
        let norm = self.pose.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::BadSpec(format!("rotation quaternion has norm {norm}")));
        }
        if self.pose.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadSpec("non-finite translation".into()));
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut impl Rng) -> Point3 {
    loop {
        let v = Point3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v * (1.0 / n);
        }
    }
}

/// A point uniformly distributed by area on the surface of a centered
/// primitive, in its local frame.
fn primitive_surface_point(family: &ShapeFamily, rng: &mut impl Rng) -> Point3 {
    match family {
        ShapeFamily::Sphere { radius } => unit_vector(rng) * *radius,
        ShapeFamily::Box { extents: [a, b, c] } => {
            let areas = [b * c, a * c, a * b];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut axis = 2;
            for (i, &area) in areas.iter().enumerate() {
                if pick < area {
                    axis = i;
                    break;
                }
                pick -= area;
            }
            let half = [a / 2.0, b / 2.0, c / 2.0];
            let mut p = [0.0; 3];
            for (k, h) in half.iter().enumerate() {
                p[k] = if k == axis {
                    if rng.random_bool(0.5) { *h } else { -h }
                } else {
                    rng.random_range(-h..=*h)
                };
            }
            Point3::from(p)
        }
        ShapeFamily::Cylinder { radius: r, height: h } => {
            let lateral = 2.0 * PI * r * h;
            let caps = 2.0 * PI * r * r;
            if rng.random_range(0.0..lateral + caps) < lateral {
                let t = rng.random_range(0.0..2.0 * PI);
                Point3::new(r * t.cos(), r * t.sin(), rng.random_range(-h / 2.0..=h / 2.0))
            } else {
                let rho = r * rng.random_range(0.0f64..1.0).sqrt();
                let t = rng.random_range(0.0..2.0 * PI);
                let z = if rng.random_bool(0.5) { h / 2.0 } else { -h / 2.0 };
                Point3::new(rho * t.cos(), rho * t.sin(), z)
            }
        }
        ShapeFamily::Capsule { radius: r, length: l } => {
            let lateral = 2.0 * PI * r * l;
            let ends = 4.0 * PI * r * r;
            if rng.random_range(0.0..lateral + ends) < lateral {
                let t = rng.random_range(0.0..2.0 * PI);
                Point3::new(r * t.cos(), r * t.sin(), rng.random_range(-l / 2.0..=l / 2.0))
            } else {
                let d = unit_vector(rng) * *r;
                let shift = if d.z >= 0.0 { l / 2.0 } else { -l / 2.0 };
                Point3::new(d.x, d.y, d.z + shift)
            }
        }
        ShapeFamily::MeshFile { .. } => unreachable!("meshes are sampled separately"),
    }
}

fn load_mesh(path: &PathBuf) -> Result<TriangleMesh> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::FileError { path: path.clone(), reason: e.to_string() })?;
    let mesh = read_ply_mesh(file)
        .map_err(|e| Error::FileError { path: path.clone(), reason: e.to_string() })?;
    if mesh.triangles.is_empty() {
        return Err(Error::FileError { path: path.clone(), reason: "mesh has no faces".into() });
    }
    Ok(mesh)
}

/// Area-weighted uniform samples from a triangle soup.
pub fn sample_mesh_surface(mesh: &TriangleMesh, n: usize, rng: &mut impl Rng) -> Result<Vec<Point3>> {
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| mesh.vertices[i]);
        let (u, v) = (b - a, c - a);
        let cross = Point3::new(u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x);
        total += 0.5 * cross.norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::BadSpec("mesh has zero surface area".into()));
    }
    Ok((0..n)
        .map(|_| {
            let pick = rng.random_range(0.0..total);
            let ti = cumulative.partition_point(|&c| c <= pick).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangles[ti].map(|i| mesh.vertices[i]);
            let (mut s, mut t) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            if s + t > 1.0 {
                s = 1.0 - s;
                t = 1.0 - t;
            }
            a + (b - a) * s + (c - a) * t
        })
        .collect())
}

/// Ground-truth cloud of `n_points` surface samples, posed and normalized.
///
/// Primitive shapes are sampled in antithetic pairs (`p`, `-p`) so the
/// centroid of an even-sized sample is the shape center; a sphere therefore
/// normalizes to a cloud with all norms equal.
pub fn make_shape(spec: &ShapeSpec, n_points: usize, seed: u64) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::BadArgument("n_points must be at least 1".into()));
    }
    spec.validate()?;
    let mut rng = rng_from(seed);
    // A single point cannot be normalized on its own; normalize a pair and keep one.
    let m = n_points.max(2);
    let local: Vec<Point3> = match &spec.family {
        ShapeFamily::MeshFile { path } => sample_mesh_surface(&load_mesh(path)?, m, &mut rng)?,
        family => {
            let mut pts = Vec::with_capacity(m);
            while pts.len() + 1 < m {
                let p = primitive_surface_point(family, &mut rng);
                pts.push(p);
                pts.push(-p);
            }
            if pts.len() < m {
                pts.push(primitive_surface_point(family, &mut rng));
            }
            pts
        }
    };
    let posed = PointCloud::new(local.into_iter().map(|p| spec.pose.apply(p)).collect());
    let (mut cloud, _) = normalize(&posed)?;
    cloud.points.truncate(n_points);
    Ok(cloud)
}

/// Where a query point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryTag {
    Surface,
    Perturbed,
    Uniform,
}

/// Labeled points that supervise the implicit function.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    pub points: Vec<Point3>,
    /// 1 = occupied, 0 = free.
    pub labels: Vec<u8>,
    pub provenance: Vec<QueryTag>,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    pub fn count(&self, tag: QueryTag) -> usize {
        self.provenance.iter().filter(|&&t| t == tag).count()
    }
}

/// Hash grid answering "is any point within `radius`?" exactly.
pub struct NearIndex<'a> {
    points: &'a [Point3],
    radius: f64,
    cells: std::collections::HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> NearIndex<'a> {
    pub fn new(points: &'a [Point3], radius: f64) -> Self {
        let mut cells: std::collections::HashMap<(i64, i64, i64), Vec<usize>> = Default::default();
        let cell = radius.max(1e-9);
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(*p, cell)).or_default().push(i);
        }
        Self { points, radius, cells }
    }

    fn key(p: Point3, cell: f64) -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    }

    pub fn any_within(&self, q: Point3) -> bool {
        let cell = self.radius.max(1e-9);
        let (x, y, z) = Self::key(q, cell);
        let r2 = self.radius * self.radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(x + dx, y + dy, z + dz)) {
                        if ids.iter().any(|&i| self.points[i].distance_squared(q) <= r2) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Query batch of `n` points: half copied from `gt` (label 1), 40% `gt`
/// samples plus Gaussian noise and 10% uniform in `[-0.5, 0.5]^3`, the last
/// two labeled 1 iff some `gt` point lies within `label_eps`.
pub fn make_query_batch(
    gt: &PointCloud,
    n: usize,
    noise_std: f64,
    label_eps: f64,
    seed: u64,
) -> Result<QueryBatch> {
    if n == 0 || n % 10 != 0 {
        return Err(Error::BadArgument(format!("query batch size {n} is not a positive multiple of 10")));
    }
    if gt.is_empty() {
        return Err(Error::BadArgument("empty ground-truth cloud".into()));
    }
    if !(noise_std >= 0.0) || !(label_eps >= 0.0) {
        return Err(Error::BadArgument("noise_std and label_eps must be non-negative".into()));
    }
    let mut rng = rng_from(seed);
    let (n_surface, n_perturbed) = (n / 2, 4 * n / 10);
    let n_uniform = n - n_surface - n_perturbed;
    let index = NearIndex::new(&gt.points, label_eps);
    let mut batch = QueryBatch {
        points: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        provenance: Vec::with_capacity(n),
    };
    for _ in 0..n_surface {
        batch.points.push(gt.points[rng.random_range(0..gt.len())]);
        batch.labels.push(1);
        batch.provenance.push(QueryTag::Surface);
    }
    for _ in 0..n_perturbed {
        let base = gt.points[rng.random_range(0..gt.len())];
        let mut g = || -> f64 { rng.sample::<f64, _>(StandardNormal) * noise_std };
        let p = base + Point3::new(g(), g(), g());
        batch.points.push(p);
        batch.labels.push(index.any_within(p) as u8);
        batch.provenance.push(QueryTag::Perturbed);
    }
    for _ in 0..n_uniform {
        let p = Point3::new(
            rng.random_range(-0.5..=0.5),
            rng.random_range(-0.5..=0.5),
            rng.random_range(-0.5..=0.5),
        );
        batch.points.push(p);
        batch.labels.push(index.any_within(p) as u8);
        batch.provenance.push(QueryTag::Uniform);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests;
