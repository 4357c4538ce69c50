//! Point-cloud primitives shared by the rest of the crate.
//!
//! Everything here is a pure function of its inputs. Neighbor queries are
//! brute force; they are the reference the rest of the crate is tested
//! against.

mod ply;

pub use ply::{
    confidence_color, read_ply, read_ply_file, read_ply_mesh, write_ply, write_ply_file,
    PlyFormat, TriangleMesh,
};

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance_squared(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(self, other: Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// An ordered list of points with optional per-point confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    confidence: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points, confidence: None }
    }

    pub fn with_confidence(points: Vec<Point3>, confidence: Vec<f64>) -> Result<Self> {
        if points.len() != confidence.len() {
            return Err(Error::BadArgument(format!(
                "{} points but {} confidence values",
                points.len(),
                confidence.len()
            )));
        }
        Ok(Self { points, confidence: Some(confidence) })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn confidence(&self) -> Option<&[f64]> {
        self.confidence.as_deref()
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<f64>>) {
        (self.points, self.confidence)
    }

    /// Keeps the points at `indices`, in that order, along with their confidence.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            confidence: self
                .confidence
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut sum = Point3::ORIGIN;
        for &p in &self.points {
            sum += p;
        }
        Some(sum * (1.0 / self.points.len() as f64))
    }

    /// Axis-aligned bounds of the points, or `None` if empty.
    pub fn bounding_box(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (
                Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }

    pub fn transformed(&self, t: &Transform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| t.apply(p)).collect(),
            confidence: self.confidence.clone(),
        }
    }
}

/// Uniform scale around a translation: `p' = (p + translation) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub translation: Point3,
    pub scale: f64,
}

impl Transform {
    pub const IDENTITY: Transform = Transform { translation: Point3::ORIGIN, scale: 1.0 };

    pub fn new(translation: Point3, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::BadArgument(format!("transform scale must be positive, got {scale}")));
        }
        Ok(Self { translation, scale })
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        (p + self.translation) * self.scale
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        p * (1.0 / self.scale) - self.translation
    }
}

/// Centers a cloud on its centroid and scales it so the largest absolute
/// coordinate is 0.5. The returned transform maps input to output.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, Transform)> {
    let centroid = cloud
        .centroid()
        .ok_or_else(|| Error::DegenerateCloud("empty cloud".into()))?;
    let translation = -centroid;
    let extent = cloud
        .points
        .iter()
        .map(|&p| (p + translation).max_abs())
        .fold(0.0_f64, f64::max);
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::DegenerateCloud("all points coincide".into()));
    }
    let transform = Transform { translation, scale: 0.5 / extent };
    Ok((cloud.transformed(&transform), transform))
}

/// Greedy farthest point sampling starting from `start`.
///
/// Each step picks the point whose distance to the already chosen set is
/// largest, ties going to the lowest index.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, start: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::BadArgument(format!("FPS of {k} from {n} points")));
    }
    if start >= n {
        return Err(Error::BadArgument(format!("FPS start {start} out of range for {n} points")));
    }
    // Structure-of-arrays keeps the inner loop vectorizable for 1e5-point clouds.
    let xs: Vec<f64> = cloud.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = cloud.points.iter().map(|p| p.y).collect();
    let zs: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut chosen = Vec::with_capacity(k);
    let mut current = start;
    chosen.push(current);
    min_d2[current] = f64::NEG_INFINITY;
    while chosen.len() < k {
        let (cx, cy, cz) = (xs[current], ys[current], zs[current]);
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for i in 0..n {
            let dx = xs[i] - cx;
            let dy = ys[i] - cy;
            let dz = zs[i] - cz;
            let d2 = dx * dx + dy * dy + dz * dz;
            let m = if d2 < min_d2[i] { d2 } else { min_d2[i] };
            min_d2[i] = m;
            if m > best_d2 {
                best_d2 = m;
                best = i;
            }
        }
        current = best;
        chosen.push(current);
        min_d2[current] = f64::NEG_INFINITY;
    }
    Ok(chosen)
}

fn cmp_by_distance(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Indices of the `k` nearest points to `query`, nearest first, ties by index.
pub fn knn(cloud: &PointCloud, query: Point3, k: usize) -> Result<Vec<usize>> {
    knn_points(&cloud.points, query, k)
}

pub(crate) fn knn_points(points: &[Point3], query: Point3, k: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::BadArgument(format!("knn with k = {k} over {n} points")));
    }
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (p.distance_squared(query), i))
        .collect();
    if k < n {
        d.select_nth_unstable_by(k - 1, cmp_by_distance);
        d.truncate(k);
    }
    d.sort_unstable_by(cmp_by_distance);
    Ok(d.into_iter().map(|(_, i)| i).collect())
}

/// Axis-aligned box with `min < max` on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        let ok = min.is_finite()
            && max.is_finite()
            && min.x < max.x
            && min.y < max.y
            && min.z < max.z;
        if !ok {
            return Err(Error::BadArgument(format!("degenerate bounds {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    /// The canonical evaluation box `[-0.5, 0.5]^3`.
    pub fn canonical() -> Self {
        Self { min: Point3::new(-0.5, -0.5, -0.5), max: Point3::new(0.5, 0.5, 0.5) }
    }

    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn extent(&self) -> Point3 {
        self.max - self.min
    }

    pub(crate) fn validate(&self) -> Result<()> {
        Aabb::new(self.min, self.max).map(|_| ())
    }
}

/// Cubic boolean occupancy grid over explicit bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    bounds: Aabb,
    occupied: Vec<bool>,
    dropped: usize,
}

impl VoxelGrid {
    pub fn empty(resolution: usize, bounds: Aabb) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::BadArgument("voxel resolution must be at least 1".into()));
        }
        bounds.validate()?;
        Ok(Self { resolution, bounds, occupied: vec![false; resolution.pow(3)], dropped: 0 })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Number of input points that fell outside the bounds.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn is_occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupied[self.linear(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.linear(i, j, k);
        self.occupied[idx] = value;
    }

    fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        let r = self.resolution;
        assert!(i < r && j < r && k < r, "cell ({i},{j},{k}) outside {r}^3 grid");
        (i * r + j) * r + k
    }

    /// Cell containing `p`, or `None` when `p` is outside the bounds.
    /// Points on the upper faces clamp to the last cell.
    pub fn cell_of(&self, p: Point3) -> Option<(usize, usize, usize)> {
        if !self.bounds.contains(p) {
            return None;
        }
        let r = self.resolution;
        let axis = |v: f64, lo: f64, hi: f64| -> usize {
            let t = ((v - lo) / (hi - lo) * r as f64).floor() as usize;
            t.min(r - 1)
        };
        Some((
            axis(p.x, self.bounds.min.x, self.bounds.max.x),
            axis(p.y, self.bounds.min.y, self.bounds.max.y),
            axis(p.z, self.bounds.min.z, self.bounds.max.z),
        ))
    }

    /// Center of cell `(i, j, k)`.
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Point3 {
        cell_center(&self.bounds, self.resolution, i, j, k)
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let r = self.resolution;
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(move |(idx, _)| (idx / (r * r), (idx / r) % r, idx % r))
    }

    fn same_frame(&self, other: &VoxelGrid) -> bool {
        self.resolution == other.resolution && self.bounds == other.bounds
    }
}

pub(crate) fn cell_center(bounds: &Aabb, r: usize, i: usize, j: usize, k: usize) -> Point3 {
    let e = bounds.extent();
    let c = |idx: usize, lo: f64, ext: f64| lo + (idx as f64 + 0.5) * ext / r as f64;
    Point3::new(c(i, bounds.min.x, e.x), c(j, bounds.min.y, e.y), c(k, bounds.min.z, e.z))
}

/// Marks every cell that contains at least one point of `cloud`.
pub fn voxelize(cloud: &PointCloud, resolution: usize, bounds: Aabb) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::empty(resolution, bounds)?;
    for &p in &cloud.points {
        match grid.cell_of(p) {
            Some((i, j, k)) => grid.set(i, j, k, true),
            None => grid.dropped += 1,
        }
    }
    Ok(grid)
}

/// Intersection over union of occupied cells; two empty grids score 1.
pub fn jaccard(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if !a.same_frame(b) {
        return Err(Error::GridMismatch);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupied.iter().zip(&b.occupied) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&a| Point3::from(a)).collect())
    }

    fn unit_cube_corners() -> PointCloud {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        cloud(&pts)
    }

    #[test]
    fn normalize_fixed_point() {
        let c = cloud(&[[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0], [0.0, 0.25, -0.1], [0.0, -0.25, 0.1]]);
        let (out, t) = normalize(&c).unwrap();
        assert_eq!(out, c);
        assert_eq!(t, Transform::IDENTITY);
    }

    #[test]
    fn normalize_cube_corners() {
        let (out, t) = normalize(&unit_cube_corners()).unwrap();
        assert_eq!(t.translation, Point3::new(-0.5, -0.5, -0.5));
        assert_eq!(t.scale, 1.0);
        for (p, q) in out.points.iter().zip(&unit_cube_corners().points) {
            assert_eq!(*p, *q - Point3::new(0.5, 0.5, 0.5));
            assert_eq!(p.max_abs(), 0.5);
        }
    }

    #[test]
    fn normalize_rejects_coincident_points() {
        let c = cloud(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        assert!(matches!(normalize(&c), Err(Error::DegenerateCloud(_))));
        assert!(matches!(normalize(&PointCloud::default()), Err(Error::DegenerateCloud(_))));
    }

    #[test]
    fn transform_roundtrip() {
        let (_, t) = normalize(&cloud(&[[3.0, -1.0, 2.0], [7.5, 0.5, -4.0], [1.0, 1.0, 1.0]])).unwrap();
        let p = Point3::new(0.3, -2.0, 11.0);
        let back = t.invert(t.apply(p));
        assert!((back - p).max_abs() < 1e-9);
    }

    #[test]
    fn fps_base_cases() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        assert_eq!(farthest_point_sample(&c, 1, 2).unwrap(), vec![2]);
        assert_eq!(farthest_point_sample(&c, 2, 0).unwrap(), vec![0, 3]);
        // After 0 and 3, points 1 and 2 tie at distance 1: lowest index wins.
        assert_eq!(farthest_point_sample(&c, 4, 0).unwrap(), vec![0, 3, 1, 2]);
        assert!(matches!(farthest_point_sample(&c, 0, 0), Err(Error::BadArgument(_))));
        assert!(matches!(farthest_point_sample(&c, 5, 0), Err(Error::BadArgument(_))));
        assert!(matches!(farthest_point_sample(&c, 1, 4), Err(Error::BadArgument(_))));
    }

    #[test]
    fn voxelize_single_center_point() {
        let g = voxelize(&cloud(&[[0.0, 0.0, 0.0]]), 40, Aabb::canonical()).unwrap();
        assert_eq!(g.occupied_count(), 1);
        assert!(g.is_occupied(20, 20, 20));
    }

    #[test]
    fn voxelize_counts_dropped_points() {
        let c = cloud(&[[0.6, 0.0, 0.0], [0.0, -0.51, 0.0], [2.0, 2.0, 2.0]]);
        let g = voxelize(&c, 8, Aabb::canonical()).unwrap();
        assert_eq!(g.occupied_count(), 0);
        assert_eq!(g.dropped(), 3);
    }

    #[test]
    fn voxelize_clamps_upper_face() {
        let g = voxelize(&cloud(&[[0.5, 0.5, 0.5], [-0.5, -0.5, -0.5]]), 4, Aabb::canonical()).unwrap();
        assert!(g.is_occupied(3, 3, 3));
        assert!(g.is_occupied(0, 0, 0));
        assert_eq!(g.dropped(), 0);
    }

    #[test]
    fn voxelize_rejects_degenerate_bounds() {
        let flat = Aabb { min: Point3::new(0.0, 0.0, 0.0), max: Point3::new(1.0, 0.0, 1.0) };
        assert!(matches!(voxelize(&cloud(&[[0.0; 3]]), 2, flat), Err(Error::BadArgument(_))));
        assert!(Aabb::new(flat.min, flat.max).is_err());
    }

    #[test]
    fn jaccard_hand_counts() {
        let b = Aabb::canonical();
        let mut a = VoxelGrid::empty(4, b).unwrap();
        a.set(0, 0, 0, true);
        a.set(1, 0, 0, true);
        let mut c = a.clone();
        c.set(2, 0, 0, true);
        c.set(3, 3, 3, true);
        assert_eq!(jaccard(&a, &c).unwrap(), 0.5);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);

        let mut d = VoxelGrid::empty(4, b).unwrap();
        d.set(3, 3, 3, true);
        assert_eq!(jaccard(&a, &d).unwrap(), 0.0);

        let e = VoxelGrid::empty(4, b).unwrap();
        assert_eq!(jaccard(&e, &e).unwrap(), 1.0);
        let f = VoxelGrid::empty(5, b).unwrap();
        assert!(matches!(jaccard(&e, &f), Err(Error::GridMismatch)));
    }

    #[test]
    fn knn_query_on_cloud_point() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.2, 0.0, 0.0], [0.5, 0.5, 0.5]]);
        assert_eq!(knn(&c, Point3::new(1.0, 0.0, 0.0), 1).unwrap(), vec![1]);
        assert_eq!(knn(&c, Point3::ORIGIN, 4).unwrap(), vec![0, 2, 3, 1]);
        assert!(knn(&c, Point3::ORIGIN, 5).is_err());
    }

    fn arb_cloud(max: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
        proptest::collection::vec(
            [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0],
            2..max,
        )
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(pts in arb_cloud(40)) {
            let c = cloud(&pts);
            if let Ok((once, _)) = normalize(&c) {
                let (twice, t) = normalize(&once).unwrap();
                prop_assert!((t.scale - 1.0).abs() < 1e-9);
                for (p, q) in once.points.iter().zip(&twice.points) {
                    prop_assert!((*p - *q).max_abs() < 1e-9);
                }
                let c0 = once.centroid().unwrap();
                prop_assert!(c0.max_abs() < 1e-9);
            }
        }

        #[test]
        fn voxelize_ignores_order(pts in arb_cloud(60), r in 1usize..7) {
            let c = cloud(&pts);
            let mut rev = pts.clone();
            rev.reverse();
            let a = voxelize(&c, r, Aabb::canonical()).unwrap();
            let b = voxelize(&cloud(&rev), r, Aabb::canonical()).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(jaccard(&a, &b).unwrap(), 1.0);
        }

        #[test]
        fn jaccard_is_symmetric(p in arb_cloud(50), q in arb_cloud(50), r in 1usize..6) {
            let a = voxelize(&cloud(&p), r, Aabb::canonical()).unwrap();
            let b = voxelize(&cloud(&q), r, Aabb::canonical()).unwrap();
            let j = jaccard(&a, &b).unwrap();
            prop_assert_eq!(j, jaccard(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&j));
        }

        #[test]
        fn knn_distances_non_decreasing(pts in arb_cloud(60), q in [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0], k in 1usize..10) {
            let c = cloud(&pts);
            let k = k.min(c.len());
            let idx = knn(&c, Point3::from(q), k).unwrap();
            let d: Vec<f64> = idx.iter().map(|&i| c.points[i].distance(Point3::from(q))).collect();
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn fps_relabels_with_permutation(pts in arb_cloud(30), k in 1usize..8, rot in 0usize..30) {
            let c = cloud(&pts);
            let n = c.len();
            let k = k.min(n);
            let rot = rot % n;
            // Relabel by rotating indices: new index of old i is (i + n - rot) % n.
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted = c.select(&perm);
            let a = farthest_point_sample(&c, k, 0).unwrap();
            let b = farthest_point_sample(&permuted, k, (n - rot) % n).unwrap();
            let mapped: Vec<usize> = b.iter().map(|&j| perm[j]).collect();
            prop_assert_eq!(a, mapped);
        }
    }
}
