use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{make_shape, Pose, ShapeSpec};
use crate::geometry::{Point3, PointCloud};
use crate::{Error, Result};

/// Orthographic depth camera. The camera looks along `direction`; smaller
/// `p . direction` is nearer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewSpec {
    pub direction: [f64; 3],
    pub width: usize,
    pub height: usize,
    /// Half-size of the square image plane in world units.
    pub extent: f64,
    /// Depth tolerance; `None` derives it from the cloud's sampling density.
    pub depth_tolerance: Option<f64>,
}

impl Default for ViewSpec {
    fn default() -> Self {
        Self { direction: [0.0, 0.0, 1.0], width: 40, height: 40, extent: 0.6, depth_tolerance: None }
    }
}

impl ViewSpec {
    pub fn validate(&self) -> Result<()> {
        let d = Point3::from(self.direction);
        if !d.is_finite() || (d.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::BadArgument(format!("view direction {:?} is not unit length", self.direction)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::BadArgument("image resolution must be positive".into()));
        }
        if !(self.extent > 0.0) {
            return Err(Error::BadArgument("image extent must be positive".into()));
        }
        if let Some(t) = self.depth_tolerance {
            if !(t >= 0.0) {
                return Err(Error::BadArgument("depth tolerance must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Image-plane axes `(u, v)` completing `direction` to an orthonormal frame.
    fn image_axes(&self) -> (Point3, Point3) {
        let d = Vector3::from(self.direction).normalize();
        let helper = if d.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        let u = helper.cross(&d).normalize();
        let v = d.cross(&u);
        (Point3::new(u.x, u.y, u.z), Point3::new(v.x, v.y, v.z))
    }
}

/// Twice the mean nearest-neighbor distance over an evenly strided subsample.
pub(crate) fn density_tolerance(points: &[Point3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let probes = points.len().min(256);
    let stride = points.len() / probes;
    let mut total = 0.0;
    for s in 0..probes {
        let i = s * stride;
        let nearest = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| q.distance_squared(points[i]))
            .fold(f64::INFINITY, f64::min);
        total += nearest.sqrt();
    }
    2.0 * total / probes as f64
}

/// Z-buffer hidden-point removal. Returns the visible subset in input order.
pub fn partial_view(cloud: &PointCloud, view: &ViewSpec) -> Result<PointCloud> {
    view.validate()?;
    let d = Point3::from(view.direction) * (1.0 / Point3::from(view.direction).norm());
    let (u, v) = view.image_axes();
    let pixel = |p: Point3| -> Option<usize> {
        let a = (p.dot(u) + view.extent) / (2.0 * view.extent);
        let b = (p.dot(v) + view.extent) / (2.0 * view.extent);
        let (col, row) = ((a * view.width as f64).floor(), (b * view.height as f64).floor());
        let inside = col >= 0.0 && row >= 0.0 && col < view.width as f64 && row < view.height as f64;
        inside.then(|| row as usize * view.width + col as usize)
    };
    let projected: Vec<Option<usize>> = cloud.points.iter().map(|&p| pixel(p)).collect();
    let mut nearest: HashMap<usize, f64> = HashMap::new();
    for (p, px) in cloud.points.iter().zip(&projected) {
        if let Some(px) = px {
            let depth = p.dot(d);
            nearest.entry(*px).and_modify(|z| *z = z.min(depth)).or_insert(depth);
        }
    }
    if nearest.is_empty() {
        return Err(Error::EmptyView);
    }
    let tolerance = view.depth_tolerance.unwrap_or_else(|| density_tolerance(&cloud.points));
    let keep: Vec<usize> = cloud
        .points
        .iter()
        .zip(&projected)
        .enumerate()
        .filter_map(|(i, (p, px))| {
            let px = (*px)?;
            (p.dot(d) <= nearest[&px] + tolerance).then_some(i)
        })
        .collect();
    Ok(cloud.select(&keep))
}

/// A partial view together with the complete cloud it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub partial: PointCloud,
    pub complete: PointCloud,
}

/// One `(partial, complete)` pair per object rotation. The surface samples
/// share `seed` across rotations, so the complete clouds differ only by pose.
pub fn make_view_set(
    spec: &ShapeSpec,
    rotations: &[UnitQuaternion<f64>],
    n_points: usize,
    view: &ViewSpec,
    seed: u64,
) -> Result<Vec<ViewPair>> {
    if rotations.is_empty() {
        return Err(Error::BadArgument("empty rotation list".into()));
    }
    spec.validate()?;
    rotations
        .iter()
        .map(|r| {
            let posed = ShapeSpec {
                family: spec.family.clone(),
                pose: Pose {
                    rotation: Pose::from_rotation(&(r * spec.pose.unit_quaternion())).rotation,
                    translation: spec.pose.translation,
                },
            };
            let complete = make_shape(&posed, n_points, seed)?;
            let partial = partial_view(&complete, view)?;
            Ok(ViewPair { partial, complete })
        })
        .collect()
}

fn fibonacci_rotations(n: usize) -> Vec<UnitQuaternion<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = k as f64 * golden;
            let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let align = UnitQuaternion::rotation_between(&dir, &Vector3::z())
                .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI));
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), phi) * align
        })
        .collect()
}

/// Named rotation protocols.
///
/// * `identity`: a single identity rotation.
/// * `desk-N`: `N` viewpoints spread over the sphere on a Fibonacci lattice,
///   each with a distinct roll.
/// * `paper-726`: Euler grid of 11 angles about x, 11 about y and 6 about z.
pub fn rotation_preset(name: &str) -> Result<Vec<UnitQuaternion<f64>>> {
    match name {
        "identity" => Ok(vec![UnitQuaternion::identity()]),
        "paper-726" => {
            let mut out = Vec::with_capacity(726);
            for i in 0..11 {
                for j in 0..11 {
                    for k in 0..6 {
                        let (ax, ay, az) = (
                            2.0 * PI * i as f64 / 11.0,
                            2.0 * PI * j as f64 / 11.0,
                            2.0 * PI * k as f64 / 6.0,
                        );
                        out.push(UnitQuaternion::from_euler_angles(ax, ay, az));
                    }
                }
            }
            Ok(out)
        }
        other => {
            let n = other
                .strip_prefix("desk-")
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::BadArgument(format!("unknown rotation preset `{other}`")))?;
            Ok(fibonacci_rotations(n))
        }
    }
}
