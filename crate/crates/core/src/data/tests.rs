use super::*;
use crate::geometry::normalize;
use proptest::prelude::*;

fn brute_nearest(points: &[Point3], q: Point3) -> f64 {
    points.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min)
}

#[test]
fn sphere_points_are_equidistant_from_centroid() {
    let spec = ShapeSpec::new(ShapeFamily::Sphere { radius: 3.7 });
    let cloud = make_shape(&spec, 2000, 1).unwrap();
    let c = cloud.centroid().unwrap();
    let r0 = cloud.points[0].distance(c);
    assert!(cloud.points.iter().all(|p| (p.distance(c) - r0).abs() < 1e-6));
    assert!(cloud.points.iter().all(|p| (p.norm() - r0).abs() < 1e-6));
}

#[test]
fn unit_box_points_lie_on_its_faces() {
    let spec = ShapeSpec::new(ShapeFamily::Box { extents: [1.0, 1.0, 1.0] });
    let cloud = make_shape(&spec, 1000, 2).unwrap();
    for p in &cloud.points {
        let on_face = p.to_array().iter().filter(|v| (v.abs() - 0.5).abs() < 1e-9).count();
        assert!(on_face >= 1, "{p:?}");
        assert!(p.max_abs() <= 0.5 + 1e-9);
    }
}

#[test]
fn single_point_shape() {
    for family in [
        ShapeFamily::Sphere { radius: 1.0 },
        ShapeFamily::Cylinder { radius: 0.2, height: 1.0 },
    ] {
        let cloud = make_shape(&ShapeSpec::new(family), 1, 0).unwrap();
        assert_eq!(cloud.len(), 1);
        assert!((cloud.points[0].max_abs() - 0.5).abs() < 1e-12);
    }
    assert!(make_shape(&ShapeSpec::new(ShapeFamily::Sphere { radius: 1.0 }), 0, 0).is_err());
}

#[test]
fn bad_specs_are_rejected() {
    let bad = ShapeSpec::new(ShapeFamily::Cylinder { radius: -1.0, height: 1.0 });
    assert!(matches!(make_shape(&bad, 10, 0), Err(Error::BadSpec(_))));
    let mut skew = ShapeSpec::new(ShapeFamily::Sphere { radius: 1.0 });
    skew.pose.rotation = [1.0, 0.1, 0.0, 0.0];
    assert!(matches!(make_shape(&skew, 10, 0), Err(Error::BadSpec(_))));
    let missing = ShapeSpec::new(ShapeFamily::MeshFile { path: "/nonexistent/mesh.ply".into() });
    assert!(matches!(make_shape(&missing, 10, 0), Err(Error::FileError { .. })));
}

#[test]
fn capsule_and_cylinder_stay_within_their_profiles() {
    let cap = make_shape(&ShapeSpec::new(ShapeFamily::Capsule { radius: 0.5, length: 1.0 }), 3000, 5).unwrap();
    // Lateral samples sit exactly at the scaled radius, which equals the scaled half-length.
    let rho = |p: &Point3| (p.x * p.x + p.y * p.y).sqrt();
    let c = cap.points.iter().map(rho).fold(0.0, f64::max);
    assert!((c - 0.25).abs() < 0.01);
    for p in &cap.points {
        let along = (p.z.abs() - c).max(0.0);
        let d = (rho(p).powi(2) + along * along).sqrt();
        assert!((d - c).abs() < 1e-9, "{p:?}");
    }
    let cyl = make_shape(&ShapeSpec::new(ShapeFamily::Cylinder { radius: 1.0, height: 1.0 }), 3000, 6).unwrap();
    let r = cyl.points.iter().map(rho).fold(0.0, f64::max);
    let h = cyl.points.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    assert!((h / r - 0.5).abs() < 1e-9);
    for p in &cyl.points {
        assert!((rho(p) - r).abs() < 1e-9 || (p.z.abs() - h).abs() < 1e-9, "{p:?}");
    }
}

#[test]
fn mesh_file_sampling_covers_the_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tri.ply");
    std::fs::write(
        &path,
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
         element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
    )
    .unwrap();
    let cloud = make_shape(&ShapeSpec::new(ShapeFamily::MeshFile { path }), 500, 3).unwrap();
    assert_eq!(cloud.len(), 500);
    assert!(cloud.points.iter().all(|p| p.z.abs() < 1e-9));
    let (fixed, _) = normalize(&cloud).unwrap();
    for (a, b) in fixed.points.iter().zip(&cloud.points) {
        assert!(a.distance(*b) < 1e-12);
    }
}

#[test]
fn posed_shapes_are_rigidly_moved_before_normalizing() {
    let family = ShapeFamily::Box { extents: [1.0, 0.5, 0.25] };
    let q = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
    let mut posed = ShapeSpec::new(family.clone());
    posed.pose = Pose { translation: [3.0, -1.0, 2.0], ..Pose::from_rotation(&q) };
    let a = make_shape(&ShapeSpec::new(family), 400, 9).unwrap();
    let b = make_shape(&posed, 400, 9).unwrap();
    // Pairwise distance ratios are preserved by rotation and uniform scaling.
    let ratio = |c: &PointCloud| c.points[0].distance(c.points[7]) / c.points[3].distance(c.points[11]);
    assert!((ratio(&a) - ratio(&b)).abs() < 1e-9);
}

#[test]
fn single_point_view_keeps_the_point() {
    let cloud = PointCloud::new(vec![Point3::new(0.1, -0.2, 0.3)]);
    let out = partial_view(&cloud, &ViewSpec::default()).unwrap();
    assert_eq!(out, cloud);
}

#[test]
fn nearer_point_occludes_farther_one_in_same_pixel() {
    let cloud = PointCloud::new(vec![Point3::new(0.01, 0.01, 0.4), Point3::new(0.01, 0.01, 0.1)]);
    let view = ViewSpec { depth_tolerance: Some(0.01), ..ViewSpec::default() };
    let out = partial_view(&cloud, &view).unwrap();
    assert_eq!(out.points, vec![Point3::new(0.01, 0.01, 0.1)]);
}

#[test]
fn points_outside_the_image_give_empty_view() {
    let cloud = PointCloud::new(vec![Point3::new(5.0, 5.0, 0.0)]);
    assert!(matches!(partial_view(&cloud, &ViewSpec::default()), Err(Error::EmptyView)));
    let bad = ViewSpec { direction: [0.0, 0.0, 2.0], ..ViewSpec::default() };
    assert!(partial_view(&cloud, &bad).is_err());
}

#[test]
fn cube_view_removes_the_far_face() {
    let spec = ShapeSpec::new(ShapeFamily::Box { extents: [1.0, 1.0, 1.0] });
    let cloud = make_shape(&spec, 40000, 4).unwrap();
    let view = ViewSpec { width: 32, height: 32, ..ViewSpec::default() };
    let out = partial_view(&cloud, &view).unwrap();
    assert!(!out.is_empty());
    assert!(out.points.iter().all(|p| p.z < 0.5 - 1e-9), "far face leaked");
    // Every kept point is within tolerance of the brute-force pixel minimum.
    let tol = views::density_tolerance(&cloud.points);
    let pixel = |p: &Point3| {
        let u = ((-p.y + 0.6) / 1.2 * 32.0).floor() as i64;
        let v = ((p.x + 0.6) / 1.2 * 32.0).floor() as i64;
        (u, v)
    };
    for p in &out.points {
        let px = pixel(p);
        let nearest = cloud.points.iter().filter(|q| pixel(q) == px).map(|q| q.z).fold(f64::INFINITY, f64::min);
        assert!(p.z <= nearest + tol + 1e-12);
        // Off the near face, a point must belong to a silhouette pixel.
        if (p.z + 0.5).abs() > 1e-9 {
            assert!(p.x.abs().max(p.y.abs()) > 0.5 - 1.2 / 32.0 - 1e-9, "{p:?}");
        }
    }
    let near = out.points.iter().filter(|p| (p.z + 0.5).abs() < 1e-9).count();
    assert!(near as f64 > 0.8 * out.len() as f64);
}

#[test]
fn view_sets_follow_presets() {
    let spec = ShapeSpec::new(ShapeFamily::Sphere { radius: 1.0 });
    let view = ViewSpec::default();
    let one = make_view_set(&spec, &rotation_preset("identity").unwrap(), 4000, &view, 1).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(rotation_preset("paper-726").unwrap().len(), 726);
    assert_eq!(rotation_preset("desk-8").unwrap().len(), 8);
    assert!(rotation_preset("desk-0").is_err());
    assert!(rotation_preset("sideways").is_err());
    assert!(make_view_set(&spec, &[], 100, &view, 0).is_err());
    let rots = rotation_preset("desk-8").unwrap();
    let a = make_view_set(&spec, &rots, 3000, &view, 5).unwrap();
    let b = make_view_set(&spec, &rots, 3000, &view, 5).unwrap();
    assert_eq!(a, b);
    for pair in &a {
        assert!(pair.partial.len() < pair.complete.len());
    }
}

#[test]
fn paper_preset_rotations_are_distinct() {
    let rots = rotation_preset("paper-726").unwrap();
    for (i, a) in rots.iter().enumerate().step_by(37) {
        for b in &rots[i + 1..] {
            assert!(a.angle_to(b) > 1e-6);
        }
    }
}

#[test]
fn query_batch_composition_and_labels() {
    let gt = make_shape(&ShapeSpec::new(ShapeFamily::Sphere { radius: 1.0 }), 3000, 0).unwrap();
    let batch = make_query_batch(&gt, 100, 0.02, 0.01, 3).unwrap();
    assert_eq!(batch.count(QueryTag::Surface), 50);
    assert_eq!(batch.count(QueryTag::Perturbed), 40);
    assert_eq!(batch.count(QueryTag::Uniform), 10);
    for ((p, l), t) in batch.points.iter().zip(&batch.labels).zip(&batch.provenance) {
        let d = brute_nearest(&gt.points, *p);
        assert_eq!(*l == 1, d <= 0.01, "{t:?} at distance {d}");
        if *t == QueryTag::Surface {
            assert_eq!(*l, 1);
        }
    }
    assert_eq!(batch, make_query_batch(&gt, 100, 0.02, 0.01, 3).unwrap());
    assert!(matches!(make_query_batch(&gt, 105, 0.02, 0.01, 3), Err(Error::BadArgument(_))));
}

#[test]
fn zero_noise_perturbations_are_positive() {
    let gt = make_shape(&ShapeSpec::new(ShapeFamily::Box { extents: [1.0, 2.0, 1.0] }), 500, 0).unwrap();
    let batch = make_query_batch(&gt, 50, 0.0, 0.01, 8).unwrap();
    for (l, t) in batch.labels.iter().zip(&batch.provenance) {
        if *t == QueryTag::Perturbed {
            assert_eq!(*l, 1);
        }
    }
}

#[test]
fn box_corner_is_far_from_small_sphere() {
    let sphere: Vec<Point3> = make_shape(&ShapeSpec::new(ShapeFamily::Sphere { radius: 1.0 }), 2000, 1)
        .unwrap()
        .points
        .iter()
        .map(|p| *p * 0.2)
        .collect();
    let corner = Point3::new(0.5, 0.5, 0.5);
    let index = NearIndex::new(&sphere, 0.01);
    assert!(!index.any_within(corner));
    assert!(brute_nearest(&sphere, corner) > 0.01);
}

#[test]
fn corpus_splits_and_roundtrip() {
    let cfg = CorpusConfig {
        families: vec!["sphere".into(), "capsule".into()],
        instances_per_family: 3,
        rotations: "desk-4".into(),
        holdout_views: 1,
        validation_views: 1,
        holdout_models: 1,
        complete_points: 3000,
        partial_points: Some(200),
        view: ViewSpec { width: 16, height: 16, ..ViewSpec::default() },
        seed: 7,
    };
    let data = generate_corpus(&cfg).unwrap();
    assert_eq!(data.len(), 2 * 3 * 4);
    assert_eq!(data.validation().count(), 2 * 2);
    assert!(data.validation().all(|s| s.meta.view_index == 2 && s.meta.instance > 0));
    assert_eq!(data.split(Split::HoldoutModels).count(), 2 * 4);
    assert_eq!(data.split(Split::HoldoutViews).count(), 2 * 2);
    assert!(data.split(Split::HoldoutViews).all(|s| s.meta.view_index == 3));
    assert_eq!(data.split(Split::Train).count(), 2 * 2 * 2);
    assert_eq!(data.training().count(), 2 * 2 * 2);
    assert!(data.samples.iter().all(|s| s.partial.len() <= 200));
    let dir = tempfile::tempdir().unwrap();
    data.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, data);
    assert_eq!(generate_corpus(&cfg).unwrap(), data);
}

#[test]
fn malformed_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::DataError(_))));
    let sub = dir.path().join("broken");
    std::fs::create_dir(&sub).unwrap();
    std::fs::write(sub.join("meta.json"), "{").unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::DataError(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shapes_are_normalization_fixed_points(
        family in 0usize..4,
        a in 0.2f64..2.0,
        b in 0.2f64..2.0,
        n in 2usize..300,
        seed in any::<u64>(),
    ) {
        let family = match family {
            0 => ShapeFamily::Sphere { radius: a },
            1 => ShapeFamily::Box { extents: [a, b, a * b] },
            2 => ShapeFamily::Cylinder { radius: a, height: b },
            _ => ShapeFamily::Capsule { radius: a, length: b },
        };
        let cloud = make_shape(&ShapeSpec::new(family), n, seed).unwrap();
        prop_assert_eq!(cloud.len(), n);
        let (again, t) = normalize(&cloud).unwrap();
        prop_assert!((t.scale - 1.0).abs() < 1e-9);
        for (p, q) in cloud.points.iter().zip(&again.points) {
            prop_assert!(p.distance(*q) < 1e-9);
        }
    }

    #[test]
    fn partial_view_is_a_subset(seed in any::<u64>(), dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
        let dir = Point3::new(dx, dy, 0.7);
        let dir = dir * (1.0 / dir.norm());
        let cloud = make_shape(&ShapeSpec::new(ShapeFamily::Cylinder { radius: 0.4, height: 1.0 }), 2000, seed).unwrap();
        let view = ViewSpec { direction: dir.to_array(), width: 12, height: 12, ..ViewSpec::default() };
        let out = partial_view(&cloud, &view).unwrap();
        prop_assert!(!out.is_empty());
        prop_assert!(out.points.iter().all(|p| cloud.points.contains(p)));
    }

    #[test]
    fn near_index_agrees_with_brute_force(seed in any::<u64>(), eps in 0.0f64..0.2) {
        let gt = make_shape(&ShapeSpec::new(ShapeFamily::Box { extents: [1.0, 0.6, 0.3] }), 300, seed).unwrap();
        let batch = make_query_batch(&gt, 200, 0.05, eps, seed ^ 1).unwrap();
        for (p, l) in batch.points.iter().zip(&batch.labels) {
            prop_assert_eq!(*l == 1, brute_nearest(&gt.points, *p) <= eps);
        }
    }
}
