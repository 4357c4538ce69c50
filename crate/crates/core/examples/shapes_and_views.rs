//! Procedural shapes and single-view partial clouds.
//!
//! Samples a posed cylinder, renders it from a few viewpoints through a
//! z-buffer and writes every complete/partial pair as PLY into a directory.
//!
//! ```text
//! cargo run --example shapes_and_views -- /tmp/views
//! ```

use std::path::PathBuf;

use hyperocc::data::{make_view_set, rotation_preset, Pose, ShapeFamily, ShapeSpec, ViewSpec};
use hyperocc::geometry::{write_ply_file, PlyFormat};
use nalgebra::UnitQuaternion;

fn main() -> hyperocc::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "views".into()));
    std::fs::create_dir_all(&out).map_err(|e| hyperocc::Error::FileError { path: out.clone(), reason: e.to_string() })?;

    let tilt = UnitQuaternion::from_euler_angles(0.4, 0.0, 0.2);
    let spec = ShapeSpec {
        family: ShapeFamily::Cylinder { radius: 0.3, height: 1.2 },
        pose: Pose::from_rotation(&tilt),
    };
    spec.validate()?;

    let rotations = rotation_preset("desk-4")?;
    let pairs = make_view_set(&spec, &rotations, 4096, &ViewSpec::default(), 7)?;
    for (i, pair) in pairs.iter().enumerate() {
        println!("view {i}: {} of {} points visible", pair.partial.len(), pair.complete.len());
        write_ply_file(out.join(format!("complete_{i}.ply")), &pair.complete, PlyFormat::Ascii)?;
        write_ply_file(out.join(format!("partial_{i}.ply")), &pair.partial, PlyFormat::Ascii)?;
    }
    Ok(())
}
