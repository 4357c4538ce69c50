//! PLY in and out: read a triangle mesh, sample its surface, and write the
//! samples with per-point confidence as colored vertices.

use hyperocc::data::sample_mesh_surface;
use hyperocc::geometry::{read_ply, read_ply_mesh, write_ply, PlyFormat};
use hyperocc::rng::rng_from;
use hyperocc::PointCloud;

const TETRA: &str = "ply
format ascii 1.0
element vertex 4
property float x
property float y
property float z
element face 4
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
0 0 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
";

fn main() -> hyperocc::Result<()> {
    let mesh = read_ply_mesh(TETRA.as_bytes())?;
    println!("mesh: {} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());

    let points = sample_mesh_surface(&mesh, 2000, &mut rng_from(3))?;
    // Color by height so the confidence channel has something to show.
    let confidence = points.iter().map(|p| p.z.clamp(0.0, 1.0)).collect();
    let cloud = PointCloud::with_confidence(points, confidence)?;

    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let mut bytes = Vec::new();
        write_ply(&mut bytes, &cloud, format)?;
        let back = read_ply(bytes.as_slice())?;
        let max_err = cloud
            .points
            .iter()
            .zip(&back.points)
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max);
        println!("{format:?}: {} bytes, {} points back, max error {max_err:.2e}", bytes.len(), back.len());
    }

    if let Some(path) = std::env::args().nth(1) {
        hyperocc::geometry::write_ply_file(path, &cloud, PlyFormat::Ascii)?;
    }
    Ok(())
}
