//! Gradient sampling versus a dense grid on the same occupancy function.
//!
//! The function is a thin spherical shell of radius 0.3 expressed as a
//! leaky-ReLU MLP. Both samplers return only super-threshold points; the
//! gradient sampler gets there with a fraction of the evaluations.

use hyperocc::geometry::{write_ply_file, PlyFormat};
use hyperocc::implicit::LayerParams;
use hyperocc::sampler::{sample_gradient, sample_grid};
use hyperocc::{Aabb, ImplicitParams, MlpArch, Point3, SamplerConfig};

const RADIUS: f64 = 0.3;

/// Hidden units are ramps `relu(d . x)` along 26 directions. Their sum
/// `s(x)` is close to `c |x|`, so `|s(x) - c r|` (two more units) is small
/// only near the sphere of radius `r`, which the output layer turns into
/// high confidence.
fn shell() -> hyperocc::Result<ImplicitParams> {
    let mut dirs = Vec::new();
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if (i, j, k) != (0, 0, 0) {
                    let d = Point3::new(i as f64, j as f64, k as f64);
                    dirs.push(d * (1.0 / d.norm()));
                }
            }
        }
    }
    let n = dirs.len();
    let probe = Point3::new(1.0, 2.0, 3.0);
    let probe = probe * (1.0 / probe.norm());
    let c: f64 = dirs.iter().map(|d| d.dot(probe).max(0.0)).sum();

    let arch = MlpArch::new(vec![3, n, 2, 1], 0.001)?;
    let w1: Vec<f64> = dirs.iter().flat_map(|d| d.to_array()).collect();
    let l1 = LayerParams { weight: w1, bias: vec![0.0; n], scale: vec![1.0; n] };
    let mut w2 = vec![1.0; n];
    w2.extend(vec![-1.0; n]);
    let l2 = LayerParams { weight: w2, bias: vec![-c * RADIUS, c * RADIUS], scale: vec![1.0, 1.0] };
    // Confidence 0.85 at roughly 0.02 from the sphere.
    let sharp = 2.3 / (0.02 * c);
    let l3 = LayerParams { weight: vec![-sharp, -sharp], bias: vec![4.0], scale: vec![1.0] };
    ImplicitParams::new(arch, vec![l1, l2, l3])
}

fn main() -> hyperocc::Result<()> {
    let f = shell()?;
    let cfg = SamplerConfig { n_points: 4096, ..SamplerConfig::default() };

    for r in [20, 40, 80] {
        let (_, rep) = sample_grid(&f, r, Aabb::canonical(), cfg.threshold)?;
        println!("grid {r:>3}^3: {:>7} evals, {:>5} accepted", rep.function_evals, rep.accepted);
    }
    let (cloud, rep) = sample_gradient(&f, &cfg)?;
    println!(
        "gradient:   {:>7} evals, {:>5} accepted in {} rounds (budget {})",
        rep.function_evals,
        rep.accepted,
        rep.rounds_used,
        cfg.eval_budget()
    );
    let radii: Vec<f64> = cloud.points.iter().map(|p| p.norm()).collect();
    let mean = radii.iter().sum::<f64>() / radii.len().max(1) as f64;
    println!("mean radius of sampled points {mean:.4}");

    if let Some(path) = std::env::args().nth(1) {
        write_ply_file(path, &cloud, PlyFormat::Ascii)?;
    }
    Ok(())
}
