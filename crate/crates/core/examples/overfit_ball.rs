//! Overfits the encoder to one partial view of a centered ball and checks
//! how close the sampled reconstruction stays to the true sphere.

use std::time::Instant;

use hyperocc::data::{
    make_shape, partial_view, Dataset, Sample, SampleMeta, ShapeFamily, ShapeSpec, Split, ViewSpec,
};
use hyperocc::encoder::{predict, EncoderArch};
use hyperocc::pipeline::{train, TrainConfig};
use hyperocc::sampler::sample_gradient;
use hyperocc::{PointCloud, SamplerConfig};

const RADIUS: f64 = 0.3;

fn main() -> hyperocc::Result<()> {
    let spec = ShapeSpec::new(ShapeFamily::Sphere { radius: RADIUS });
    // Normalization maps the unit-radius sample to radius 0.5; rescale to RADIUS.
    let unit = make_shape(&spec, 16384, 0)?;
    let complete = PointCloud::new(unit.points.iter().map(|p| *p * (RADIUS / 0.5)).collect());
    let view = ViewSpec::default();
    let partial = partial_view(&complete, &view)?;
    let meta = SampleMeta {
        id: "ball".into(),
        shape: spec,
        view,
        shape_seed: 0,
        instance: 0,
        view_index: 0,
        split: Split::Train,
        validation: false,
    };
    let data = Dataset { samples: vec![Sample { partial: partial.clone(), complete, meta }] };

    let cfg = TrainConfig { learning_rate: 1e-3, epochs: 300, batch_size: 1, patience: 0, ..TrainConfig::default() };
    let start = Instant::now();
    let outcome = train(&data, &EncoderArch::default(), &cfg)?;
    let last = outcome.curve.last().map_or(f64::NAN, |r| r.train_loss);
    println!("trained {} epochs in {:.1}s, final loss {last:.4}", outcome.curve.len(), start.elapsed().as_secs_f64());

    let implicit = predict(&partial, &outcome.params)?;
    let (cloud, report) = sample_gradient(&implicit, &SamplerConfig::default())?;
    let near = cloud.points.iter().filter(|p| (p.norm() - RADIUS).abs() <= 0.05).count();
    println!(
        "sampled {} points with {} evaluations; {:.1}% within 0.05 of the sphere",
        cloud.len(),
        report.function_evals,
        100.0 * near as f64 / cloud.len().max(1) as f64
    );
    Ok(())
}
