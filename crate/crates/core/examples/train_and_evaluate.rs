//! End to end on a miniature corpus: generate, train with early stopping,
//! checkpoint, reload, evaluate held-out views and benchmark the samplers.
//!
//! Sized to finish in under a minute; the default corpus with
//! `TrainConfig::desk()` takes considerably longer.

use hyperocc::data::{generate_corpus, CorpusConfig, Split};
use hyperocc::encoder::{load_checkpoint_file, predict, save_checkpoint_file, EncoderArch};
use hyperocc::pipeline::{bench_samplers, evaluate, reconstruct, train, EvalConfig, TrainConfig};
use hyperocc::SamplerConfig;

fn main() -> hyperocc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = std::env::temp_dir().join("hyperocc-example");

    let corpus = CorpusConfig {
        instances_per_family: 3,
        rotations: "desk-4".into(),
        holdout_views: 1,
        complete_points: 4096,
        partial_points: Some(1024),
        ..CorpusConfig::default()
    };
    let data = generate_corpus(&corpus)?;
    data.save(dir.join("data"))?;
    println!("{} samples, {} for training", data.len(), data.training().count());

    let cfg = TrainConfig { learning_rate: 1e-3, epochs: 80, patience: 20, ..TrainConfig::desk() };
    let outcome = train(&data, &EncoderArch::default(), &cfg)?;
    outcome.write_curve(dir.join("curve.csv"))?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint_file(&ckpt, &outcome.params)?;
    println!("best validation loss {:.4} at epoch {:?}", outcome.best_val_loss, outcome.best_epoch);

    let params = load_checkpoint_file(&ckpt)?;
    // A model this small rarely clears the default 0.85 confidence threshold.
    let sampler = SamplerConfig { threshold: 0.5, ..SamplerConfig::default() };
    let eval_cfg = EvalConfig { samples: 4096, fps_target: 2048, sampler: sampler.clone(), ..EvalConfig::default() };
    let report = evaluate(&params, data.split(Split::HoldoutViews), &eval_cfg)?;
    println!(
        "held-out views: mean Jaccard {:.3} over {} samples ({} exhausted)",
        report.mean_jaccard,
        report.samples.len(),
        report.exhausted
    );

    let sample = data.split(Split::HoldoutViews).next().expect("corpus has held-out views");
    let rec = reconstruct(&params, &sample.partial, &eval_cfg)?;
    println!("{}: reconstructed {} points", sample.meta.id, rec.cloud.len());

    let implicit = predict(&sample.partial, &params)?;
    let bench = bench_samplers(&implicit, &[20, 40, 80], &SamplerConfig { n_points: 2048, ..sampler })?;
    println!("{}", serde_json::to_string_pretty(&bench).expect("report serializes"));
    Ok(())
}
