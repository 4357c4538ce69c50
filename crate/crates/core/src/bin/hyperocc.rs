use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use hyperocc::data::{generate_corpus, CorpusConfig, Dataset, Split};
use hyperocc::encoder::{load_checkpoint_file, predict, save_checkpoint_file, EncoderArch};
use hyperocc::geometry::{read_ply_file, write_ply_file, PlyFormat};
use hyperocc::pipeline::{bench_samplers, evaluate, reconstruct, train, EvalConfig, TrainConfig};
use hyperocc::{Error, ImplicitParams, SamplerConfig};

/// Point-cloud shape completion with generated implicit functions.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file with configuration fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic dataset commands.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train an encoder and write its best checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV file for the per-epoch training curve.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Complete a partial cloud and write it as PLY with confidence colors.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        fps_target: Option<usize>,
        /// Write binary instead of ASCII PLY.
        #[arg(long)]
        binary: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score reconstructions of a dataset split by voxel Jaccard similarity.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train, holdout-views or holdout-models.
        #[arg(long, default_value = "holdout-views")]
        split: String,
        /// JSON report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        fps_target: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare gradient sampling with dense grid evaluation.
    Bench {
        /// Encoder checkpoint; requires --input.
        #[arg(long, requires = "input", conflicts_with = "params")]
        checkpoint: Option<PathBuf>,
        /// Partial cloud to encode.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Implicit-function binary record, used instead of a checkpoint.
        #[arg(long, required_unless_present = "checkpoint")]
        params: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "20,40,80")]
        resolutions: Vec<usize>,
        #[arg(long)]
        n_points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate the procedural corpus into a directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        instances_per_family: Option<usize>,
        /// Rotation preset, e.g. desk-8 or paper-726.
        #[arg(long)]
        rotations: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

/// Training config file: `TrainConfig` fields plus an optional `arch`.
#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    #[serde(flatten)]
    train: TrainConfig,
    arch: EncoderArch,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Error> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::FileError { path: path.to_path_buf(), reason: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::BadArgument(format!("{}: {e}", path.display())))
}

fn write_json(out: Option<&Path>, value: &impl Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::FileError { path: path.to_path_buf(), reason: e.to_string() }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Dataset { command: DatasetCommand::Gen { out, instances_per_family, rotations, common } } => {
            let mut cfg: CorpusConfig = load_config(common.config.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.instances_per_family = instances_per_family.unwrap_or(cfg.instances_per_family);
            cfg.rotations = rotations.unwrap_or(cfg.rotations);
            let data = generate_corpus(&cfg)?;
            data.save(&out)?;
            log::info!("wrote {} samples to {}", data.len(), out.display());
        }
        Command::Train { data, out, curve, learning_rate, batch_size, epochs, queries, patience, common } => {
            let TrainFile { train: mut cfg, arch } = load_config(common.config.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.queries = queries.unwrap_or(cfg.queries);
            cfg.patience = patience.unwrap_or(cfg.patience);
            let dataset = Dataset::load(&data)?;
            let outcome = train(&dataset, &arch, &cfg)?;
            save_checkpoint_file(&out, &outcome.params)?;
            if let Some(path) = curve {
                outcome.write_curve(path)?;
            }
            log::info!("best validation loss {:.5} at epoch {:?}", outcome.best_val_loss, outcome.best_epoch);
        }
        Command::Reconstruct { checkpoint, input, out, samples, fps_target, binary, common } => {
            let mut cfg: EvalConfig = load_config(common.config.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.samples = samples.unwrap_or(cfg.samples);
            cfg.fps_target = fps_target.unwrap_or(cfg.fps_target);
            let params = load_checkpoint_file(&checkpoint)?;
            let partial = read_ply_file(&input)?;
            let rec = reconstruct(&params, &partial, &cfg)?;
            if rec.exhausted {
                log::warn!("sampler exhausted: {} points", rec.cloud.len());
            }
            let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
            write_ply_file(&out, &rec.cloud, format)?;
        }
        Command::Evaluate { checkpoint, data, split, out, samples, fps_target, resolution, common } => {
            let mut cfg: EvalConfig = load_config(common.config.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.samples = samples.unwrap_or(cfg.samples);
            cfg.fps_target = fps_target.unwrap_or(cfg.fps_target);
            cfg.resolution = resolution.unwrap_or(cfg.resolution);
            let split: Split = split.parse()?;
            let params = load_checkpoint_file(&checkpoint)?;
            let dataset = Dataset::load(&data)?;
            let report = evaluate(&params, dataset.split(split), &cfg)?;
            write_json(out.as_deref(), &report)?;
        }
        Command::Bench { checkpoint, input, params, resolutions, n_points, out, common } => {
            let mut cfg: SamplerConfig = load_config(common.config.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.n_points = n_points.unwrap_or(cfg.n_points);
            let implicit = match (checkpoint, input, params) {
                (Some(ckpt), Some(input), _) => predict(&read_ply_file(input)?, &load_checkpoint_file(ckpt)?)?,
                (_, _, Some(path)) => {
                    let file = fs::File::open(&path)
                        .map_err(|e| Error::FileError { path: path.clone(), reason: e.to_string() })?;
                    ImplicitParams::read_from(std::io::BufReader::new(file))?
                }
                _ => return Err(Error::BadArgument("need --checkpoint with --input, or --params".into())),
            };
            let report = bench_samplers(&implicit, &resolutions, &cfg)?;
            write_json(out.as_deref(), &report)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BadArgument(_) | Error::BadSpec(_) | Error::ShapeMismatch(_) | Error::GridMismatch => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
