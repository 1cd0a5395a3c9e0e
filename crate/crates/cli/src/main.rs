use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vrprune::calibration::{calibrate, CalibrationStats};
use vrprune::data::{generate_synthetic, prepare_split, write_sessions, WindowedDataset};
use vrprune::experiment::{
    emit_plot_data, run_sweep, summarize, DataSource, ExperimentConfig, SweepResult,
};
use vrprune::metrics::evaluate;
use vrprune::nn::{train, Mlp};
use vrprune::pruning::{prune_with, vr_scores, Method};
use vrprune::{Error, Result};

/// Train, calibrate, prune and evaluate small regression MLPs.
#[derive(Parser, Debug)]
#[command(name = "vrprune", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run seed (split, initialisation, shuffling).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic multi-participant sessions as CSV files.
    Generate(GenerateArgs),
    /// Window, split by participant, normalise and filter.
    Preprocess(PreprocessArgs),
    /// Train a dense model on a preprocessed split.
    Train(SplitArgs),
    /// Collect activation and gradient moments on the validation partition.
    Calibrate(ModelArgs),
    /// Prune a trained model with one method at one sparsity.
    Prune(PruneArgs),
    /// Evaluate a model on one partition of a split.
    Evaluate(EvaluateArgs),
    /// Run the full method x sparsity x seed grid.
    Sweep(SweepArgs),
    /// Aggregate a results CSV across seeds and write plot series.
    Summarize(SummarizeArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[command(flatten)]
    common: Common,
    /// Session CSV file or directory; overrides `data_dir`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[command(flatten)]
    common: Common,
    /// Directory holding train.csv, val.csv and test.csv.
    #[arg(long)]
    split: PathBuf,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct PruneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// CP-VR, CP-G, CP-L or NP-IN.
    #[arg(long)]
    method: Method,
    #[arg(long)]
    sparsity: f64,
    /// Calibration statistics, required for CP-VR.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    partition: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    results: PathBuf,
    /// Architecture label used in plot file names.
    #[arg(long, default_value = "two_layer")]
    arch: String,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let cfg = load_config(&a.common)?;
            let DataSource::Synthetic(mut syn) = cfg.data else {
                return Err(Error::Config("generate needs a synthetic data source, not data_dir".into()));
            };
            if let Some(seed) = a.common.seed {
                syn.seed = seed;
            }
            let paths = write_sessions(&generate_synthetic(&syn)?, &a.common.out)?;
            println!("wrote {} session files to {}", paths.len(), a.common.out.display());
        }
        Command::Preprocess(a) => {
            let cfg = load_config(&a.common)?;
            let source = match a.data {
                Some(p) => DataSource::Directory(p),
                None => cfg.data.clone(),
            };
            let seed = a.common.seed.unwrap_or(0);
            let prepared = prepare_split(&source.load()?, &cfg.preprocess, &cfg.split, seed)?;
            let out = &a.common.out;
            prepared.split.write_dir(out)?;
            write_text(
                &out.join("kept_columns.txt"),
                &prepared
                    .kept_columns
                    .iter()
                    .map(|c| format!("{c}\n"))
                    .collect::<String>(),
            )?;
            let s = &prepared.split;
            println!(
                "train {} / val {} / test {} windows, {} features",
                s.train.len(),
                s.val.len(),
                s.test.len(),
                s.train.feature_dim()
            );
        }
        Command::Train(a) => {
            let cfg = load_config(&a.common)?;
            let seed = a.common.seed.unwrap_or(0);
            let train_set = WindowedDataset::read_csv(a.split.join("train.csv"))?;
            let model = Mlp::init(&cfg.architecture.specs(train_set.feature_dim()), seed)?;
            let outcome = train(model, &train_set, &cfg.train_config(seed))?;
            ensure_dir(&a.common.out)?;
            outcome.model.save(a.common.out.join("model.json"))?;
            let history: String = outcome
                .loss_history
                .iter()
                .enumerate()
                .map(|(e, l)| format!("{},{l}\n", e + 1))
                .collect();
            write_text(&a.common.out.join("loss_history.csv"), &format!("epoch,loss\n{history}"))?;
            println!(
                "final training loss {:.6}",
                outcome.loss_history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Calibrate(a) => {
            let model = Mlp::load(&a.model)?;
            let val = WindowedDataset::read_csv(a.split.join("val.csv"))?;
            let stats = calibrate(&model, &val)?;
            ensure_dir(&a.common.out)?;
            stats.save(a.common.out.join("calibration.json"))?;
            println!("calibrated on {} samples in {} groups", val.len(), stats.per_group.len());
        }
        Command::Prune(a) => {
            let cfg = load_config(&a.common)?;
            let model = Mlp::load(&a.model)?;
            let scores = match (&a.method, &a.calibration) {
                (Method::CpVr, Some(path)) => {
                    let stats = CalibrationStats::load(path)?;
                    stats.validate_for(&model)?;
                    Some(vr_scores(&stats, &model, &cfg.vr())?)
                }
                (Method::CpVr, None) => {
                    return Err(Error::Config("CP-VR needs --calibration".into()));
                }
                _ => None,
            };
            let out = prune_with(&model, a.method, a.sparsity, scores.as_ref())?;
            ensure_dir(&a.common.out)?;
            out.model.save(a.common.out.join("model.json"))?;
            write_text(&a.common.out.join("mask.txt"), &out.model.mask_export())?;
            println!("{} at {}: achieved sparsity {:.6}", a.method, a.sparsity, out.achieved_sparsity);
        }
        Command::Evaluate(a) => {
            let cfg = load_config(&a.common)?;
            let model = Mlp::load(&a.model)?;
            let split_part = match a.partition.as_str() {
                "train" | "val" | "test" => a.split.join(format!("{}.csv", a.partition)),
                other => return Err(Error::Config(format!("unknown partition {other:?}"))),
            };
            let report = evaluate(&model, &WindowedDataset::read_csv(split_part)?, cfg.lambda_var)?;
            ensure_dir(&a.common.out)?;
            write_text(&a.common.out.join("report.json"), &report.to_json()?)?;
            println!(
                "ccc {:.6}  mse {:.6}  group var {:.6e}  J {:.6}",
                report.ccc, report.mse, report.mse_group_variance, report.risk_j
            );
        }
        Command::Sweep(a) => {
            let mut cfg = load_config(&a.common)?;
            if let Some(seed) = a.common.seed {
                cfg.seeds = vec![seed];
            }
            let results = run_sweep(&cfg)?;
            let out = &a.common.out;
            ensure_dir(out)?;
            results.write_csv(out.join("results.csv"))?;
            let summary = summarize(&results)?;
            summary.write_csv(out.join("summary.csv"))?;
            emit_plot_data(&summary, &cfg.architecture.label(), out.join("plots"))?;
            println!("{} rows written to {}", results.rows.len(), out.join("results.csv").display());
        }
        Command::Summarize(a) => {
            let results = SweepResult::read_csv(&a.results)?;
            let summary = summarize(&results)?;
            ensure_dir(&a.common.out)?;
            summary.write_csv(a.common.out.join("summary.csv"))?;
            let paths = emit_plot_data(&summary, &a.arch, a.common.out.join("plots"))?;
            println!("{} summary rows, {} series", summary.rows.len(), paths.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
