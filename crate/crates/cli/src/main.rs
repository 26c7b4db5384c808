use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use srgan_core::data::{read_manifest, DatasetManifest, Family};
use srgan_core::experiment::{
    cmd_eval, cmd_infer, cmd_matrix, cmd_report, cmd_synth, cmd_train, EvalOptions, ExperimentError, MatrixConfig,
    SynthOptions, EVAL_CSV, EXIT_IO, EXIT_USAGE,
};

const THREADS_ENV: &str = "SRGAN_BENCH_THREADS";

#[derive(Parser)]
#[command(name = "srgan-bench", version, about = "Paired GAN training and cross-dataset evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic image family to PNGs plus a manifest.
    Synth(SynthArgs),
    /// Train a generator/discriminator pair from a config file.
    Train(TrainArgs),
    /// Run a generator over a directory of PNGs.
    Infer(InferArgs),
    /// Score a generator on a dataset and append a CSV row.
    Eval(EvalArgs),
    /// Train and evaluate the cross-dataset matrix.
    Matrix(MatrixArgs),
    /// Merge result CSVs in a directory into one report.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    side: usize,
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config's network seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from the checkpoints written after this epoch.
    #[arg(long, value_name = "EPOCH")]
    resume_from: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Directory of ground-truth PNGs, matched by file name, for triptychs.
    #[arg(long)]
    targets: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset manifest JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "tinyconv")]
    extractor: String,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score the training split (rows are labelled `<name>:train`).
    #[arg(long)]
    leakage: bool,
    /// CSV file to append to; defaults to eval.csv in the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    extractor: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding result CSVs; the merged report is written there.
    #[arg(long)]
    out: PathBuf,
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ExperimentError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(ExperimentError::Usage(format!("manifest {} does not exist", path.display())).into());
    }
    read_manifest(path)
        .map_err(ExperimentError::from)
        .with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => {
            let m = cmd_synth(&SynthOptions {
                family: a.family,
                n: a.n,
                seed: a.seed,
                side: a.side,
                out: a.out.clone(),
                force: a.force,
            })?;
            println!("wrote {} images ({} train, {} test) to {}", m.train + m.test, m.train, m.test, a.out.display());
        }
        Command::Train(a) => {
            let outcome = cmd_train(&a.config, a.seed, a.out.as_deref(), a.resume_from)?;
            println!("generator: {}", outcome.generator.display());
            println!("convergence: {}", serde_json::to_string(&outcome.status)?);
        }
        Command::Infer(a) => {
            let s = cmd_infer(&a.checkpoint, &a.input, &a.out, a.targets.as_deref())?;
            println!("wrote {} outputs to {}", s.outputs.len(), a.out.display());
        }
        Command::Eval(a) => {
            let manifest = load_dataset(&a.config)?;
            let row = cmd_eval(&EvalOptions {
                checkpoint: a.checkpoint,
                manifest,
                extractor: a.extractor,
                n: a.n,
                seed: a.seed,
                leakage: a.leakage,
                append_to: Some(a.out.unwrap_or_else(|| PathBuf::from(EVAL_CSV))),
            })?;
            println!(
                "{} -> {}: psnr {:.3} dB, ssim {:.4}, fid {:.4} (n={}, {})",
                row.train_set, row.eval_set, row.psnr_db, row.ssim, row.fid, row.n, row.extractor
            );
        }
        Command::Matrix(a) => {
            let mut cfg = MatrixConfig::load(&a.config)?;
            if let Some(e) = a.extractor {
                cfg.extractor = e;
            }
            if let Some(n) = a.n {
                cfg.n = n;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(o) = a.out {
                cfg.output_dir = o;
            }
            let result = cmd_matrix(&cfg)?;
            for (i, row) in result.cells.iter().enumerate() {
                let fids: Vec<String> = row
                    .iter()
                    .map(|c| c.as_ref().map_or("MISSING".into(), |c| format!("{:.4}", c.fid)))
                    .collect();
                println!("{:>12}  {}", result.train_sets[i], fids.join("  "));
            }
            for c in result.column_checks() {
                println!(
                    "{}: diagonal {} (margin {:+.1}%)",
                    c.eval_set,
                    if c.diagonal_is_min { "is the column minimum" } else { "is NOT the column minimum" },
                    100.0 * c.margin
                );
            }
        }
        Command::Report(a) => {
            let r = cmd_report(&a.out)?;
            println!("merged {} rows into {}", r.rows.len(), a.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<ExperimentError>() {
                Some(x) => x.exit_code(),
                None if e.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
                None if e.downcast_ref::<serde_json::Error>().is_some() => EXIT_IO,
                None => EXIT_USAGE,
            };
            ExitCode::from(code as u8)
        }
    }
}
