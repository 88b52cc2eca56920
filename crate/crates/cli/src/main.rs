//! Command-line front end: generate synthetic logs, export calibration
//! adjustments, run simulations, verify the offline oracle checks, and
//! aggregate metrics into summary tables.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use confbid::data::{generate_synthetic, write_auction_log, CompetingScale};
use confbid::runner::{
    aggregate_metrics_csv, run_experiment, run_verification, write_adjustments,
    write_verifier_json, DatasetSource, ExperimentConfig, MechanismKind, Method,
};

#[derive(Parser)]
#[command(
    name = "confbid",
    version,
    about = "Auto-bidding simulator with conformal value adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Override the config's method list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic auction log in the ingestion schema.
    Generate {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Fit the calibration table and export per-bin adjustment terms.
    Calibrate {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Run the full experiment: ledgers, metrics CSV and summary JSON.
    Simulate {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Run the brute-force oracle checks on small instances.
    Verify {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Aggregate an existing metrics CSV into a per-method table.
    Report {
        /// Directory containing metrics.csv (or a direct file path).
        #[arg(long = "in")]
        input: PathBuf,
        /// Optional directory for the aggregated summary JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names
        .iter()
        .map(|name| match name.as_str() {
            "adjust" => Ok(Method::Adjust),
            "pred" => Ok(Method::Pred),
            "true" => Ok(Method::True),
            "ucb" => Ok(Method::Ucb),
            other => bail!("unknown method `{other}` (expected adjust|pred|true|ucb)"),
        })
        .collect()
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(&args.config)
        .with_context(|| format!("loading config {}", args.config.display()))?;
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(methods) = &args.methods {
        config.methods = parse_methods(methods)?;
        if !config.methods.contains(&Method::True) {
            config.emit_ratio = false;
        }
    }
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let config = load_config(&common)?;
            let DatasetSource::Synthetic { generator } = &config.dataset else {
                bail!("`generate` needs a synthetic dataset in the config");
            };
            let scale = match config.mechanism {
                MechanismKind::SecondPrice => CompetingScale::Bid,
                MechanismKind::Ecpm => CompetingScale::Ecpm,
            };
            let records = generate_synthetic(generator, scale, config.master_seed)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("auctions.csv");
            write_auction_log(&records, &path)?;
            println!("wrote {} records to {}", records.len(), path.display());
        }
        Command::Calibrate { common } => {
            let config = load_config(&common)?;
            let path = write_adjustments(&config, &common.out)?;
            println!("wrote adjustment export to {}", path.display());
        }
        Command::Simulate { common } => {
            let config = load_config(&common)?;
            let bundle = run_experiment(&config, Some(&common.out))?;
            println!(
                "simulated {} runs; metrics at {}",
                bundle.metrics.len(),
                common.out.join("metrics.csv").display()
            );
            for (method, summary) in &bundle.summary.methods {
                println!(
                    "  {:>7}: score {:.4} +/- {:.4}  ratio {:.4}  coverage {:.4}",
                    method,
                    summary.score_mean,
                    summary.score_std,
                    summary.ratio_of_means,
                    summary.coverage_mean
                );
            }
        }
        Command::Verify { common } => {
            let config = load_config(&common)?;
            let Some(settings) = config.verify else {
                bail!("`verify` needs a `verify` section in the config");
            };
            let records = run_verification(&settings)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("verifier.json");
            write_verifier_json(&records, &path)?;
            let failed: Vec<_> = records.iter().filter(|r| !r.holds).collect();
            let skipped = records
                .iter()
                .filter(|r| r.skipped_reason.is_some())
                .count();
            println!(
                "{} checks, {} failed, {} skipped; report at {}",
                records.len(),
                failed.len(),
                skipped,
                path.display()
            );
            if !failed.is_empty() {
                for f in &failed {
                    eprintln!(
                        "FAILED {} on {}: lhs {} rhs {}",
                        f.check, f.instance_id, f.lhs, f.rhs
                    );
                }
                bail!("{} verifier checks failed", failed.len());
            }
        }
        Command::Report { input, out } => {
            let metrics_path = if input.is_dir() {
                input.join("metrics.csv")
            } else {
                input.clone()
            };
            let summary = aggregate_metrics_csv(&metrics_path)?;
            println!(
                "{:>7}  {:>5}  {:>17}  {:>17}  {:>9}",
                "method", "runs", "score (mean+/-std)", "ratio (mean+/-std)", "coverage"
            );
            for (method, s) in &summary {
                println!(
                    "{:>7}  {:>5}  {:>8.4} +/- {:>6.4}  {:>8.4} +/- {:>6.4}  {:>9.4}",
                    method,
                    s.runs,
                    s.score_mean,
                    s.score_std,
                    s.ratio_mean,
                    s.ratio_std,
                    s.coverage_mean
                );
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join("report.json");
                let file = std::fs::File::create(&path)?;
                serde_json::to_writer_pretty(file, &summary)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
