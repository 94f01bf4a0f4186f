use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ood_bench::config::ExperimentConfig;
use ood_bench::emit::{parse_report, render, ReportFormat};
use ood_bench::runner::{as_oracle, compare_shared_vs_separate, fail, run_experiment};
use ood_bench::scenarios::generate_named;
use ood_bench::{BenchError, Result, OUT_DIR_ENV};
use ood_core::metrics::ReportMetric;
use ood_core::MetricReport64;

#[derive(Parser)]
#[command(name = "ood-bench", version, about = "Bayes-optimal OOD detection experiments on finite domains")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Format of the report printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Fpr,
    Auc,
}

#[derive(Subcommand)]
enum Command {
    /// Scenario utilities.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
    /// Oracle utilities.
    Oracle {
        #[command(subcommand)]
        action: OracleCmd,
    },
    /// Train every method of the config and write the report.
    Train,
    /// Like `train`, once per λ value.
    Sweep {
        /// Comma-separated λ values; overrides the config's `run.lambdas`.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Shared versus separate classifier/discriminator comparison.
    Compare,
    /// Re-emit a saved JSON report.
    Report {
        /// A `report.json` written by a previous run.
        #[arg(long)]
        input: PathBuf,
        /// Metric of the CSV table.
        #[arg(long, value_enum, default_value_t = Metric::Fpr)]
        metric: Metric,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Write a generated scenario as JSON.
    Gen {
        /// Generator name; defaults to the config's scenario.
        #[arg(long)]
        name: Option<String>,
        /// Generator parameters as a JSON object.
        #[arg(long)]
        params: Option<String>,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Evaluate every method of the config at its Bayes optimum.
    Eval,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = out_dir(&cli.global);
    match run(&cli, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = match e {
                BenchError::RunFailed { .. } => e,
                other => fail(&out, other, vec![], vec![], vec![]),
            };
            eprintln!("error: {e}");
            if let BenchError::RunFailed { manifest, .. } = &e {
                eprintln!("failure manifest: {}", manifest.display());
            }
            ExitCode::FAILURE
        }
    }
}

fn out_dir(g: &Global) -> PathBuf {
    if let Some(o) = &g.out {
        return o.clone();
    }
    g.config
        .as_deref()
        .and_then(|p| ExperimentConfig::load(p).ok())
        .and_then(|c| c.output.dir)
        .unwrap_or_else(|| PathBuf::from("ood-bench-out"))
}

fn load(g: &Global) -> Result<ExperimentConfig> {
    let path = g.config.as_deref().ok_or_else(|| BenchError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        config.run.seeds = vec![seed];
    }
    Ok(config)
}

fn print(report: &MetricReport64, format: Format) {
    let f = match format {
        Format::Csv => ReportFormat::Csv(ReportMetric::Fpr),
        Format::Json => ReportFormat::Json,
    };
    print!("{}", render(report, f));
}

fn run(cli: &Cli, out: &Path) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Scenario { action: ScenarioCmd::Gen { name, params } } => {
            let seed = g.seed.unwrap_or(0);
            let scenario = match name {
                Some(name) => {
                    let params = match params {
                        Some(p) => serde_json::from_str(p).map_err(|e| BenchError::InvalidParams(e.to_string()))?,
                        None => serde_json::Value::Null,
                    };
                    generate_named(name, params, seed)?
                }
                None => {
                    let config = load(g)?;
                    ood_bench::generate_scenario(&config.scenario, g.seed.unwrap_or(config.run.seeds[0]))?
                }
            };
            let path = out.join("scenario.json");
            let text = serde_json::to_string_pretty(&scenario.to_file()).unwrap_or_default();
            std::fs::create_dir_all(out).map_err(|source| BenchError::IoFailure { path: out.into(), source })?;
            std::fs::write(&path, text + "\n").map_err(|source| BenchError::IoFailure { path: path.clone(), source })?;
            println!("{}", path.display());
        }
        Command::Oracle { action: OracleCmd::Eval } => {
            let r = run_experiment(&as_oracle(&load(g)?), out, g.jobs)?;
            print(&r.reports[0], g.format);
        }
        Command::Train => {
            let r = run_experiment(&load(g)?, out, g.jobs)?;
            print(&r.reports[0], g.format);
        }
        Command::Sweep { lambdas } => {
            let mut config = load(g)?;
            if let Some(l) = lambdas {
                config.run.lambdas = Some(l.clone());
            }
            if config.run.lambdas.is_none() {
                return Err(BenchError::Config("sweep needs λ values (`run.lambdas` or --lambdas)".into()));
            }
            let r = run_experiment(&config, out, g.jobs)?;
            print(&r.reports[0], g.format);
        }
        Command::Compare => {
            let r = compare_shared_vs_separate(&load(g)?, out, g.jobs)?;
            print(&r.shared, g.format);
            print(&r.separate, g.format);
            print(&r.delta, g.format);
        }
        Command::Report { input, metric } => {
            let text = std::fs::read_to_string(input).map_err(|source| BenchError::IoFailure { path: input.clone(), source })?;
            let reports: Vec<MetricReport64> = match serde_json::from_str(&text) {
                Ok(r) => r,
                Err(_) => vec![parse_report(&text)?],
            };
            let f = match (g.format, metric) {
                (Format::Json, _) => ReportFormat::Json,
                (Format::Csv, Metric::Fpr) => ReportFormat::Csv(ReportMetric::Fpr),
                (Format::Csv, Metric::Auc) => ReportFormat::Csv(ReportMetric::Auc),
            };
            for r in &reports {
                print!("{}", render(r, f));
            }
        }
    }
    Ok(())
}
