//! `epf`: runs the forecasting, scoring and trading stages from the command
//! line.
//!
//! Exit status 0 means success, 1 a configuration or usage error, 2 a data
//! error and 3 a numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epf_core::config::parse_alphas;
use epf_core::pipeline::{
    backtest_stage, evaluate_stage, load_panel, point_stage, prob_stage, run_pipeline, with_pool, PipelineError,
    EXIT_CONFIG,
};
use epf_core::{ingest_csv, ConfigError, ModelKind, PointForecastMatrix, ProbForecasts, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "epf", version, about = "Probabilistic day-ahead price forecasting and battery trading")]
struct Cli {
    /// Increase log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; overrides `parallelism` in the configuration.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read a raw CSV, repair the calendar and write the canonical panel.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a synthetic panel.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        days: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Point forecasts of the expert model under every configured transformation.
    PointForecast {
        #[command(flatten)]
        common: Common,
        /// Panel CSV; overrides `input` in the configuration.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Quantile curves from point forecasts and realized prices.
    ProbForecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        forecasts: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        /// Comma separated models; overrides `models` in the configuration.
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score quantile curves and write a JSON report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        /// Point forecasts, to report their errors as well.
        #[arg(long)]
        forecasts: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the quantile trading strategies and write the per-strategy summary.
    Backtest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        curves: PathBuf,
        #[arg(long)]
        prices: PathBuf,
        /// Point forecasts for the unlimited-order benchmark.
        #[arg(long)]
        forecasts: Option<PathBuf>,
        /// Interval levels, `a..b:step` or a comma list; overrides `alphas`.
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        report: PathBuf,
        /// Day-by-day ledgers of every strategy.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Every stage, writing all artifacts to the output directory.
    All {
        #[command(flatten)]
        common: Common,
        /// Overrides `output_dir` in the configuration.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = common.threads {
        cfg.parallelism = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_error(key: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config(ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    })
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest { input, output } => {
            let panel = ingest_csv(&input)?;
            panel.save(&output)?;
            log::info!("{} days written to {}", panel.num_days(), output.display());
        }
        Command::Synth { seed, days, output } => {
            let panel = epf_core::generate_synthetic(seed, days)?;
            panel.save(&output)?;
        }
        Command::PointForecast { common, input, output } => {
            let mut cfg = load_config(&common)?;
            if input.is_some() {
                cfg.input = input;
            }
            with_pool(cfg.parallelism, || -> Result<(), PipelineError> {
                let panel = load_panel(&cfg)?;
                point_stage(&panel, &cfg)?.save(&output)?;
                Ok(())
            })??;
        }
        Command::ProbForecast {
            common,
            forecasts,
            prices,
            models,
            output,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = models {
                cfg.models = ModelKind::parse_list(&m).map_err(|e| config_error("models", e.to_string()))?;
            }
            with_pool(cfg.parallelism, || -> Result<(), PipelineError> {
                let f = PointForecastMatrix::load(&forecasts)?;
                let panel = ingest_csv(&prices)?;
                prob_stage(&f, &panel, &cfg)?.save(&output)?;
                Ok(())
            })??;
        }
        Command::Evaluate {
            common,
            curves,
            prices,
            forecasts,
            report,
        } => {
            let cfg = load_config(&common)?;
            with_pool(cfg.parallelism, || -> Result<(), PipelineError> {
                let c = ProbForecasts::load(&curves)?;
                let panel = ingest_csv(&prices)?;
                let f = forecasts.as_deref().map(PointForecastMatrix::load).transpose()?;
                evaluate_stage(&c, &panel, f.as_ref(), &cfg)?.save(&report)?;
                Ok(())
            })??;
        }
        Command::Backtest {
            common,
            curves,
            prices,
            forecasts,
            alpha,
            report,
            ledger,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(a) = alpha {
                cfg.alphas = parse_alphas(&a).map_err(|e| config_error("alpha", e))?;
            }
            with_pool(cfg.parallelism, || -> Result<(), PipelineError> {
                let c = ProbForecasts::load(&curves)?;
                let panel = ingest_csv(&prices)?;
                let f = forecasts.as_deref().map(PointForecastMatrix::load).transpose()?;
                let bt = backtest_stage(&c, &panel, f.as_ref(), &cfg.alphas, cfg.initial_battery)?;
                bt.save_summary(&report)?;
                if let Some(path) = &ledger {
                    bt.save_ledgers(path)?;
                }
                Ok(())
            })??;
        }
        Command::All { common, output_dir } => {
            let mut cfg = load_config(&common)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let out = run_pipeline(&cfg)?;
            print!("{}", out.summary);
            report_artifacts(&out.artifacts.all());
        }
    }
    Ok(())
}

fn report_artifacts(paths: &[&Path]) {
    for p in paths {
        log::info!("wrote {}", p.display());
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
