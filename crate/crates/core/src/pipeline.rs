//! Stage orchestration: panel, point forecasts, probabilistic forecasts,
//! scoring and trading, with the artifacts each stage writes.
//!
//! Point forecasts start on day `point_window` of the panel and
//! probabilistic forecasts `prob_window` days later; the probabilistic days
//! form the evaluation range. All stages run on a worker pool of
//! `parallelism` threads and collect results in a fixed order, so artifacts
//! do not depend on the pool size.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, SubPeriod};
use crate::evaluation::{
    aggregate_pinball, all_percentiles, coverage, cpa_test, daily_pinball_sums, kupiec_by_hour, mae, CpaDirection,
    CpaInstruments, EvalError, EXTREME_PERCENTILES,
};
use crate::expert::{run_point_pipeline, ExpertError, PointForecastMatrix};
use crate::prob_models::{run_prob_pipeline, ModelKind, PiLevel, ProbError, ProbForecasts, ProbInputs, QuantileCurve};
use crate::synth::{generate_synthetic, SynthError};
use crate::timeseries::{ingest_csv, HourlyPanel, PanelError, HOURS};
use crate::trading::{run_strategy, unlimited_benchmark, BatteryState, LedgerRow, TradeError, TradeLedger};
use crate::transform::TransformError;

/// Kupiec p-value above which an hour series counts as passing.
pub const KUPIEC_LEVEL: f64 = 0.01;

/// Interval levels shown in the printed summary when configured.
const SUMMARY_ALPHAS: [u32; 3] = [50, 70, 90];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("panel: {0}")]
    Panel(#[from] PanelError),
    #[error("synthetic data: {0}")]
    Synth(#[from] SynthError),
    #[error("point forecasts: {0}")]
    Expert(#[from] ExpertError),
    #[error("probabilistic forecasts: {0}")]
    Prob(#[from] ProbError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("backtest: {0}")]
    Trade(#[from] TradeError),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Process exit statuses.
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

fn expert_code(e: &ExpertError) -> i32 {
    match e {
        ExpertError::Context { source, .. } => expert_code(source),
        ExpertError::Transform(t) => transform_code(t),
        ExpertError::NonFinite { .. } => EXIT_DATA,
        ExpertError::InsufficientHistory { .. }
        | ExpertError::OutOfRange { .. }
        | ExpertError::TooFewRows { .. }
        | ExpertError::Parse { .. }
        | ExpertError::Io(_) => EXIT_DATA,
    }
}

fn transform_code(e: &TransformError) -> i32 {
    match e {
        TransformError::UnknownKind(_) | TransformError::InvalidParameter { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Pool(_) => EXIT_CONFIG,
            PipelineError::Synth(SynthError::TooFewDays(_)) => EXIT_CONFIG,
            PipelineError::Synth(SynthError::Panel(_)) => EXIT_DATA,
            PipelineError::Panel(_) | PipelineError::Data(_) | PipelineError::Io { .. } => EXIT_DATA,
            PipelineError::Expert(e) => expert_code(e),
            PipelineError::Prob(e) => match e {
                ProbError::Solver { .. } | ProbError::NonMonotone { .. } | ProbError::NonFinite { .. } => EXIT_NUMERIC,
                ProbError::InvalidWindow(_) | ProbError::InvalidPiLevel(_) | ProbError::UnknownModel(_) => EXIT_CONFIG,
                _ => EXIT_DATA,
            },
            PipelineError::Eval(e) => match e {
                EvalError::SingularCovariance => EXIT_NUMERIC,
                EvalError::InvalidPercentile(_) | EvalError::InvalidLevel(_) => EXIT_CONFIG,
                _ => EXIT_DATA,
            },
            PipelineError::Trade(e) => match e {
                TradeError::Misaligned { .. } => EXIT_DATA,
                _ => EXIT_NUMERIC,
            },
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Runs `f` on a pool of `threads` workers.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// The configured input panel, or a synthetic one.
pub fn load_panel(cfg: &RunConfig) -> Result<HourlyPanel, PipelineError> {
    match &cfg.input {
        Some(path) => Ok(ingest_csv(path)?),
        None => Ok(generate_synthetic(cfg.seed, cfg.synthetic_days)?),
    }
}

/// Point forecasts for every day from `point_window` to the end of the panel.
pub fn point_stage(panel: &HourlyPanel, cfg: &RunConfig) -> Result<PointForecastMatrix, PipelineError> {
    let n = panel.num_days();
    if n <= cfg.point_window {
        return Err(PipelineError::Data(format!(
            "panel has {n} days, the point window needs more than {}",
            cfg.point_window
        )));
    }
    Ok(run_point_pipeline(
        panel,
        cfg.point_window,
        n - 1,
        &cfg.vsts,
        &cfg.vst_params,
        cfg.point_window,
    )?)
}

/// Realized prices on `dates`, which must be contiguous days of the panel.
pub fn prices_on(panel: &HourlyPanel, dates: &[NaiveDate]) -> Result<Vec<[f64; HOURS]>, PipelineError> {
    let Some(&first) = dates.first() else {
        return Ok(Vec::new());
    };
    let start = panel
        .index_of(first)
        .ok_or_else(|| PipelineError::Data(format!("no prices for {first}")))?;
    let end = start + dates.len();
    if end > panel.num_days() || panel.days()[start..end] != *dates {
        return Err(PipelineError::Data(format!(
            "prices do not cover {first}..{}",
            dates[dates.len() - 1]
        )));
    }
    Ok(panel.prices()[start..end].to_vec())
}

/// Probabilistic forecasts for every point-forecast day after the first
/// `prob_window`.
pub fn prob_stage(
    forecasts: &PointForecastMatrix,
    panel: &HourlyPanel,
    cfg: &RunConfig,
) -> Result<ProbForecasts, PipelineError> {
    let nf = forecasts.num_days();
    if nf <= cfg.prob_window {
        return Err(PipelineError::Data(format!(
            "{nf} days of point forecasts, the probabilistic window needs more than {}",
            cfg.prob_window
        )));
    }
    let prices = prices_on(panel, forecasts.dates())?;
    let inputs = ProbInputs::new(forecasts, &prices)?;
    Ok(run_prob_pipeline(
        &inputs,
        &cfg.models,
        cfg.prob_window,
        nf - 1,
        &cfg.prob_options(),
    )?)
}

/// Scores of one interval level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScore {
    pub alpha: u32,
    /// Percent of prices inside the interval.
    pub picp: f64,
    /// Hours whose Kupiec p-value exceeds [`KUPIEC_LEVEL`].
    pub kupiec_pass: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    /// Mean absolute error of the median.
    pub mae: f64,
    /// Pinball score averaged over all 99 percentiles.
    pub aps: f64,
    /// Pinball score averaged over the five lowest and five highest percentiles.
    pub extreme_ps: f64,
    pub coverage: Vec<AlphaScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpaEntry {
    pub statistic: f64,
    pub p_value: f64,
    /// `row`, `column` or `tie`: the model with the lower average loss.
    pub favors: String,
}

/// Pairwise predictive ability tests on daily pinball sums; entry `[i][j]`
/// tests row model `i` against column model `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpaMatrix {
    pub models: Vec<String>,
    pub tests: Vec<Vec<Option<CpaEntry>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScore {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub days: usize,
    /// MAE of each point forecast and of their mean, when available.
    pub point_mae: Vec<NamedScore>,
    pub models: Vec<ModelScores>,
    pub cpa: CpaMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub alphas: Vec<u32>,
    pub periods: Vec<PeriodReport>,
}

impl ScoreReport {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// The configured periods, or a single `full` period over `dates`.
pub fn resolve_periods(periods: &[SubPeriod], dates: &[NaiveDate]) -> Result<Vec<SubPeriod>, PipelineError> {
    let (Some(&first), Some(&last)) = (dates.first(), dates.last()) else {
        return Err(PipelineError::Data("empty evaluation range".into()));
    };
    if periods.is_empty() {
        return Ok(vec![SubPeriod {
            name: "full".into(),
            start: first,
            end: last,
        }]);
    }
    for p in periods {
        if !dates.iter().any(|&d| p.contains(d)) {
            return Err(PipelineError::Config(ConfigError::Invalid {
                key: format!("period.{}", p.name),
                message: format!("no evaluation day in {}..{}", p.start, p.end),
            }));
        }
    }
    Ok(periods.to_vec())
}

fn day_range(dates: &[NaiveDate], period: &SubPeriod) -> (usize, usize) {
    let start = dates.iter().position(|&d| period.contains(d)).unwrap_or(0);
    let end = dates.iter().rposition(|&d| period.contains(d)).map_or(start, |e| e + 1);
    (start, end)
}

fn medians(curves: &[[QuantileCurve; HOURS]]) -> Vec<[f64; HOURS]> {
    curves
        .iter()
        .map(|day| std::array::from_fn(|h| day[h].median()))
        .collect()
}

fn model_scores(
    kind: ModelKind,
    curves: &[[QuantileCurve; HOURS]],
    prices: &[[f64; HOURS]],
    alphas: &[PiLevel],
) -> Result<ModelScores, PipelineError> {
    let mut cov = Vec::with_capacity(alphas.len());
    for &a in alphas {
        let series = coverage(curves, prices, a)?;
        let passed = kupiec_by_hour(&series)?
            .iter()
            .filter(|k| k.p_value > KUPIEC_LEVEL)
            .count();
        cov.push(AlphaScore {
            alpha: a.percent(),
            picp: series.picp(),
            kupiec_pass: passed,
        });
    }
    Ok(ModelScores {
        model: kind.name().to_string(),
        mae: mae(&medians(curves), prices)?,
        aps: aggregate_pinball(curves, prices, &all_percentiles())?,
        extreme_ps: aggregate_pinball(curves, prices, &EXTREME_PERCENTILES)?,
        coverage: cov,
    })
}

fn cpa_matrix(
    kinds: &[ModelKind],
    losses: &[Vec<f64>],
    instruments: CpaInstruments,
) -> CpaMatrix {
    let k = kinds.len();
    let tests = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        return None;
                    }
                    match cpa_test(&losses[i], &losses[j], instruments) {
                        Ok(r) => Some(CpaEntry {
                            statistic: r.statistic,
                            p_value: r.p_value,
                            favors: match r.direction {
                                CpaDirection::FavorsX => "row",
                                CpaDirection::FavorsY => "column",
                                CpaDirection::Tie => "tie",
                            }
                            .to_string(),
                        }),
                        Err(e) => {
                            log::warn!("predictive ability test {} vs {}: {e}", kinds[i], kinds[j]);
                            None
                        }
                    }
                })
                .collect()
        })
        .collect();
    CpaMatrix {
        models: kinds.iter().map(|k| k.name().to_string()).collect(),
        tests,
    }
}

/// Scores the probabilistic forecasts (and the point forecasts when given)
/// on each period.
pub fn evaluate_stage(
    curves: &ProbForecasts,
    panel: &HourlyPanel,
    forecasts: Option<&PointForecastMatrix>,
    cfg: &RunConfig,
) -> Result<ScoreReport, PipelineError> {
    let dates = curves.dates();
    let prices = prices_on(panel, dates)?;
    let periods = resolve_periods(&cfg.periods, dates)?;
    let by_model: Vec<Vec<[QuantileCurve; HOURS]>> = (0..curves.kinds().len()).map(|k| curves.model(k)).collect();
    let point_offset = match forecasts {
        Some(f) => Some(
            f.dates()
                .iter()
                .position(|&d| d == dates[0])
                .ok_or_else(|| PipelineError::Data(format!("point forecasts do not cover {}", dates[0])))?,
        ),
        None => None,
    };

    let mut reports = Vec::with_capacity(periods.len());
    for period in periods {
        let (s, e) = day_range(dates, &period);
        let p = &prices[s..e];
        let models: Vec<ModelScores> = curves
            .kinds()
            .par_iter()
            .enumerate()
            .map(|(k, &kind)| model_scores(kind, &by_model[k][s..e], p, &cfg.alphas))
            .collect::<Result<_, _>>()?;
        let losses: Vec<Vec<f64>> = by_model
            .iter()
            .map(|m| daily_pinball_sums(&m[s..e], p, &all_percentiles()))
            .collect::<Result<_, _>>()?;
        let mut point_mae = Vec::new();
        if let (Some(f), Some(off)) = (forecasts, point_offset) {
            if off + e > f.num_days() {
                return Err(PipelineError::Data("point forecasts end before the evaluation range".into()));
            }
            let window = f.slice(off + s, off + e);
            for (v, vst) in window.vsts().iter().enumerate() {
                point_mae.push(NamedScore {
                    name: vst.name().to_string(),
                    value: mae(&window.series(v), p)?,
                });
            }
            point_mae.push(NamedScore {
                name: "mean".into(),
                value: mae(&window.mean_days(), p)?,
            });
        }
        reports.push(PeriodReport {
            name: period.name.clone(),
            start: dates[s],
            end: dates[e - 1],
            days: e - s,
            point_mae,
            models,
            cpa: cpa_matrix(curves.kinds(), &losses, cfg.cpa_instruments),
        });
    }
    Ok(ScoreReport {
        alphas: cfg.alphas.iter().map(|a| a.percent()).collect(),
        periods: reports,
    })
}

/// One quantile strategy run.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub model: ModelKind,
    pub alpha: PiLevel,
    pub ledger: TradeLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub strategies: Vec<StrategyRun>,
    pub benchmark: Option<TradeLedger>,
}

/// Profit, traded volume and profit per MWh of a set of ledger rows.
pub fn ledger_totals(rows: &[LedgerRow]) -> (f64, f64, f64) {
    let profit: f64 = rows.iter().map(|r| r.profit).sum();
    let mwh: f64 = rows.iter().map(LedgerRow::traded_mwh).sum();
    (profit, mwh, if mwh > 0.0 { profit / mwh } else { 0.0 })
}

fn rows_in(rows: &[LedgerRow], period: &SubPeriod) -> Vec<LedgerRow> {
    rows.iter()
        .filter(|r| r.date.is_some_and(|d| period.contains(d)))
        .cloned()
        .collect()
}

impl BacktestReport {
    /// `model,alpha,total_profit,traded_mwh,profit_per_mwh`, with the
    /// benchmark as model `benchmark` and an empty alpha.
    pub fn write_summary<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "model,alpha,total_profit,traded_mwh,profit_per_mwh")?;
        for s in &self.strategies {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.model,
                s.alpha.percent(),
                s.ledger.total_profit(),
                s.ledger.traded_mwh(),
                s.ledger.profit_per_mwh()
            )?;
        }
        if let Some(b) = &self.benchmark {
            writeln!(
                w,
                "benchmark,,{},{},{}",
                b.total_profit(),
                b.traded_mwh(),
                b.profit_per_mwh()
            )?;
        }
        w.flush()
    }

    pub fn save_summary(&self, path: &Path) -> Result<(), PipelineError> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        self.write_summary(file).map_err(io_err(path))
    }

    /// Every strategy's ledger in one file, prefixed by model and alpha.
    pub fn write_ledgers<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(
            w,
            "model,alpha,date,state_before,state_after,h1,h2,h_star,bid,offer,bid_accepted,offer_accepted,profit"
        )?;
        let mut emit = |model: &str, alpha: String, l: &TradeLedger| -> std::io::Result<()> {
            for r in &l.rows {
                writeln!(
                    w,
                    "{model},{alpha},{},{},{},{},{},{},{},{},{},{},{}",
                    r.date.map(|d| d.to_string()).unwrap_or_default(),
                    r.state_before,
                    r.state_after,
                    r.h1 + 1,
                    r.h2 + 1,
                    r.h_star.map(|h| (h + 1).to_string()).unwrap_or_default(),
                    r.bid,
                    r.offer,
                    r.bid_accepted,
                    r.offer_accepted,
                    r.profit
                )?;
            }
            Ok(())
        };
        for s in &self.strategies {
            emit(s.model.name(), s.alpha.percent().to_string(), &s.ledger)?;
        }
        if let Some(b) = &self.benchmark {
            emit("benchmark", String::new(), b)?;
        }
        w.flush()
    }

    pub fn save_ledgers(&self, path: &Path) -> Result<(), PipelineError> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        self.write_ledgers(file).map_err(io_err(path))
    }

    /// Best profit per MWh over the interval levels for `model` within
    /// `period`, with the level attaining it (earliest on ties).
    pub fn best_alpha(&self, model: ModelKind, period: &SubPeriod) -> Option<(PiLevel, f64)> {
        let mut best: Option<(PiLevel, f64)> = None;
        for s in self.strategies.iter().filter(|s| s.model == model) {
            let (_, _, ppm) = ledger_totals(&rows_in(&s.ledger.rows, period));
            if best.is_none_or(|(_, b)| ppm > b) {
                best = Some((s.alpha, ppm));
            }
        }
        best
    }

    pub fn benchmark_in(&self, period: &SubPeriod) -> Option<f64> {
        self.benchmark
            .as_ref()
            .map(|b| ledger_totals(&rows_in(&b.rows, period)).2)
    }
}

/// Runs every (model, α) strategy over the curve dates from
/// `initial_battery`, plus the benchmark on the mean point forecast when
/// point forecasts are given.
pub fn backtest_stage(
    curves: &ProbForecasts,
    panel: &HourlyPanel,
    forecasts: Option<&PointForecastMatrix>,
    alphas: &[PiLevel],
    initial: BatteryState,
) -> Result<BacktestReport, PipelineError> {
    let dates = curves.dates();
    let prices = prices_on(panel, dates)?;
    let by_model: Vec<Vec<[QuantileCurve; HOURS]>> = (0..curves.kinds().len()).map(|k| curves.model(k)).collect();
    let tasks: Vec<(usize, PiLevel)> = (0..curves.kinds().len())
        .flat_map(|k| alphas.iter().map(move |&a| (k, a)))
        .collect();
    let strategies: Vec<StrategyRun> = tasks
        .par_iter()
        .map(|&(k, alpha)| {
            run_strategy(&by_model[k], &prices, Some(dates), alpha, initial).map(|ledger| StrategyRun {
                model: curves.kinds()[k],
                alpha,
                ledger,
            })
        })
        .collect::<Result<_, _>>()?;
    let benchmark = match forecasts {
        Some(f) => {
            let off = f
                .dates()
                .iter()
                .position(|d| *d == dates[0])
                .ok_or_else(|| PipelineError::Data(format!("point forecasts do not cover {}", dates[0])))?;
            if off + dates.len() > f.num_days() {
                return Err(PipelineError::Data("point forecasts end before the curves".into()));
            }
            let mean = f.slice(off, off + dates.len()).mean_days();
            Some(unlimited_benchmark(&mean, &prices, Some(dates))?)
        }
        None => None,
    };
    Ok(BacktestReport { strategies, benchmark })
}

/// Plain-text table of the headline numbers per period.
pub fn summary_table(report: &ScoreReport, backtest: &BacktestReport, periods: &[SubPeriod]) -> String {
    let shown: Vec<u32> = {
        let s: Vec<u32> = SUMMARY_ALPHAS
            .iter()
            .copied()
            .filter(|a| report.alphas.contains(a))
            .collect();
        if s.is_empty() {
            report.alphas.iter().copied().take(3).collect()
        } else {
            s
        }
    };
    let mut out = String::new();
    for (pr, period) in report.periods.iter().zip(periods) {
        let _ = writeln!(out, "period {} ({}..{}, {} days)", pr.name, pr.start, pr.end, pr.days);
        let _ = write!(out, "{:<10}{:>10}{:>10}", "model", "MAE", "APS");
        for a in &shown {
            let _ = write!(out, "{:>10}", format!("PICP{a}"));
        }
        let _ = writeln!(out, "{:>8}{:>12}", "alpha", "profit/MWh");
        for m in &pr.models {
            let _ = write!(out, "{:<10}{:>10.4}{:>10.4}", m.model, m.mae, m.aps);
            for a in &shown {
                let picp = m.coverage.iter().find(|c| c.alpha == *a).map_or(f64::NAN, |c| c.picp);
                let _ = write!(out, "{:>10.2}", picp);
            }
            let kind: Option<ModelKind> = m.model.parse().ok();
            match kind.and_then(|k| backtest.best_alpha(k, period)) {
                Some((a, ppm)) => {
                    let _ = writeln!(out, "{:>8}{:>12.4}", a.percent(), ppm);
                }
                None => {
                    let _ = writeln!(out, "{:>8}{:>12}", "-", "-");
                }
            }
        }
        if let Some(b) = backtest.benchmark_in(period) {
            let pad = 20 + 10 * shown.len();
            let _ = writeln!(out, "{:<10}{:>pad$}{:>8}{:>12.4}", "benchmark", "", "-", b);
        }
        if !pr.point_mae.is_empty() {
            let parts: Vec<String> = pr.point_mae.iter().map(|s| format!("{} {:.4}", s.name, s.value)).collect();
            let _ = writeln!(out, "point MAE: {}", parts.join(", "));
        }
        out.push('\n');
    }
    out
}

/// Paths of the artifacts of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub panel: PathBuf,
    pub forecasts: PathBuf,
    pub curves: PathBuf,
    pub report: PathBuf,
    pub trades: PathBuf,
    pub ledgers: PathBuf,
    pub summary: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            panel: dir.join("panel.csv"),
            forecasts: dir.join("forecasts.csv"),
            curves: dir.join("curves.csv"),
            report: dir.join("report.json"),
            trades: dir.join("trades.csv"),
            ledgers: dir.join("ledgers.csv"),
            summary: dir.join("summary.txt"),
        }
    }

    pub fn all(&self) -> [&Path; 7] {
        [
            &self.panel,
            &self.forecasts,
            &self.curves,
            &self.report,
            &self.trades,
            &self.ledgers,
            &self.summary,
        ]
    }
}

/// In-memory results of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub panel: HourlyPanel,
    pub forecasts: PointForecastMatrix,
    pub curves: ProbForecasts,
    pub report: ScoreReport,
    pub backtest: BacktestReport,
    pub summary: String,
    pub artifacts: Artifacts,
}

/// Runs every stage and writes the artifacts to `output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let artifacts = Artifacts::in_dir(&dir);
    with_pool(cfg.parallelism, || -> Result<RunOutput, PipelineError> {
        let panel = load_panel(cfg)?;
        cfg.validate_for(&panel)?;
        panel.save(&artifacts.panel)?;
        log::info!("point forecasts for {} days", panel.num_days() - cfg.point_window);
        let forecasts = point_stage(&panel, cfg)?;
        forecasts.save(&artifacts.forecasts)?;
        log::info!("probabilistic forecasts for {} days", forecasts.num_days() - cfg.prob_window);
        let curves = prob_stage(&forecasts, &panel, cfg)?;
        curves.save(&artifacts.curves)?;
        let report = evaluate_stage(&curves, &panel, Some(&forecasts), cfg)?;
        report.save(&artifacts.report)?;
        let backtest = backtest_stage(&curves, &panel, Some(&forecasts), &cfg.alphas, cfg.initial_battery)?;
        backtest.save_summary(&artifacts.trades)?;
        backtest.save_ledgers(&artifacts.ledgers)?;
        let periods = resolve_periods(&cfg.periods, curves.dates())?;
        let summary = summary_table(&report, &backtest, &periods);
        std::fs::write(&artifacts.summary, &summary).map_err(io_err(&artifacts.summary))?;
        Ok(RunOutput {
            panel,
            forecasts,
            curves,
            report,
            backtest,
            summary,
            artifacts: artifacts.clone(),
        })
    })?
}
