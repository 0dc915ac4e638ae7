//! Probabilistic day-ahead electricity price forecasting.

pub mod config;
pub mod evaluation;
pub mod expert;
pub mod linalg;
pub mod pipeline;
pub mod prob_models;
pub mod solvers;
pub mod stats;
pub mod synth;
pub mod timeseries;
pub mod trading;
pub mod transform;

pub use config::{ConfigError, RunConfig, SubPeriod};
pub use evaluation::{
    aggregate_pinball, coverage, cpa_test, kupiec_test, mae, pinball, CoverageSeries, CpaInstruments, CpaResult,
    EvalError, KupiecResult,
};
pub use expert::{run_point_pipeline, ExpertError, PointForecastMatrix};
pub use pipeline::{run_pipeline, BacktestReport, PipelineError, RunOutput, ScoreReport};
pub use prob_models::{
    run_prob_pipeline, ModelKind, PiLevel, ProbError, ProbForecasts, ProbInputs, ProbOptions, QuantileCurve,
    NUM_LEVELS,
};
pub use solvers::{rot_bandwidth, Bandwidth, IqrScale, QuantileRegressor, SolverError};
pub use synth::{generate_synthetic, SynthError};
pub use timeseries::{ingest_csv, repair_calendar, HourlyPanel, PanelError, WindowSpec, HOURS};
pub use trading::{
    make_plan, run_strategy, select_hours, settle_day, unlimited_benchmark, BatteryState, DayPlan, TradeError,
    TradeLedger,
};
pub use transform::{TransformError, VstKind, VstParams};
