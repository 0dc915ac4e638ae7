//! Probabilistic forecasters built on the five point forecasts.
//!
//! Every forecaster emits a [`QuantileCurve`] of the 99 percentiles for one
//! (day, hour), calibrated on the preceding window of point forecasts and
//! realized prices at the same hour:
//!
//! * `HS`: mean of the five point forecasts plus empirical quantiles of its
//!   past errors.
//! * `QRA` / `SQRA`: (smoothed) quantile regression of the price on an
//!   intercept and all five forecasts.
//! * `QRM` / `SQRM`: the same with the mean forecast as the single regressor.
//! * `QRF` / `SQRF`: one single-regressor fit per forecast, merged by
//!   averaging the five predictive distribution functions.
//!
//! Smoothed fits use the rule-of-thumb bandwidth of the exact fit's
//! residuals, reselected per hour and level. They start from the exact fit
//! at the same level, or with chaining enabled from the linear extrapolation
//! of the two previous smoothed solutions once those exist.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::expert::PointForecastMatrix;
use crate::linalg::{dot, Matrix};
use crate::solvers::{rot_bandwidth, Bandwidth, IqrScale, QuantileRegressor, SolverError};
use crate::stats::quantile_midpoint;
use crate::timeseries::HOURS;

/// Number of percentile levels in a curve.
pub const NUM_LEVELS: usize = 99;

/// Quantile level of curve index `j` (`0 → 0.01`, `98 → 0.99`).
#[inline]
pub fn level(j: usize) -> f64 {
    (j + 1) as f64 / 100.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("day {day} needs {window} days of calibration history")]
    InsufficientHistory { day: usize, window: usize },
    #[error("forecasts cover {forecasts} days but prices cover {prices}")]
    Misaligned { forecasts: usize, prices: usize },
    #[error("day {day} is beyond the end of the forecasts ({len} days)")]
    OutOfRange { day: usize, len: usize },
    #[error("curve decreases between levels {} and {}", .at, .at + 1)]
    NonMonotone { at: usize },
    #[error("curve contains a non-finite value at level {}", .at + 1)]
    NonFinite { at: usize },
    #[error("cannot average an empty set of curves")]
    NoCurves,
    #[error("window must be at least 2 days, got {0}")]
    InvalidWindow(usize),
    #[error("prediction interval level {0}% is not an even percentage in 2..=98")]
    InvalidPiLevel(u32),
    #[error("{kind} on day {day}, hour {}, level {q}: {source}", .hour + 1)]
    Solver {
        kind: ModelKind,
        day: usize,
        hour: usize,
        q: f64,
        #[source]
        source: SolverError,
    },
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("curve file line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("curve file: {0}")]
    Io(String),
}

/// The 99 percentile forecasts `P̂^q`, `q = 0.01, …, 0.99`, for one (day, hour).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileCurve {
    values: [f64; NUM_LEVELS],
}

impl QuantileCurve {
    /// Wraps raw values; they must be finite but need not be sorted.
    pub fn new(values: [f64; NUM_LEVELS]) -> Result<Self, ProbError> {
        if let Some(at) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProbError::NonFinite { at });
        }
        Ok(Self { values })
    }

    /// Curve with every level equal to `value`.
    pub fn constant(value: f64) -> Self {
        Self {
            values: [value; NUM_LEVELS],
        }
    }

    pub fn values(&self) -> &[f64; NUM_LEVELS] {
        &self.values
    }

    /// Value at percentile `pct` (1..=99).
    pub fn percentile(&self, pct: u32) -> f64 {
        assert!((1..=99).contains(&pct), "percentile {pct} outside 1..=99");
        self.values[pct as usize - 1]
    }

    pub fn median(&self) -> f64 {
        self.percentile(50)
    }

    pub fn is_sorted(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.map(|v| v + c),
        }
    }
}

/// Ascending rearrangement of a curve.
pub fn sort_curve(curve: &QuantileCurve) -> QuantileCurve {
    let mut values = curve.values;
    values.sort_by(f64::total_cmp);
    QuantileCurve { values }
}

/// Central prediction interval level `α`, restricted to even percentages so
/// that both bounds fall on the percentile grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PiLevel(u32);

impl PiLevel {
    pub fn new(pct: u32) -> Result<Self, ProbError> {
        if pct.is_multiple_of(2) && (2..=98).contains(&pct) {
            Ok(Self(pct))
        } else {
            Err(ProbError::InvalidPiLevel(pct))
        }
    }

    pub fn percent(self) -> u32 {
        self.0
    }

    pub fn fraction(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Percentile of the lower bound, `(1 − α)/2`.
    pub fn lower_percentile(self) -> u32 {
        (100 - self.0) / 2
    }

    /// Percentile of the upper bound, `(1 + α)/2`.
    pub fn upper_percentile(self) -> u32 {
        (100 + self.0) / 2
    }

    /// `(L̂^α, Û^α)` read from a curve.
    pub fn bounds(self, curve: &QuantileCurve) -> (f64, f64) {
        (curve.percentile(self.lower_percentile()), curve.percentile(self.upper_percentile()))
    }
}

impl fmt::Display for PiLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Hs,
    Qra,
    Qrm,
    Qrf,
    Sqra,
    Sqrm,
    Sqrf,
}

/// How the point forecasts enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    /// All forecasts jointly.
    All,
    /// Their arithmetic mean.
    Mean,
    /// One fit per forecast, merged by distribution averaging.
    PerForecast,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Hs,
        ModelKind::Qra,
        ModelKind::Qrm,
        ModelKind::Qrf,
        ModelKind::Sqra,
        ModelKind::Sqrm,
        ModelKind::Sqrf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hs => "hs",
            ModelKind::Qra => "qra",
            ModelKind::Qrm => "qrm",
            ModelKind::Qrf => "qrf",
            ModelKind::Sqra => "sqra",
            ModelKind::Sqrm => "sqrm",
            ModelKind::Sqrf => "sqrf",
        }
    }

    pub fn is_smoothed(self) -> bool {
        matches!(self, ModelKind::Sqra | ModelKind::Sqrm | ModelKind::Sqrf)
    }

    /// Regression layout; `None` for the historical simulation.
    pub fn combination(self) -> Option<Combination> {
        match self {
            ModelKind::Hs => None,
            ModelKind::Qra | ModelKind::Sqra => Some(Combination::All),
            ModelKind::Qrm | ModelKind::Sqrm => Some(Combination::Mean),
            ModelKind::Qrf | ModelKind::Sqrf => Some(Combination::PerForecast),
        }
    }

    /// Parses a comma-separated list such as `hs,qra,sqrf`.
    pub fn parse_list(s: &str) -> Result<Vec<ModelKind>, ProbError> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ProbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| ProbError::UnknownModel(s.to_string()))
    }
}

/// Settings shared by the regression-based forecasters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbOptions {
    /// Calibration window in days.
    pub window: usize,
    pub iqr: IqrScale,
    /// Start each level's exact fit from the optimal basis of the previous
    /// level and each smoothed fit from an extrapolation of the previous two.
    pub warm_start_chain: bool,
    /// Use this bandwidth for every smoothed fit instead of the rule of thumb.
    pub bandwidth_override: Option<Bandwidth>,
}

impl Default for ProbOptions {
    fn default() -> Self {
        Self {
            window: 182,
            iqr: IqrScale::Raw,
            warm_start_chain: true,
            bandwidth_override: None,
        }
    }
}

/// Point forecasts aligned with realized prices, day by day.
#[derive(Debug, Clone, Copy)]
pub struct ProbInputs<'a> {
    pub forecasts: &'a PointForecastMatrix,
    pub prices: &'a [[f64; HOURS]],
}

impl<'a> ProbInputs<'a> {
    pub fn new(forecasts: &'a PointForecastMatrix, prices: &'a [[f64; HOURS]]) -> Result<Self, ProbError> {
        if forecasts.num_days() != prices.len() {
            return Err(ProbError::Misaligned {
                forecasts: forecasts.num_days(),
                prices: prices.len(),
            });
        }
        Ok(Self { forecasts, prices })
    }

    fn check_day(&self, day: usize, window: usize) -> Result<(), ProbError> {
        if window < 2 {
            return Err(ProbError::InvalidWindow(window));
        }
        if day >= self.forecasts.num_days() {
            return Err(ProbError::OutOfRange {
                day,
                len: self.forecasts.num_days(),
            });
        }
        if day < window {
            return Err(ProbError::InsufficientHistory { day, window });
        }
        Ok(())
    }
}

/// Historical simulation for one (day, hour).
pub fn hs_forecast(inputs: &ProbInputs<'_>, day: usize, hour: usize, window: usize) -> Result<QuantileCurve, ProbError> {
    inputs.check_day(day, window)?;
    let f = inputs.forecasts;
    let mut errors: Vec<f64> = (day - window..day)
        .map(|t| inputs.prices[t][hour] - f.mean(t, hour))
        .collect();
    errors.sort_by(f64::total_cmp);
    let center = f.mean(day, hour);
    let values = std::array::from_fn(|j| center + quantile_midpoint(&errors, level(j)));
    QuantileCurve::new(values)
}

/// `QRA` or `SQRA` for one (day, hour).
pub fn qra_like_forecast(
    kind: ModelKind,
    inputs: &ProbInputs<'_>,
    day: usize,
    hour: usize,
    opts: &ProbOptions,
) -> Result<QuantileCurve, ProbError> {
    expect_combination(kind, Combination::All);
    single_kind(kind, inputs, day, hour, opts)
}

/// `QRM` or `SQRM` for one (day, hour).
pub fn qrm_like_forecast(
    kind: ModelKind,
    inputs: &ProbInputs<'_>,
    day: usize,
    hour: usize,
    opts: &ProbOptions,
) -> Result<QuantileCurve, ProbError> {
    expect_combination(kind, Combination::Mean);
    single_kind(kind, inputs, day, hour, opts)
}

/// `QRF` or `SQRF` for one (day, hour).
pub fn qrf_like_forecast(
    kind: ModelKind,
    inputs: &ProbInputs<'_>,
    day: usize,
    hour: usize,
    opts: &ProbOptions,
) -> Result<QuantileCurve, ProbError> {
    expect_combination(kind, Combination::PerForecast);
    single_kind(kind, inputs, day, hour, opts)
}

fn expect_combination(kind: ModelKind, want: Combination) {
    assert_eq!(kind.combination(), Some(want), "{kind} is not a {want:?} model");
}

fn single_kind(
    kind: ModelKind,
    inputs: &ProbInputs<'_>,
    day: usize,
    hour: usize,
    opts: &ProbOptions,
) -> Result<QuantileCurve, ProbError> {
    let curves = forecast_cell(inputs, day, hour, &[kind], opts)?;
    Ok(curves[0])
}

/// Exact and smoothed per-level predictions of one regression.
struct LevelPredictions {
    exact: [f64; NUM_LEVELS],
    smoothed: Option<[f64; NUM_LEVELS]>,
}

fn fit_levels(
    design: &Matrix,
    y: &[f64],
    target: &[f64],
    want_smoothed: bool,
    opts: &ProbOptions,
    err: impl Fn(bool, f64, SolverError) -> ProbError,
) -> Result<LevelPredictions, ProbError> {
    let reg = QuantileRegressor::new(design).map_err(|e| err(false, level(0), e))?;
    let mut exact = [0.0; NUM_LEVELS];
    let mut smoothed = [0.0; NUM_LEVELS];
    let mut hint: Option<Vec<usize>> = None;
    let mut prev_smooth: Option<(Vec<f64>, Vec<f64>)> = None;
    for (j, slot) in exact.iter_mut().enumerate() {
        let q = level(j);
        let fit = reg
            .fit_qr(y, q, if opts.warm_start_chain { hint.as_deref() } else { None })
            .map_err(|e| err(false, q, e))?;
        *slot = dot(target, &fit.coefficients);
        if want_smoothed {
            let h = match opts.bandwidth_override {
                Some(h) => h,
                None => {
                    let residuals = fit.residuals(design, y);
                    rot_bandwidth(&residuals, opts.iqr).map_err(|e| err(true, q, e))?.bandwidth
                }
            };
            let start = match (&prev_smooth, opts.warm_start_chain) {
                (Some((b1, b2)), true) => b1.iter().zip(b2).map(|(a, b)| 2.0 * a - b).collect(),
                _ => fit.coefficients.clone(),
            };
            let sfit = reg.fit_sqr(y, q, h, &start).map_err(|e| err(true, q, e))?;
            smoothed[j] = dot(target, &sfit.coefficients);
            prev_smooth = Some(match prev_smooth.take() {
                Some((b1, _)) => (sfit.coefficients, b1),
                None => (sfit.coefficients.clone(), sfit.coefficients),
            });
        }
        hint = Some(fit.basis);
    }
    Ok(LevelPredictions {
        exact,
        smoothed: want_smoothed.then_some(smoothed),
    })
}

/// Curves of every kind in `kinds` (in that order) for one (day, hour).
/// The exact and smoothed variants of a combination share their exact fits.
pub fn forecast_cell(
    inputs: &ProbInputs<'_>,
    day: usize,
    hour: usize,
    kinds: &[ModelKind],
    opts: &ProbOptions,
) -> Result<Vec<QuantileCurve>, ProbError> {
    inputs.check_day(day, opts.window)?;
    let f = inputs.forecasts;
    let nv = f.vsts().len();
    let days = day - opts.window..day;
    let y: Vec<f64> = days.clone().map(|t| inputs.prices[t][hour]).collect();

    let err_for = |combination: Combination| {
        move |smoothed: bool, q: f64, source: SolverError| {
            let kind = match (combination, smoothed) {
                (Combination::All, false) => ModelKind::Qra,
                (Combination::All, true) => ModelKind::Sqra,
                (Combination::Mean, false) => ModelKind::Qrm,
                (Combination::Mean, true) => ModelKind::Sqrm,
                (Combination::PerForecast, false) => ModelKind::Qrf,
                (Combination::PerForecast, true) => ModelKind::Sqrf,
            };
            ProbError::Solver {
                kind,
                day,
                hour,
                q,
                source,
            }
        }
    };

    let wants = |c: Combination| -> (bool, bool) {
        let exact = kinds.iter().any(|k| k.combination() == Some(c) && !k.is_smoothed());
        let smooth = kinds.iter().any(|k| k.combination() == Some(c) && k.is_smoothed());
        (exact, smooth)
    };

    let mut all = None;
    let (e, s) = wants(Combination::All);
    if e || s {
        let mut data = Vec::with_capacity(y.len() * (nv + 1));
        for t in days.clone() {
            data.push(1.0);
            data.extend((0..nv).map(|v| f.forecast(t, v, hour)));
        }
        let design = Matrix::from_row_major(y.len(), nv + 1, data);
        let mut target = vec![1.0];
        target.extend((0..nv).map(|v| f.forecast(day, v, hour)));
        all = Some(fit_levels(&design, &y, &target, s, opts, err_for(Combination::All))?);
    }

    let mut mean = None;
    let (e, s) = wants(Combination::Mean);
    if e || s {
        let mut data = Vec::with_capacity(y.len() * 2);
        for t in days.clone() {
            data.push(1.0);
            data.push(f.mean(t, hour));
        }
        let design = Matrix::from_row_major(y.len(), 2, data);
        let target = [1.0, f.mean(day, hour)];
        mean = Some(fit_levels(&design, &y, &target, s, opts, err_for(Combination::Mean))?);
    }

    let mut per_forecast = None;
    let (e, s) = wants(Combination::PerForecast);
    if e || s {
        let mut exact = Vec::with_capacity(nv);
        let mut smoothed = Vec::with_capacity(nv);
        for v in 0..nv {
            let mut data = Vec::with_capacity(y.len() * 2);
            for t in days.clone() {
                data.push(1.0);
                data.push(f.forecast(t, v, hour));
            }
            let design = Matrix::from_row_major(y.len(), 2, data);
            let target = [1.0, f.forecast(day, v, hour)];
            let preds = fit_levels(&design, &y, &target, s, opts, err_for(Combination::PerForecast))?;
            exact.push(sort_curve(&QuantileCurve::new(preds.exact)?));
            if let Some(sm) = preds.smoothed {
                smoothed.push(sort_curve(&QuantileCurve::new(sm)?));
            }
        }
        let merge = |curves: &[QuantileCurve]| -> Result<QuantileCurve, ProbError> {
            Ok(sort_curve(&prob_average(curves)?))
        };
        per_forecast = Some((
            merge(&exact)?,
            if s { Some(merge(&smoothed)?) } else { None },
        ));
    }

    kinds
        .iter()
        .map(|&kind| match kind {
            ModelKind::Hs => hs_forecast(inputs, day, hour, opts.window),
            ModelKind::Qra => QuantileCurve::new(all.as_ref().unwrap().exact).map(|c| sort_curve(&c)),
            ModelKind::Sqra => QuantileCurve::new(all.as_ref().unwrap().smoothed.unwrap()).map(|c| sort_curve(&c)),
            ModelKind::Qrm => QuantileCurve::new(mean.as_ref().unwrap().exact).map(|c| sort_curve(&c)),
            ModelKind::Sqrm => QuantileCurve::new(mean.as_ref().unwrap().smoothed.unwrap()).map(|c| sort_curve(&c)),
            ModelKind::Qrf => Ok(per_forecast.as_ref().unwrap().0),
            ModelKind::Sqrf => Ok(per_forecast.as_ref().unwrap().1.unwrap()),
        })
        .collect()
}

/// Piecewise-linear distribution function through the points
/// `(value[j], level(j))`, constant at `0.01` below the first value and at
/// `0.99` above the last, right-continuous at repeated values.
struct LinearCdf<'a> {
    v: &'a [f64; NUM_LEVELS],
}

impl LinearCdf<'_> {
    fn eval(&self, x: f64) -> f64 {
        let v = self.v;
        if x < v[0] {
            return level(0);
        }
        if x >= v[NUM_LEVELS - 1] {
            return level(NUM_LEVELS - 1);
        }
        // Largest j with v[j] <= x; then v[j + 1] > x.
        let j = v.partition_point(|&t| t <= x) - 1;
        interpolate(v, j, x)
    }

    fn eval_left(&self, x: f64) -> f64 {
        let v = self.v;
        if x <= v[0] {
            return level(0);
        }
        if x > v[NUM_LEVELS - 1] {
            return level(NUM_LEVELS - 1);
        }
        // Largest j with v[j] < x; then v[j + 1] >= x.
        let j = v.partition_point(|&t| t < x) - 1;
        interpolate(v, j, x)
    }
}

#[inline]
fn interpolate(v: &[f64; NUM_LEVELS], j: usize, x: f64) -> f64 {
    let (a, b) = (v[j], v[j + 1]);
    level(j) + (x - a) / (b - a) * 0.01
}

/// Averages predictive distributions given as quantile curves.
///
/// Each curve is read as the piecewise-linear distribution function through
/// its (value, level) points, held flat beyond the outermost levels. The
/// output at level `q` is the leftmost `x` within the range of the inputs at
/// which the averaged distribution function reaches `q`.
pub fn prob_average(curves: &[QuantileCurve]) -> Result<QuantileCurve, ProbError> {
    if curves.is_empty() {
        return Err(ProbError::NoCurves);
    }
    for c in curves {
        if let Some(at) = c.values.windows(2).position(|w| w[0] > w[1]) {
            return Err(ProbError::NonMonotone { at });
        }
    }
    if curves.len() == 1 {
        return Ok(curves[0]);
    }
    let cdfs: Vec<LinearCdf<'_>> = curves.iter().map(|c| LinearCdf { v: &c.values }).collect();
    let m = cdfs.len() as f64;
    let mean_at = |x: f64| cdfs.iter().map(|c| c.eval(x)).sum::<f64>() / m;
    let mean_left = |x: f64| cdfs.iter().map(|c| c.eval_left(x)).sum::<f64>() / m;

    let mut knots: Vec<f64> = curves.iter().flat_map(|c| c.values).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let right: Vec<f64> = knots.iter().map(|&x| mean_at(x)).collect();
    let left: Vec<f64> = knots.iter().map(|&x| mean_left(x)).collect();

    const EPS: f64 = 1e-12;
    let mut out = [0.0; NUM_LEVELS];
    let mut k = 0;
    for (j, slot) in out.iter_mut().enumerate() {
        let q = level(j) - EPS;
        // Levels ascend, so the first knot reaching q only moves right.
        while k + 1 < knots.len() && right[k] < q {
            k += 1;
        }
        *slot = if k == 0 || left[k] < q {
            knots[k]
        } else {
            // Linear on (knots[k-1], knots[k]) from right[k-1] to left[k].
            let (x0, x1) = (knots[k - 1], knots[k]);
            let (f0, f1) = (right[k - 1], left[k]);
            if f1 > f0 {
                (x0 + (q + EPS - f0) / (f1 - f0) * (x1 - x0)).clamp(x0, x1)
            } else {
                x1
            }
        };
    }
    Ok(QuantileCurve { values: out })
}

/// Curves for a block of consecutive days, stored day-major then hour then kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbForecasts {
    dates: Vec<NaiveDate>,
    kinds: Vec<ModelKind>,
    curves: Vec<QuantileCurve>,
}

impl ProbForecasts {
    pub fn new(dates: Vec<NaiveDate>, kinds: Vec<ModelKind>, curves: Vec<QuantileCurve>) -> Self {
        assert_eq!(curves.len(), dates.len() * HOURS * kinds.len(), "curve count");
        Self { dates, kinds, curves }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn kinds(&self) -> &[ModelKind] {
        &self.kinds
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    pub fn kind_index(&self, kind: ModelKind) -> Option<usize> {
        self.kinds.iter().position(|&k| k == kind)
    }

    pub fn curve(&self, kind: usize, day: usize, hour: usize) -> &QuantileCurve {
        &self.curves[(day * HOURS + hour) * self.kinds.len() + kind]
    }

    /// The 24 curves of one model on one day.
    pub fn day_curves(&self, kind: usize, day: usize) -> [QuantileCurve; HOURS] {
        std::array::from_fn(|h| *self.curve(kind, day, h))
    }

    /// All curves of one model, `[day][hour]`.
    pub fn model(&self, kind: usize) -> Vec<[QuantileCurve; HOURS]> {
        (0..self.num_days()).map(|d| self.day_curves(kind, d)).collect()
    }

    /// Writes `date,hour,model,q,value` rows, hours 1-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ProbError> {
        let io = |e: std::io::Error| ProbError::Io(e.to_string());
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "date,hour,model,q,value").map_err(io)?;
        for (d, date) in self.dates.iter().enumerate() {
            for h in 0..HOURS {
                for (k, kind) in self.kinds.iter().enumerate() {
                    let c = self.curve(k, d, h);
                    for (j, v) in c.values.iter().enumerate() {
                        writeln!(w, "{},{},{},{:.2},{}", date, h + 1, kind, level(j), v).map_err(io)?;
                    }
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProbError> {
        let file = std::fs::File::create(path).map_err(|e| ProbError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(file)
    }

    /// Reads the format produced by [`ProbForecasts::write_csv`]. Every
    /// (date, hour, model) must carry all 99 levels.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ProbError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| ProbError::Io(e.to_string()))?.clone();
        let expected = ["date", "hour", "model", "q", "value"];
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(ProbError::Parse {
                line: 1,
                message: format!("expected header {}", expected.join(",")),
            });
        }
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut kinds: Vec<ModelKind> = Vec::new();
        let mut cells: std::collections::BTreeMap<(NaiveDate, usize, ModelKind), [Option<f64>; NUM_LEVELS]> =
            std::collections::BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ProbError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| ProbError::Parse { line, message };
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| bad(format!("date: {e}")))?;
            let hour: usize = rec[1].parse().map_err(|e| bad(format!("hour: {e}")))?;
            if !(1..=HOURS).contains(&hour) {
                return Err(bad(format!("hour {hour} outside 1..=24")));
            }
            let kind: ModelKind = rec[2].parse().map_err(|e: ProbError| bad(e.to_string()))?;
            let q: f64 = rec[3].parse().map_err(|e| bad(format!("q: {e}")))?;
            let pct = (q * 100.0).round();
            if !(1.0..=99.0).contains(&pct) || (q * 100.0 - pct).abs() > 1e-6 {
                return Err(bad(format!("level {q} is not a percentile")));
            }
            let value: f64 = rec[4].parse().map_err(|e| bad(format!("value: {e}")))?;
            if !dates.contains(&date) {
                dates.push(date);
            }
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
            let slot = cells.entry((date, hour - 1, kind)).or_insert([None; NUM_LEVELS]);
            slot[pct as usize - 1] = Some(value);
        }
        dates.sort();
        let mut curves = Vec::with_capacity(dates.len() * HOURS * kinds.len());
        for &date in &dates {
            for h in 0..HOURS {
                for &kind in &kinds {
                    let slot = cells.get(&(date, h, kind)).ok_or_else(|| ProbError::Parse {
                        line: 0,
                        message: format!("missing curve for {date} hour {} model {kind}", h + 1),
                    })?;
                    let mut values = [0.0; NUM_LEVELS];
                    for (j, v) in slot.iter().enumerate() {
                        values[j] = v.ok_or_else(|| ProbError::Parse {
                            line: 0,
                            message: format!("missing level {} for {date} hour {} model {kind}", j + 1, h + 1),
                        })?;
                    }
                    curves.push(QuantileCurve::new(values)?);
                }
            }
        }
        Ok(Self { dates, kinds, curves })
    }

    pub fn load(path: &Path) -> Result<Self, ProbError> {
        let file = std::fs::File::open(path).map_err(|e| ProbError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }
}

/// Forecasts every (day, hour) in `first..=last` (indices into the inputs)
/// for each kind. Cells run in parallel on the current rayon pool and are
/// collected in a fixed order, so the result does not depend on the number
/// of threads.
pub fn run_prob_pipeline(
    inputs: &ProbInputs<'_>,
    kinds: &[ModelKind],
    first: usize,
    last: usize,
    opts: &ProbOptions,
) -> Result<ProbForecasts, ProbError> {
    if last < first {
        return Ok(ProbForecasts::new(Vec::new(), kinds.to_vec(), Vec::new()));
    }
    inputs.check_day(first, opts.window)?;
    inputs.check_day(last, opts.window)?;
    let cells: Vec<(usize, usize)> = (first..=last).flat_map(|d| (0..HOURS).map(move |h| (d, h))).collect();
    let results: Vec<Result<Vec<QuantileCurve>, ProbError>> = cells
        .par_iter()
        .map(|&(d, h)| forecast_cell(inputs, d, h, kinds, opts))
        .collect();
    let mut curves = Vec::with_capacity(cells.len() * kinds.len());
    for r in results {
        curves.extend(r?);
    }
    Ok(ProbForecasts::new(
        inputs.forecasts.dates()[first..=last].to_vec(),
        kinds.to_vec(),
        curves,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::VstKind;

    fn curve_from(f: impl Fn(f64) -> f64) -> QuantileCurve {
        QuantileCurve::new(std::array::from_fn(|j| f(level(j)))).unwrap()
    }

    #[test]
    fn pi_level_indices() {
        let a = PiLevel::new(80).unwrap();
        assert_eq!((a.lower_percentile(), a.upper_percentile()), (10, 90));
        let a = PiLevel::new(50).unwrap();
        assert_eq!((a.lower_percentile(), a.upper_percentile()), (25, 75));
        assert!(PiLevel::new(51).is_err());
        assert!(PiLevel::new(100).is_err());
    }

    #[test]
    fn sort_curve_rearranges() {
        let mut v = [5.0; NUM_LEVELS];
        v[0] = 3.0;
        v[1] = 1.0;
        v[2] = 2.0;
        let s = sort_curve(&QuantileCurve::new(v).unwrap());
        assert_eq!(&s.values()[..3], &[1.0, 2.0, 3.0]);
        assert!(s.is_sorted());
    }

    #[test]
    fn average_of_identical_curves_is_identity() {
        let c = curve_from(|q| (q * 7.0).exp());
        let avg = prob_average(&[c, c, c, c, c]).unwrap();
        for j in 0..NUM_LEVELS {
            assert!((avg.values()[j] - c.values()[j]).abs() <= 1e-9 * c.values()[j].abs());
        }
    }

    #[test]
    fn average_of_shifted_uniforms() {
        let a = curve_from(|q| q);
        let b = curve_from(|q| 1.0 + q);
        let avg = prob_average(&[a, b]).unwrap();
        assert!((avg.median() - 1.0).abs() <= 0.01 + 1e-12);
        // Below the median the average CDF is (x + 0.01)/2 on [0.01, 0.99].
        assert!((avg.percentile(25) - 0.49).abs() < 1e-9);
    }

    #[test]
    fn point_masses_resolve_to_leftmost_root() {
        let avg = prob_average(&[QuantileCurve::constant(0.0), QuantileCurve::constant(10.0)]).unwrap();
        assert_eq!(avg.median(), 0.0);
        assert_eq!(avg.percentile(51), 10.0);
        assert_eq!(avg.percentile(1), 0.0);
    }

    #[test]
    fn non_monotone_input_rejected() {
        let mut v = [1.0; NUM_LEVELS];
        v[10] = 0.0;
        let bad = QuantileCurve::new(v).unwrap();
        assert_eq!(prob_average(&[bad, bad]), Err(ProbError::NonMonotone { at: 9 }));
    }

    fn inputs_fixture(n: usize, f: impl Fn(usize, usize, usize) -> f64, p: impl Fn(usize, usize) -> f64) -> (PointForecastMatrix, Vec<[f64; HOURS]>) {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..n).map(|i| start + chrono::Duration::days(i as i64)).collect();
        let values = (0..n)
            .map(|d| (0..5).map(|v| std::array::from_fn(|h| f(d, v, h))).collect())
            .collect();
        let prices = (0..n).map(|d| std::array::from_fn(|h| p(d, h))).collect();
        (PointForecastMatrix::new(dates, VstKind::ALL.to_vec(), values), prices)
    }

    #[test]
    fn hs_symmetric_errors_have_zero_median() {
        let (fm, prices) = inputs_fixture(30, |_, _, _| 50.0, |d, _| if d % 2 == 0 { 49.0 } else { 51.0 });
        let inputs = ProbInputs::new(&fm, &prices).unwrap();
        let c = hs_forecast(&inputs, 20, 3, 20).unwrap();
        assert_eq!(c.median(), 50.0);
        assert!(hs_forecast(&inputs, 10, 3, 20).is_err());
    }

    #[test]
    fn perfect_forecasts_give_degenerate_curves() {
        let price = |d: usize, h: usize| 40.0 + ((d * 7 + h * 3) % 13) as f64;
        let (fm, prices) = inputs_fixture(40, |d, _, h| price(d, h), price);
        let inputs = ProbInputs::new(&fm, &prices).unwrap();
        let opts = ProbOptions {
            window: 30,
            ..ProbOptions::default()
        };
        let curves = forecast_cell(&inputs, 35, 5, &ModelKind::ALL, &opts).unwrap();
        for (k, c) in ModelKind::ALL.iter().zip(&curves) {
            for &v in c.values() {
                let tol = if k.is_smoothed() { 1e-3 } else { 1e-6 };
                assert!((v - price(35, 5)).abs() < tol, "{k}: {v}");
            }
        }
    }
}
