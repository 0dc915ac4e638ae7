//! Per-hour autoregressive expert model and the rolling point-forecast pipeline.
//!
//! For target day `d` and hour `h` the model regresses the transformed price
//! on fourteen inputs, with no separate intercept (the weekday dummies span
//! the constant):
//!
//! ```text
//! Y[d,h] = β1 Y[d-1,h] + β2 Y[d-2,h] + β3 Y[d-7,h] + β4 Y[d-1,24]
//!        + β5 max_h' Y[d-1,h'] + β6 min_h' Y[d-1,h'] + β7 L[d,h]
//!        + Σ_j β(7+j) D_j + ε
//! ```
//!
//! `D_1..D_7` are Monday..Sunday indicators. Every hour gets its own
//! coefficient vector, refitted each day on the most recent window. At hour
//! 24 the first lag and the midnight price are the same column, so that
//! design has rank 13 and takes the minimum-norm least-squares solution.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{dot, lstsq, Matrix};
use crate::timeseries::{HourlyPanel, HOURS};
use crate::transform::{StandardizationParams, TransformError, Vst, VstKind, VstParams};

/// Number of regressors in a design row.
pub const DESIGN_COLS: usize = 14;
/// Largest lag used by the model, in days.
pub const MAX_LAG: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpertError {
    #[error("day {day} needs {needed} days of history")]
    InsufficientHistory { day: usize, needed: usize },
    #[error("day {day} is beyond the end of the series ({len} days)")]
    OutOfRange { day: usize, len: usize },
    #[error("non-finite value in the calibration data on day {day}")]
    NonFinite { day: usize },
    #[error("need at least {needed} rows to fit, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error("{vst} forecast for day {day}, hour {hour}: {source}")]
    Context {
        day: usize,
        hour: usize,
        vst: VstKind,
        #[source]
        source: Box<ExpertError>,
    },
}

/// Regressors for one (day, hour).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertDesignRow {
    pub y_lag1: f64,
    pub y_lag2: f64,
    pub y_lag7: f64,
    pub y_midnight: f64,
    pub y_max_prev: f64,
    pub y_min_prev: f64,
    pub load: f64,
    /// Monday..Sunday indicator bits.
    pub dow: [f64; 7],
}

impl ExpertDesignRow {
    pub fn to_array(&self) -> [f64; DESIGN_COLS] {
        let mut out = [0.0; DESIGN_COLS];
        out[..7].copy_from_slice(&[
            self.y_lag1,
            self.y_lag2,
            self.y_lag7,
            self.y_midnight,
            self.y_max_prev,
            self.y_min_prev,
            self.load,
        ]);
        out[7..].copy_from_slice(&self.dow);
        out
    }
}

/// Weekday dummies, Monday first.
pub fn weekday_dummies(date: NaiveDate) -> [f64; 7] {
    let mut d = [0.0; 7];
    d[date.weekday().num_days_from_monday() as usize] = 1.0;
    d
}

/// Transformed prices and loads on a run of consecutive days.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSeries {
    pub dates: Vec<NaiveDate>,
    pub price: Vec<[f64; HOURS]>,
    pub load: Vec<[f64; HOURS]>,
}

/// Assembles the design row for `hour` (0-based) of `day` (index into `series`).
pub fn build_design(
    series: &TransformedSeries,
    day: usize,
    hour: usize,
) -> Result<ExpertDesignRow, ExpertError> {
    if day < MAX_LAG {
        return Err(ExpertError::InsufficientHistory {
            day,
            needed: MAX_LAG,
        });
    }
    if day >= series.dates.len() {
        return Err(ExpertError::OutOfRange {
            day,
            len: series.dates.len(),
        });
    }
    let prev = &series.price[day - 1];
    let (mut mx, mut mn) = (f64::NEG_INFINITY, f64::INFINITY);
    for &v in prev {
        mx = mx.max(v);
        mn = mn.min(v);
    }
    Ok(ExpertDesignRow {
        y_lag1: prev[hour],
        y_lag2: series.price[day - 2][hour],
        y_lag7: series.price[day - 7][hour],
        y_midnight: prev[HOURS - 1],
        y_max_prev: mx,
        y_min_prev: mn,
        load: series.load[day][hour],
        dow: weekday_dummies(series.dates[day]),
    })
}

/// Ordinary least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// The design was rank deficient; `coefficients` is the minimum-norm solution.
    pub rank_deficient: bool,
}

impl OlsFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        dot(&self.coefficients, row)
    }
}

pub fn fit_ols(design: &Matrix, targets: &[f64]) -> Result<OlsFit, ExpertError> {
    if design.rows() < design.cols() {
        return Err(ExpertError::TooFewRows {
            needed: design.cols(),
            got: design.rows(),
        });
    }
    let sol = lstsq(design, targets);
    if sol.rank_deficient {
        log::debug!(
            "rank-deficient design (rank {} of {}), using minimum-norm least squares",
            sol.rank,
            design.cols()
        );
    }
    Ok(OlsFit {
        coefficients: sol.coefficients,
        rank_deficient: sol.rank_deficient,
    })
}

/// One day of point forecasts for a single transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct DayForecast {
    pub values: [f64; HOURS],
    /// At least one hour's forecast fell outside the invertible range and was clipped.
    pub clipped: bool,
    pub rank_deficient: bool,
}

/// Forecasts all 24 hours of `day` from the `window_days` days preceding it.
///
/// Prices and loads are standardized and transformed with parameters fitted
/// on the window (all hours pooled, separately for each series); the load of
/// the target day uses the window's load parameters. Training rows are the
/// window days that have a full week of in-window lags.
pub fn forecast_day(
    panel: &HourlyPanel,
    day: usize,
    kind: VstKind,
    params: &VstParams,
    window_days: usize,
) -> Result<DayForecast, ExpertError> {
    if window_days < MAX_LAG + DESIGN_COLS {
        return Err(ExpertError::TooFewRows {
            needed: MAX_LAG + DESIGN_COLS,
            got: window_days,
        });
    }
    if day < window_days {
        return Err(ExpertError::InsufficientHistory {
            day,
            needed: window_days,
        });
    }
    if day >= panel.num_days() {
        return Err(ExpertError::OutOfRange {
            day,
            len: panel.num_days(),
        });
    }
    let start = day - window_days;
    for d in start..=day {
        let price_ok = d == day || panel.prices()[d].iter().all(|v| v.is_finite());
        if !price_ok || !panel.loads()[d].iter().all(|v| v.is_finite()) {
            return Err(ExpertError::NonFinite { day: d });
        }
    }

    let window_prices: Vec<f64> = panel.prices()[start..day].iter().flatten().copied().collect();
    let window_loads: Vec<f64> = panel.loads()[start..day].iter().flatten().copied().collect();
    let price_std = StandardizationParams::fit(&window_prices)?;
    let load_std = StandardizationParams::fit(&window_loads)?;

    let z_price: Vec<f64> = window_prices.iter().map(|&v| price_std.apply(v)).collect();
    let z_load: Vec<f64> = window_loads.iter().map(|&v| load_std.apply(v)).collect();
    let price_vst = Vst::fit(kind, params, &z_price)?;
    let load_vst = Vst::fit(kind, params, &z_load)?;

    let to_days = |z: &[f64], vst: &Vst| -> Vec<[f64; HOURS]> {
        z.chunks_exact(HOURS)
            .map(|c| {
                let mut a = [0.0; HOURS];
                for (o, &v) in a.iter_mut().zip(c) {
                    *o = vst.apply(v);
                }
                a
            })
            .collect()
    };
    let mut price_t = to_days(&z_price, &price_vst);
    let mut load_t = to_days(&z_load, &load_vst);
    price_t.push([f64::NAN; HOURS]);
    let mut target_load = [0.0; HOURS];
    for (o, &v) in target_load.iter_mut().zip(&panel.loads()[day]) {
        *o = load_vst.apply(load_std.apply(v));
    }
    load_t.push(target_load);
    let series = TransformedSeries {
        dates: panel.days()[start..=day].to_vec(),
        price: price_t,
        load: load_t,
    };

    let n_rows = window_days - MAX_LAG;
    let mut out = DayForecast {
        values: [0.0; HOURS],
        clipped: false,
        rank_deficient: false,
    };
    for hour in 0..HOURS {
        let mut data = Vec::with_capacity(n_rows * DESIGN_COLS);
        let mut targets = Vec::with_capacity(n_rows);
        for t in MAX_LAG..window_days {
            data.extend_from_slice(&build_design(&series, t, hour)?.to_array());
            targets.push(series.price[t][hour]);
        }
        let design = Matrix::from_row_major(n_rows, DESIGN_COLS, data);
        let fit = fit_ols(&design, &targets)?;
        let row = build_design(&series, window_days, hour)?.to_array();
        let y_hat = fit.predict(&row);
        let inv = price_vst.invert(y_hat);
        out.values[hour] = price_std.invert(inv.value);
        out.clipped |= inv.clipped;
        out.rank_deficient |= fit.rank_deficient;
    }
    Ok(out)
}

/// Point forecasts of every transformation over a run of consecutive days.
#[derive(Debug, Clone, PartialEq)]
pub struct PointForecastMatrix {
    dates: Vec<NaiveDate>,
    vsts: Vec<VstKind>,
    /// Day-major: `values[d * vsts.len() + v]`.
    values: Vec<[f64; HOURS]>,
}

impl PointForecastMatrix {
    /// `values[d][v]` holds the 24 forecasts of transformation `vsts[v]` on `dates[d]`.
    pub fn new(dates: Vec<NaiveDate>, vsts: Vec<VstKind>, values: Vec<Vec<[f64; HOURS]>>) -> Self {
        assert_eq!(dates.len(), values.len(), "one entry per date");
        let flat = values
            .into_iter()
            .flat_map(|per_vst| {
                assert_eq!(per_vst.len(), vsts.len(), "one forecast row per transformation");
                per_vst
            })
            .collect();
        Self {
            dates,
            vsts,
            values: flat,
        }
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn vsts(&self) -> &[VstKind] {
        &self.vsts
    }

    pub fn forecast(&self, day: usize, vst: usize, hour: usize) -> f64 {
        self.values[day * self.vsts.len() + vst][hour]
    }

    pub fn day(&self, day: usize, vst: usize) -> &[f64; HOURS] {
        &self.values[day * self.vsts.len() + vst]
    }

    /// Arithmetic mean of the forecasts at (day, hour).
    pub fn mean(&self, day: usize, hour: usize) -> f64 {
        let n = self.vsts.len();
        (0..n).map(|v| self.forecast(day, v, hour)).sum::<f64>() / n as f64
    }

    /// Per-day mean forecast across transformations.
    pub fn mean_days(&self) -> Vec<[f64; HOURS]> {
        (0..self.num_days())
            .map(|d| std::array::from_fn(|h| self.mean(d, h)))
            .collect()
    }

    /// Forecast rows of one transformation, one per day.
    pub fn series(&self, vst: usize) -> Vec<[f64; HOURS]> {
        (0..self.num_days()).map(|d| *self.day(d, vst)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|r| r.iter().all(|v| v.is_finite()))
    }

    /// Days `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> PointForecastMatrix {
        let nv = self.vsts.len();
        PointForecastMatrix {
            dates: self.dates[start..end].to_vec(),
            vsts: self.vsts.clone(),
            values: self.values[start * nv..end * nv].to_vec(),
        }
    }

    /// Writes `date,hour,vst,forecast` rows, hours 1-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ExpertError> {
        let io = |e: std::io::Error| ExpertError::Io(e.to_string());
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "date,hour,vst,forecast").map_err(io)?;
        for (d, date) in self.dates.iter().enumerate() {
            for h in 0..HOURS {
                for (v, vst) in self.vsts.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", date, h + 1, vst, self.forecast(d, v, h)).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn save(&self, path: &Path) -> Result<(), ExpertError> {
        let file = std::fs::File::create(path).map_err(|e| ExpertError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(file)
    }

    /// Reads the format produced by [`PointForecastMatrix::write_csv`]. Every
    /// (date, hour) must carry all transformations.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ExpertError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| ExpertError::Io(e.to_string()))?.clone();
        let expected = ["date", "hour", "vst", "forecast"];
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(ExpertError::Parse {
                line: 1,
                message: format!("expected header {}", expected.join(",")),
            });
        }
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut vsts: Vec<VstKind> = Vec::new();
        let mut cells: std::collections::BTreeMap<(NaiveDate, VstKind), [Option<f64>; HOURS]> =
            std::collections::BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ExpertError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| ExpertError::Parse { line, message };
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| bad(format!("date: {e}")))?;
            let hour: usize = rec[1].parse().map_err(|e| bad(format!("hour: {e}")))?;
            if !(1..=HOURS).contains(&hour) {
                return Err(bad(format!("hour {hour} outside 1..=24")));
            }
            let vst: VstKind = rec[2].parse().map_err(|e: TransformError| bad(e.to_string()))?;
            let value: f64 = rec[3].parse().map_err(|e| bad(format!("forecast: {e}")))?;
            if !dates.contains(&date) {
                dates.push(date);
            }
            if !vsts.contains(&vst) {
                vsts.push(vst);
            }
            cells.entry((date, vst)).or_insert([None; HOURS])[hour - 1] = Some(value);
        }
        dates.sort();
        let mut values = Vec::with_capacity(dates.len() * vsts.len());
        for &date in &dates {
            for &vst in &vsts {
                let slot = cells.get(&(date, vst));
                let mut day = [0.0; HOURS];
                for (h, v) in day.iter_mut().enumerate() {
                    *v = slot.and_then(|s| s[h]).ok_or_else(|| ExpertError::Parse {
                        line: 0,
                        message: format!("missing {vst} forecast for {date} hour {}", h + 1),
                    })?;
                }
                values.push(day);
            }
        }
        Ok(Self { dates, vsts, values })
    }

    pub fn load(path: &Path) -> Result<Self, ExpertError> {
        let file = std::fs::File::open(path).map_err(|e| ExpertError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }
}

/// Forecasts every day in `first..=last` with every transformation in `vsts`.
///
/// Work items are independent (day, transformation) pairs and run on the
/// current rayon pool; results are collected in day-major order so the
/// output does not depend on the number of threads.
pub fn run_point_pipeline(
    panel: &HourlyPanel,
    first: usize,
    last: usize,
    vsts: &[VstKind],
    params: &VstParams,
    window_days: usize,
) -> Result<PointForecastMatrix, ExpertError> {
    let tasks: Vec<(usize, VstKind)> = (first..=last)
        .flat_map(|d| vsts.iter().map(move |&v| (d, v)))
        .collect();
    let results: Vec<Result<DayForecast, ExpertError>> = tasks
        .par_iter()
        .map(|&(day, vst)| {
            forecast_day(panel, day, vst, params, window_days).map_err(|e| ExpertError::Context {
                day,
                hour: 0,
                vst,
                source: Box::new(e),
            })
        })
        .collect();
    let mut values = Vec::with_capacity(tasks.len());
    for r in results {
        values.push(r?.values);
    }
    Ok(PointForecastMatrix {
        dates: panel.days()[first..=last].to_vec(),
        vsts: vsts.to_vec(),
        values,
    })
}
