//! Point and probabilistic forecast scoring.
//!
//! * Point accuracy: mean absolute error over all (day, hour) cells.
//! * Interval reliability: the coverage indicator of the closed central
//!   interval, its average (PICP, in percent) and the Kupiec unconditional
//!   coverage likelihood-ratio test per hour series.
//! * Quantile accuracy: the pinball score averaged over days, hours and a set
//!   of percentile levels, and the conditional predictive ability test on the
//!   daily sums of pinball scores of two models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Lu;
use crate::prob_models::{PiLevel, QuantileCurve, NUM_LEVELS};
use crate::stats::chi2_sf;
use crate::timeseries::HOURS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("forecasts cover {forecasts} days but prices cover {prices}")]
    Misaligned { forecasts: usize, prices: usize },
    #[error("nothing to score")]
    Empty,
    #[error("percentile {0} is outside 1..=99")]
    InvalidPercentile(u32),
    #[error("quantile level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("the test needs at least {min} observations, got {n}")]
    TooShort { n: usize, min: usize },
    #[error("loss-differential moment matrix is singular")]
    SingularCovariance,
}

fn check_aligned(forecasts: usize, prices: usize) -> Result<(), EvalError> {
    if forecasts != prices {
        return Err(EvalError::Misaligned { forecasts, prices });
    }
    if forecasts == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// `(1/24D) Σ_d Σ_h |P_{d,h} − P̂_{d,h}|`.
pub fn mae(forecasts: &[[f64; HOURS]], prices: &[[f64; HOURS]]) -> Result<f64, EvalError> {
    check_aligned(forecasts.len(), prices.len())?;
    let total: f64 = forecasts
        .iter()
        .zip(prices)
        .map(|(f, p)| f.iter().zip(p).map(|(a, b)| (b - a).abs()).sum::<f64>())
        .sum();
    Ok(total / (HOURS * forecasts.len()) as f64)
}

/// Indicator that the realized price lies inside the closed `α` interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageSeries {
    pub alpha: PiLevel,
    /// `inside[d][h]`.
    pub inside: Vec<[bool; HOURS]>,
}

impl CoverageSeries {
    pub fn num_days(&self) -> usize {
        self.inside.len()
    }

    /// Indicators of one hour across days.
    pub fn hour_series(&self, hour: usize) -> Vec<bool> {
        self.inside.iter().map(|d| d[hour]).collect()
    }

    /// Hits of one hour across days.
    pub fn hits(&self, hour: usize) -> usize {
        self.inside.iter().filter(|d| d[hour]).count()
    }

    /// PICP of one hour, in percent.
    pub fn picp_hour(&self, hour: usize) -> f64 {
        100.0 * self.hits(hour) as f64 / self.num_days() as f64
    }

    /// PICP averaged over hours, in percent.
    pub fn picp(&self) -> f64 {
        let hits: usize = (0..HOURS).map(|h| self.hits(h)).sum();
        100.0 * hits as f64 / (HOURS * self.num_days()) as f64
    }
}

/// Coverage indicators for curves `[day][hour]` against realized prices.
pub fn coverage(
    curves: &[[QuantileCurve; HOURS]],
    prices: &[[f64; HOURS]],
    alpha: PiLevel,
) -> Result<CoverageSeries, EvalError> {
    check_aligned(curves.len(), prices.len())?;
    let inside = curves
        .iter()
        .zip(prices)
        .map(|(day, p)| {
            std::array::from_fn(|h| {
                let (lo, hi) = alpha.bounds(&day[h]);
                lo <= p[h] && p[h] <= hi
            })
        })
        .collect();
    Ok(CoverageSeries { alpha, inside })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KupiecResult {
    pub lr: f64,
    pub p_value: f64,
    pub hits: usize,
    pub n: usize,
}

/// `x ln y` with the convention `0 · ln 0 = 0`.
#[inline]
fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Unconditional coverage test of the hit indicators against nominal rate `alpha`.
///
/// `LR = −2 [ln((1−α)^{n−x} α^x) − ln((1−π̂)^{n−x} π̂^x)]` with `π̂ = x/n`,
/// compared with a `χ²(1)` distribution.
pub fn kupiec_test(inside: &[bool], alpha: f64) -> Result<KupiecResult, EvalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::InvalidLevel(alpha));
    }
    let n = inside.len();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let x = inside.iter().filter(|&&b| b).count();
    let (nf, xf) = (n as f64, x as f64);
    let pi = xf / nf;
    let null = xlny(nf - xf, 1.0 - alpha) + xlny(xf, alpha);
    let alt = xlny(nf - xf, 1.0 - pi) + xlny(xf, pi);
    let lr = (-2.0 * (null - alt)).max(0.0);
    Ok(KupiecResult {
        lr,
        p_value: chi2_sf(lr, 1.0),
        hits: x,
        n,
    })
}

/// Kupiec test of every hour series.
pub fn kupiec_by_hour(series: &CoverageSeries) -> Result<Vec<KupiecResult>, EvalError> {
    (0..HOURS)
        .map(|h| kupiec_test(&series.hour_series(h), series.alpha.fraction()))
        .collect()
}

/// Pinball score of quantile forecast `value` at level `q`.
#[inline]
pub fn pinball(value: f64, price: f64, q: f64) -> f64 {
    if price < value {
        (1.0 - q) * (value - price)
    } else {
        q * (price - value)
    }
}

/// The five lowest and five highest percentiles.
pub const EXTREME_PERCENTILES: [u32; 10] = [1, 2, 3, 4, 5, 95, 96, 97, 98, 99];

/// All 99 percentiles.
pub fn all_percentiles() -> Vec<u32> {
    (1..=NUM_LEVELS as u32).collect()
}

fn check_percentiles(percentiles: &[u32]) -> Result<(), EvalError> {
    if percentiles.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&bad) = percentiles.iter().find(|&&p| !(1..=99).contains(&p)) {
        return Err(EvalError::InvalidPercentile(bad));
    }
    Ok(())
}

/// Per-day sum of pinball scores over hours and the given percentiles.
pub fn daily_pinball_sums(
    curves: &[[QuantileCurve; HOURS]],
    prices: &[[f64; HOURS]],
    percentiles: &[u32],
) -> Result<Vec<f64>, EvalError> {
    check_aligned(curves.len(), prices.len())?;
    check_percentiles(percentiles)?;
    Ok(curves
        .iter()
        .zip(prices)
        .map(|(day, p)| {
            let mut s = 0.0;
            for h in 0..HOURS {
                for &pct in percentiles {
                    s += pinball(day[h].percentile(pct), p[h], pct as f64 / 100.0);
                }
            }
            s
        })
        .collect())
}

/// Mean pinball score over days, hours and the given percentiles.
pub fn aggregate_pinball(
    curves: &[[QuantileCurve; HOURS]],
    prices: &[[f64; HOURS]],
    percentiles: &[u32],
) -> Result<f64, EvalError> {
    let daily = daily_pinball_sums(curves, prices, percentiles)?;
    let total: f64 = daily.iter().sum();
    Ok(total / (daily.len() * HOURS * percentiles.len()) as f64)
}

/// Conditioning information for the predictive ability regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CpaInstruments {
    /// `[1]`: tests whether the mean differential is zero.
    Constant,
    /// `[1, Δ_{d−1}]`.
    #[default]
    ConstantAndLag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CpaDirection {
    /// The first model has lower average loss.
    FavorsX,
    /// The second model has lower average loss.
    FavorsY,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpaResult {
    pub statistic: f64,
    pub p_value: f64,
    pub direction: CpaDirection,
}

/// Minimum length of the loss series for [`cpa_test`].
pub const CPA_MIN_DAYS: usize = 30;

/// Conditional predictive ability test on daily losses of models X and Y.
///
/// With `Δ_d = loss_X,d − loss_Y,d` and instruments `h_{d−1}`, the moment
/// vectors are `z_d = h_{d−1} Δ_d`; the statistic `n z̄ᵀ Ω̂⁻¹ z̄` with
/// `Ω̂ = (1/n) Σ z_d z_dᵀ` is compared with `χ²(k)`, `k` the number of
/// instruments.
pub fn cpa_test(loss_x: &[f64], loss_y: &[f64], instruments: CpaInstruments) -> Result<CpaResult, EvalError> {
    if loss_x.len() != loss_y.len() {
        return Err(EvalError::Misaligned {
            forecasts: loss_x.len(),
            prices: loss_y.len(),
        });
    }
    let len = loss_x.len();
    if len < CPA_MIN_DAYS {
        return Err(EvalError::TooShort { n: len, min: CPA_MIN_DAYS });
    }
    let delta: Vec<f64> = loss_x.iter().zip(loss_y).map(|(a, b)| a - b).collect();
    let mean_delta = delta.iter().sum::<f64>() / len as f64;
    let direction = if mean_delta < 0.0 {
        CpaDirection::FavorsX
    } else if mean_delta > 0.0 {
        CpaDirection::FavorsY
    } else {
        CpaDirection::Tie
    };
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(CpaResult {
            statistic: 0.0,
            p_value: 1.0,
            direction,
        });
    }

    let k = match instruments {
        CpaInstruments::Constant => 1,
        CpaInstruments::ConstantAndLag => 2,
    };
    let z: Vec<[f64; 2]> = (1..len)
        .map(|d| match instruments {
            CpaInstruments::Constant => [delta[d], 0.0],
            CpaInstruments::ConstantAndLag => [delta[d], delta[d - 1] * delta[d]],
        })
        .collect();
    let n = z.len() as f64;
    let mut zbar = [0.0; 2];
    let mut omega = [0.0; 4];
    for zd in &z {
        for a in 0..k {
            zbar[a] += zd[a] / n;
            for b in 0..k {
                omega[a * k + b] += zd[a] * zd[b] / n;
            }
        }
    }
    let omega = &omega[..k * k];
    let lu = Lu::new(omega, k, 1e-12).ok_or(EvalError::SingularCovariance)?;
    let w = lu.solve(&zbar[..k]);
    let statistic = n * zbar[..k].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    if !statistic.is_finite() {
        return Err(EvalError::SingularCovariance);
    }
    let statistic = statistic.max(0.0);
    Ok(CpaResult {
        statistic,
        p_value: chi2_sf(statistic, k as f64),
        direction,
    })
}
