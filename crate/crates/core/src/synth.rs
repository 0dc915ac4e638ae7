//! Synthetic hourly price and load panels with known structure.
//!
//! With `w(d)` the weekday of day `d` (Monday = 0) and `h` in `0..24`:
//!
//! ```text
//! load deviation   l[d,h] = 0.6 l[d-1,h] + 0.8 ν[d,h]
//! load             L[d,h] = 1000 + 250 s(h) − 120 [w(d) ≥ 5] + 60 l[d,h]
//! price deviation  x[d,h] = 0.45 x[d-1,h] + 0.15 x[d-2,h] + 0.25 x[d-7,h]
//!                         + 2.5 l[d,h] + 4 (0.6 c[d] + 0.8 e[d,h])
//! price            P[d,h] = 45 + 12 s(h) + 6 [h ≥ 17 and h ≤ 20]
//!                         − 8 [w(d) ≥ 5] + x[d,h]
//! ```
//!
//! where `s(h) = sin(2π(h − 6)/24)`, and `ν`, `c`, `e` are independent
//! standard normal draws (`c` shared by all hours of a day). The
//! autoregression on days 1, 2 and 7 sums to 0.85, so the process is
//! stationary; the lag-7 term and the weekend effects give a positive
//! weekly autocorrelation. A burn-in of 140 days is discarded. Draws come
//! from a ChaCha8 stream seeded with the given seed, so a seed fixes the
//! panel exactly.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::timeseries::{HourlyPanel, PanelError, HOURS};

/// Smallest panel the generator produces.
pub const MIN_SYNTH_DAYS: usize = 800;

const BURN_IN: usize = 140;
const AR_LAGS: [(usize, f64); 3] = [(1, 0.45), (2, 0.15), (7, 0.25)];
const LOAD_AR: f64 = 0.6;
const LOAD_NOISE: f64 = 0.8;
const LOAD_COEF: f64 = 2.5;
const PRICE_NOISE: f64 = 4.0;
const COMMON_SHARE: f64 = 0.6;
const IDIO_SHARE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synthetic panels need at least {MIN_SYNTH_DAYS} days, got {0}")]
    TooFewDays(usize),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// First calendar day of generated panels.
pub fn synth_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date")
}

fn profile(h: usize) -> f64 {
    (2.0 * std::f64::consts::PI * (h as f64 - 6.0) / 24.0).sin()
}

/// Generates `days` days starting at [`synth_start`].
pub fn generate_synthetic(seed: u64, days: usize) -> Result<HourlyPanel, SynthError> {
    if days < MIN_SYNTH_DAYS {
        return Err(SynthError::TooFewDays(days));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = BURN_IN + days;
    let mut x = vec![[0.0; HOURS]; total];
    let mut l = vec![[0.0; HOURS]; total];
    for d in 0..total {
        let common: f64 = rng.sample(StandardNormal);
        for h in 0..HOURS {
            let nu: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let prev_l = if d >= 1 { l[d - 1][h] } else { 0.0 };
            l[d][h] = LOAD_AR * prev_l + LOAD_NOISE * nu;
            let mut ar = 0.0;
            for (lag, phi) in AR_LAGS {
                if d >= lag {
                    ar += phi * x[d - lag][h];
                }
            }
            x[d][h] = ar + LOAD_COEF * l[d][h] + PRICE_NOISE * (COMMON_SHARE * common + IDIO_SHARE * e);
        }
    }
    let start = synth_start();
    let dates: Vec<NaiveDate> = (0..days).map(|i| start + chrono::Duration::days(i as i64)).collect();
    let mut price = Vec::with_capacity(days);
    let mut load = Vec::with_capacity(days);
    for (i, date) in dates.iter().enumerate() {
        let weekend = if date.weekday().num_days_from_monday() >= 5 { 1.0 } else { 0.0 };
        let d = BURN_IN + i;
        price.push(std::array::from_fn(|h| {
            let peak = if (17..=20).contains(&h) { 1.0 } else { 0.0 };
            45.0 + 12.0 * profile(h) + 6.0 * peak - 8.0 * weekend + x[d][h]
        }));
        load.push(std::array::from_fn(|h| {
            1000.0 + 250.0 * profile(h) - 120.0 * weekend + 60.0 * l[d][h]
        }));
    }
    Ok(HourlyPanel::new(dates, price, load)?)
}
