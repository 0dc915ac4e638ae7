//! Battery arbitrage with limit orders set from predictive quantiles.
//!
//! The battery holds `B ∈ {0, 1, 2}` usable MWh. Each day the trader picks
//! a buy hour `h1` and a sell hour `h2` from the median forecast and submits
//! a bid at the upper bound of the `α` interval at `h1` and an offer at the
//! lower bound at `h2`. An empty battery (`B = 0`) additionally buys at a
//! forced hour `h*` before `h2`; a full one (`B = 2`) sells at `h*` before
//! `h1`. Every leg moves one stored MWh: a purchase costs `P/0.9` for the
//! `1/0.9` MWh needed to store 1 MWh, and a sale earns `0.9 P` for the
//! `0.9` MWh delivered from 1 stored MWh.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob_models::{PiLevel, QuantileCurve};
use crate::timeseries::HOURS;

/// Charge/discharge efficiency of each leg.
pub const EFFICIENCY: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TradeError {
    #[error("battery state {0} is outside 0..=2")]
    InvalidState(i32),
    #[error("curves cover {curves} days but prices cover {prices}")]
    Misaligned { curves: usize, prices: usize },
    #[error("non-finite median forecast at hour {}", .0 + 1)]
    NonFinite(usize),
}

/// Usable energy above the storage floor, in MWh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BatteryState(u8);

impl BatteryState {
    pub const EMPTY: BatteryState = BatteryState(0);
    pub const HALF: BatteryState = BatteryState(1);
    pub const FULL: BatteryState = BatteryState(2);

    pub fn new(b: i32) -> Result<Self, TradeError> {
        if (0..=2).contains(&b) {
            Ok(Self(b as u8))
        } else {
            Err(TradeError::InvalidState(b))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl Default for BatteryState {
    fn default() -> Self {
        Self::HALF
    }
}

/// Hours chosen for one day (0-based) and the value of the selection objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourChoice {
    pub h1: usize,
    pub h2: usize,
    pub h_star: Option<usize>,
    pub objective: f64,
}

/// Objective for an empty battery: sell at `h2`, buy at `h1` and `h*`.
#[inline]
pub fn objective_empty(p1: f64, p2: f64, p_star: f64) -> f64 {
    EFFICIENCY * p2 - (p1 + p_star) / EFFICIENCY
}

/// Objective for a full battery: sell at `h2` and `h*`, buy at `h1`.
#[inline]
pub fn objective_full(p1: f64, p2: f64, p_star: f64) -> f64 {
    EFFICIENCY * (p2 + p_star) - p1 / EFFICIENCY
}

/// Objective for a half-full battery.
#[inline]
pub fn objective_half(p1: f64, p2: f64) -> f64 {
    EFFICIENCY * p2 - p1 / EFFICIENCY
}

/// Hours in ascending order of price (ties by hour), and in descending order
/// of price (ties by hour).
fn price_orders(median: &[f64; HOURS]) -> ([usize; HOURS], [usize; HOURS]) {
    let mut asc: [usize; HOURS] = std::array::from_fn(|h| h);
    asc.sort_by(|&a, &b| median[a].total_cmp(&median[b]).then(a.cmp(&b)));
    let mut desc: [usize; HOURS] = std::array::from_fn(|h| h);
    desc.sort_by(|&a, &b| median[b].total_cmp(&median[a]).then(a.cmp(&b)));
    (asc, desc)
}

/// First hour of `order` outside `skip`.
#[inline]
fn first_except(order: &[usize; HOURS], skip: [usize; 2]) -> usize {
    *order.iter().find(|h| !skip.contains(h)).expect("24 hours leave a free one")
}

/// Picks the trading hours for a day from its median forecasts.
///
/// The three hours are pairwise distinct; `h* < h2` for an empty battery and
/// `h* < h1` for a full one. Among optimal choices the lexicographically
/// smallest `(h*, h1, h2)` (or `(h1, h2)` without `h*`) is returned.
pub fn select_hours(median: &[f64; HOURS], state: BatteryState) -> Result<HourChoice, TradeError> {
    if let Some(h) = median.iter().position(|v| !v.is_finite()) {
        return Err(TradeError::NonFinite(h));
    }
    let (asc, desc) = price_orders(median);
    let p = median;
    let better = |cand: &HourChoice, best: &Option<HourChoice>| match best {
        None => true,
        Some(b) => cand.objective > b.objective,
    };
    // Within a fixed h*, candidates are compared on (objective, h1, h2).
    let better_inner = |cand: &HourChoice, best: &Option<HourChoice>| match best {
        None => true,
        Some(b) => cand.objective > b.objective || (cand.objective == b.objective && (cand.h1, cand.h2) < (b.h1, b.h2)),
    };

    let mut best: Option<HourChoice> = None;
    match state.value() {
        1 => {
            for h1 in 0..HOURS {
                let h2 = first_except(&desc, [h1, h1]);
                let cand = HourChoice {
                    h1,
                    h2,
                    h_star: None,
                    objective: objective_half(p[h1], p[h2]),
                };
                if better(&cand, &best) {
                    best = Some(cand);
                }
            }
        }
        0 => {
            for hs in 0..HOURS {
                let mut inner: Option<HourChoice> = None;
                for h2 in hs + 1..HOURS {
                    let h1 = first_except(&asc, [hs, h2]);
                    let cand = HourChoice {
                        h1,
                        h2,
                        h_star: Some(hs),
                        objective: objective_empty(p[h1], p[h2], p[hs]),
                    };
                    if better_inner(&cand, &inner) {
                        inner = Some(cand);
                    }
                }
                if let Some(c) = inner {
                    if better(&c, &best) {
                        best = Some(c);
                    }
                }
            }
        }
        _ => {
            for hs in 0..HOURS {
                let mut inner: Option<HourChoice> = None;
                for h1 in hs + 1..HOURS {
                    let h2 = first_except(&desc, [hs, h1]);
                    let cand = HourChoice {
                        h1,
                        h2,
                        h_star: Some(hs),
                        objective: objective_full(p[h1], p[h2], p[hs]),
                    };
                    if better_inner(&cand, &inner) {
                        inner = Some(cand);
                    }
                }
                if let Some(c) = inner {
                    if better(&c, &best) {
                        best = Some(c);
                    }
                }
            }
        }
    }
    Ok(best.expect("at least one feasible selection"))
}

/// Orders for one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayPlan {
    pub h1: usize,
    pub h2: usize,
    pub h_star: Option<usize>,
    /// Limit price of the purchase at `h1`.
    pub bid: f64,
    /// Limit price of the sale at `h2`.
    pub offer: f64,
    pub alpha: PiLevel,
}

/// Hour selection on the medians, then `bid = Û^α(h1)` and `offer = L̂^α(h2)`.
pub fn make_plan(curves: &[QuantileCurve; HOURS], alpha: PiLevel, state: BatteryState) -> Result<DayPlan, TradeError> {
    let median: [f64; HOURS] = std::array::from_fn(|h| curves[h].median());
    let choice = select_hours(&median, state)?;
    Ok(DayPlan {
        h1: choice.h1,
        h2: choice.h2,
        h_star: choice.h_star,
        bid: curves[choice.h1].percentile(alpha.upper_percentile()),
        offer: curves[choice.h2].percentile(alpha.lower_percentile()),
        alpha,
    })
}

/// Outcome of one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub date: Option<NaiveDate>,
    pub state_before: u8,
    pub state_after: u8,
    /// 0-based hours.
    pub h1: usize,
    pub h2: usize,
    pub h_star: Option<usize>,
    pub bid: f64,
    pub offer: f64,
    pub bid_accepted: bool,
    pub offer_accepted: bool,
    /// Market prices of executed purchases, in execution order of hours.
    pub buy_prices: Vec<f64>,
    /// Market prices of executed sales.
    pub sell_prices: Vec<f64>,
    /// Cash paid for purchases, `Σ P/0.9`.
    pub buy_cash: f64,
    /// Cash received for sales, `Σ 0.9 P`.
    pub sell_cash: f64,
    pub profit: f64,
}

impl LedgerRow {
    pub fn charge_legs(&self) -> usize {
        self.buy_prices.len()
    }

    pub fn discharge_legs(&self) -> usize {
        self.sell_prices.len()
    }

    /// Energy bought from the market, MWh.
    pub fn bought_mwh(&self) -> f64 {
        self.charge_legs() as f64 / EFFICIENCY
    }

    /// Energy delivered to the market, MWh.
    pub fn sold_mwh(&self) -> f64 {
        self.discharge_legs() as f64 * EFFICIENCY
    }

    /// Traded volume with a charge and a discharge leg counting as one
    /// 1 MWh transaction.
    pub fn traded_mwh(&self) -> f64 {
        (self.charge_legs() + self.discharge_legs()) as f64 / 2.0
    }
}

/// Settles a day's orders against realized prices.
///
/// A bid fills when the price is at or below it, an offer when the price is
/// at or above it; the forced leg always executes at the market price.
pub fn settle_day(plan: &DayPlan, prices: &[f64; HOURS], state: BatteryState) -> Result<LedgerRow, TradeError> {
    let bid_accepted = prices[plan.h1] <= plan.bid;
    let offer_accepted = prices[plan.h2] >= plan.offer;
    let mut buys: Vec<(usize, f64)> = Vec::with_capacity(2);
    let mut sells: Vec<(usize, f64)> = Vec::with_capacity(2);
    if bid_accepted {
        buys.push((plan.h1, prices[plan.h1]));
    }
    if offer_accepted {
        sells.push((plan.h2, prices[plan.h2]));
    }
    match (state.value(), plan.h_star) {
        (0, Some(h)) => buys.push((h, prices[h])),
        (2, Some(h)) => sells.push((h, prices[h])),
        _ => {}
    }
    buys.sort_by_key(|b| b.0);
    sells.sort_by_key(|s| s.0);
    let buy_cash: f64 = buys.iter().map(|b| b.1 / EFFICIENCY).sum();
    let sell_cash: f64 = sells.iter().map(|s| EFFICIENCY * s.1).sum();
    let after = state.value() as i32 + buys.len() as i32 - sells.len() as i32;
    let after = BatteryState::new(after)?;
    Ok(LedgerRow {
        date: None,
        state_before: state.value(),
        state_after: after.value(),
        h1: plan.h1,
        h2: plan.h2,
        h_star: plan.h_star,
        bid: plan.bid,
        offer: plan.offer,
        bid_accepted,
        offer_accepted,
        buy_prices: buys.iter().map(|b| b.1).collect(),
        sell_prices: sells.iter().map(|s| s.1).collect(),
        buy_cash,
        sell_cash,
        profit: sell_cash - buy_cash,
    })
}

/// Day-by-day record of a strategy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeLedger {
    pub rows: Vec<LedgerRow>,
    pub initial_state: u8,
}

impl TradeLedger {
    pub fn total_profit(&self) -> f64 {
        self.rows.iter().map(|r| r.profit).sum()
    }

    pub fn traded_mwh(&self) -> f64 {
        self.rows.iter().map(LedgerRow::traded_mwh).sum()
    }

    /// Total profit over total traded volume; 0 when nothing traded.
    pub fn profit_per_mwh(&self) -> f64 {
        let v = self.traded_mwh();
        if v > 0.0 {
            self.total_profit() / v
        } else {
            0.0
        }
    }

    pub fn final_state(&self) -> u8 {
        self.rows.last().map_or(self.initial_state, |r| r.state_after)
    }

    /// Battery state at the start of each day followed by the final state.
    pub fn states(&self) -> Vec<u8> {
        let mut s = vec![self.initial_state];
        s.extend(self.rows.iter().map(|r| r.state_after));
        s
    }

    /// Writes one line per day (hours 1-based).
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(
            w,
            "date,state_before,state_after,h1,h2,h_star,bid,offer,bid_accepted,offer_accepted,buy_cash,sell_cash,profit"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
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
                r.buy_cash,
                r.sell_cash,
                r.profit
            )?;
        }
        w.flush()
    }
}

/// Runs the quantile strategy over consecutive days starting from `initial`.
pub fn run_strategy(
    curves: &[[QuantileCurve; HOURS]],
    prices: &[[f64; HOURS]],
    dates: Option<&[NaiveDate]>,
    alpha: PiLevel,
    initial: BatteryState,
) -> Result<TradeLedger, TradeError> {
    if curves.len() != prices.len() {
        return Err(TradeError::Misaligned {
            curves: curves.len(),
            prices: prices.len(),
        });
    }
    let mut state = initial;
    let mut rows = Vec::with_capacity(curves.len());
    for (d, (day_curves, day_prices)) in curves.iter().zip(prices).enumerate() {
        let plan = make_plan(day_curves, alpha, state)?;
        let mut row = settle_day(&plan, day_prices, state)?;
        row.date = dates.and_then(|ds| ds.get(d).copied());
        state = BatteryState::new(row.state_after as i32)?;
        rows.push(row);
    }
    Ok(TradeLedger {
        rows,
        initial_state: initial.value(),
    })
}

/// Buy at the lowest and sell at the highest forecast hour every day with
/// price-taker orders; the battery is not tracked.
pub fn unlimited_benchmark(
    forecasts: &[[f64; HOURS]],
    prices: &[[f64; HOURS]],
    dates: Option<&[NaiveDate]>,
) -> Result<TradeLedger, TradeError> {
    if forecasts.len() != prices.len() {
        return Err(TradeError::Misaligned {
            curves: forecasts.len(),
            prices: prices.len(),
        });
    }
    let mut rows = Vec::with_capacity(forecasts.len());
    for (d, (f, p)) in forecasts.iter().zip(prices).enumerate() {
        if let Some(h) = f.iter().position(|v| !v.is_finite()) {
            return Err(TradeError::NonFinite(h));
        }
        let (asc, desc) = price_orders(f);
        let h1 = asc[0];
        let h2 = first_except(&desc, [h1, h1]);
        let buy_cash = p[h1] / EFFICIENCY;
        let sell_cash = EFFICIENCY * p[h2];
        rows.push(LedgerRow {
            date: dates.and_then(|ds| ds.get(d).copied()),
            state_before: 1,
            state_after: 1,
            h1,
            h2,
            h_star: None,
            bid: f64::INFINITY,
            offer: f64::NEG_INFINITY,
            bid_accepted: true,
            offer_accepted: true,
            buy_prices: vec![p[h1]],
            sell_prices: vec![p[h2]],
            buy_cash,
            sell_cash,
            profit: sell_cash - buy_cash,
        });
    }
    Ok(TradeLedger { rows, initial_state: 1 })
}
