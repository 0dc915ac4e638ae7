//! Median/MAD standardization and variance-stabilizing transformations.
//!
//! Prices are first standardized, `x = (p − a) / b` with `a` the sample
//! median and `b` the mean absolute deviation around it, and then passed
//! through a monotone transform `f`. Forecasts are mapped back with
//! `p̂ = b · f⁻¹(ŷ) + a`.
//!
//! The closed forms below act on standardized inputs and are odd functions:
//!
//! | kind     | `f(x)`                                      | default      |
//! |----------|---------------------------------------------|--------------|
//! | `asinh`  | `ln(x + √(x² + 1))`                         |              |
//! | `boxcox` | `sgn(x) · ((|x| + 1)^λ − 1) / λ`            | `λ = 0.5`    |
//! | `mlog`   | `sgn(x) · (ln(|x| + 1/c) + ln c)`           | `c = 1/3`    |
//! | `poly`   | `sgn(x) · ((|x| + 1)^c − 1)`                | `c = 0.125`  |
//! | `npit`   | `Φ⁻¹(F̂(x))`, `F̂` the empirical CDF          |              |
//!
//! The empirical CDF used by `npit` places order statistic `i` of `N` at
//! probability `(i − 0.5)/N`, interpolates linearly between ranks and clips
//! to `[1/(2N), 1 − 1/(2N)]`, so the transform stays finite at the sample
//! extremes. Its inverse is the interpolated empirical quantile function;
//! values of `y` beyond the attainable range are clipped and flagged.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::stats::{median, norm_cdf, norm_quantile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("degenerate calibration window: mean absolute deviation is zero")]
    DegenerateWindow,
    #[error("calibration sample is empty")]
    EmptySample,
    #[error("calibration sample contains non-finite values")]
    NonFinite,
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("unknown transformation {0:?}")]
    UnknownKind(String),
}

/// Location and scale used to standardize a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardizationParams {
    /// Sample median.
    pub median: f64,
    /// Mean absolute deviation about the median.
    pub mad: f64,
}

impl StandardizationParams {
    pub fn fit(sample: &[f64]) -> Result<Self, TransformError> {
        if sample.is_empty() {
            return Err(TransformError::EmptySample);
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(TransformError::NonFinite);
        }
        let a = median(sample);
        let b = sample.iter().map(|v| (v - a).abs()).sum::<f64>() / sample.len() as f64;
        if b <= 0.0 || !b.is_finite() {
            return Err(TransformError::DegenerateWindow);
        }
        Ok(Self { median: a, mad: b })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.median) / self.mad
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        self.mad * z + self.median
    }
}

/// Fits standardization parameters on `sample` and applies them to `values`.
pub fn standardize(
    values: &[f64],
    sample: &[f64],
) -> Result<(Vec<f64>, StandardizationParams), TransformError> {
    let params = StandardizationParams::fit(sample)?;
    Ok((values.iter().map(|&v| params.apply(v)).collect(), params))
}

/// The five transformation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VstKind {
    Asinh,
    BoxCox,
    MLog,
    Poly,
    Npit,
}

impl VstKind {
    pub const ALL: [VstKind; 5] = [
        VstKind::Asinh,
        VstKind::BoxCox,
        VstKind::MLog,
        VstKind::Poly,
        VstKind::Npit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VstKind::Asinh => "asinh",
            VstKind::BoxCox => "boxcox",
            VstKind::MLog => "mlog",
            VstKind::Poly => "poly",
            VstKind::Npit => "npit",
        }
    }
}

impl fmt::Display for VstKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VstKind {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asinh" => Ok(VstKind::Asinh),
            "boxcox" | "box-cox" => Ok(VstKind::BoxCox),
            "mlog" => Ok(VstKind::MLog),
            "poly" => Ok(VstKind::Poly),
            "npit" | "n-pit" => Ok(VstKind::Npit),
            other => Err(TransformError::UnknownKind(other.to_string())),
        }
    }
}

/// Real-valued parameters of the parametric families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VstParams {
    pub boxcox_lambda: f64,
    pub mlog_c: f64,
    pub poly_c: f64,
}

impl Default for VstParams {
    fn default() -> Self {
        Self {
            boxcox_lambda: 0.5,
            mlog_c: 1.0 / 3.0,
            poly_c: 0.125,
        }
    }
}

impl VstParams {
    pub fn validate(&self) -> Result<(), TransformError> {
        for (name, value) in [
            ("boxcox_lambda", self.boxcox_lambda),
            ("mlog_c", self.mlog_c),
            ("poly_c", self.poly_c),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(TransformError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and positive",
                });
            }
        }
        Ok(())
    }
}

/// Result of an inverse transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inverse {
    pub value: f64,
    /// The input lay outside the attainable range and was clipped.
    pub clipped: bool,
}

/// A calibrated transformation.
#[derive(Debug, Clone, PartialEq)]
pub enum Vst {
    Asinh,
    BoxCox { lambda: f64 },
    MLog { c: f64 },
    Poly { c: f64 },
    Npit(EmpiricalPit),
}

impl Vst {
    /// Builds the transformation of `kind`; `calibration` is only read by `npit`.
    pub fn fit(kind: VstKind, params: &VstParams, calibration: &[f64]) -> Result<Self, TransformError> {
        params.validate()?;
        Ok(match kind {
            VstKind::Asinh => Vst::Asinh,
            VstKind::BoxCox => Vst::BoxCox {
                lambda: params.boxcox_lambda,
            },
            VstKind::MLog => Vst::MLog { c: params.mlog_c },
            VstKind::Poly => Vst::Poly { c: params.poly_c },
            VstKind::Npit => Vst::Npit(EmpiricalPit::new(calibration)?),
        })
    }

    pub fn kind(&self) -> VstKind {
        match self {
            Vst::Asinh => VstKind::Asinh,
            Vst::BoxCox { .. } => VstKind::BoxCox,
            Vst::MLog { .. } => VstKind::MLog,
            Vst::Poly { .. } => VstKind::Poly,
            Vst::Npit(_) => VstKind::Npit,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        let s = x.signum();
        let ax = x.abs();
        match self {
            Vst::Asinh => x.asinh(),
            Vst::BoxCox { lambda } => s * (lambda * ax.ln_1p()).exp_m1() / lambda,
            Vst::MLog { c } => s * (c * ax).ln_1p(),
            Vst::Poly { c } => s * (c * ax.ln_1p()).exp_m1(),
            Vst::Npit(pit) => pit.apply(x),
        }
    }

    pub fn invert(&self, y: f64) -> Inverse {
        let s = y.signum();
        let ay = y.abs();
        let value = match self {
            Vst::Asinh => y.sinh(),
            Vst::BoxCox { lambda } => s * ((lambda * ay).ln_1p() / lambda).exp_m1(),
            Vst::MLog { c } => s * ay.exp_m1() / c,
            Vst::Poly { c } => s * (ay.ln_1p() / c).exp_m1(),
            Vst::Npit(pit) => return pit.invert(y),
        };
        Inverse {
            value,
            clipped: false,
        }
    }
}

/// Rank-based probability integral transform onto the normal scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPit {
    /// Distinct sample values, ascending.
    knots: Vec<f64>,
    /// CDF value at each knot (tied order statistics share their mean rank probability).
    probs: Vec<f64>,
}

impl EmpiricalPit {
    pub fn new(sample: &[f64]) -> Result<Self, TransformError> {
        if sample.is_empty() {
            return Err(TransformError::EmptySample);
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(TransformError::NonFinite);
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut knots = Vec::new();
        let mut probs = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            // Ranks i+1..=j+1 (1-based) at probabilities (r − 0.5)/n; mean of those.
            let mean_rank = 0.5 * ((i + 1) + (j + 1)) as f64;
            knots.push(sorted[i]);
            probs.push((mean_rank - 0.5) / n);
            i = j + 1;
        }
        Ok(Self { knots, probs })
    }

    /// Empirical CDF value, clipped to the first and last knot probabilities.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = &self.knots;
        let last = k.len() - 1;
        if x <= k[0] {
            return self.probs[0];
        }
        if x >= k[last] {
            return self.probs[last];
        }
        // k[i] <= x < k[i+1]
        let i = k.partition_point(|&v| v <= x) - 1;
        let t = (x - k[i]) / (k[i + 1] - k[i]);
        self.probs[i] + t * (self.probs[i + 1] - self.probs[i])
    }

    pub fn apply(&self, x: f64) -> f64 {
        norm_quantile(self.cdf(x))
    }

    pub fn invert(&self, y: f64) -> Inverse {
        let p = norm_cdf(y);
        let last = self.knots.len() - 1;
        if p <= self.probs[0] {
            return Inverse {
                value: self.knots[0],
                clipped: p < self.probs[0] && norm_quantile(self.probs[0]) - y > 1e-12,
            };
        }
        if p >= self.probs[last] {
            return Inverse {
                value: self.knots[last],
                clipped: p > self.probs[last] && y - norm_quantile(self.probs[last]) > 1e-12,
            };
        }
        let i = self.probs.partition_point(|&v| v <= p) - 1;
        let t = (p - self.probs[i]) / (self.probs[i + 1] - self.probs[i]);
        Inverse {
            value: self.knots[i] + t * (self.knots[i + 1] - self.knots[i]),
            clipped: false,
        }
    }
}
