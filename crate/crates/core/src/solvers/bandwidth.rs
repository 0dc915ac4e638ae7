use std::str::FromStr;

use crate::stats::{quantile_type7_unsorted, sample_std};

use super::SolverError;

/// Floor applied when the residual scale is zero.
pub const MIN_BANDWIDTH: f64 = 1e-6;

/// Kernel bandwidth, in the units of the regression target.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self, SolverError> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(SolverError::InvalidBandwidth(h))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// How the interquartile range enters `σ = min(std, IQR)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IqrScale {
    /// `Q3 − Q1` as is.
    #[default]
    Raw,
    /// `(Q3 − Q1) / 1.349`, comparable to a normal standard deviation.
    Normalized,
}

impl FromStr for IqrScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(IqrScale::Raw),
            "normalized" | "normalised" => Ok(IqrScale::Normalized),
            other => Err(format!("unknown IQR scale {other:?} (expected raw or normalized)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthChoice {
    pub bandwidth: Bandwidth,
    /// Residual scale `min(std, IQR)`.
    pub sigma: f64,
    /// The scale was zero and the bandwidth was floored at [`MIN_BANDWIDTH`].
    pub floored: bool,
}

/// `1.06 σ / n^{1/5}`.
pub fn rot_bandwidth_from_sigma(sigma: f64, n: usize) -> f64 {
    1.06 * sigma / (n as f64).powf(0.2)
}

/// Rule-of-thumb bandwidth from in-sample quantile regression residuals.
///
/// `σ` is the smaller of the sample standard deviation (`n − 1` denominator)
/// and the interquartile range (linear-interpolation quartiles); `n` is the
/// number of residuals.
pub fn rot_bandwidth(residuals: &[f64], iqr: IqrScale) -> Result<BandwidthChoice, SolverError> {
    let n = residuals.len();
    if n < 2 {
        return Err(SolverError::TooFewResiduals(n));
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    let std = sample_std(residuals);
    let mut scratch = residuals.to_vec();
    let upper = quantile_type7_unsorted(&mut scratch, 0.75);
    let mut range = upper - quantile_type7_unsorted(&mut scratch, 0.25);
    if iqr == IqrScale::Normalized {
        range /= 1.349;
    }
    let sigma = std.min(range);
    let h = rot_bandwidth_from_sigma(sigma, n);
    if h > MIN_BANDWIDTH {
        Ok(BandwidthChoice {
            bandwidth: Bandwidth(h),
            sigma,
            floored: false,
        })
    } else {
        if sigma <= 0.0 {
            log::warn!("zero residual scale, bandwidth floored at {MIN_BANDWIDTH}");
        }
        Ok(BandwidthChoice {
            bandwidth: Bandwidth(MIN_BANDWIDTH),
            sigma,
            floored: true,
        })
    }
}
