//! Quantile regression estimators.
//!
//! * [`qr_fit`]: exact minimiser of the check-loss objective
//!   `Σ ρ_q(y − Xβ)`, `ρ_q(u) = (q − 1{u<0}) u`.
//! * [`sqr_fit`]: minimiser of the Gaussian-kernel smoothed objective
//!   `Σ ℓ_H(y − Xβ)` with `ℓ_H(u) = H φ(u/H) + u (q − Φ(−u/H))`, the
//!   convolution of `ρ_q` with a `N(0, H²)` kernel. `ℓ_H → ρ_q` as `H → 0`.
//! * [`rot_bandwidth`]: `H = 1.06 σ / N^{1/5}` with `σ = min(std, IQR)` of
//!   quantile-regression residuals.
//!
//! [`QuantileRegressor`] prepares a design once (dropping linearly dependent
//! columns) so that many quantile levels can be fitted against it; the free
//! functions are thin wrappers for single fits.

mod bandwidth;
mod qr;
mod smooth;

pub use bandwidth::{rot_bandwidth, rot_bandwidth_from_sigma, Bandwidth, BandwidthChoice, IqrScale, MIN_BANDWIDTH};
pub use qr::{check_loss, qr_fit, qr_objective, QrFit, QrProblem};
pub use smooth::{smoothed_loss, smoothed_objective, sqr_fit, SqrFit, SQR_MAX_ITER};

use thiserror::Error;

use crate::linalg::{independent_columns, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("quantile level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("design has {rows} rows but the target has {targets} values")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("{n} observations cannot identify {p} coefficients")]
    TooFewObservations { n: usize, p: usize },
    #[error("non-finite value in the design or target")]
    NonFinite,
    #[error("design matrix has no non-zero column")]
    EmptyDesign,
    #[error("check-loss linear program is unbounded along a basis direction")]
    Unbounded,
    #[error("simplex did not terminate within {iterations} pivots")]
    IterationLimit { iterations: usize },
    #[error("could not find a non-singular starting basis")]
    SingularBasis,
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),
    #[error("smoothed fit did not converge in {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last: Vec<f64>,
    },
    #[error("bandwidth needs at least two residuals, got {0}")]
    TooFewResiduals(usize),
}

/// A design matrix reduced to linearly independent columns, reusable across
/// quantile levels and targets.
#[derive(Debug, Clone)]
pub struct QuantileRegressor {
    reduced: Matrix,
    columns: Vec<usize>,
    full_cols: usize,
}

const COLUMN_TOL: f64 = 1e-9;

impl QuantileRegressor {
    pub fn new(x: &Matrix) -> Result<Self, SolverError> {
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
        let columns = independent_columns(x, COLUMN_TOL);
        if columns.is_empty() {
            return Err(SolverError::EmptyDesign);
        }
        if x.rows() < columns.len() {
            return Err(SolverError::TooFewObservations {
                n: x.rows(),
                p: columns.len(),
            });
        }
        let reduced = if columns.len() == x.cols() {
            x.clone()
        } else {
            x.select_columns(&columns)
        };
        Ok(Self {
            reduced,
            columns,
            full_cols: x.cols(),
        })
    }

    /// Number of columns kept after dropping dependent ones.
    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.reduced.rows()
    }

    pub fn design(&self) -> &Matrix {
        &self.reduced
    }

    fn check_target(&self, y: &[f64], q: f64) -> Result<(), SolverError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(SolverError::InvalidLevel(q));
        }
        if y.len() != self.reduced.rows() {
            return Err(SolverError::DimensionMismatch {
                rows: self.reduced.rows(),
                targets: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
        Ok(())
    }

    /// Scatters reduced coefficients back to the full column layout (dropped columns get 0).
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_cols];
        for (&j, &b) in self.columns.iter().zip(reduced) {
            full[j] = b;
        }
        full
    }

    /// Gathers full-layout coefficients into reduced coordinates.
    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&j| full[j]).collect()
    }

    /// Exact check-loss fit. `basis_hint` is a set of observation indices
    /// (typically the optimal basis of a neighbouring quantile level) used to
    /// start the simplex; invalid hints are ignored.
    pub fn fit_qr(&self, y: &[f64], q: f64, basis_hint: Option<&[usize]>) -> Result<QrFit, SolverError> {
        self.check_target(y, q)?;
        let mut fit = qr::solve(&self.reduced, y, q, basis_hint)?;
        fit.coefficients = self.expand(&fit.coefficients);
        Ok(fit)
    }

    /// Smoothed fit started from `warm_start` (full-layout coefficients).
    pub fn fit_sqr(&self, y: &[f64], q: f64, h: Bandwidth, warm_start: &[f64]) -> Result<SqrFit, SolverError> {
        self.check_target(y, q)?;
        let start = if warm_start.len() == self.full_cols {
            self.reduce(warm_start)
        } else {
            return Err(SolverError::DimensionMismatch {
                rows: self.full_cols,
                targets: warm_start.len(),
            });
        };
        let mut fit = smooth::solve(&self.reduced, y, q, h, start).map_err(|e| match e {
            SolverError::NonConvergence {
                iterations,
                gradient_norm,
                last,
            } => SolverError::NonConvergence {
                iterations,
                gradient_norm,
                last: self.expand(&last),
            },
            other => other,
        })?;
        fit.coefficients = self.expand(&fit.coefficients);
        Ok(fit)
    }
}
