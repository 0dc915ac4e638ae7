//! Convolution-smoothed quantile regression.
//!
//! The smoothed loss is twice differentiable with
//! `ℓ′_H(u) = q − Φ(−u/H)` and `ℓ″_H(u) = φ(u/H)/H`, so the objective is
//! minimised by damped Newton steps with the exact Hessian and an Armijo
//! backtracking line search. The objective never increases between iterates
//! by more than its own rounding error.

use crate::linalg::{cholesky_solve, dot, Matrix};

use super::{Bandwidth, QrProblem, QuantileRegressor, SolverError};

/// Iteration cap for the Newton loop.
pub const SQR_MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Relative resolution of the objective value.
const RESOLUTION: f64 = 1e-14;
const CONTINUATION_FACTOR: f64 = 0.3;
/// Beyond this many bandwidths the kernel terms are zero in double precision.
const SATURATION: f64 = 38.0;

/// Value and derivative of the smoothed check loss at residual `u`.
#[inline]
pub fn smoothed_loss(u: f64, q: f64, h: Bandwidth) -> (f64, f64) {
    let (v, d, _) = loss_terms(u, q, h.value(), 1.0 / h.value());
    (v, d)
}

#[inline]
fn loss_terms(u: f64, q: f64, h: f64, inv_h: f64) -> (f64, f64, f64) {
    let s = u * inv_h;
    if s > SATURATION {
        (q * u, q, 0.0)
    } else if s < -SATURATION {
        ((q - 1.0) * u, q - 1.0, 0.0)
    } else {
        let (tail, e) = lower_tail(s.abs());
        let pdf = e * INV_SQRT_2PI;
        let d = q - if s >= 0.0 { tail } else { 1.0 - tail };
        (h * pdf + u * d, d, pdf * inv_h)
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `(Φ(−a), exp(−a²/2))` for `a ≥ 0`, sharing one exponential. Hart's
/// double-precision rational approximation; absolute error below 1e-15.
#[inline]
fn lower_tail(a: f64) -> (f64, f64) {
    let e = (-0.5 * a * a).exp();
    if a < 7.071_067_811_865_47 {
        let mut n = 3.526_249_659_989_11e-2 * a + 0.700_383_064_443_688;
        n = n * a + 6.373_962_203_531_65;
        n = n * a + 33.912_866_078_383;
        n = n * a + 112.079_291_497_871;
        n = n * a + 221.213_596_169_931;
        n = n * a + 220.206_867_912_376;
        let mut d = 8.838_834_764_831_84e-2 * a + 1.755_667_163_182_64;
        d = d * a + 16.064_177_579_207;
        d = d * a + 86.780_732_202_946_1;
        d = d * a + 296.564_248_779_674;
        d = d * a + 637.333_633_378_831;
        d = d * a + 793.826_512_519_948;
        d = d * a + 440.413_735_824_752;
        (e * n / d, e)
    } else {
        let mut b = a + 0.65;
        b = a + 4.0 / b;
        b = a + 3.0 / b;
        b = a + 2.0 / b;
        b = a + 1.0 / b;
        (e / b / 2.506_628_274_631, e)
    }
}

pub fn smoothed_objective(x: &Matrix, y: &[f64], q: f64, h: Bandwidth, beta: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| loss_terms(y[i] - dot(x.row(i), beta), q, h.value(), 1.0 / h.value()).0)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqrFit {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Stopped before the gradient test was met because no representable
    /// step could decrease the objective further. Only happens for bandwidths
    /// so small that the gradient is dominated by rounding in the residuals.
    pub precision_limited: bool,
}

/// Fits one smoothed quantile regression, starting from `warm_start`.
pub fn sqr_fit(problem: QrProblem<'_>, h: Bandwidth, warm_start: &[f64]) -> Result<SqrFit, SolverError> {
    QuantileRegressor::new(problem.x)?.fit_sqr(problem.y, problem.q, h, warm_start)
}

struct Eval {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

fn evaluate(x: &Matrix, y: &[f64], q: f64, h: f64, beta: &[f64]) -> Eval {
    match x.cols() {
        1 => evaluate_fixed::<1>(x, y, q, h, beta),
        2 => evaluate_fixed::<2>(x, y, q, h, beta),
        3 => evaluate_fixed::<3>(x, y, q, h, beta),
        4 => evaluate_fixed::<4>(x, y, q, h, beta),
        5 => evaluate_fixed::<5>(x, y, q, h, beta),
        6 => evaluate_fixed::<6>(x, y, q, h, beta),
        _ => evaluate_dynamic(x, y, q, h, beta),
    }
}

/// [`evaluate_dynamic`] with the column count known at compile time.
fn evaluate_fixed<const P: usize>(x: &Matrix, y: &[f64], q: f64, h: f64, beta: &[f64]) -> Eval {
    let beta: &[f64; P] = beta.try_into().expect("coefficient length");
    let inv_h = 1.0 / h;
    let mut value = 0.0;
    let mut grad = [0.0; P];
    let mut hess = [[0.0; P]; P];
    for (row, &yi) in x.as_slice().chunks_exact(P).zip(y) {
        let row: &[f64; P] = row.try_into().expect("row length");
        let mut fit = 0.0;
        for j in 0..P {
            fit += row[j] * beta[j];
        }
        let (v, d, c) = loss_terms(yi - fit, q, h, inv_h);
        value += v;
        for j in 0..P {
            grad[j] -= d * row[j];
        }
        if c > 0.0 {
            for a in 0..P {
                let ca = c * row[a];
                for b in 0..=a {
                    hess[a][b] += ca * row[b];
                }
            }
        }
    }
    let mut full = vec![0.0; P * P];
    for a in 0..P {
        for b in 0..=a {
            full[a * P + b] = hess[a][b];
            full[b * P + a] = hess[a][b];
        }
    }
    Eval {
        value,
        grad: grad.to_vec(),
        hess: full,
    }
}

fn evaluate_dynamic(x: &Matrix, y: &[f64], q: f64, h: f64, beta: &[f64]) -> Eval {
    let p = x.cols();
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    // Packed lower triangle, row by row.
    let mut tri = vec![0.0; p * (p + 1) / 2];
    let inv_h = 1.0 / h;
    for (row, &yi) in x.as_slice().chunks_exact(p).zip(y) {
        let (v, d, c) = loss_terms(yi - dot(row, beta), q, h, inv_h);
        value += v;
        for (g, &r) in grad.iter_mut().zip(row) {
            *g -= d * r;
        }
        if c > 0.0 {
            let mut start = 0;
            for (a, &ra) in row.iter().enumerate() {
                let ca = c * ra;
                for (t, &rb) in tri[start..=start + a].iter_mut().zip(row) {
                    *t += ca * rb;
                }
                start += a + 1;
            }
        }
    }
    let mut hess = vec![0.0; p * p];
    let mut k = 0;
    for a in 0..p {
        for b in 0..=a {
            hess[a * p + b] = tri[k];
            hess[b * p + a] = tri[k];
            k += 1;
        }
    }
    Eval { value, grad, hess }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// Minimises the smoothed objective from `start`.
///
/// When Newton's method stalls because the start is many bandwidths away
/// from the solution, the fit is repeated along a decreasing sequence of
/// bandwidths, from the mean absolute residual at the start down to `h`,
/// each stage starting from the previous solution.
pub(super) fn solve(x: &Matrix, y: &[f64], q: f64, h: Bandwidth, start: Vec<f64>) -> Result<SqrFit, SolverError> {
    let direct = newton(x, y, q, h.value(), start.clone());
    if matches!(&direct, Ok(fit) if !fit.precision_limited) {
        return direct;
    }
    let fitted = x.mul_vec(&start);
    let scale = y.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
    if scale.is_nan() || scale <= h.value() {
        return direct;
    }
    let mut beta = start;
    let mut stage = scale;
    let mut iterations = 0;
    loop {
        stage = (stage * CONTINUATION_FACTOR).max(h.value());
        match newton(x, y, q, stage, beta.clone()) {
            Ok(fit) => {
                iterations += fit.iterations;
                beta = fit.coefficients.clone();
                if stage == h.value() {
                    return Ok(SqrFit { iterations, ..fit });
                }
            }
            Err(SolverError::NonConvergence { last, .. }) if stage > h.value() => beta = last,
            Err(e) => return Err(e),
        }
    }
}

fn newton(x: &Matrix, y: &[f64], q: f64, h: f64, start: Vec<f64>) -> Result<SqrFit, SolverError> {
    let p = x.cols();
    let mut beta = start;
    let mut cur = evaluate(x, y, q, h, &beta);
    if !cur.value.is_finite() {
        return Err(SolverError::NonFinite);
    }

    for iteration in 0..SQR_MAX_ITER {
        let gnorm = norm2(&cur.grad);
        if gnorm <= GRAD_TOL * (1.0 + cur.value.abs()) {
            return Ok(SqrFit {
                coefficients: beta,
                objective: cur.value,
                gradient_norm: gnorm,
                iterations: iteration,
                precision_limited: false,
            });
        }

        let neg_grad: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
        let step = newton_direction(&cur.hess, p, &neg_grad);
        let slope = dot(&cur.grad, &step);
        let (step, slope) = if slope < 0.0 {
            (step, slope)
        } else {
            (neg_grad.clone(), -gnorm * gnorm)
        };
        // Once the predicted decrease is below the resolution of the
        // objective, a step is judged by the gradient norm instead.
        let resolution = RESOLUTION * cur.value.abs().max(f64::MIN_POSITIVE);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let next = evaluate(x, y, q, h, &trial);
            let ok = if -t * slope > resolution {
                next.value <= cur.value + ARMIJO * t * slope
            } else {
                next.value <= cur.value + resolution && norm2(&next.grad) <= 0.5 * gnorm
            };
            if ok {
                accepted = Some((trial, next));
                break;
            }
            if -t * slope <= resolution {
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, next)) => {
                beta = trial;
                cur = next;
            }
            None => {
                // No representable descent step remains.
                return Ok(SqrFit {
                    coefficients: beta,
                    objective: cur.value,
                    gradient_norm: gnorm,
                    iterations: iteration,
                    precision_limited: true,
                });
            }
        }
    }
    let gradient_norm = norm2(&cur.grad);
    if gradient_norm <= GRAD_TOL * (1.0 + cur.value.abs()) {
        return Ok(SqrFit {
            coefficients: beta,
            objective: cur.value,
            gradient_norm,
            iterations: SQR_MAX_ITER,
            precision_limited: false,
        });
    }
    Err(SolverError::NonConvergence {
        iterations: SQR_MAX_ITER,
        gradient_norm,
        last: beta,
    })
}

/// Solves `H d = −g`, adding a growing ridge when `H` is not numerically
/// positive definite.
fn newton_direction(hess: &[f64], p: usize, neg_grad: &[f64]) -> Vec<f64> {
    if let Some(d) = cholesky_solve(hess, p, neg_grad) {
        if d.iter().all(|v| v.is_finite()) {
            return d;
        }
    }
    let trace: f64 = (0..p).map(|i| hess[i * p + i]).sum::<f64>().abs();
    let mut ridge = 1e-10 * trace.max(1e-300);
    for _ in 0..40 {
        let mut damped = hess.to_vec();
        for i in 0..p {
            damped[i * p + i] += ridge;
        }
        if let Some(d) = cholesky_solve(&damped, p, neg_grad) {
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        ridge *= 10.0;
    }
    neg_grad.to_vec()
}
