//! Exact check-loss quantile regression.
//!
//! The objective `Σ ρ_q(y_i − x_iᵀβ)` is convex and piecewise linear, and a
//! minimiser exists at a vertex where `p` residuals vanish. The solver walks
//! between such vertices, which is the primal simplex method on the
//! split-variable linear program `min q·1ᵀu⁺ + (1−q)·1ᵀu⁻` subject to
//! `Xβ + u⁺ − u⁻ = y`, written in the coordinates of the `p` observations in
//! the basis.
//!
//! From a vertex with basis `h` (`X_h β = y_h`), releasing basic observation
//! `k` upwards or downwards moves `β` along an edge. Along an edge the
//! objective is convex piecewise linear in the step length, so the best step
//! is the weighted median of the points where non-basic residuals change
//! sign; the observation at that point replaces `k`. Edges are priced in one
//! pass through `z = X_h⁻ᵀ g`, with `g` the subgradient contribution of the
//! non-basic observations; the vertex is optimal once `−q ≤ z_k ≤ 1 − q`
//! for every `k`, which exhibits a zero subgradient. Non-basic observations
//! that sit exactly on the fit are booked on a fixed side, so degenerate
//! vertices are handled by zero-length pivots.

use crate::linalg::{dot, lstsq, Lu, Matrix};
use crate::stats::quantile_type7;

use super::{QuantileRegressor, SolverError};

/// Check function `ρ_q(u) = (q − 1{u<0}) u`.
#[inline]
pub fn check_loss(u: f64, q: f64) -> f64 {
    if u < 0.0 {
        (q - 1.0) * u
    } else {
        q * u
    }
}

pub fn qr_objective(x: &Matrix, y: &[f64], q: f64, beta: &[f64]) -> f64 {
    (0..x.rows()).map(|i| check_loss(y[i] - dot(x.row(i), beta), q)).sum()
}

/// A quantile regression problem: regress `y` on the columns of `x` at level `q`.
#[derive(Debug, Clone, Copy)]
pub struct QrProblem<'a> {
    pub x: &'a Matrix,
    pub y: &'a [f64],
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrFit {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    /// Observations interpolated by the fit (the final simplex basis).
    pub basis: Vec<usize>,
    pub iterations: usize,
}

impl QrFit {
    pub fn residuals(&self, x: &Matrix, y: &[f64]) -> Vec<f64> {
        (0..x.rows()).map(|i| y[i] - dot(x.row(i), &self.coefficients)).collect()
    }
}

/// Fits one quantile level from scratch.
pub fn qr_fit(problem: QrProblem<'_>) -> Result<QrFit, SolverError> {
    QuantileRegressor::new(problem.x)?.fit_qr(problem.y, problem.q, None)
}

const LU_TOL: f64 = 1e-13;

/// Simplex on a full-column-rank design.
pub(super) fn solve(x: &Matrix, y: &[f64], q: f64, hint: Option<&[usize]>) -> Result<QrFit, SolverError> {
    let n = x.rows();
    let p = x.cols();
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let zero_tol = 1e-11 * scale;

    let mut basis = match hint.and_then(|h| valid_hint(x, h)) {
        Some(b) => b,
        None => initial_basis(x, y, q)?,
    };
    let max_iter = 50 * (n + p) + 100;
    let mut is_basic = vec![false; n];
    let mut residuals = vec![0.0; n];
    // Side of the fit each non-basic observation is booked on. Observations
    // lying exactly on the fit keep the side they were last assigned, which
    // makes the pricing a proper reduced-cost test at degenerate vertices.
    let mut side = vec![1.0_f64; n];
    let mut breaks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    let mut bmat = vec![0.0; p * p];
    let mut degenerate = false;

    for iteration in 0..=max_iter {
        for (r, &i) in basis.iter().enumerate() {
            bmat[r * p..(r + 1) * p].copy_from_slice(x.row(i));
        }
        let lu = Lu::new(&bmat, p, LU_TOL).ok_or(SolverError::SingularBasis)?;
        let y_basis: Vec<f64> = basis.iter().map(|&i| y[i]).collect();
        let beta = lu.solve(&y_basis);

        is_basic.iter_mut().for_each(|b| *b = false);
        for &i in &basis {
            is_basic[i] = true;
        }
        let mut g = vec![0.0; p];
        for i in 0..n {
            if is_basic[i] {
                residuals[i] = 0.0;
                continue;
            }
            let mut r = y[i] - dot(x.row(i), &beta);
            if r.abs() <= zero_tol {
                r = 0.0;
            } else {
                side[i] = r.signum();
            }
            residuals[i] = r;
            let w = if side[i] > 0.0 { q } else { q - 1.0 };
            for (gj, xj) in g.iter_mut().zip(x.row(i)) {
                *gj += w * xj;
            }
        }
        let z = lu.solve_transpose(&g);

        // Price the 2p edges. After a degenerate pivot the first improving
        // edge is taken instead of the steepest one, which prevents cycling.
        let price_tol = 1e-11 * (1.0 + z.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        let mut best: Option<(f64, usize, f64)> = None;
        'pricing: for k in 0..p {
            for sigma in [1.0, -1.0] {
                let slope = if sigma > 0.0 { q } else { 1.0 - q } + sigma * z[k];
                if slope < -price_tol && best.is_none_or(|(s, _, _)| slope < s) {
                    best = Some((slope, k, sigma));
                    if degenerate {
                        break 'pricing;
                    }
                }
            }
        }

        let Some((slope0, k, sigma)) = best else {
            let coefficients = beta;
            let objective = (0..n).map(|i| check_loss(residuals[i], q)).sum();
            return Ok(QrFit {
                coefficients,
                objective,
                basis,
                iterations: iteration,
            });
        };
        if iteration == max_iter {
            break;
        }

        // Column k of X_h⁻¹: moving along it changes residual i at rate c_i.
        let mut ek = vec![0.0; p];
        ek[k] = 1.0;
        let col = lu.solve(&ek);
        breaks.clear();
        for i in 0..n {
            if is_basic[i] {
                continue;
            }
            let c = sigma * dot(x.row(i), &col);
            if side[i] * c < 0.0 {
                breaks.push((residuals[i].abs() / c.abs(), c.abs(), i));
            }
        }
        let entering = ratio_test(&mut breaks, slope0).map(|pos| {
            for b in &breaks[..pos] {
                side[b.2] = -side[b.2];
            }
            (breaks[pos].2, breaks[pos].0)
        });
        let Some((i, t)) = entering else {
            return Err(SolverError::Unbounded);
        };
        degenerate = t == 0.0;
        let leaving = basis[k];
        side[leaving] = sigma;
        basis[k] = i;
    }
    Err(SolverError::IterationLimit {
        iterations: max_iter,
    })
}

fn break_order(a: &(f64, f64, usize), b: &(f64, f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.2.cmp(&b.2))
}

/// Position of the first breakpoint (in step-length order) at which the
/// directional derivative, starting from `slope` and increased by each
/// breakpoint's weight, becomes non-negative. On return every entry before
/// that position precedes it in step-length order.
fn ratio_test(breaks: &mut [(f64, f64, usize)], mut slope: f64) -> Option<usize> {
    let (mut lo, mut hi) = (0, breaks.len());
    while hi - lo > 16 {
        let mid = lo + (hi - lo) / 2;
        breaks[lo..hi].select_nth_unstable_by(mid - lo, break_order);
        let below: f64 = breaks[lo..mid].iter().map(|b| b.1).sum();
        if slope + below >= 0.0 {
            hi = mid;
        } else if slope + below + breaks[mid].1 >= 0.0 {
            return Some(mid);
        } else {
            slope += below + breaks[mid].1;
            lo = mid + 1;
        }
    }
    breaks[lo..hi].sort_unstable_by(break_order);
    for (k, b) in breaks[lo..hi].iter().enumerate() {
        slope += b.1;
        if slope >= 0.0 {
            return Some(lo + k);
        }
    }
    None
}

fn valid_hint(x: &Matrix, hint: &[usize]) -> Option<Vec<usize>> {
    let p = x.cols();
    if hint.len() != p || hint.iter().any(|&i| i >= x.rows()) {
        return None;
    }
    let mut b = vec![0.0; p * p];
    for (r, &i) in hint.iter().enumerate() {
        b[r * p..(r + 1) * p].copy_from_slice(x.row(i));
    }
    Lu::new(&b, p, 1e-10).map(|_| hint.to_vec())
}

/// Picks `p` independent observations closest to the `q`-quantile shift of
/// the least-squares fit.
fn initial_basis(x: &Matrix, y: &[f64], q: f64) -> Result<Vec<usize>, SolverError> {
    let n = x.rows();
    let p = x.cols();
    let ls = lstsq(x, y);
    let resid: Vec<f64> = (0..n).map(|i| y[i] - dot(x.row(i), &ls.coefficients)).collect();
    let mut sorted = resid.clone();
    sorted.sort_by(f64::total_cmp);
    let shift = quantile_type7(&sorted, q);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (resid[a] - shift)
            .abs()
            .total_cmp(&(resid[b] - shift).abs())
            .then(a.cmp(&b))
    });

    // Greedy Gram–Schmidt on the rows.
    let mut chosen = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for i in order {
        let mut v = x.row(i).to_vec();
        let norm0 = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for o in &ortho {
            let s = dot(o, &v);
            for (vi, oi) in v.iter_mut().zip(o) {
                *vi -= s * oi;
            }
        }
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > 1e-8 * norm0 {
            v.iter_mut().for_each(|t| *t /= norm);
            ortho.push(v);
            chosen.push(i);
            if chosen.len() == p {
                return Ok(chosen);
            }
        }
    }
    Err(SolverError::SingularBasis)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept(n: usize) -> Matrix {
        Matrix::from_row_major(n, 1, vec![1.0; n])
    }

    fn brute_force_intercept(y: &[f64], q: f64) -> f64 {
        // The optimum of a 1-D piecewise-linear convex function sits at a data point.
        y.iter()
            .map(|&b| y.iter().map(|&v| check_loss(v - b, q)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn median_of_five() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let fit = qr_fit(QrProblem {
            x: &intercept(5),
            y: &y,
            q: 0.5,
        })
        .unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn upper_quantile_of_ten() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let fit = qr_fit(QrProblem {
            x: &intercept(10),
            y: &y,
            q: 0.9,
        })
        .unwrap();
        assert!((fit.objective - brute_force_intercept(&y, 0.9)).abs() < 1e-12);
        assert!((fit.coefficients[0] - 9.0).abs() < 1e-9 || (fit.coefficients[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_case_has_zero_objective() {
        let rows: Vec<[f64; 3]> = (0..30).map(|i| [1.0, i as f64, ((i * 7) % 5) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let beta = [2.0, -0.5, 1.5];
        let y = x.mul_vec(&beta);
        for q in [0.1, 0.5, 0.9] {
            let fit = qr_fit(QrProblem { x: &x, y: &y, q }).unwrap();
            assert!(fit.objective.abs() < 1e-9);
            for (a, b) in fit.coefficients.iter().zip(beta) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn duplicate_columns_are_dropped() {
        let rows: Vec<[f64; 3]> = (0..20).map(|i| [1.0, i as f64, i as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = (0..20).map(|i| 1.0 + 2.0 * i as f64).collect();
        let fit = qr_fit(QrProblem { x: &x, y: &y, q: 0.3 }).unwrap();
        assert_eq!(fit.coefficients[2], 0.0);
        assert!(fit.objective.abs() < 1e-9);
    }

    #[test]
    fn invalid_level_rejected() {
        let err = qr_fit(QrProblem {
            x: &intercept(3),
            y: &[1.0, 2.0, 3.0],
            q: 1.0,
        })
        .unwrap_err();
        assert_eq!(err, SolverError::InvalidLevel(1.0));
    }

    #[test]
    fn warm_start_matches_cold_start_objective() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [1.0, (i as f64 * 0.37).sin() * 4.0]).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = (0..50).map(|i| rows[i][1] * 1.3 + ((i * 31) % 11) as f64 - 5.0).collect();
        let reg = QuantileRegressor::new(&x).unwrap();
        let mut hint: Option<Vec<usize>> = None;
        for pct in 1..100 {
            let q = pct as f64 / 100.0;
            let warm = reg.fit_qr(&y, q, hint.as_deref()).unwrap();
            let cold = reg.fit_qr(&y, q, None).unwrap();
            assert!((warm.objective - cold.objective).abs() < 1e-9, "q = {q}: {} vs {}", warm.objective, cold.objective);
            hint = Some(warm.basis);
        }
    }
}
