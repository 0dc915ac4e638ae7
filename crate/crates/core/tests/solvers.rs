use epf_core::linalg::Matrix;
use epf_core::solvers::{qr_objective, smoothed_objective, Bandwidth, QuantileRegressor};
use proptest::prelude::*;

fn design(rows: &[(f64, f64)]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|&(a, _)| vec![1.0, a]).collect::<Vec<_>>())
}

/// Minimum of the check objective over every basic solution: lines through
/// each pair of observations with distinct regressors.
fn vertex_minimum(points: &[(f64, f64)], q: f64) -> f64 {
    let x = design(points);
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (xi, yi) = points[i];
            let (xj, yj) = points[j];
            if (xi - xj).abs() < 1e-9 {
                continue;
            }
            let slope = (yj - yi) / (xj - xi);
            let beta = [yi - slope * xi, slope];
            best = best.min(qr_objective(&x, &y, q, &beta));
        }
    }
    best
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-10.0f64..10.0, -20.0f64..20.0), 3..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_parameter_fit_attains_vertex_minimum(pts in points(), q in 0.05f64..0.95) {
        prop_assume!(pts.iter().any(|p| (p.0 - pts[0].0).abs() > 1e-3));
        let x = design(&pts);
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let fit = QuantileRegressor::new(&x).unwrap().fit_qr(&y, q, None).unwrap();
        let oracle = vertex_minimum(&pts, q);
        prop_assert!(fit.objective <= oracle + 1e-8 * (1.0 + oracle.abs()));
        prop_assert!((qr_objective(&x, &y, q, &fit.coefficients) - fit.objective).abs() <= 1e-8 * (1.0 + oracle.abs()));
    }

    #[test]
    fn fit_is_scale_and_shift_equivariant(
        pts in points(),
        q in 0.05f64..0.95,
        a in 0.1f64..10.0,
        g0 in -5.0f64..5.0,
        g1 in -5.0f64..5.0,
    ) {
        prop_assume!(pts.iter().any(|p| (p.0 - pts[0].0).abs() > 1e-3));
        let x = design(&pts);
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let reg = QuantileRegressor::new(&x).unwrap();
        let base = reg.fit_qr(&y, q, None).unwrap();
        let y2: Vec<f64> = pts.iter().map(|p| a * p.1 + g0 + g1 * p.0).collect();
        let moved = reg.fit_qr(&y2, q, None).unwrap();
        let mapped = [a * base.coefficients[0] + g0, a * base.coefficients[1] + g1];
        let tol = 1e-7 * (1.0 + moved.objective.abs());
        prop_assert!((qr_objective(&x, &y2, q, &mapped) - moved.objective).abs() <= tol);
    }

    #[test]
    fn reflected_sample_swaps_levels(pts in points(), q in 0.05f64..0.95) {
        prop_assume!(pts.iter().any(|p| (p.0 - pts[0].0).abs() > 1e-3));
        let x = design(&pts);
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let reg = QuantileRegressor::new(&x).unwrap();
        let a = reg.fit_qr(&y, q, None).unwrap();
        let b = reg.fit_qr(&neg, 1.0 - q, None).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-8 * (1.0 + a.objective.abs()));
    }

    #[test]
    fn smoothed_fit_minimises_smoothed_objective(pts in points(), q in 0.05f64..0.95, h in 0.05f64..5.0) {
        prop_assume!(pts.iter().any(|p| (p.0 - pts[0].0).abs() > 1e-3));
        let x = design(&pts);
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let reg = QuantileRegressor::new(&x).unwrap();
        let exact = reg.fit_qr(&y, q, None).unwrap();
        let bw = Bandwidth::new(h).unwrap();
        let fit = reg.fit_sqr(&y, q, bw, &exact.coefficients).unwrap();
        let at_fit = smoothed_objective(&x, &y, q, bw, &fit.coefficients);
        let at_exact = smoothed_objective(&x, &y, q, bw, &exact.coefficients);
        prop_assert!(at_fit <= at_exact + 1e-9 * (1.0 + at_exact.abs()));
        for (d0, d1) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            let probe = [fit.coefficients[0] + d0, fit.coefficients[1] + d1];
            prop_assert!(at_fit <= smoothed_objective(&x, &y, q, bw, &probe) + 1e-9 * (1.0 + at_fit.abs()));
        }
    }
}

#[test]
fn smoothed_objective_dominates_check_objective() {
    // The smoothed loss is the check loss convolved with a centred density,
    // so by Jensen it is never below the check loss.
    let pts: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.3, (i as f64 * 1.7).sin() * 5.0)).collect();
    let x = design(&pts);
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    for q in [0.1, 0.5, 0.9] {
        for h in [0.01, 0.5, 3.0] {
            let bw = Bandwidth::new(h).unwrap();
            for beta in [[0.0, 0.0], [1.0, -0.2], [-2.0, 0.5]] {
                assert!(smoothed_objective(&x, &y, q, bw, &beta) >= qr_objective(&x, &y, q, &beta) - 1e-12);
            }
        }
    }
}

#[test]
fn duplicated_regressor_does_not_change_objective() {
    let pts: Vec<(f64, f64)> = (0..30).map(|i| (i as f64, (i * i % 11) as f64)).collect();
    let narrow = design(&pts);
    let wide = Matrix::from_rows(&pts.iter().map(|&(a, _)| vec![1.0, a, a]).collect::<Vec<_>>());
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let a = QuantileRegressor::new(&narrow).unwrap().fit_qr(&y, 0.3, None).unwrap();
    let b = QuantileRegressor::new(&wide).unwrap().fit_qr(&y, 0.3, None).unwrap();
    assert_eq!(b.coefficients.len(), 3);
    assert!((a.objective - b.objective).abs() < 1e-9);
}

/// Out-of-sample coverage of the exact 5%..95% regression interval on
/// i.i.d. Gaussian rows with `p` columns, the first one an intercept.
fn holdout_coverage(p: usize, n: usize, trials: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut row = vec![1.0];
        row.extend((1..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = row[1..].iter().sum::<f64>() + rng.sample::<f64, _>(StandardNormal);
        (row, y)
    };
    let mut inside = 0;
    for _ in 0..trials {
        let sample: Vec<(Vec<f64>, f64)> = (0..n).map(|_| draw(&mut rng)).collect();
        let x = Matrix::from_rows(&sample.iter().map(|s| s.0.clone()).collect::<Vec<_>>());
        let y: Vec<f64> = sample.iter().map(|s| s.1).collect();
        let reg = QuantileRegressor::new(&x).unwrap();
        let lo = reg.fit_qr(&y, 0.05, None).unwrap().coefficients;
        let hi = reg.fit_qr(&y, 0.95, None).unwrap().coefficients;
        let (row, target) = draw(&mut rng);
        let at = |b: &[f64]| row.iter().zip(b).map(|(a, c)| a * c).sum::<f64>();
        if target >= at(&lo) && target <= at(&hi) {
            inside += 1;
        }
    }
    100.0 * inside as f64 / trials as f64
}

#[test]
fn six_regressors_on_182_rows_undercover_the_90_percent_interval() {
    let two = holdout_coverage(2, 182, 5000, 31);
    let six = holdout_coverage(6, 182, 5000, 31);
    assert!(six < 88.0, "coverage with six columns {six}");
    assert!(two - six > 1.0, "two columns {two}, six columns {six}");
}
