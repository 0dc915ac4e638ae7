use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use epf_core::linalg::Matrix;
use epf_core::{Bandwidth, QuantileRegressor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(n: usize, p: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
            r
        })
        .collect();
    let y = rows
        .iter()
        .map(|r| r.iter().sum::<f64>() + rng.random_range(-1.0..1.0) * 3.0)
        .collect();
    (Matrix::from_rows(&rows), y)
}

fn bench_solvers(c: &mut Criterion) {
    for p in [2, 6] {
        let (x, y) = problem(182, p, 7);
        let reg = QuantileRegressor::new(&x).unwrap();
        c.bench_function(&format!("qr_fit n=182 p={p} q=0.9"), |b| {
            b.iter(|| reg.fit_qr(black_box(&y), 0.9, None).unwrap())
        });
        let exact = reg.fit_qr(&y, 0.9, None).unwrap();
        c.bench_function(&format!("qr_fit warm n=182 p={p} q=0.91"), |b| {
            b.iter(|| reg.fit_qr(black_box(&y), 0.91, Some(&exact.basis)).unwrap())
        });
        let h = Bandwidth::new(0.5).unwrap();
        c.bench_function(&format!("sqr_fit n=182 p={p} q=0.9"), |b| {
            b.iter(|| reg.fit_sqr(black_box(&y), 0.9, h, &exact.coefficients).unwrap())
        });
    }
}

criterion_group!(benches, bench_solvers);
criterion_main!(benches);
