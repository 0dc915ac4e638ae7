//! Small dense linear algebra used by the regression code.
//!
//! Everything here works on row-major `f64` buffers. The problems are tiny
//! (at most a few hundred rows and fourteen columns) so the routines favour
//! clarity and reproducibility over blocking.

use nalgebra::DMatrix;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data.
    ///
    /// # Panics
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer has the wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    /// `X β` for a coefficient vector of length `cols`.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), beta)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solution together with the numerical rank of the design.
#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// Set when the design was rank deficient and a minimum-norm solution was returned.
    pub rank_deficient: bool,
}

/// Relative threshold on |R_kk| / |R_11| below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Solves `min ‖X β − y‖²` by Householder QR with column pivoting.
///
/// Full-rank designs are solved by back substitution on the triangular
/// factor. Rank-deficient designs fall back to the SVD minimum-norm solution.
pub fn lstsq(x: &Matrix, y: &[f64]) -> LstsqSolution {
    let (m, n) = (x.rows, x.cols);
    assert_eq!(m, y.len(), "design/target length mismatch");
    if n == 0 {
        return LstsqSolution {
            coefficients: Vec::new(),
            rank: 0,
            rank_deficient: false,
        };
    }

    // Column-major working copy: a[j] is column j.
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| x.get(i, j)).collect()).collect();
    let mut rhs = y.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let steps = m.min(n);
    let mut rank = steps;
    let mut r11 = 0.0;

    for k in 0..steps {
        // Pivot on the remaining column with the largest residual norm.
        let (piv, _) = norms[k..]
            .iter()
            .enumerate()
            .fold((k, f64::NEG_INFINITY), |(bi, bv), (off, &v)| {
                if v > bv {
                    (k + off, v)
                } else {
                    (bi, bv)
                }
            });
        a.swap(k, piv);
        norms.swap(k, piv);
        perm.swap(k, piv);

        let col = &a[k];
        let alpha: f64 = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if k == 0 {
            r11 = alpha;
        }
        if alpha <= RANK_TOL * r11.max(f64::MIN_POSITIVE) {
            rank = k;
            break;
        }

        let sign = if col[k] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = col[k..].to_vec();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();

        // Apply H = I − 2 v vᵀ / (vᵀv) to the trailing columns and the right-hand side.
        for col in a.iter_mut().skip(k) {
            let s: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum::<f64>() * 2.0 / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        let s: f64 = v.iter().zip(&rhs[k..]).map(|(p, q)| p * q).sum::<f64>() * 2.0 / vnorm2;
        for (c, vi) in rhs[k..].iter_mut().zip(&v) {
            *c -= s * vi;
        }
        for (norm, col) in norms.iter_mut().zip(a.iter()).skip(k + 1) {
            *norm = col[k + 1..].iter().map(|t| t * t).sum();
        }
    }

    if rank < n {
        return LstsqSolution {
            coefficients: min_norm_lstsq(x, y),
            rank,
            rank_deficient: true,
        };
    }

    let mut z = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for j in k + 1..n {
            s -= a[j][k] * z[j];
        }
        z[k] = s / a[k][k];
    }
    let mut coefficients = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        coefficients[p] = z[k];
    }
    LstsqSolution {
        coefficients,
        rank,
        rank_deficient: false,
    }
}

fn min_norm_lstsq(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let a = DMatrix::from_row_slice(x.rows, x.cols, &x.data);
    let b = DMatrix::from_column_slice(y.len(), 1, y);
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = RANK_TOL * max_sv.max(f64::MIN_POSITIVE);
    let sol = svd
        .solve(&b, eps)
        .expect("SVD was computed with both U and V");
    sol.column(0).iter().copied().collect()
}

/// LU factorisation with partial pivoting of a small square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorises the row-major `n × n` matrix `a`. Returns `None` when a
    /// pivot falls below `tol` times the largest absolute entry.
    pub fn new(a: &[f64], n: usize, tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return None;
        }
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best <= tol * scale {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / d;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, then Lᵀ v = w, then x = Pᵀ v.
        let mut w = b.to_vec();
        for i in 0..n {
            for j in 0..i {
                w[i] -= self.lu[j * n + i] * w[j];
            }
            w[i] /= self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                w[i] -= self.lu[j * n + i] * w[j];
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }
}

/// Solves the symmetric positive definite system `A x = b` by Cholesky.
/// Returns `None` if `A` is not numerically positive definite.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

/// Indices of a maximal set of linearly independent columns, chosen greedily
/// left to right by modified Gram–Schmidt.
pub fn independent_columns(x: &Matrix, tol: f64) -> Vec<usize> {
    let m = x.rows;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..x.cols {
        let mut v: Vec<f64> = (0..m).map(|i| x.get(i, j)).collect();
        let norm0 = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for q in &basis {
            let s = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= s * qi;
            }
        }
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > tol * norm0 {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
            keep.push(j);
        }
    }
    keep
}
