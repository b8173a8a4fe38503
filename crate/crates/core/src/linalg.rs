//! Small dense and sparse kernels.
//!
//! Everything here is deterministic: reductions run in a fixed order so that
//! identical inputs give bit-identical outputs.

use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular: zero pivot in column {pivot}")]
    Singular { pivot: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ x`
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut y);
        }
        y
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                axpy(a, other.row(k), dst);
            }
        }
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::from_rows(self.rows, self.cols, data)
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial (row) pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if a.rows != a.cols {
            return Err(LinalgError::NotSquare {
                rows: a.rows,
                cols: a.cols,
            });
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);

        for k in 0..n {
            let (piv, piv_val) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_val <= scale * 1e-14 {
                return Err(LinalgError::Singular { pivot: k });
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let diag = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / diag;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            x[i] -= dot(row, &x[..i]);
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s = x[i] - dot(row, &x[i + 1..]);
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if b.rows != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                found: b.rows,
            });
        }
        let bt = b.transpose();
        let mut out = DenseMatrix::zeros(b.cols, self.n);
        for j in 0..b.cols {
            let x = self.solve(bt.row(j))?;
            out.data[j * self.n..(j + 1) * self.n].copy_from_slice(&x);
        }
        Ok(out.transpose())
    }

    /// `(L, U, P)` as dense matrices, with `P A = L U`.
    pub fn factors(&self) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
        let n = self.n;
        let mut l = DenseMatrix::identity(n);
        let mut u = DenseMatrix::zeros(n, n);
        let mut p = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if j < i {
                    l[(i, j)] = self.lu[i * n + j];
                } else {
                    u[(i, j)] = self.lu[i * n + j];
                }
            }
            p[(i, self.perm[i])] = 1.0;
        }
        (l, u, p)
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
///
/// Householder tridiagonalization followed by implicit QL with Wilkinson
/// shifts. Only the lower triangle of `a` is read.
pub fn sym_eig(a: &DenseMatrix) -> Result<Vec<f64>, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let (mut d, mut e) = tridiagonalize(a);
    tridiagonal_ql(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalue is NaN"));
    Ok(d)
}

/// Householder reduction to tridiagonal form. Returns (diagonal, subdiagonal)
/// with `e[i]` coupling rows `i - 1` and `i`; `e[0] = 0`.
fn tridiagonalize(a: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows;
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            z[i * n + j] = a[(i, j)];
            z[j * n + i] = a[(i, j)];
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| z[i * n + k].abs()).sum();
            if scale == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * z[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = z[i * n + i];
    }
    (d, e)
}

fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    const MAX_SWEEPS: usize = 60;
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return Err(LinalgError::NoConvergence { iterations: iter });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    /// The triplet order does not affect the result beyond floating-point
    /// summation order, which follows a stable sort of the input.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.rows(), a.cols(), t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    fn check_len(expected: usize, found: usize) -> Result<(), LinalgError> {
        if expected == found {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch { expected, found })
        }
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut y = vec![0.0; self.rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        Self::check_len(self.cols, x.len())?;
        Self::check_len(self.rows, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
        Ok(())
    }

    /// `Aᵀ x` without forming the transpose.
    pub fn transpose_apply(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        Self::check_len(self.rows, x.len())?;
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.cols, self.rows, t)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64, LinalgError> {
        Ok(dot(x, &self.spmv(y)?))
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}
