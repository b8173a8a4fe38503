//! Point smoothers, the recursive V-cycle, and the stationary outer
//! iteration with nested initial guesses.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::linalg::{dot, norm2, sym_eig, CsrMatrix, DenseMatrix, LinalgError, LuFactorization};
use crate::transfer::TransferOperator;

pub const MAX_ITERATIONS: usize = 200;

/// Above this size, extreme eigenvalues come from Lanczos instead of a dense
/// eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 5000;

#[derive(Debug, Error)]
pub enum MgError {
    #[error("zero diagonal entry in row {row} on level {level}")]
    ZeroDiagonal { level: usize, row: usize },
    #[error("level {level}: transfer maps {found} coarse unknowns, expected {expected}")]
    ShapeMismatch {
        level: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid smoother configuration: {0}")]
    InvalidSmoother(String),
    #[error("level {0} is not part of the hierarchy")]
    NoSuchLevel(usize),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    GaussSeidel,
    /// Every step is a forward sweep followed by a backward sweep, so the
    /// smoother is its own adjoint.
    SymmetricGaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    /// Smoothing steps per half-cycle.
    pub steps: usize,
    /// Relaxation factor, Jacobi only.
    pub damping: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            kind: SmootherKind::GaussSeidel,
            steps: 1,
            damping: 0.8,
        }
    }
}

impl SmootherConfig {
    pub fn gauss_seidel(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn symmetric_gauss_seidel(steps: usize) -> Self {
        Self {
            kind: SmootherKind::SymmetricGaussSeidel,
            steps,
            ..Self::default()
        }
    }

    pub fn jacobi(steps: usize, damping: f64) -> Self {
        Self {
            kind: SmootherKind::Jacobi,
            steps,
            damping,
        }
    }

    pub fn validate(&self) -> Result<(), MgError> {
        if self.steps == 0 {
            return Err(MgError::InvalidSmoother("at least one smoothing step is required".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(MgError::InvalidSmoother(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual before the first and after every iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
struct MgLevel {
    matrix: CsrMatrix,
    diag: Vec<f64>,
}

/// Operators of every level plus the coarse factorization.
#[derive(Debug, Clone)]
pub struct MgHierarchy {
    levels: Vec<MgLevel>,
    // transfers[l - 1] maps level l - 1 to level l
    transfers: Vec<TransferOperator>,
    coarse: LuFactorization,
    smoother: SmootherConfig,
}

impl MgHierarchy {
    pub fn new(
        matrices: Vec<CsrMatrix>,
        transfers: Vec<TransferOperator>,
        smoother: SmootherConfig,
    ) -> Result<Self, MgError> {
        smoother.validate()?;
        assert!(!matrices.is_empty(), "hierarchy needs at least one level");
        assert_eq!(transfers.len() + 1, matrices.len(), "one transfer per fine level");
        for (l, t) in transfers.iter().enumerate() {
            let (fine, coarse) = (&matrices[l + 1], &matrices[l]);
            if t.n_coarse() != coarse.rows() {
                return Err(MgError::ShapeMismatch {
                    level: l + 1,
                    expected: coarse.rows(),
                    found: t.n_coarse(),
                });
            }
            if t.n_fine() != fine.rows() {
                return Err(MgError::ShapeMismatch {
                    level: l + 1,
                    expected: fine.rows(),
                    found: t.n_fine(),
                });
            }
        }
        let coarse = LuFactorization::new(&matrices[0].to_dense())?;
        let levels = matrices
            .into_iter()
            .enumerate()
            .map(|(l, matrix)| {
                let diag = matrix.diagonal();
                if let Some(row) = diag.iter().position(|&d| d == 0.0) {
                    return Err(MgError::ZeroDiagonal { level: l, row });
                }
                Ok(MgLevel { matrix, diag })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            levels,
            transfers,
            coarse,
            smoother,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn smoother(&self) -> SmootherConfig {
        self.smoother
    }

    pub fn matrix(&self, l: usize) -> &CsrMatrix {
        &self.levels[l].matrix
    }

    pub fn transfer(&self, fine_level: usize) -> &TransferOperator {
        &self.transfers[fine_level - 1]
    }

    fn check_level(&self, l: usize) -> Result<(), MgError> {
        if l < self.levels.len() {
            Ok(())
        } else {
            Err(MgError::NoSuchLevel(l))
        }
    }

    /// One relaxation step `x ← x + R^i (rhs - A x)`. Gauss-Seidel sweeps in
    /// ascending order for odd `i` and descending order (the Euclidean
    /// adjoint) for even `i`. The symmetric variant and damped Jacobi are
    /// self-adjoint, so the parity does not matter for them.
    pub fn smooth(&self, l: usize, x: &mut [f64], rhs: &[f64], step: usize) {
        let level = &self.levels[l];
        let a = &level.matrix;
        let mut relax = |i: usize| {
            let (cols, vals) = a.row(i);
            let mut s = rhs[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    s -= v * x[j];
                }
            }
            x[i] = s / level.diag[i];
        };
        match self.smoother.kind {
            SmootherKind::GaussSeidel if step % 2 == 1 => (0..a.rows()).for_each(&mut relax),
            SmootherKind::GaussSeidel => (0..a.rows()).rev().for_each(&mut relax),
            SmootherKind::SymmetricGaussSeidel => {
                (0..a.rows()).for_each(&mut relax);
                (0..a.rows()).rev().for_each(&mut relax);
            }
            SmootherKind::Jacobi => {
                let ax = a.spmv(x).expect("sized");
                for i in 0..x.len() {
                    x[i] += self.smoother.damping * (rhs[i] - ax[i]) / level.diag[i];
                }
            }
        }
    }

    /// `B_ℓ μ`: `m` pre-smoothing steps with parities `1..=m`, coarse
    /// correction with the restricted residual, `m` post-smoothing steps
    /// with parities `m+1..=2m`. `B_0 = A_0⁻¹`.
    pub fn v_cycle(&self, l: usize, rhs: &[f64]) -> Vec<f64> {
        if l == 0 {
            return self.coarse.solve(rhs).expect("coarse rhs is sized");
        }
        let m = self.smoother.steps;
        let a = &self.levels[l].matrix;
        let mut x = vec![0.0; rhs.len()];
        for i in 1..=m {
            self.smooth(l, &mut x, rhs, i);
        }
        let residual = residual(a, rhs, &x);
        let transfer = &self.transfers[l - 1];
        let coarse_rhs = transfer.restrict(&residual).expect("sized");
        let correction = self.v_cycle(l - 1, &coarse_rhs);
        let fine_correction = transfer.inject(&correction).expect("sized");
        for (xi, ci) in x.iter_mut().zip(&fine_correction) {
            *xi += ci;
        }
        for i in 1..=m {
            self.smooth(l, &mut x, rhs, i + m);
        }
        x
    }

    /// Stationary iteration `x ← x + B_ℓ (b - A_ℓ x)` until
    /// `‖b - A x‖₂ / ‖b‖₂ < tol`, or at most [`MAX_ITERATIONS`] steps.
    /// For `b = 0` the absolute residual is used.
    pub fn solve(&self, l: usize, b: &[f64], x0: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport), MgError> {
        self.check_level(l)?;
        if !(tol > 0.0) {
            return Err(MgError::InvalidTolerance(tol));
        }
        let n = self.levels[l].matrix.rows();
        for len in [b.len(), x0.len()] {
            if len != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: len,
                }
                .into());
            }
        }
        let start = Instant::now();
        let a = &self.levels[l].matrix;
        let bnorm = norm2(b);
        let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
        let mut x = x0.to_vec();
        let mut r = residual(a, b, &x);
        let mut history = vec![norm2(&r) / scale];
        let mut iterations = 0;
        let mut converged = history[0] < tol || norm2(&r) == 0.0;
        while !converged && iterations < MAX_ITERATIONS {
            let correction = self.v_cycle(l, &r);
            for (xi, ci) in x.iter_mut().zip(&correction) {
                *xi += ci;
            }
            iterations += 1;
            r = residual(a, b, &x);
            let rel = norm2(&r) / scale;
            history.push(rel);
            log::debug!("level {l} iteration {iterations}: relative residual {rel:e}");
            converged = rel < tol;
        }
        Ok((
            x,
            SolveReport {
                iterations,
                residual_history: history,
                converged,
                wall_time: start.elapsed(),
            },
        ))
    }

    /// Direct solve on level 0, then for each finer level the injected
    /// previous solution as initial guess. `rhs[l]` is the load of level `l`.
    pub fn nested_solve(&self, rhs: &[Vec<f64>], tol: f64) -> Result<Vec<(Vec<f64>, SolveReport)>, MgError> {
        assert_eq!(rhs.len(), self.levels.len(), "one load vector per level");
        let start = Instant::now();
        let x0 = self.coarse.solve(&rhs[0])?;
        let r0 = residual(&self.levels[0].matrix, &rhs[0], &x0);
        let b0 = norm2(&rhs[0]);
        let rel0 = if b0 > 0.0 { norm2(&r0) / b0 } else { norm2(&r0) };
        let mut out = vec![(
            x0,
            SolveReport {
                iterations: 0,
                residual_history: vec![rel0],
                converged: true,
                wall_time: start.elapsed(),
            },
        )];
        for l in 1..self.levels.len() {
            let guess = self.transfers[l - 1].inject(&out[l - 1].0)?;
            out.push(self.solve(l, &rhs[l], &guess, tol)?);
        }
        Ok(out)
    }
}

pub fn residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.spmv(x).expect("sized");
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix: dense for
/// small sizes, Lanczos with full reorthogonalization otherwise.
pub fn estimate_extreme_eigenvalues(a: &CsrMatrix) -> Result<(f64, f64), LinalgError> {
    let n = a.rows();
    if n <= DENSE_EIGEN_LIMIT {
        let eig = sym_eig(&a.to_dense())?;
        return Ok((eig[0], eig[n - 1]));
    }
    lanczos_extremes(a, 1e-6)
}

fn lanczos_extremes(a: &CsrMatrix, rel_tol: f64) -> Result<(f64, f64), LinalgError> {
    const MAX_STEPS: usize = 600;
    let n = a.rows();
    // deterministic start vector with components in every eigendirection
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 104729) as f64 / 104729.0).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = (f64::NAN, f64::NAN);
    for k in 0..MAX_STEPS.min(n) {
        let mut w = a.spmv(&basis[k])?;
        let ak = dot(&w, &basis[k]);
        alpha.push(ak);
        for q in &basis {
            let c = dot(&w, q);
            w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
        }
        let bk = norm2(&w);
        let m = alpha.len();
        let mut t = DenseMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = sym_eig(&t)?;
        let est = (eig[0], eig[m - 1]);
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * b.abs();
        if k >= 10 && close(est.0, last.0) && close(est.1, last.1) {
            return Ok(est);
        }
        // invariant subspace found, or the Krylov space is all of R^n
        if bk <= 1e-14 * est.1.abs() || m == n {
            return Ok(est);
        }
        last = est;
        beta.push(bk);
        basis.push(w.into_iter().map(|x| x / bk).collect());
    }
    Err(LinalgError::NoConvergence { iterations: MAX_STEPS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    fn single_level(a: CsrMatrix, smoother: SmootherConfig) -> MgHierarchy {
        MgHierarchy::new(vec![a], Vec::new(), smoother).unwrap()
    }

    #[test]
    fn smoother_fixed_point() {
        let a = laplacian_1d(10);
        let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let b = a.spmv(&x).unwrap();
        for smoother in [SmootherConfig::gauss_seidel(1), SmootherConfig::jacobi(1, 0.8)] {
            let h = single_level(a.clone(), smoother);
            for step in 1..=2 {
                let mut y = x.clone();
                h.smooth(0, &mut y, &b, step);
                assert!(max_abs_diff(&x, &y) < 1e-14);
            }
        }
    }

    #[test]
    fn one_by_one_gauss_seidel_is_exact() {
        let a = CsrMatrix::from_triplets(1, 1, vec![(0, 0, 4.0)]);
        let h = single_level(a, SmootherConfig::gauss_seidel(1));
        let mut x = vec![123.0];
        h.smooth(0, &mut x, &[2.0], 1);
        assert_eq!(x, vec![0.5]);
    }

    #[test]
    fn symmetric_gauss_seidel_pair_does_not_increase_energy_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        // random SPD: L + diagonal shift
        let mut t = Vec::new();
        for i in 0..n {
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v = rng.gen_range(-1.0..0.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                    t.push((i, i, -v + 0.1));
                    t.push((j, j, -v + 0.1));
                }
            }
            t.push((i, i, 0.5));
        }
        let a = CsrMatrix::from_triplets(n, n, t);
        let h = single_level(a.clone(), SmootherConfig::gauss_seidel(1));
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = LuFactorization::new(&a.to_dense()).unwrap().solve(&b).unwrap();
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let energy = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
            a.bilinear(&e, &e).unwrap()
        };
        for _ in 0..5 {
            let before = energy(&x);
            h.smooth(0, &mut x, &b, 1);
            h.smooth(0, &mut x, &b, 2);
            assert!(energy(&x) <= before);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SmootherConfig::gauss_seidel(0).validate().is_err());
        assert!(SmootherConfig::jacobi(1, 1.5).validate().is_err());
        assert!(SmootherConfig::jacobi(2, 1.0).validate().is_ok());
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let h = single_level(laplacian_1d(5), SmootherConfig::gauss_seidel(1));
        let (x, report) = h.solve(0, &[0.0; 5], &[0.0; 5], 1e-6).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
        assert_eq!(x, vec![0.0; 5]);
        assert!(matches!(h.solve(0, &[0.0; 4], &[0.0; 5], 1e-6), Err(MgError::Linalg(_))));
        assert!(matches!(h.solve(3, &[0.0; 5], &[0.0; 5], 1e-6), Err(MgError::NoSuchLevel(3))));
    }

    #[test]
    fn zero_diagonal_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let err = MgHierarchy::new(vec![a], Vec::new(), SmootherConfig::default()).unwrap_err();
        assert!(matches!(err, MgError::ZeroDiagonal { level: 0, row: 1 }));
    }

    #[test]
    fn eigen_estimates() {
        let a = CsrMatrix::from_triplets(1, 1, vec![(0, 0, 3.5)]);
        assert_eq!(estimate_extreme_eigenvalues(&a).unwrap(), (3.5, 3.5));
        let n = 400;
        let a = laplacian_1d(n);
        let (lo, hi) = lanczos_extremes(&a, 1e-10).unwrap();
        let exact = |k: f64| 2.0 - 2.0 * (k * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((lo - exact(1.0)).abs() < 1e-6 * exact(1.0), "{lo}");
        assert!((hi - exact(n as f64)).abs() < 1e-6 * exact(n as f64), "{hi}");
    }
}
