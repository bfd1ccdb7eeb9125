//! Sparse symmetric matrices and the linear solvers built on them.
//!
//! Storage is plain CSR. Factorizations go through `faer`'s sparse Cholesky;
//! the iterative fallback is Jacobi-preconditioned conjugate gradients.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::{Error, Result};

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed in input
    /// order, so the result does not depend on how callers were scheduled as long
    /// as the triplet order is fixed. Explicit zeros are kept in the pattern.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::invalid(format!(
                "triplet ({i}, {j}) outside a {n} x {n} matrix"
            )));
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(row, col, value)` over the stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `A 1`, i.e. row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|A_ij - A_ji|` over the stored pattern.
    pub fn max_asymmetry(&self) -> f64 {
        self.entries()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `a * self + b * other` for matrices sharing one sparsity pattern.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if !self.same_pattern(other) {
            return Err(Error::invalid("linear combination needs identical sparsity patterns"));
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            ..self.clone()
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| a * v).collect(),
            ..self.clone()
        }
    }

    /// Copy with row and column `p` replaced by the unit vector `e_p`.
    pub fn pinned(&self, p: usize) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in out.row_ptr[i]..out.row_ptr[i + 1] {
                let j = out.col_idx[k];
                if i == p || j == p {
                    out.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        out
    }

    fn to_faer_lower(&self) -> Result<SparseColMat<usize, f64>> {
        let lower: Vec<Triplet<usize, usize, f64>> = self
            .entries()
            .filter(|&(i, j, _)| i >= j)
            .map(|(i, j, v)| Triplet::new(i, j, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += a x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky").field("n", &self.n).finish()
    }
}

impl SparseCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let llt = a
            .to_faer_lower()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self { n: a.dim(), llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_many(&self, bs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        if bs.is_empty() {
            return Vec::new();
        }
        let mut rhs = Mat::<f64>::from_fn(self.n, bs.len(), |i, j| bs[j][i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..bs.len())
            .map(|j| (0..self.n).map(|i| rhs[(i, j)]).collect())
            .collect()
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`.
pub fn pcg(a: &SparseMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = norm2(b);
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm2(&r) / b_norm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: res,
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Singular(format!(
                "conjugate gradients met non-positive curvature {pap:e}"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm2(&r) / b_norm;
    }
    if res <= tol {
        return Ok(CgOutcome {
            x,
            iterations: max_iter,
            relative_residual: res,
        });
    }
    Err(Error::NonConvergence {
        solver: "conjugate gradients",
        iterations: max_iter,
        residual: res,
    })
}

/// Direct/iterative switch for SPD systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverPolicy {
    /// Systems with at least this many unknowns use conjugate gradients.
    pub direct_threshold: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverPolicy {
    fn default() -> Self {
        Self {
            direct_threshold: 1_500_000,
            cg_tol: 1e-12,
            cg_max_iter: 20_000,
        }
    }
}

/// A prepared SPD solver: either a factorization or a matrix kept for CG.
#[derive(Debug)]
pub enum LinearSolver {
    Direct(SparseCholesky),
    Iterative { matrix: SparseMatrix, policy: SolverPolicy },
}

impl LinearSolver {
    pub fn new(a: &SparseMatrix, policy: SolverPolicy) -> Result<Self> {
        if a.dim() < policy.direct_threshold {
            Ok(Self::Direct(SparseCholesky::factor(a)?))
        } else {
            Ok(Self::Iterative {
                matrix: a.clone(),
                policy,
            })
        }
    }

    /// Always factorizes.
    pub fn direct(a: &SparseMatrix) -> Result<Self> {
        Ok(Self::Direct(SparseCholesky::factor(a)?))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Direct(c) => Ok(c.solve(b)),
            Self::Iterative { matrix, policy } => {
                pcg(matrix, b, None, policy.cg_tol, policy.cg_max_iter).map(|o| o.x)
            }
        }
    }

    /// Like [`solve`](Self::solve) but warm-starts CG from `guess`.
    pub fn solve_from(&self, b: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Direct(c) => Ok(c.solve(b)),
            Self::Iterative { matrix, policy } => {
                pcg(matrix, b, Some(guess), policy.cg_tol, policy.cg_max_iter).map(|o| o.x)
            }
        }
    }

    pub fn solve_many(&self, bs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self {
            Self::Direct(c) => Ok(c.solve_many(bs)),
            Self::Iterative { .. } => bs.iter().map(|b| self.solve(b)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_1d(n: usize, shift: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, t).unwrap()
    }

    #[test]
    fn triplets_sum_and_keep_zeros() {
        let a = SparseMatrix::from_triplets(3, vec![(0, 0, 1.0), (2, 1, 0.0), (0, 0, 2.0), (1, 2, 5.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![3.0, 5.0, 0.0]);
        assert!(SparseMatrix::from_triplets(2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let a = laplacian_1d(50, 0.1);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let x1 = SparseCholesky::factor(&a).unwrap().solve(&b);
        let x2 = pcg(&a, &b, None, 1e-13, 1000).unwrap().x;
        for (u, v) in x1.iter().zip(&x2) {
            assert_relative_eq!(u, v, epsilon = 1e-10);
        }
        let r: Vec<f64> = a.matvec(&x1).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn indefinite_factorization_fails() {
        let a = laplacian_1d(10, -3.0);
        assert!(matches!(SparseCholesky::factor(&a), Err(Error::Factorization(_))));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = laplacian_1d(200, 0.0);
        let b = vec![1.0; 200];
        assert!(matches!(pcg(&a, &b, None, 1e-14, 3), Err(Error::NonConvergence { iterations: 3, .. })));
    }

    #[test]
    fn pinned_and_combination() {
        let a = laplacian_1d(4, 0.0);
        let p = a.pinned(1);
        assert_eq!(p.get(1, 1), 1.0);
        assert_eq!(p.get(0, 1), 0.0);
        assert_eq!(p.get(2, 1), 0.0);
        assert_eq!(p.get(2, 3), -1.0);
        let c = a.linear_combination(2.0, &a, -1.0).unwrap();
        assert_eq!(c, a);
        assert!(a.linear_combination(1.0, &SparseMatrix::identity(4), 1.0).is_err());
    }
}
