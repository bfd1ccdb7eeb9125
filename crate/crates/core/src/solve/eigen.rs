use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{dot, norm2, SparseCholesky, SparseMatrix};
use crate::{Error, Result};

/// Settings for [`eigen_smallest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Target for `|K phi - mu M phi| / |M phi|`.
    pub tol: f64,
    pub max_iter: usize,
    /// `sigma > 0` in the inverted operator `(K + sigma M)^{-1} M`.
    pub shift: f64,
    pub seed: u64,
    /// Subspace size; `None` means `2k + 4`.
    pub block: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            shift: 1e-2,
            seed: 0x5eed,
            block: None,
        }
    }
}

/// Smallest nonzero generalized eigenpairs, ascending.
#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// `M`-orthonormal and `M`-orthogonal to the constants.
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

struct Deflation {
    m1: Vec<f64>,
    total: f64,
}

impl Deflation {
    fn new(m: &SparseMatrix) -> Self {
        let m1 = m.row_sums();
        let total = m1.iter().sum();
        Self { m1, total }
    }

    /// `v <- v - (1^T M v / 1^T M 1) 1`.
    fn apply(&self, v: &mut [f64]) {
        let c = dot(&self.m1, v) / self.total;
        v.iter_mut().for_each(|x| *x -= c);
    }
}

/// Modified Gram-Schmidt in the `M` inner product, two passes.
/// Vectors that collapse are replaced by `fresh()` and re-orthogonalized.
fn m_orthonormalize(
    m: &SparseMatrix,
    vs: &mut [Vec<f64>],
    defl: &Deflation,
    mut fresh: impl FnMut() -> Vec<f64>,
) {
    let mut mv: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for i in 0..vs.len() {
        for _attempt in 0..3 {
            let before = m.quad_form(&vs[i]).max(0.0).sqrt();
            for _pass in 0..2 {
                for j in 0..i {
                    let c = dot(&mv[j], &vs[i]);
                    let (done, cur) = vs.split_at_mut(i);
                    for (x, y) in cur[0].iter_mut().zip(&done[j]) {
                        *x -= c * y;
                    }
                }
            }
            let nrm = m.quad_form(&vs[i]).max(0.0).sqrt();
            if nrm > 1e-10 * before && nrm > 0.0 {
                vs[i].iter_mut().for_each(|x| *x /= nrm);
                break;
            }
            vs[i] = fresh();
            defl.apply(&mut vs[i]);
        }
        mv.push(m.matvec(&vs[i]));
    }
}

/// `k` smallest nonzero eigenvalues of `K phi = mu M phi`.
///
/// Block subspace iteration on `(K + sigma M)^{-1} M` with a Rayleigh-Ritz
/// projection each sweep; the constant kernel is removed `M`-orthogonally
/// after every application of the operator.
pub fn eigen_smallest(k: &SparseMatrix, m: &SparseMatrix, count: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let n = k.dim();
    if m.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.dim() });
    }
    if count == 0 {
        return Err(Error::invalid("eigenvalue count must be at least 1"));
    }
    if count + 1 >= n {
        return Err(Error::invalid(format!("cannot extract {count} nonzero eigenvalues from a {n}-dimensional problem")));
    }
    if !(opts.shift > 0.0) {
        return Err(Error::invalid("eigen shift must be positive"));
    }
    let p = opts.block.unwrap_or(2 * count + 4).max(count).min(n - 1);
    let shifted = k.linear_combination(1.0, m, opts.shift)?;
    let chol = SparseCholesky::factor(&shifted)?;
    let defl = Deflation::new(m);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random = move || -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };

    let mut v: Vec<Vec<f64>> = (0..p).map(|_| random()).collect();
    v.iter_mut().for_each(|x| defl.apply(x));
    m_orthonormalize(m, &mut v, &defl, &mut random);

    let mut best = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let rhs: Vec<Vec<f64>> = v.iter().map(|x| m.matvec(x)).collect();
        let mut w = chol.solve_many(&rhs);
        w.iter_mut().for_each(|x| defl.apply(x));
        m_orthonormalize(m, &mut w, &defl, &mut random);

        let kw: Vec<Vec<f64>> = w.iter().map(|x| k.matvec(x)).collect();
        let h = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&w[i], &kw[j]) + dot(&w[j], &kw[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        v = order
            .iter()
            .map(|&c| {
                let mut x = vec![0.0; n];
                for (i, wi) in w.iter().enumerate() {
                    let q = eig.eigenvectors[(i, c)];
                    for (xj, wj) in x.iter_mut().zip(wi) {
                        *xj += q * wj;
                    }
                }
                x
            })
            .collect();
        let values: Vec<f64> = order.iter().take(count).map(|&c| eig.eigenvalues[c]).collect();
        let residuals: Vec<f64> = (0..count)
            .map(|i| {
                let kv = k.matvec(&v[i]);
                let mv = m.matvec(&v[i]);
                let r: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - values[i] * b).collect();
                norm2(&r) / norm2(&mv)
            })
            .collect();
        let worst = residuals.iter().fold(0.0f64, |a, &b| a.max(b));
        best = best.min(worst);
        if worst <= opts.tol {
            let vectors: Vec<Vec<f64>> = v.into_iter().take(count).collect();
            return Ok(EigenResult {
                values,
                vectors,
                residuals,
                iterations: iter,
            });
        }
    }
    Err(Error::NonConvergence {
        solver: "shift-invert subspace iteration",
        iterations: opts.max_iter,
        residual: best,
    })
}

/// `v^T K v / v^T M v`.
pub fn rayleigh_quotient(k: &SparseMatrix, m: &SparseMatrix, v: &[f64]) -> Result<f64> {
    let den = m.quad_form(v);
    if !(den > 0.0) {
        return Err(Error::invalid("Rayleigh quotient of a vector with zero M-norm"));
    }
    Ok(k.quad_form(v) / den)
}
