use serde::Serialize;

use crate::linalg::{dot, norm2, SparseCholesky, SparseMatrix};
use crate::{Error, Result};

/// Equilibrium of the Neumann problem under a linear mean constraint.
#[derive(Debug, Clone, Serialize)]
pub struct SteadySolution {
    pub u_eq: Vec<f64>,
    /// Lagrange multiplier `lambda` of the bordered system; absorbs any incompatible part of `b`.
    pub multiplier: f64,
    /// `|w^T u| / (|w|_1 max|u|)`.
    pub constraint_residual: f64,
    /// `|K u + lambda w - b| / |b|` (absolute when `b = 0`).
    pub solve_residual: f64,
}

/// Solves the bordered system `[K w; w^T 0] [u; lambda] = [b; 0]`.
///
/// `K` must be symmetric positive semidefinite with the constants as its
/// exact kernel. Testing the first block row with `1` gives
/// `lambda = 1^T b / 1^T w`; the remaining singular but consistent system is
/// solved by pinning one node and the constraint is restored by a constant shift.
pub fn solve_steady(k: &SparseMatrix, b: &[f64], w: &[f64]) -> Result<SteadySolution> {
    let n = k.dim();
    if b.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if b.len() != n { b.len() } else { w.len() },
        });
    }
    let w_total: f64 = w.iter().sum();
    let w_abs: f64 = w.iter().map(|v| v.abs()).sum();
    if !(w_total.abs() > 1e-14 * w_abs) {
        return Err(Error::Singular(
            "constraint weight is orthogonal to the constants; the bordered system is singular".into(),
        ));
    }
    let lambda = b.iter().sum::<f64>() / w_total;
    let mut rhs: Vec<f64> = b.iter().zip(w).map(|(bi, wi)| bi - lambda * wi).collect();
    // Pin the node with the largest diagonal entry.
    let diag = k.diagonal();
    let p = (0..n).fold(0, |best, i| if diag[i] > diag[best] { i } else { best });
    rhs[p] = 0.0;
    let chol = SparseCholesky::factor(&k.pinned(p))
        .map_err(|e| Error::Singular(format!("pinned stiffness matrix is not definite ({e}); is the domain connected?")))?;
    let mut u = chol.solve(&rhs);
    let shift = dot(w, &u) / w_total;
    u.iter_mut().for_each(|v| *v -= shift);

    let mut r = k.matvec(&u);
    for i in 0..n {
        r[i] += lambda * w[i] - b[i];
    }
    let b_norm = norm2(b);
    let solve_residual = if b_norm > 0.0 { norm2(&r) / b_norm } else { norm2(&r) };
    let u_max = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let constraint_residual = if u_max > 0.0 { dot(w, &u).abs() / (w_abs * u_max) } else { 0.0 };
    if !solve_residual.is_finite() || solve_residual > 1e-8 {
        return Err(Error::NonConvergence {
            solver: "bordered steady solve",
            iterations: 1,
            residual: solve_residual,
        });
    }
    Ok(SteadySolution {
        u_eq: u,
        multiplier: lambda,
        constraint_residual,
        solve_residual,
    })
}

/// `(1^T M u) / (1^T M 1)` for a mass matrix assembled with the target density.
pub fn weighted_mean(m_rho: &SparseMatrix, u: &[f64]) -> f64 {
    let row = m_rho.row_sums();
    dot(&row, u) / row.iter().sum::<f64>()
}
