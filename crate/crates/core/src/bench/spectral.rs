use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{loglog_slope, GridConfig, MaterialConfig};
use crate::grid::{assemble_system, build_grid, GeometrySpec, GridBudget};
use crate::output::{write_csv, write_json};
use crate::solve::{eigen_smallest, EigenOptions};
use crate::xform::{CloakParams, CoefficientField};
use crate::Result;

/// Cells per axis allowed for `d = 3` eigen runs.
const MAX_CELLS_3D: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct EigenRow {
    pub eps: f64,
    pub n_dofs: usize,
    /// `(pi/6)^2`, the first nonzero Neumann eigenvalue of the box in every dimension.
    pub mu2_analytic: f64,
    /// `(pi/6)^d` as printed in the reference table (differs for `d != 2`).
    pub mu2_table: f64,
    /// Homogeneous discrete eigenvalue on the defect's grid.
    pub mu2_discrete: f64,
    pub mu2_eps: f64,
    /// `|mu2_discrete - mu2_eps|`: same grid, so the mesh error largely cancels.
    pub difference: f64,
    pub difference_vs_analytic: f64,
    pub residual: f64,
    /// Set when this row failed; the sweep continues.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenTable {
    pub dim: usize,
    pub rows: Vec<EigenRow>,
    /// Log-log slope of `difference` against eps over the successful rows.
    pub slope: Option<f64>,
    /// `difference` strictly decreases along decreasing eps.
    pub monotone: bool,
}

fn row<const D: usize>(eps: f64, material: &MaterialConfig, grid: &GridConfig, opts: &EigenOptions) -> Result<EigenRow> {
    let m = material.build::<D>()?;
    let p = CloakParams::new(eps, D)?;
    let mut budget: GridBudget = grid.budget();
    if D == 3 {
        budget.max_cells_per_axis = budget.max_cells_per_axis.min(MAX_CELLS_3D);
    }
    let spec = GeometrySpec::<D> {
        half_width: grid.half_width,
        ..GeometrySpec::ball(eps)
    };
    let g = build_grid(&spec, &budget)?;
    let asm = grid.assembly();
    let (k0, m0) = assemble_system(&g, &CoefficientField::<D>::homogeneous(), &asm)?;
    let (ke, me) = assemble_system(&g, &CoefficientField::<D>::defect(&p, &m)?, &asm)?;
    let hom = eigen_smallest(&k0, &m0, 1, opts)?;
    let def = eigen_smallest(&ke, &me, 1, opts)?;
    let analytic = (PI / 6.0).powi(2);
    Ok(EigenRow {
        eps,
        n_dofs: g.n_dofs(),
        mu2_analytic: analytic,
        mu2_table: (PI / 6.0).powi(D as i32),
        mu2_discrete: hom.values[0],
        mu2_eps: def.values[0],
        difference: (hom.values[0] - def.values[0]).abs(),
        difference_vs_analytic: (analytic - def.values[0]).abs(),
        residual: hom.residuals[0].max(def.residuals[0]),
        error: None,
    })
}

/// Defect versus homogeneous first nonzero eigenvalue across an eps sweep.
pub fn run_eigen_table(
    dim: usize,
    eps_list: &[f64],
    material: &MaterialConfig,
    grid: &GridConfig,
    opts: &EigenOptions,
) -> Result<EigenTable> {
    if !(1..=3).contains(&dim) {
        return Err(crate::Error::Config(format!("dim must be 1, 2 or 3, got {dim}")));
    }
    let mut rows: Vec<EigenRow> = eps_list
        .par_iter()
        .map(|&eps| {
            let r = match dim {
                1 => row::<1>(eps, material, grid, opts),
                2 => row::<2>(eps, material, grid, opts),
                _ => row::<3>(eps, material, grid, opts),
            };
            r.unwrap_or_else(|e| {
                log::warn!("eigen row eps = {eps:e} failed: {e}");
                EigenRow {
                    eps,
                    n_dofs: 0,
                    mu2_analytic: (PI / 6.0).powi(2),
                    mu2_table: (PI / 6.0).powi(dim as i32),
                    mu2_discrete: f64::NAN,
                    mu2_eps: f64::NAN,
                    difference: f64::NAN,
                    difference_vs_analytic: f64::NAN,
                    residual: f64::NAN,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect();
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let ok: Vec<&EigenRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let slope = loglog_slope(
        &ok.iter().map(|r| r.eps).collect::<Vec<_>>(),
        &ok.iter().map(|r| r.difference).collect::<Vec<_>>(),
    );
    let monotone = ok.len() == rows.len() && ok.windows(2).all(|w| w[1].difference < w[0].difference);
    Ok(EigenTable { dim, rows, slope, monotone })
}

pub fn write_eigen_outputs(dir: &Path, table: &EigenTable) -> Result<()> {
    write_csv(
        &dir.join(format!("eigen_table_d{}.csv", table.dim)),
        &[
            "eps",
            "mu2_analytic",
            "mu2_table",
            "mu2_discrete",
            "mu2_eps",
            "difference",
            "difference_vs_analytic",
            "residual",
            "n_dofs",
        ],
        table.rows.iter().map(|r| {
            vec![
                r.eps,
                r.mu2_analytic,
                r.mu2_table,
                r.mu2_discrete,
                r.mu2_eps,
                r.difference,
                r.difference_vs_analytic,
                r.residual,
                r.n_dofs as f64,
            ]
        }),
    )?;
    write_json(&dir.join(format!("eigen_summary_d{}.json", table.dim)), table)
}
