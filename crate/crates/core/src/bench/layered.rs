use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{compatible_loads, grid_for, loglog_slope, tag, Recipe, Scenario};
use crate::grid::{assemble_system, boundary_l2_norm, boundary_trace, write_mesh_json, write_point_cloud_csv, Grid};
use crate::output::{write_csv, write_json};
use crate::solve::step_parabolic;
use crate::xform::CoefficientField;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct LayeredSnapshot {
    pub t: f64,
    #[serde(skip)]
    pub homogeneous: Vec<f64>,
    #[serde(skip)]
    pub cloak: Vec<f64>,
    /// Mean `|d u / d x2|` over `|x2| < 1`.
    pub inner_gradient_homogeneous: f64,
    pub inner_gradient_cloak: f64,
    /// `max |u_cloak - u_hom|` over all nodes.
    pub max_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayeredRun {
    pub eps: f64,
    #[serde(skip)]
    pub times: Vec<f64>,
    /// `|u_cloak(t) - u_hom(t)|_{L^2}` on the lines `x2 = +-3`.
    #[serde(skip)]
    pub gap: Vec<f64>,
    pub sup_gap: f64,
    pub final_gap: f64,
    pub snapshots: Vec<LayeredSnapshot>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayeredReport {
    pub n_dofs: usize,
    pub runs: Vec<LayeredRun>,
    /// Log-log slope of `sup_gap` against eps.
    pub exponent_sup: Option<f64>,
    pub exponent_final: Option<f64>,
    #[serde(skip)]
    pub grid: Grid<2>,
}

/// Mean `|du/dx2|` over cells with `|x2| < 1`, along the first `x1` column.
fn inner_gradient(grid: &Grid<2>, u: &[f64]) -> f64 {
    let ax = grid.axis(1);
    let mut sum = 0.0;
    let mut count = 0;
    for j in 0..ax.len() - 1 {
        if ax[j] >= -1.0 - 1e-12 && ax[j + 1] <= 1.0 + 1e-12 {
            sum += (u[grid.dof([0, j + 1])] - u[grid.dof([0, j])]).abs() / (ax[j + 1] - ax[j]);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Homogeneous versus layered-cloak runs on one shared grid, periodic in `x1`.
pub fn run_layered(s: &Scenario, eps_list: &[f64]) -> Result<LayeredReport> {
    run_layered_with(s, eps_list, |eps| s.coefficients(Recipe::LayeredCloak, eps))
}

/// [`run_layered`] with the cloak coefficients for each eps supplied by `cloak`.
pub fn run_layered_with<C>(s: &Scenario, eps_list: &[f64], cloak: C) -> Result<LayeredReport>
where
    C: Fn(f64) -> Result<CoefficientField<2>> + Sync,
{
    if s.preset != super::Preset::LayeredFig2 {
        return Err(Error::Config("layered runs need the layered-fig2 preset".into()));
    }
    let data = s.problem_data()?;
    let grid = grid_for(s, Recipe::LayeredCloak, eps_list.first().copied().unwrap_or(0.1))?;
    let (loads, _) = compatible_loads(&grid, &data)?;
    let u0 = grid.interpolate(|x| data.u_in(x));
    let asm = s.grid.assembly();
    let opts = {
        let mut o = s.time.march();
        o.save_every = usize::MAX;
        o
    };
    let snap_steps: Vec<usize> = s
        .analysis
        .snapshot_times
        .iter()
        .map(|t| (t / opts.dt).round() as usize)
        .filter(|&n| n <= opts.n_steps())
        .collect();

    let (k0, m0) = assemble_system(&grid, &CoefficientField::homogeneous(), &asm)?;
    let mut hom_traces = Vec::new();
    let mut hom_snaps = Vec::new();
    let mut times = Vec::new();
    step_parabolic(&m0, &k0, &loads, &u0, &opts, |n, t, u| {
        times.push(t);
        hom_traces.push(boundary_trace(&grid, u)?);
        if snap_steps.contains(&n) {
            hom_snaps.push((t, u.to_vec()));
        }
        Ok(())
    })?;

    let runs = eps_list
        .par_iter()
        .map(|&eps| -> Result<LayeredRun> {
            let coeff = cloak(eps)?;
            let (k, m) = assemble_system(&grid, &coeff, &asm)?;
            let mut gap = Vec::with_capacity(times.len());
            let mut snaps = Vec::new();
            step_parabolic(&m, &k, &loads, &u0, &opts, |n, t, u| {
                let d = boundary_trace(&grid, u)?.difference(&hom_traces[n])?;
                gap.push(boundary_l2_norm(&d));
                if let Some((_, h)) = hom_snaps.iter().find(|(th, _)| (*th - t).abs() < 1e-9) {
                    snaps.push(LayeredSnapshot {
                        t,
                        inner_gradient_homogeneous: inner_gradient(&grid, h),
                        inner_gradient_cloak: inner_gradient(&grid, u),
                        max_difference: h.iter().zip(u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())),
                        homogeneous: h.clone(),
                        cloak: u.to_vec(),
                    });
                }
                Ok(())
            })?;
            Ok(LayeredRun {
                eps,
                sup_gap: gap.iter().cloned().fold(0.0, f64::max),
                final_gap: *gap.last().expect("at least one step"),
                times: times.clone(),
                gap,
                snapshots: snaps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    Ok(LayeredReport {
        n_dofs: grid.n_dofs(),
        exponent_sup: loglog_slope(&eps, &runs.iter().map(|r| r.sup_gap).collect::<Vec<_>>()),
        exponent_final: loglog_slope(&eps, &runs.iter().map(|r| r.final_gap).collect::<Vec<_>>()),
        runs,
        grid,
    })
}

pub fn write_layered_outputs(dir: &Path, report: &LayeredReport) -> Result<()> {
    write_mesh_json(&report.grid, &dir.join("layered_mesh.json"))?;
    for r in &report.runs {
        write_csv(
            &dir.join(format!("layered_gap_eps_{}.csv", tag(r.eps))),
            &["t", "boundary_gap"],
            r.times.iter().zip(&r.gap).map(|(t, g)| vec![*t, *g]),
        )?;
        for snap in &r.snapshots {
            write_point_cloud_csv(
                &report.grid,
                &snap.cloak,
                &dir.join(format!("layered_cloak_eps_{}_t_{}.csv", tag(r.eps), tag(snap.t))),
            )?;
        }
    }
    if let Some(r) = report.runs.first() {
        for snap in &r.snapshots {
            write_point_cloud_csv(
                &report.grid,
                &snap.homogeneous,
                &dir.join(format!("layered_homogeneous_t_{}.csv", tag(snap.t))),
            )?;
        }
    }
    write_json(&dir.join("layered_summary.json"), report)
}
