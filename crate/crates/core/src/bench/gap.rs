use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{compatible_loads, grid_for, loglog_slope, tag, NormMatrices, Recipe, Scenario};
use crate::grid::{
    assemble_system, boundary_hhalf_norm, boundary_l2_norm, boundary_trace, BoundaryTrace, Grid, ProblemData,
};
use crate::output::{write_csv, write_json};
use crate::solve::{detect_plateau, step_parabolic, MarchOptions, Plateau};
use crate::xform::CoefficientField;
use crate::Result;

/// Boundary gap between two runs sharing one grid.
#[derive(Debug, Clone, Serialize)]
pub struct GapSeries {
    pub eps: f64,
    pub n_dofs: usize,
    #[serde(skip)]
    pub times: Vec<f64>,
    /// `|u_b(t) - u_a(t)|_{L^2(dOmega)}`.
    #[serde(skip)]
    pub raw_gap: Vec<f64>,
    /// `raw_gap / (eps^d * data norm)`.
    #[serde(skip)]
    pub normalized: Vec<f64>,
    /// Fourier `H^{1/2}(dOmega)` norm of the difference.
    #[serde(skip)]
    pub hhalf_gap: Vec<f64>,
    /// `L^2(dOmega)` norm of the difference minus its boundary mean.
    #[serde(skip)]
    pub mean_free_gap: Vec<f64>,
    /// `|u_in|_{H^1} + |f|_{L^2} + |g|_{L^2(dOmega)}` (discrete).
    pub data_norm: f64,
    pub denominator: f64,
    pub plateau: Option<Plateau>,
    /// Plateau value of the raw gap (`plateau.value * denominator`).
    pub plateau_raw: Option<f64>,
    pub final_raw: f64,
    pub final_normalized: f64,
    pub final_mean_free: f64,
    pub final_hhalf: f64,
}

/// All members of an eps sweep plus the cross-member fits.
#[derive(Debug, Clone, Serialize)]
pub struct GapSummary {
    pub series: Vec<GapSeries>,
    /// Log-log slope of the raw plateau gap (final gap where no plateau was found) against eps.
    pub raw_slope: Option<f64>,
    /// Same for the mean-free gap at the final time.
    pub mean_free_slope: Option<f64>,
    /// Largest over smallest normalized plateau value across the sweep.
    pub plateau_ratio: Option<f64>,
}

fn march_traces(
    grid: &Grid<2>,
    coeff: &CoefficientField<2>,
    loads: &[f64],
    u0: &[f64],
    s: &Scenario,
) -> Result<(Vec<f64>, Vec<BoundaryTrace>)> {
    let (k, m) = assemble_system(grid, coeff, &s.grid.assembly())?;
    let mut traces = Vec::new();
    let mut times = Vec::new();
    let mut opts: MarchOptions = s.time.march();
    opts.save_every = usize::MAX;
    step_parabolic(&m, &k, loads, u0, &opts, |_, t, u| {
        times.push(t);
        traces.push(boundary_trace(grid, u)?);
        Ok(())
    })?;
    Ok((times, traces))
}

/// Marches `a` and `b` from the same data on `grid` and measures their boundary gap.
pub fn compare_runs(
    s: &Scenario,
    grid: &Grid<2>,
    data: &ProblemData<2>,
    a: &CoefficientField<2>,
    b: &CoefficientField<2>,
    eps: f64,
) -> Result<GapSeries> {
    let (loads, _) = compatible_loads(grid, data)?;
    let u0 = grid.interpolate(|x| data.u_in(x));
    let (times, ta) = march_traces(grid, a, &loads, &u0, s)?;
    let (_, tb) = march_traces(grid, b, &loads, &u0, s)?;
    let norms = NormMatrices::new(grid)?;
    let data_norm = norms.data_norm(grid, data);
    let denominator = eps.powi(2) * data_norm;
    let mut raw_gap = Vec::with_capacity(times.len());
    let mut hhalf_gap = Vec::with_capacity(times.len());
    let mut mean_free_gap = Vec::with_capacity(times.len());
    for (x, y) in ta.iter().zip(&tb) {
        let d = y.difference(x)?;
        raw_gap.push(boundary_l2_norm(&d));
        hhalf_gap.push(boundary_hhalf_norm(&d).unwrap_or(f64::NAN));
        mean_free_gap.push(boundary_l2_norm(&d.shifted(d.mean())));
    }
    let normalized: Vec<f64> = raw_gap.iter().map(|g| g / denominator).collect();
    let plateau = detect_plateau(&times, &normalized, s.analysis.plateau_span, s.analysis.plateau_tol);
    let last = times.len() - 1;
    Ok(GapSeries {
        eps,
        n_dofs: grid.n_dofs(),
        plateau_raw: plateau.map(|p| p.value * denominator),
        plateau,
        final_raw: raw_gap[last],
        final_normalized: normalized[last],
        final_mean_free: mean_free_gap[last],
        final_hhalf: hhalf_gap[last],
        times,
        raw_gap,
        normalized,
        hhalf_gap,
        mean_free_gap,
        data_norm,
        denominator,
    })
}

/// Homogeneous versus defect runs for every eps, each pair on its own shared graded grid.
pub fn run_gap_experiment(s: &Scenario, eps_list: &[f64]) -> Result<GapSummary> {
    let data = s.problem_data()?;
    let series = eps_list
        .par_iter()
        .map(|&eps| {
            let grid = grid_for(s, Recipe::Defect, eps)?;
            let hom = s.coefficients(Recipe::Homogeneous, eps)?;
            let def = s.coefficients(Recipe::Defect, eps)?;
            compare_runs(s, &grid, &data, &hom, &def, eps)
        })
        .collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = series.iter().map(|g| g.eps).collect();
    let raw: Vec<f64> = series.iter().map(|g| g.plateau_raw.unwrap_or(g.final_raw)).collect();
    let mean_free: Vec<f64> = series.iter().map(|g| g.final_mean_free).collect();
    let plateaus: Vec<f64> = series.iter().filter_map(|g| g.plateau.map(|p| p.value)).collect();
    let plateau_ratio = (plateaus.len() == series.len() && !plateaus.is_empty()).then(|| {
        let hi = plateaus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = plateaus.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    });
    Ok(GapSummary {
        raw_slope: loglog_slope(&eps, &raw),
        mean_free_slope: loglog_slope(&eps, &mean_free),
        plateau_ratio,
        series,
    })
}

pub fn write_gap_outputs(dir: &Path, summary: &GapSummary) -> Result<()> {
    for g in &summary.series {
        write_csv(
            &dir.join(format!("gap_eps_{}.csv", tag(g.eps))),
            &["t", "raw_gap", "normalized_gap", "hhalf_gap", "mean_free_gap"],
            (0..g.times.len()).map(|i| vec![g.times[i], g.raw_gap[i], g.normalized[i], g.hhalf_gap[i], g.mean_free_gap[i]]),
        )?;
    }
    write_json(&dir.join("cloakgap_summary.json"), summary)
}

/// One refinement level of the change-of-variables check.
#[derive(Debug, Clone, Serialize)]
pub struct CovLevel {
    pub level: usize,
    pub n_dofs: usize,
    pub dt: f64,
    /// `sup_t |trace(u_defect) - trace(u_cloak)|_{L^2(dOmega)}`.
    pub sup_trace_difference: f64,
    /// `sup_t |trace(u_defect)|_{L^2(dOmega)}`, for scale.
    pub sup_trace_norm: f64,
    /// `sup_t` distance between this level's defect trace and the next level's, resampled here.
    pub reference_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChangeOfVariablesReport {
    pub eps: f64,
    pub levels: Vec<CovLevel>,
    /// Finest over coarsest-but-one difference (`< 0.5` means discretization-driven decay).
    pub ratio: Option<f64>,
}

/// Defect and push-forward cloak runs on one grid per level; each level halves
/// the cell sizes and the time step.
pub fn run_change_of_variables_check(s: &Scenario, eps: f64, levels: usize) -> Result<ChangeOfVariablesReport> {
    let data = s.problem_data()?;
    let mut runs = Vec::new();
    let mut cfg = s.clone();
    for level in 0..levels.max(1) {
        let grid = grid_for(&cfg, Recipe::Defect, eps)?;
        let (loads, _) = compatible_loads(&grid, &data)?;
        let u0 = grid.interpolate(|x| data.u_in(x));
        let (_, td) = march_traces(&grid, &cfg.coefficients(Recipe::Defect, eps)?, &loads, &u0, &cfg)?;
        let (_, tc) = march_traces(&grid, &cfg.coefficients(Recipe::Cloak, eps)?, &loads, &u0, &cfg)?;
        let mut sup_diff: f64 = 0.0;
        let mut sup_norm: f64 = 0.0;
        for (d, c) in td.iter().zip(&tc) {
            sup_diff = sup_diff.max(boundary_l2_norm(&c.difference(d)?));
            sup_norm = sup_norm.max(boundary_l2_norm(d));
        }
        runs.push((level, grid.n_dofs(), cfg.time.dt, sup_diff, sup_norm, td));
        cfg.grid = cfg.grid.refined();
        cfg.time.dt *= 0.5;
    }
    let mut out = Vec::with_capacity(runs.len());
    for i in 0..runs.len() {
        let reference_error = if i + 1 < runs.len() {
            let (coarse, fine) = (&runs[i].5, &runs[i + 1].5);
            let mut sup: f64 = 0.0;
            // The finer level takes two steps per coarse step.
            for (n, c) in coarse.iter().enumerate() {
                let f = fine[2 * n].resample_like(c)?;
                sup = sup.max(boundary_l2_norm(&f.difference(c)?));
            }
            Some(sup)
        } else {
            None
        };
        let r = &runs[i];
        out.push(CovLevel {
            level: r.0,
            n_dofs: r.1,
            dt: r.2,
            sup_trace_difference: r.3,
            sup_trace_norm: r.4,
            reference_error,
        });
    }
    let ratio = (out.len() >= 2).then(|| out[out.len() - 1].sup_trace_difference / out[out.len() - 2].sup_trace_difference);
    Ok(ChangeOfVariablesReport { eps, levels: out, ratio })
}

pub fn write_change_of_variables_outputs(dir: &Path, report: &ChangeOfVariablesReport) -> Result<()> {
    write_csv(
        &dir.join("checkmap.csv"),
        &["level", "n_dofs", "dt", "sup_trace_difference", "sup_trace_norm"],
        report
            .levels
            .iter()
            .map(|l| vec![l.level as f64, l.n_dofs as f64, l.dt, l.sup_trace_difference, l.sup_trace_norm]),
    )?;
    write_json(&dir.join("checkmap_summary.json"), report)
}
