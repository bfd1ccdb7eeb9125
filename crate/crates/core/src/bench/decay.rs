use std::path::Path;

use serde::Serialize;

use super::{compatible_loads, grid_for, tag, Recipe, Scenario};
use crate::grid::{
    assemble_system, assemble_unit_matrices, boundary_l2_norm, boundary_trace, write_point_cloud_csv, Grid,
};
use crate::output::{write_csv, write_json};
use crate::solve::{
    discrete_h1_norm, eigen_smallest, fit_log_linear, solve_steady, step_parabolic, weighted_mean, DecayFit,
    EigenOptions,
};
use crate::Result;

/// One march of a single recipe with its equilibrium, decay fit and eigenvalue.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationRun {
    pub recipe: Recipe,
    pub eps: f64,
    pub n_dofs: usize,
    #[serde(skip)]
    pub times: Vec<f64>,
    /// `|u(t) - u_eq - m|_{H^1}` (discrete, unit coefficients).
    #[serde(skip)]
    pub distance: Vec<f64>,
    /// `rho`-weighted mean of `u(t)`.
    #[serde(skip)]
    pub weighted_means: Vec<f64>,
    #[serde(skip)]
    pub trace_norm: Vec<f64>,
    /// Weighted initial average `m`, the constant added to `u_eq`.
    pub offset: f64,
    pub steady_multiplier: f64,
    pub steady_constraint_residual: f64,
    pub steady_solve_residual: f64,
    pub fit: Option<DecayFit>,
    pub fit_error: Option<String>,
    /// First nonzero discrete eigenvalue of the same system.
    pub mu2: f64,
    pub eigen_residual: f64,
    /// `(t, u)` at the requested snapshot times.
    #[serde(skip)]
    pub snapshots: Vec<(f64, Vec<f64>)>,
    #[serde(skip)]
    pub grid: Option<Grid<2>>,
}

/// Marches `recipe` on `grid` and fits the decay towards equilibrium.
pub fn run_simulation_on(s: &Scenario, recipe: Recipe, eps: f64, grid: &Grid<2>) -> Result<SimulationRun> {
    let data = s.problem_data()?;
    let coeff = s.coefficients(recipe, eps)?;
    let (k, m) = assemble_system(grid, &coeff, &s.grid.assembly())?;
    let (k1, m1) = assemble_unit_matrices(grid)?;
    let (loads, _) = compatible_loads(grid, &data)?;
    let u0 = grid.interpolate(|x| data.u_in(x));
    let w = m.row_sums();
    let steady = solve_steady(&k, &loads, &w)?;
    let offset = weighted_mean(&m, &u0);
    let eig = eigen_smallest(&k, &m, s.analysis.eigen_count, &EigenOptions::default())?;

    let mut opts = s.time.march();
    opts.save_every = usize::MAX;
    let snap_steps: Vec<usize> = s
        .analysis
        .snapshot_times
        .iter()
        .map(|t| (t / opts.dt).round() as usize)
        .collect();
    let mut times = Vec::new();
    let mut distance = Vec::new();
    let mut weighted_means = Vec::new();
    let mut trace_norm = Vec::new();
    let mut snapshots = Vec::new();
    let mut diff = vec![0.0; u0.len()];
    step_parabolic(&m, &k, &loads, &u0, &opts, |n, t, u| {
        for i in 0..u.len() {
            diff[i] = u[i] - steady.u_eq[i] - offset;
        }
        times.push(t);
        distance.push(discrete_h1_norm(&k1, &m1, &diff));
        weighted_means.push(weighted_mean(&m, u));
        trace_norm.push(boundary_l2_norm(&boundary_trace(grid, u)?));
        if snap_steps.contains(&n) {
            snapshots.push((t, u.to_vec()));
        }
        Ok(())
    })?;
    let (fit, fit_error) = match fit_log_linear(&times, &distance, s.analysis.window(), offset) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SimulationRun {
        recipe,
        eps,
        n_dofs: grid.n_dofs(),
        times,
        distance,
        weighted_means,
        trace_norm,
        offset,
        steady_multiplier: steady.multiplier,
        steady_constraint_residual: steady.constraint_residual,
        steady_solve_residual: steady.solve_residual,
        fit,
        fit_error,
        mu2: eig.values[0],
        eigen_residual: eig.residuals[0],
        snapshots,
        grid: Some(grid.clone()),
    })
}

/// [`run_simulation_on`] with the recipe's default grid.
pub fn run_simulation(s: &Scenario, recipe: Recipe, eps: f64) -> Result<SimulationRun> {
    let grid = grid_for(s, recipe, eps)?;
    run_simulation_on(s, recipe, eps, &grid)
}

pub fn write_simulation_outputs(dir: &Path, runs: &[SimulationRun]) -> Result<()> {
    for r in runs {
        let stem = format!("simulate_{}_eps_{}", r.recipe.name(), tag(r.eps));
        write_csv(
            &dir.join(format!("{stem}.csv")),
            &["t", "h1_distance_to_equilibrium", "weighted_mean", "boundary_l2_norm"],
            (0..r.times.len()).map(|i| vec![r.times[i], r.distance[i], r.weighted_means[i], r.trace_norm[i]]),
        )?;
        if let Some(g) = &r.grid {
            for (t, u) in &r.snapshots {
                write_point_cloud_csv(g, u, &dir.join(format!("{stem}_t_{}.csv", tag(*t))))?;
            }
        }
    }
    write_json(&dir.join("simulate_summary.json"), &runs)
}

/// Decay rates of the homogeneous and defect problems against their eigenvalues.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub eps: f64,
    pub homogeneous: SimulationRun,
    pub defect: SimulationRun,
    /// `|gamma - mu2| / mu2`.
    pub relative_error_homogeneous: Option<f64>,
    pub relative_error_defect: Option<f64>,
    /// `|gamma - gamma_eps|`.
    pub rate_gap: Option<f64>,
}

/// Homogeneous and defect runs on one shared grid at the scenario's first eps.
pub fn run_decay_suite(s: &Scenario) -> Result<DecayReport> {
    let eps = s.eps[0];
    let grid = grid_for(s, Recipe::Defect, eps)?;
    let homogeneous = run_simulation_on(s, Recipe::Homogeneous, eps, &grid)?;
    let defect = run_simulation_on(s, Recipe::Defect, eps, &grid)?;
    let rel = |r: &SimulationRun| r.fit.map(|f| (f.rate - r.mu2).abs() / r.mu2);
    Ok(DecayReport {
        eps,
        relative_error_homogeneous: rel(&homogeneous),
        relative_error_defect: rel(&defect),
        rate_gap: match (homogeneous.fit, defect.fit) {
            (Some(a), Some(b)) => Some((a.rate - b.rate).abs()),
            _ => None,
        },
        homogeneous,
        defect,
    })
}

pub fn write_decay_outputs(dir: &Path, report: &DecayReport) -> Result<()> {
    write_simulation_outputs(dir, &[report.homogeneous.clone(), report.defect.clone()])?;
    write_json(&dir.join("decay_summary.json"), report)
}
