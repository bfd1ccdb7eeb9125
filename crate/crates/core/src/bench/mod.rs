//! Reproducible experiments assembled from the other modules.
//!
//! Each runner returns a plain report struct; the `write_*` functions turn
//! reports into CSV tables and JSON summaries with every number in full
//! double precision.

mod decay;
mod gap;
mod layered;
mod profiles;
mod scenario;
mod spectral;

use crate::grid::{
    assemble_boundary_mass, assemble_loads, assemble_unit_matrices, build_grid, GeometrySpec, Grid, ProblemData,
};
use crate::linalg::SparseMatrix;
use crate::{Error, Result};

pub use decay::{run_decay_suite, run_simulation, write_decay_outputs, write_simulation_outputs, DecayReport, SimulationRun};
pub use gap::{
    compare_runs, run_change_of_variables_check, run_gap_experiment, write_change_of_variables_outputs,
    write_gap_outputs, ChangeOfVariablesReport, CovLevel, GapSeries, GapSummary,
};
pub use layered::{run_layered, run_layered_with, write_layered_outputs, LayeredReport, LayeredRun};
pub use profiles::{export_coefficient_profiles, write_profiles_csv};
pub use scenario::{
    AnalysisConfig, BetaConfig, DataConfig, GridConfig, MaterialConfig, Preset, Recipe, Scenario, TimeConfig,
};
pub use spectral::{run_eigen_table, write_eigen_outputs, EigenRow, EigenTable};

/// Least-squares slope of `log y` against `log x`; `None` with fewer than two usable points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<f64>() / sxx)
}

/// File-name fragment for a parameter value, e.g. `1e-2`.
pub(crate) fn tag(v: f64) -> String {
    format!("{v:e}")
}

/// Grid for a recipe: graded at `eps` around the origin (defect-type recipes)
/// or uniform (cloak and layered cloak, whose coefficients vary on the unit scale).
pub fn grid_for(s: &Scenario, recipe: Recipe, eps: f64) -> Result<Grid<2>> {
    let radius = match recipe {
        Recipe::Cloak | Recipe::LayeredCloak => 1.0,
        _ => eps,
    };
    let mut spec = if s.preset == Preset::LayeredFig2 {
        GeometrySpec::layer(radius)
    } else {
        GeometrySpec::<2>::ball(radius)
    };
    spec.half_width = s.grid.half_width;
    build_grid(&spec, &s.grid.budget())
}

/// Load vector with `1^T b = 0` exactly.
///
/// The continuous mean correction is computed by quadrature, so the assembled
/// loads carry a small residual; it is removed along the discrete load of the
/// same correction profile. Returns the loads and the discrete shift.
pub fn compatible_loads(grid: &Grid<2>, data: &ProblemData<2>) -> Result<(Vec<f64>, f64)> {
    let mut b = assemble_loads(grid, data)?.total();
    let residual: f64 = b.iter().sum();
    let d2 = data.clone();
    let profile = ProblemData::new(
        std::sync::Arc::new(move |x| d2.correction_profile(x)),
        std::sync::Arc::new(|_| 0.0),
        std::sync::Arc::new(|_| 0.0),
        data.half_width(),
        data.periodic(),
    );
    let p = assemble_loads(grid, &profile)?.volume;
    let total: f64 = p.iter().sum();
    if total.abs() < 1e-14 {
        return Err(Error::invalid("correction profile has no support on this grid"));
    }
    let c = residual / total;
    for (bi, pi) in b.iter_mut().zip(&p) {
        *bi -= c * pi;
    }
    Ok((b, c))
}

/// Unit-coefficient matrices and boundary mass used for the discrete data norms.
pub(crate) struct NormMatrices {
    pub k1: SparseMatrix,
    pub m1: SparseMatrix,
    pub mb: SparseMatrix,
}

impl NormMatrices {
    pub fn new(grid: &Grid<2>) -> Result<Self> {
        let (k1, m1) = assemble_unit_matrices(grid)?;
        let mb = assemble_boundary_mass(grid)?;
        Ok(Self { k1, m1, mb })
    }

    /// `|u_in|_{H^1} + |f|_{L^2(Omega)} + |g|_{L^2(dOmega)}` from nodal interpolants.
    pub fn data_norm(&self, grid: &Grid<2>, data: &ProblemData<2>) -> f64 {
        let u = grid.interpolate(|x| data.u_in(x));
        let f = grid.interpolate(|x| data.f(x));
        let g = grid.interpolate(|x| data.g(x));
        crate::solve::discrete_h1_norm(&self.k1, &self.m1, &u) + self.m1.quad_form(&f).sqrt() + self.mb.quad_form(&g).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 1.7).abs() < 1e-12);
        assert!(loglog_slope(&[0.1], &[1.0]).is_none());
    }

    #[test]
    fn discrete_loads_are_compatible() {
        let s = Scenario::preset(Preset::Paper2d);
        let g = grid_for(&s, Recipe::Defect, 0.1).unwrap();
        let (b, c) = compatible_loads(&g, &s.problem_data().unwrap()).unwrap();
        assert!(b.iter().sum::<f64>().abs() < 1e-11);
        assert!(c.abs() < 1e-2);
    }
}
