use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{smoothstep_cutoff, GridBudget, ProblemData, DEFAULT_HALF_WIDTH};
use crate::grid::AssemblyOptions;
use crate::solve::{FitWindow, MarchOptions};
use crate::xform::{scalar_field, CoefficientField, InclusionMaterial, CloakParams, ScalarField};
use crate::{Error, Point, Result, Tensor};

/// Named source/boundary/initial data sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Near-cloak data: `f = chi (r sin x1 sin x2 - 2)`, `g = -3` on `x1 = +-3`, `u_in = chi x1 x2`.
    #[serde(rename = "paper-2d")]
    Paper2d,
    /// Layer data: `f = chi x2 sin x2`, `g = 0`, `u_in = chi x2`, periodic in `x1`.
    LayeredFig2,
    /// Near-cloak sources with `u_in = chi (x1 x2 + x1)`, which excites the first nonzero mode.
    #[serde(rename = "decay-2d")]
    Decay2d,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Paper2d => "paper-2d",
            Preset::LayeredFig2 => "layered-fig2",
            Preset::Decay2d => "decay-2d",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "paper-2d" => Ok(Preset::Paper2d),
            "layered-fig2" => Ok(Preset::LayeredFig2),
            "decay-2d" => Ok(Preset::Decay2d),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected paper-2d, layered-fig2 or decay-2d)"
            ))),
        }
    }

    pub fn periodic(&self) -> [bool; 2] {
        match self {
            Preset::LayeredFig2 => [true, false],
            _ => [false, false],
        }
    }
}

/// Coefficient recipe used by single-run commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    Homogeneous,
    Defect,
    Cloak,
    LayeredDefect,
    LayeredCloak,
}

impl Recipe {
    pub fn name(&self) -> &'static str {
        match self {
            Recipe::Homogeneous => "homogeneous",
            Recipe::Defect => "defect",
            Recipe::Cloak => "cloak",
            Recipe::LayeredDefect => "layered-defect",
            Recipe::LayeredCloak => "layered-cloak",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [
            Recipe::Homogeneous,
            Recipe::Defect,
            Recipe::Cloak,
            Recipe::LayeredDefect,
            Recipe::LayeredCloak,
        ]
        .into_iter()
        .find(|r| r.name() == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown recipe '{name}' (expected homogeneous, defect, cloak, layered-defect or layered-cloak)"
            ))
        })
    }

    pub fn is_layered(&self) -> bool {
        matches!(self, Recipe::LayeredDefect | Recipe::LayeredCloak)
    }
}

/// Conductivity inside the inclusion: a scalar multiple of the identity or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaConfig {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub eta: f64,
    pub beta: BetaConfig,
}

impl MaterialConfig {
    pub fn isotropic(eta: f64, beta: f64) -> Self {
        Self {
            eta,
            beta: BetaConfig::Scalar(beta),
        }
    }

    pub fn build<const D: usize>(&self) -> Result<InclusionMaterial<D>> {
        match &self.beta {
            BetaConfig::Scalar(b) => InclusionMaterial::isotropic(self.eta, *b),
            BetaConfig::Matrix(rows) => {
                if rows.len() != D || rows.iter().any(|r| r.len() != D) {
                    return Err(Error::Config(format!("material.beta must be a {D}x{D} matrix")));
                }
                InclusionMaterial::constant(self.eta, Tensor::<D>::from_fn(|i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n_defect: usize,
    pub n_bulk: usize,
    pub growth: f64,
    pub max_cells_per_axis: usize,
    /// Quadrature sub-cells per axis on cells cut by a coefficient interface.
    pub subcells: usize,
    /// Laminate averaging of the conductivity on cut cells.
    #[serde(default = "default_laminate")]
    pub laminate: bool,
}

fn default_laminate() -> bool {
    true
}

impl GridConfig {
    pub fn budget(&self) -> GridBudget {
        GridBudget {
            n_defect: self.n_defect,
            n_bulk: self.n_bulk,
            growth: self.growth,
            max_cells_per_axis: self.max_cells_per_axis,
        }
    }

    pub fn assembly(&self) -> AssemblyOptions {
        AssemblyOptions {
            subcells: self.subcells,
            laminate: self.laminate,
        }
    }

    /// Both resolutions doubled.
    pub fn refined(&self) -> Self {
        Self {
            n_defect: 2 * self.n_defect,
            n_bulk: 2 * self.n_bulk,
            max_cells_per_axis: 2 * self.max_cells_per_axis,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub theta: f64,
}

impl TimeConfig {
    pub fn march(&self) -> MarchOptions {
        MarchOptions::new(self.dt, self.t_final, self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Data are switched on outside this radius (or `|x2|` for layers)...
    pub cutoff_radius: f64,
    /// ...over a quintic ramp of this width; `0` gives a sharp cut.
    pub cutoff_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Times at which full fields are exported.
    pub snapshot_times: Vec<f64>,
    /// Decay-fit window.
    pub fit_start: f64,
    pub fit_end: f64,
    /// Plateau: relative change below `plateau_tol` over `plateau_span` steps.
    pub plateau_span: usize,
    pub plateau_tol: f64,
    pub eigen_count: usize,
}

impl AnalysisConfig {
    pub fn window(&self) -> FitWindow {
        FitWindow {
            t_start: self.fit_start,
            t_end: self.fit_end,
        }
    }
}

/// Everything an experiment needs: geometry, recipe, material, data, time grid and analysis settings.
///
/// Files are TOML. A file names a `preset` and overrides any subset of its
/// fields; see `scenarios/paper-2d.toml` in the repository for a commented example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub preset: Preset,
    pub dim: usize,
    pub recipe: Recipe,
    pub eps: Vec<f64>,
    pub material: MaterialConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub data: DataConfig,
    pub analysis: AnalysisConfig,
}

impl Scenario {
    pub fn preset(p: Preset) -> Self {
        let grid = GridConfig {
            half_width: DEFAULT_HALF_WIDTH,
            n_defect: 10,
            n_bulk: 120,
            growth: 1.3,
            max_cells_per_axis: 400,
            subcells: 4,
            laminate: true,
        };
        let data = DataConfig {
            cutoff_radius: 2.0,
            cutoff_width: 0.2,
        };
        match p {
            Preset::Paper2d => Self {
                preset: p,
                dim: 2,
                recipe: Recipe::Defect,
                eps: vec![0.1, 0.01],
                material: MaterialConfig::isotropic(2.0, 2.0),
                grid,
                time: TimeConfig {
                    dt: 0.1,
                    t_final: 110.0,
                    theta: 1.0,
                },
                data,
                analysis: AnalysisConfig {
                    snapshot_times: vec![0.0, 1.0, 4.0, 110.0],
                    fit_start: 20.0,
                    fit_end: 40.0,
                    plateau_span: 10,
                    plateau_tol: 0.005,
                    eigen_count: 1,
                },
            },
            Preset::LayeredFig2 => Self {
                preset: p,
                dim: 2,
                recipe: Recipe::LayeredCloak,
                eps: vec![0.1, 0.03, 0.01],
                material: MaterialConfig::isotropic(1.0, 1.0),
                grid,
                time: TimeConfig {
                    dt: 0.01,
                    t_final: 4.0,
                    theta: 1.0,
                },
                data,
                analysis: AnalysisConfig {
                    snapshot_times: vec![0.0, 1.0, 4.0],
                    fit_start: 1.0,
                    fit_end: 4.0,
                    plateau_span: 10,
                    plateau_tol: 0.005,
                    eigen_count: 1,
                },
            },
            Preset::Decay2d => Self {
                preset: p,
                dim: 2,
                recipe: Recipe::Defect,
                eps: vec![0.1],
                material: MaterialConfig::isotropic(1.0, 1.0),
                grid: GridConfig { n_bulk: 60, ..grid },
                time: TimeConfig {
                    dt: 0.05,
                    t_final: 40.0,
                    theta: 1.0,
                },
                data,
                analysis: AnalysisConfig {
                    snapshot_times: vec![0.0, 40.0],
                    fit_start: 15.0,
                    fit_end: 35.0,
                    plateau_span: 10,
                    plateau_tol: 0.005,
                    eigen_count: 1,
                },
            },
        }
    }

    /// Parses a TOML scenario: the named preset (default `paper-2d`) with the file's values laid over it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("malformed scenario: {e}")))?;
        let preset = match file.get("preset") {
            None => Preset::Paper2d,
            Some(toml::Value::String(s)) => Preset::parse(s)?,
            Some(_) => return Err(Error::Config("'preset' must be a string".into())),
        };
        let base = toml::Table::try_from(Self::preset(preset))
            .map_err(|e| Error::Config(format!("cannot serialize preset: {e}")))?;
        let merged = merge(base, file);
        let s: Scenario = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("malformed scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
    }

    /// Type and range checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.dim) {
            return cfg(format!("dim must be 1, 2 or 3, got {}", self.dim));
        }
        if self.eps.is_empty() {
            return cfg("eps list is empty".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return cfg(format!("every eps must lie in (0, 1), got {e}"));
        }
        if self.preset == Preset::LayeredFig2 && !self.recipe.is_layered() && self.recipe != Recipe::Homogeneous {
            return cfg("the layered-fig2 preset needs a layered or homogeneous recipe".into());
        }
        if self.preset != Preset::LayeredFig2 && self.recipe.is_layered() {
            return cfg("layered recipes need the layered-fig2 preset".into());
        }
        if !(self.material.eta > 0.0) {
            return cfg(format!("material.eta must be positive, got {}", self.material.eta));
        }
        match self.dim {
            1 => self.material.build::<1>().map(|_| ()),
            2 => self.material.build::<2>().map(|_| ()),
            _ => self.material.build::<3>().map(|_| ()),
        }
        .map_err(|e| Error::Config(format!("material: {e}")))?;
        if self.grid.half_width <= 2.0 {
            return cfg(format!("grid.half_width must exceed 2, got {}", self.grid.half_width));
        }
        if self.grid.subcells == 0 || self.grid.subcells > 16 {
            return cfg(format!("grid.subcells must lie in 1..=16, got {}", self.grid.subcells));
        }
        self.grid
            .budget()
            .validate()
            .map_err(|e| Error::Config(format!("grid: {e}")))?;
        self.time
            .march()
            .validate()
            .map_err(|e| Error::Config(format!("time: {e}")))?;
        if !(self.data.cutoff_radius >= 2.0 && self.data.cutoff_width >= 0.0)
            || self.data.cutoff_radius + self.data.cutoff_width >= self.grid.half_width
        {
            return cfg("data cutoff must satisfy 2 <= cutoff_radius and cutoff_radius + cutoff_width < half_width".into());
        }
        let a = &self.analysis;
        if !(a.fit_start >= 0.0 && a.fit_end > a.fit_start) {
            return cfg(format!("fit window [{}, {}] is empty", a.fit_start, a.fit_end));
        }
        if a.plateau_span == 0 || !(a.plateau_tol > 0.0) {
            return cfg("plateau_span and plateau_tol must be positive".into());
        }
        if a.eigen_count == 0 {
            return cfg("eigen_count must be at least 1".into());
        }
        if a.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return cfg("snapshot times must be non-negative".into());
        }
        Ok(())
    }

    pub fn material2(&self) -> Result<InclusionMaterial<2>> {
        self.material.build::<2>()
    }

    /// Coefficients of `recipe` at regularization `eps`.
    pub fn coefficients(&self, recipe: Recipe, eps: f64) -> Result<CoefficientField<2>> {
        let m = self.material2()?;
        let p = CloakParams::new(eps, 2)?;
        match recipe {
            Recipe::Homogeneous => Ok(CoefficientField::homogeneous()),
            Recipe::Defect => CoefficientField::defect(&p, &m),
            Recipe::Cloak => CoefficientField::cloak(&p, &m),
            Recipe::LayeredDefect => CoefficientField::layered_defect(eps, &m),
            Recipe::LayeredCloak => CoefficientField::layered_cloak(eps, &m),
        }
    }

    /// Source, flux and initial datum of the preset, with the source mean corrected if needed.
    pub fn problem_data(&self) -> Result<ProblemData<2>> {
        let (r0, w) = (self.data.cutoff_radius, self.data.cutoff_width);
        let hw = self.grid.half_width;
        let radial = move |x: &Point<2>| smoothstep_cutoff(x.norm(), r0, w);
        let layer = move |x: &Point<2>| smoothstep_cutoff(x[1].abs(), r0, w);
        let data = match self.preset {
            Preset::Paper2d | Preset::Decay2d => {
                let f = scalar_field(move |x: &Point<2>| radial(x) * (x.norm() * x[0].sin() * x[1].sin() - 2.0));
                let edge = hw * (1.0 - 1e-12);
                let g = scalar_field(move |x: &Point<2>| if x[0].abs() >= edge { -3.0 } else { 0.0 });
                let u: ScalarField<2> = if self.preset == Preset::Paper2d {
                    scalar_field(move |x: &Point<2>| radial(x) * x[0] * x[1])
                } else {
                    scalar_field(move |x: &Point<2>| radial(x) * (x[0] * x[1] + x[0]))
                };
                ProblemData::new(f, g, u, hw, [false, false]).with_correction_profile(Arc::new(radial))
            }
            Preset::LayeredFig2 => {
                let f = scalar_field(move |x: &Point<2>| layer(x) * x[1] * x[1].sin());
                let u = scalar_field(move |x: &Point<2>| layer(x) * x[1]);
                ProblemData::new(f, scalar_field(|_| 0.0), u, hw, [true, false])
                    .with_correction_profile(Arc::new(layer))
            }
        };
        data.mean_corrected()
    }
}

/// Recursively lays `over` on top of `base`.
fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for p in [Preset::Paper2d, Preset::LayeredFig2, Preset::Decay2d] {
            let s = Scenario::preset(p);
            s.validate().unwrap();
            let text = s.to_toml_string().unwrap();
            assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
        }
    }

    #[test]
    fn file_values_override_preset() {
        let s = Scenario::from_toml_str(
            "preset = \"paper-2d\"\neps = [0.05]\n[grid]\nn_bulk = 80\n[material]\neta = 1.5\nbeta = [[2.0, 0.5], [0.5, 1.0]]\n",
        )
        .unwrap();
        assert_eq!(s.eps, vec![0.05]);
        assert_eq!(s.grid.n_bulk, 80);
        assert_eq!(s.grid.n_defect, 10);
        assert_eq!(s.time.t_final, 110.0);
        let m = s.material2().unwrap();
        assert_eq!(m.beta(&Point::<2>::zeros())[(0, 1)], 0.5);
    }

    #[test]
    fn malformed_files_are_config_errors() {
        for bad in [
            "eps = [",
            "unknown_key = 1",
            "[grid]\nn_bulk = \"many\"",
            "eps = []",
            "eps = [1.5]",
            "preset = \"nope\"",
            "[time]\ntheta = 0.2",
            "recipe = \"layered-cloak\"",
        ] {
            assert!(matches!(Scenario::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn paper_data_are_admissible_after_correction() {
        let s = Scenario::preset(Preset::Paper2d);
        let d = s.problem_data().unwrap();
        assert!(d.report().is_compatible());
        assert!(d.report().integral_u_in.abs() < 1e-10);
        // Data vanish inside B_2.
        let inside = Point::<2>::new(0.5, 1.2);
        assert_eq!(d.f(&inside), 0.0);
        assert_eq!(d.u_in(&inside), 0.0);
        let layered = Scenario::preset(Preset::LayeredFig2).problem_data().unwrap();
        assert!(layered.report().is_compatible());
        assert!(layered.report().integral_u_in.abs() < 1e-10);
    }
}
