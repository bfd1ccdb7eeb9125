//! `heatcloak`: command-line front end for the benches.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatcloak::bench::{
    self, export_coefficient_profiles, run_change_of_variables_check, run_decay_suite, run_eigen_table,
    run_gap_experiment, run_layered, run_simulation, write_change_of_variables_outputs, write_decay_outputs,
    write_eigen_outputs, write_gap_outputs, write_layered_outputs, write_profiles_csv, write_simulation_outputs,
    Preset, Recipe, Scenario,
};
use heatcloak::solve::EigenOptions;
use heatcloak::{Error, Result};

#[derive(Parser)]
#[command(name = "heatcloak", version, about = "Transient thermal near-cloaking experiments")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the annulus coefficient profiles (A11, 1/A11, rho2d, B3d) against r'.
    Coeffs {
        #[command(flatten)]
        common: Common,
        /// Radii per eps, uniformly spaced on [1, 2].
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Tabulate the first nonzero eigenvalue of the homogeneous and defect problems.
    Eigen {
        #[command(flatten)]
        common: Common,
        /// Space dimension (1, 2 or 3); overrides the scenario.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// March one recipe to equilibrium and fit its decay rate.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Coefficient recipe; `defect` also runs the homogeneous reference on the same grid.
        #[arg(long)]
        recipe: Option<String>,
    },
    /// Boundary gap between the homogeneous and defect problems over an eps sweep.
    Cloakgap {
        #[command(flatten)]
        common: Common,
    },
    /// Homogeneous versus layered-cloak runs, periodic in x1.
    Layered {
        #[command(flatten)]
        common: Common,
    },
    /// Boundary traces of the defect and push-forward cloak runs under refinement.
    Checkmap {
        #[command(flatten)]
        common: Common,
        /// Refinement levels; each halves cell sizes and the time step.
        #[arg(long, default_value_t = 2)]
        levels: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); values override the preset.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Preset used when no scenario file is given (paper-2d, layered-fig2, decay-2d).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, env = "HEATCLOAK_OUT", default_value = "heatcloak-out")]
    out: PathBuf,
    /// Comma-separated eps list, e.g. 1e-1,1e-2.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Cells across the inclusion diameter.
    #[arg(long)]
    n_defect: Option<usize>,
    /// Cells across the box at bulk resolution.
    #[arg(long)]
    n_bulk: Option<usize>,
    /// Largest ratio between neighbouring cell widths.
    #[arg(long)]
    growth: Option<f64>,
    /// Cap on cells per axis.
    #[arg(long)]
    max_cells: Option<usize>,
    /// Time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Theta of the one-step scheme (1 backward Euler, 0.5 Crank-Nicolson).
    #[arg(long)]
    theta: Option<f64>,
    /// Validate the scenario and grid budget, then exit without computing.
    #[arg(long)]
    dry_run: bool,
}

impl Common {
    fn scenario(&self, default: Preset) -> Result<Scenario> {
        let mut s = match (&self.scenario, &self.preset) {
            (Some(path), None) => Scenario::from_file(path)?,
            (None, p) => Scenario::preset(p.as_deref().map(Preset::parse).transpose()?.unwrap_or(default)),
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either --scenario or --preset, not both".into()));
            }
        };
        if let Some(e) = &self.eps {
            s.eps = e.clone();
        }
        if let Some(v) = self.n_defect {
            s.grid.n_defect = v;
        }
        if let Some(v) = self.n_bulk {
            s.grid.n_bulk = v;
        }
        if let Some(v) = self.growth {
            s.grid.growth = v;
        }
        if let Some(v) = self.max_cells {
            s.grid.max_cells_per_axis = v;
        }
        if let Some(v) = self.dt {
            s.time.dt = v;
        }
        if let Some(v) = self.t_final {
            s.time.t_final = v;
        }
        if let Some(v) = self.theta {
            s.time.theta = v;
        }
        s.validate()?;
        Ok(s)
    }

    fn prepare(&self, s: &Scenario) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(self.out.join("scenario.toml"), s.to_toml_string()?)?;
        Ok(())
    }
}

/// Builds every grid the command would use, so budget errors surface without computing.
fn check_grids(s: &Scenario, recipes: &[Recipe]) -> Result<()> {
    for &eps in &s.eps {
        for &r in recipes {
            let g = bench::grid_for(s, r, eps)?;
            log::info!("grid for {r:?} at eps = {eps:e}: {} dofs", g.n_dofs());
        }
    }
    s.problem_data()?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Coeffs { common, points } => {
            let s = common.scenario(Preset::Paper2d)?;
            let profiles = export_coefficient_profiles(&s.eps, points)?;
            if common.dry_run {
                return Ok(());
            }
            common.prepare(&s)?;
            write_profiles_csv(&common.out.join("coefficient_profiles.csv"), &profiles)
        }
        Command::Eigen { common, dim } => {
            let mut s = common.scenario(Preset::Decay2d)?;
            if let Some(d) = dim {
                s.dim = d;
                s.validate()?;
            }
            if common.dry_run {
                return Ok(());
            }
            common.prepare(&s)?;
            let table = run_eigen_table(s.dim, &s.eps, &s.material, &s.grid, &EigenOptions::default())?;
            for r in &table.rows {
                if let Some(e) = &r.error {
                    log::error!("eigen row eps = {:e} failed: {e}", r.eps);
                }
            }
            write_eigen_outputs(&common.out, &table)
        }
        Command::Simulate { common, recipe } => {
            let mut s = common.scenario(Preset::Decay2d)?;
            if let Some(r) = recipe {
                s.recipe = Recipe::parse(&r)?;
                s.validate()?;
            }
            check_grids(&s, &[s.recipe])?;
            if common.dry_run {
                return Ok(());
            }
            common.prepare(&s)?;
            if s.recipe == Recipe::Defect {
                let report = run_decay_suite(&s)?;
                write_decay_outputs(&common.out, &report)
            } else {
                let runs = s
                    .eps
                    .iter()
                    .map(|&e| run_simulation(&s, s.recipe, e))
                    .collect::<Result<Vec<_>>>()?;
                write_simulation_outputs(&common.out, &runs)
            }
        }
        Command::Cloakgap { common } => {
            let s = common.scenario(Preset::Paper2d)?;
            check_grids(&s, &[Recipe::Defect])?;
            if common.dry_run {
                return Ok(());
            }
            common.prepare(&s)?;
            let summary = run_gap_experiment(&s, &s.eps)?;
            write_gap_outputs(&common.out, &summary)
        }
        Command::Layered { common } => {
            let s = common.scenario(Preset::LayeredFig2)?;
            check_grids(&s, &[Recipe::LayeredCloak])?;
            if common.dry_run {
                return Ok(());
            }
            common.prepare(&s)?;
            let report = run_layered(&s, &s.eps)?;
            write_layered_outputs(&common.out, &report)
        }
        Command::Checkmap { common, levels } => {
            let s = common.scenario(Preset::Paper2d)?;
            let mut fine = s.clone();
            for _ in 1..levels.max(1) {
                fine.grid = fine.grid.refined();
            }
            check_grids(&fine, &[Recipe::Defect])?;
            if common.dry_run {
                return Ok(());
            }
            common.prepare(&s)?;
            let report = run_change_of_variables_check(&s, s.eps[0], levels)?;
            write_change_of_variables_outputs(&common.out, &report)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InfeasibleGrid { .. } => 4,
        e if e.is_numerical() => 3,
        Error::Config(_) | Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => 2,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        2 => "config",
        3 => "numerical",
        4 => "infeasible-budget",
        _ => "io",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let record = serde_json::json!({
                "error": error_kind(&e),
                "exit_code": code,
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
