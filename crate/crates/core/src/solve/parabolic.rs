use std::sync::Arc;

use crate::linalg::{LinearSolver, SolverPolicy, SparseMatrix};
use crate::{Error, Result};

/// Which part of the state a [`TimeSeries`] keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotMode {
    Full,
    /// Only the listed DOFs (e.g. the boundary nodes), in the given order.
    Subset(Arc<Vec<usize>>),
}

/// Time grid and integrator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MarchOptions {
    pub dt: f64,
    pub t_final: f64,
    /// `1` is backward Euler, `1/2` Crank-Nicolson.
    pub theta: f64,
    /// Keep every `save_every`-th step (the initial state is always kept).
    pub save_every: usize,
    pub snapshots: SnapshotMode,
    pub policy: SolverPolicy,
}

impl MarchOptions {
    pub fn new(dt: f64, t_final: f64, theta: f64) -> Self {
        Self {
            dt,
            t_final,
            theta,
            save_every: 1,
            snapshots: SnapshotMode::Full,
            policy: SolverPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.5 && self.theta <= 1.0) {
            return Err(Error::invalid(format!("theta must lie in [0.5, 1], got {}", self.theta)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid(format!("final time must be positive, got {}", self.t_final)));
        }
        if self.save_every == 0 {
            return Err(Error::invalid("save_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps, `round(t_final / dt)` and at least one.
    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }
}

/// Saved states of a march.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// Step size taken to reach each saved time (0 for the initial state).
    pub step_sizes: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// One theta step `(M + theta dt K) u' = (M - (1 - theta) dt K) u + dt l`
/// with the left matrix factored once.
#[derive(Debug)]
pub struct ThetaStepper {
    solver: LinearSolver,
    explicit: SparseMatrix,
    load: Vec<f64>,
    dt: f64,
    steps: usize,
}

impl ThetaStepper {
    pub fn new(m: &SparseMatrix, k: &SparseMatrix, loads: &[f64], opts: &MarchOptions) -> Result<Self> {
        opts.validate()?;
        if m.dim() != k.dim() || loads.len() != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                got: if k.dim() != m.dim() { k.dim() } else { loads.len() },
            });
        }
        let (th, dt) = (opts.theta, opts.dt);
        let lhs = m.linear_combination(1.0, k, th * dt)?;
        let explicit = m.linear_combination(1.0, k, -(1.0 - th) * dt)?;
        Ok(Self {
            solver: LinearSolver::new(&lhs, opts.policy)?,
            explicit,
            load: loads.iter().map(|l| dt * l).collect(),
            dt,
            steps: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `u` in place by one step.
    pub fn step(&mut self, u: &mut [f64]) -> Result<()> {
        let mut rhs = self.explicit.matvec(u);
        for (r, l) in rhs.iter_mut().zip(&self.load) {
            *r += l;
        }
        self.steps += 1;
        let next = self
            .solver
            .solve_from(&rhs, u)
            .map_err(|e| Error::StepFailure {
                step: self.steps,
                source: Box::new(e),
            })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure {
                step: self.steps,
                source: Box::new(Error::Singular("non-finite state".into())),
            });
        }
        u.copy_from_slice(&next);
        Ok(())
    }
}

/// Marches `M u' + K u = loads` from `u0` and records snapshots.
///
/// `observer(step, t, u)` runs after every step (and for step 0) on the full
/// state, so quantities can be tracked without storing full snapshots.
pub fn step_parabolic(
    m: &SparseMatrix,
    k: &SparseMatrix,
    loads: &[f64],
    u0: &[f64],
    opts: &MarchOptions,
    mut observer: impl FnMut(usize, f64, &[f64]) -> Result<()>,
) -> Result<TimeSeries> {
    let mut stepper = ThetaStepper::new(m, k, loads, opts)?;
    if u0.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: u0.len(),
        });
    }
    let keep = |u: &[f64]| match &opts.snapshots {
        SnapshotMode::Full => u.to_vec(),
        SnapshotMode::Subset(idx) => idx.iter().map(|&i| u[i]).collect(),
    };
    let mut u = u0.to_vec();
    let mut series = TimeSeries {
        times: vec![0.0],
        snapshots: vec![keep(&u)],
        step_sizes: vec![0.0],
    };
    observer(0, 0.0, &u)?;
    let n = opts.n_steps();
    for s in 1..=n {
        stepper.step(&mut u)?;
        let t = s as f64 * opts.dt;
        observer(s, t, &u)?;
        if s % opts.save_every == 0 || s == n {
            series.times.push(t);
            series.snapshots.push(keep(&u));
            series.step_sizes.push(opts.dt);
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_system, AssemblyOptions, Grid};
    use crate::solve::{eigen_smallest, EigenOptions};
    use crate::xform::CoefficientField;
    use std::f64::consts::PI;

    fn system(n: usize) -> (Grid<2>, SparseMatrix, SparseMatrix) {
        let g = Grid::<2>::uniform(n, 3.0, [false, false]).unwrap();
        let (k, m) = assemble_system(&g, &CoefficientField::homogeneous(), &AssemblyOptions::default()).unwrap();
        (g, k, m)
    }

    #[test]
    fn constants_are_stationary() {
        let (g, k, m) = system(8);
        let s = step_parabolic(&m, &k, &vec![0.0; g.n_dofs()], &vec![3.0; g.n_dofs()], &MarchOptions::new(0.1, 1.0, 1.0), |_, _, _| Ok(())).unwrap();
        for snap in &s.snapshots {
            assert!(snap.iter().all(|v| (v - 3.0).abs() < 1e-12));
        }
        assert_eq!(s.times.len(), 11);
        assert!(s.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn discrete_eigenmode_decays_by_exact_factor() {
        let (_, k, m) = system(16);
        let e = eigen_smallest(&k, &m, 1, &EigenOptions::default()).unwrap();
        let (mu, phi) = (e.values[0], e.vectors[0].clone());
        let dt = 0.05;
        let s = step_parabolic(&m, &k, &vec![0.0; phi.len()], &phi, &MarchOptions::new(dt, 0.5, 1.0), |_, _, _| Ok(())).unwrap();
        let factor = 1.0 / (1.0 + dt * mu);
        for (n, snap) in s.snapshots.iter().enumerate() {
            let expected = factor.powi(n as i32);
            let err = snap.iter().zip(&phi).fold(0.0f64, |e, (a, b)| e.max((a - expected * b).abs()));
            assert!(err < 1e-8, "step {n}: {err}");
        }
    }

    #[test]
    fn weighted_mean_and_energy() {
        let (g, k, m) = system(12);
        let u0 = g.interpolate(|x| (PI * x[0] / 3.0).sin() + x[1] * x[1]);
        let ones = vec![1.0; g.n_dofs()];
        let mean0 = m.bilinear(&ones, &u0);
        for theta in [1.0, 0.5] {
            let mut prev = f64::INFINITY;
            step_parabolic(&m, &k, &vec![0.0; g.n_dofs()], &u0, &MarchOptions::new(0.05, 2.0, theta), |_, _, u| {
                let mean = m.bilinear(&ones, u);
                assert!((mean - mean0).abs() <= 1e-11 * mean0.abs());
                let energy = k.quad_form(u);
                if theta == 1.0 {
                    assert!(energy <= prev * (1.0 + 1e-14));
                }
                prev = energy;
                Ok(())
            })
            .unwrap();
        }
    }

    #[test]
    fn subset_snapshots_and_save_every() {
        let (g, k, m) = system(4);
        let mut opts = MarchOptions::new(0.1, 1.0, 1.0);
        opts.save_every = 4;
        opts.snapshots = SnapshotMode::Subset(Arc::new(vec![0, 3]));
        let u0 = g.interpolate(|x| x[0]);
        let s = step_parabolic(&m, &k, &vec![0.0; g.n_dofs()], &u0, &opts, |_, _, _| Ok(())).unwrap();
        assert_eq!(s.times.len(), 4);
        assert_eq!(s.snapshots[0], vec![-3.0, 1.5]);
        assert!(s.snapshots.iter().all(|v| v.len() == 2));
        assert!((s.times[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_theta() {
        let (g, k, m) = system(4);
        let n = g.n_dofs();
        assert!(step_parabolic(&m, &k, &vec![0.0; n], &vec![0.0; n], &MarchOptions::new(0.1, 1.0, 0.3), |_, _, _| Ok(())).is_err());
    }
}
