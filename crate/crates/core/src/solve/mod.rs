//! Steady Neumann solves, theta-scheme time marching, the smallest nonzero
//! generalized eigenpairs and the fits run on their output.

mod eigen;
mod fit;
mod parabolic;
mod steady;

pub use eigen::{eigen_smallest, rayleigh_quotient, EigenOptions, EigenResult};
pub use fit::{detect_plateau, discrete_h1_norm, fit_decay, fit_log_linear, DecayFit, FitWindow, Plateau};
pub use parabolic::{step_parabolic, MarchOptions, SnapshotMode, ThetaStepper, TimeSeries};
pub use steady::{solve_steady, weighted_mean, SteadySolution};
