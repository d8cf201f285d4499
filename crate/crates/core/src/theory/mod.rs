//! Executable forms of the convergence analysis: the linear-regression
//! SG dynamical system with line-search learning rates, the new-critical
//! point counterexample, and the ε-tracking hypothesis monitor.

mod critical;
mod theorem1;
mod tracking;

pub use critical::{critical_point_demo, CriticalPointConfig, CriticalPointRow, CriticalPointState, CriticalPointVerdict, CRITICAL_POINT_DATA};
pub use theorem1::{
    theorem1_init, theorem1_problem, theorem1_run, theorem1_step, write_trajectory_csv, ReducedStep, StepReport,
    Theorem1Run, Theorem1State, TrajectoryRow, MAX_HALVINGS,
};
pub use tracking::{eps_tracking_check, TrackingReport};
