//! Stochastic MPC for linear systems with independent non-Gaussian
//! disturbances.
//!
//! Inputs follow an affine disturbance-feedback law, so every predicted
//! output and input is affine in the disturbances and each bound becomes an
//! [`AffineChanceConstraint`](cfcc_core::AffineChanceConstraint) evaluated by
//! characteristic-function inversion. The expected cost is quadratic in the
//! decision vector. [`solver::solve`] is an augmented-Lagrangian method, and
//! [`simulate`] runs the receding-horizon loop.

mod error;
pub mod prediction;
pub mod problem;
pub mod reservoir;
pub mod simulate;
pub mod solver;
pub mod system;

pub use error::{Error, Result};
pub use reservoir::ReservoirParams;
pub use prediction::{build_prediction, AffineRow, FeedbackPolicy, PredictionModel};
pub use problem::{compile_chance_constraints, expected_cost, CompiledConstraints, ConstraintKind, ExpectedCost, Levels, SmpcProblem};
pub use simulate::{closed_loop_simulate, closed_loop_with, plan, Plan, SimulationTrace, StepRecord, StepStatus};
pub use solver::{solve, Diagnostics, HardBound, Objective, SolveStatus, Solution, SolverOptions};
pub use system::LinearSystem;
