//! Multistage attacker-defender connectivity game over a hierarchical
//! sensor network, solved by feedback Stackelberg equilibrium.

pub mod connectivity;
pub mod error;
pub mod netmodel;
pub mod oracles;
pub mod fse;
pub mod harness;
pub mod lp;
pub mod payoffs;

pub use error::{GameError, Result};
pub use fse::{simulate, solve_stackelberg, Mode, Solver, SolverOptions, StageGame, StagePolicy};
pub use lp::{solve_lp, zero_variable_test, LinearProgram, LpSolution, LpStatus};
pub use netmodel::{Action, GameConfig, NetworkState};
pub use harness::{generate_instance, run_scenario, ExperimentConfig, MetricsRow, Scenario};
