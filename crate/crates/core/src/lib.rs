//! Dual HJB variational-inequality solver for optimal proportional
//! insurance under compound-Poisson claims.

pub mod cli;
pub mod error;
pub mod grid;
pub mod howard;
pub mod model;
pub mod policy;
pub mod scheme;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::Grid;
pub use howard::{solve_backward, solve_time_step, DiscreteSolution, Region, SolverSettings};
pub use model::ModelParams;
pub use policy::{evolve_path, find_initial_state, sde_residual, InitialSearch, PolicyPath};
pub use scheme::{ControlSet, JumpRule, Scheme};
pub use simulate::{integrate_primal, poisson_schedule, ClaimSchedule};
