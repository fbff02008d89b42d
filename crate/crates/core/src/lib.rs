//! Deterministic finite-volume solver for continuous coagulation dynamics in
//! conservative mass-flux form, with numerical verifiers for the moment
//! identities, mass-conservation and gelation growth conditions, a gelation
//! detector, and an independent stochastic-coalescent oracle.
//!
//! The solver advances cell averages of the conservative variable g = x u on
//! a truncated graded mesh; interior fluxes telescope so mass bookkeeping is
//! exact per step. Everything downstream (moment checks, condition fits,
//! gel detection) consumes the recorded trajectories.

pub mod coalescent;
pub mod conditions;
pub mod config;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod gelation;
pub mod kernels;
pub mod mesh;
pub mod moments;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod weights;

pub use conditions::{classify, Classification, ClassifyOutcome};
pub use config::{load_config, preset, SimConfig};
pub use error::{Error, Result};
pub use gelation::{detect, gel_time_bound, r_sweep, GelReport, GelVerdict};
pub use kernels::{gelling_kernel, growth_ratio, KernelSpec};
pub use mesh::{build_mesh, project_initial, InitialCondition, Mesh};
pub use moments::{truncated_moment, MomentSeries};
pub use report::{ConditionId, ConditionReport, Verdict};
pub use solver::{run, RunSetup, Solver, State, TimeGrid, Trajectory};
pub use weights::{eval_weight, WeightSpec, WeightTag};
