//! Multi-robot trajectory planning for coupled Signal Temporal Logic tasks.
//!
//! Robots build piecewise-linear trajectories by sampling time instants and
//! solving a small feasibility problem at each instant with gradient descent,
//! exchanging states only with the robots they share predicates with. An
//! independent robustness monitor checks the result.

pub mod cost;
pub mod descent;
pub mod expr;
pub mod formula;
pub mod monitor;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod swarm;
pub mod trajectory;
pub mod validity;

pub use cost::{Predicate, PredicateId};
pub use expr::{Expr, RobotId};
pub use formula::{parse, time_horizon, to_pnf, Formula, Interval};
pub use monitor::{robustness, satisfies, RobustnessReport, Trace};
pub use planner::{PlanError, PlanOutcome, PlannerParams, Problem, RobotSpec, RobotTree, Vertex};
pub use scenario::Scenario;
pub use swarm::{CommGraph, Runtime};
pub use trajectory::TrajectoryFile;
