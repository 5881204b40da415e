//! Two-stage stochastic MIPs with decision-dependent uncertainty, solved by
//! transforming endogenous random elements into exogenous ones and applying
//! sample average approximation.

pub mod instance_gen;
pub mod model;
pub mod ndfpp;
pub mod rng;
pub mod saa;
pub mod solver;
pub mod stats;
pub mod transforms;

pub use model::{check_feasible, evaluate_expr, Assignment, ConstraintRow, LinearExpr, MipModel, Sense, VarId, VarKind, VarSpec};
pub use ndfpp::{Decision, NdfppInstance, NdfppSaa, NdfppScenario, Variant};
pub use rng::{RngStream, StreamId};
pub use saa::{run_saa, SaaConfig, SaaProblem, SaaReport};
pub use solver::{HighsSolver, MilpSolver, SolveParams, SolveResult, SolveStatus};
pub use transforms::{EndogenousSpec, ExogenousSample, TransformEmission};
