//! Backend-agnostic MILP/LP solving.
//!
//! The only backend compiled in is HiGHS. Each call builds a fresh HiGHS
//! instance, so a [`HighsSolver`] value carries configuration only and can be
//! cloned into worker threads.

use std::time::Instant;

use highs::{Col, HighsModelStatus, HighsSolutionStatus, RowProblem, Sense as HSense};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Assignment, MipModel, ModelError, Sense, VarKind};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver backend `{0}` is not available (compiled backends: highs)")]
    BackendUnavailable(String),
    #[error("malformed model: {0}")]
    MalformedModel(#[from] ModelError),
    #[error("backend failure: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveParams {
    pub time_limit_s: f64,
    pub mip_gap_tol: f64,
    pub threads: u32,
    pub relax_integrality: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { time_limit_s: 3600.0, mip_gap_tol: 1e-6, threads: 1, relax_integrality: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    TimeLimit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible | SolveStatus::TimeLimit)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub bound: f64,
    pub assignment: Assignment,
    pub wall_time_s: f64,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

pub trait MilpSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, model: &MipModel, params: &SolveParams) -> Result<SolveResult, SolverError>;

    fn solve_lp_relaxation(&self, model: &MipModel, params: &SolveParams) -> Result<SolveResult, SolverError> {
        let params = SolveParams { relax_integrality: true, ..params.clone() };
        self.solve(model, &params)
    }
}

/// Resolves the `solver.backend` configuration key.
pub fn backend_from_name(name: &str) -> Result<Box<dyn MilpSolver>, SolverError> {
    match name.to_ascii_lowercase().as_str() {
        "highs" | "" => Ok(Box::new(HighsSolver)),
        other => Err(SolverError::BackendUnavailable(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HighsSolver;

impl MilpSolver for HighsSolver {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MipModel, params: &SolveParams) -> Result<SolveResult, SolverError> {
        model.validate()?;
        let start = Instant::now();
        let constant = model.objective.constant;

        if model.vars.is_empty() {
            return Ok(trivial_result(model, constant, start));
        }

        let mut costs = vec![0.0; model.vars.len()];
        for &(v, c) in &model.objective.terms {
            costs[v.0] += c;
        }
        let mut pb = RowProblem::default();
        let mut has_int = false;
        let cols: Vec<Col> = model
            .vars
            .iter()
            .map(|v| {
                let integral = v.kind != VarKind::Continuous && !params.relax_integrality;
                has_int |= integral;
                pb.add_column_with_integrality(costs[v.id.0], v.lower..=v.upper, integral)
            })
            .collect();
        for row in &model.rows {
            let rhs = row.rhs - row.expr.constant;
            let e = row.expr.normalized();
            let factors: Vec<(Col, f64)> = e.terms.iter().map(|&(v, c)| (cols[v.0], c)).collect();
            match row.sense {
                Sense::Le => pb.add_row(..=rhs, &factors),
                Sense::Ge => pb.add_row(rhs.., &factors),
                Sense::Eq => pb.add_row(rhs..=rhs, &factors),
            }
        }

        let mut m = pb.optimise(HSense::Minimise);
        m.make_quiet();
        m.set_option("time_limit", params.time_limit_s);
        m.set_option("mip_rel_gap", params.mip_gap_tol);
        m.set_option("threads", params.threads.max(1) as i32);
        m.set_option("random_seed", 0);
        let solved = m.try_solve().map_err(|s| SolverError::Backend(format!("{s:?}")))?;
        let wall_time_s = start.elapsed().as_secs_f64();

        let raw = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let status = match raw {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit => SolveStatus::TimeLimit,
            HighsModelStatus::ModelEmpty => return Ok(trivial_result(model, constant, start)),
            HighsModelStatus::ObjectiveBound
            | HighsModelStatus::ObjectiveTarget
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit
                if has_primal =>
            {
                SolveStatus::Feasible
            }
            other => return Err(SolverError::Backend(format!("unexpected model status {other:?}"))),
        };

        if !status.has_solution() || (status == SolveStatus::TimeLimit && !has_primal) {
            let objective = if status == SolveStatus::Unbounded { f64::NEG_INFINITY } else { f64::INFINITY };
            return Ok(SolveResult { status, objective, bound: f64::NEG_INFINITY, assignment: Assignment::new(), wall_time_s });
        }

        let objective = solved.objective_value() + constant;
        let bound = if has_int {
            solved.double_info_value(c"mip_dual_bound").map(|b| b + constant).unwrap_or(f64::NEG_INFINITY)
        } else if status == SolveStatus::Optimal {
            objective
        } else {
            f64::NEG_INFINITY
        };
        let assignment = Assignment::from_dense(solved.get_solution().columns());
        Ok(SolveResult { status, objective, bound, assignment, wall_time_s })
    }
}

fn trivial_result(model: &MipModel, constant: f64, start: Instant) -> SolveResult {
    // No rows: each variable sits at whichever bound is cheaper.
    let mut values = Vec::with_capacity(model.vars.len());
    let mut objective = constant;
    for v in &model.vars {
        let c: f64 = model.objective.terms.iter().filter(|t| t.0 == v.id).map(|t| t.1).sum();
        let x = if c > 0.0 {
            v.lower
        } else if c < 0.0 {
            v.upper
        } else if v.lower.is_finite() {
            v.lower
        } else if v.upper.is_finite() {
            v.upper
        } else {
            0.0
        };
        objective += c * x;
        values.push(x);
    }
    let status = if objective.is_finite() { SolveStatus::Optimal } else { SolveStatus::Unbounded };
    SolveResult { status, objective, bound: objective, assignment: Assignment::from_dense(&values), wall_time_s: start.elapsed().as_secs_f64() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_feasible, LinearExpr};

    fn solver() -> HighsSolver {
        HighsSolver
    }

    #[test]
    fn continuous_lower_bound() {
        let mut m = MipModel::new();
        let x = m.add_continuous(f64::NEG_INFINITY, f64::INFINITY, "x");
        m.objective = LinearExpr::var(x);
        m.add_constraint(LinearExpr::var(x), Sense::Ge, 3.0);
        let r = solver().solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-9);
        assert!(check_feasible(&m, &r.assignment, 1e-5).is_empty());
    }

    #[test]
    fn binary_maximization_via_negation() {
        let mut m = MipModel::new();
        let x = m.add_binary("x");
        m.objective = LinearExpr::term(x, -1.0);
        m.add_constraint(LinearExpr::var(x), Sense::Le, 1.0);
        let r = solver().solve(&m, &SolveParams::default()).unwrap();
        assert!((r.objective + 1.0).abs() < 1e-9);
        assert!((r.assignment.get(x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let mut m = MipModel::new();
        let x = m.add_continuous(f64::NEG_INFINITY, f64::INFINITY, "x");
        m.add_constraint(LinearExpr::var(x), Sense::Ge, 1.0);
        m.add_constraint(LinearExpr::var(x), Sense::Le, 0.0);
        let r = solver().solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        let lp = solver().solve_lp_relaxation(&m, &SolveParams::default()).unwrap();
        assert_eq!(lp.status, SolveStatus::Infeasible);
    }

    #[test]
    fn relaxation_examples() {
        let mut m = MipModel::new();
        let x = m.add_binary("x");
        m.objective = LinearExpr::var(x);
        m.add_constraint(LinearExpr::var(x), Sense::Ge, 0.4);
        let lp = solver().solve_lp_relaxation(&m, &SolveParams::default()).unwrap();
        assert!((lp.objective - 0.4).abs() < 1e-9);
        let mip = solver().solve(&m, &SolveParams::default()).unwrap();
        assert!((mip.objective - 1.0).abs() < 1e-9);
        assert!(lp.objective <= mip.objective + 1e-9);

        let mut pure = MipModel::new();
        let y = pure.add_continuous(0.0, 5.0, "y");
        pure.objective = LinearExpr::term(y, -2.0);
        let a = solver().solve(&pure, &SolveParams::default()).unwrap();
        let b = solver().solve_lp_relaxation(&pure, &SolveParams::default()).unwrap();
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn empty_model_and_constant_objective() {
        let mut m = MipModel::new();
        m.objective = LinearExpr::constant(4.5);
        let r = solver().solve(&m, &SolveParams::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 4.5);
    }

    #[test]
    fn unknown_backend_rejected() {
        assert!(matches!(backend_from_name("gurobi"), Err(SolverError::BackendUnavailable(_))));
        assert_eq!(backend_from_name("HiGHS").unwrap().name(), "highs");
    }

    #[test]
    fn deterministic_objective() {
        let mut m = MipModel::new();
        let xs: Vec<_> = (0..8).map(|i| m.add_binary(format!("x{i}"))).collect();
        let mut cap = LinearExpr::new();
        let mut obj = LinearExpr::new();
        for (i, &x) in xs.iter().enumerate() {
            cap.add_term(x, 1.0 + i as f64 * 0.7);
            obj.add_term(x, -(2.0 + (i * i % 5) as f64));
        }
        m.add_constraint(cap, Sense::Le, 9.0);
        m.objective = obj;
        let a = solver().solve(&m, &SolveParams::default()).unwrap();
        let b = solver().solve(&m, &SolveParams::default()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
        assert!((a.objective - a.bound).abs() <= 1e-6 * a.objective.abs().max(1.0));
    }
}
