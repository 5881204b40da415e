use serde::{Deserialize, Serialize};

use super::{
    binomial_phi_expr, build_first_stage, build_second_stage, estimate_solution_value, evaluate_solution_exact, normal_mean_expr, BuiltModel, Decision,
    NdfppError, NdfppInstance, Variant,
};
use crate::model::{LinearExpr, MipModel, Sense};
use crate::solver::{MilpSolver, SolveParams};
use crate::transforms::mccormick_product;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvOptions {
    /// Multiply the Normal-variant mean capacity by `ν̄`. The Normal capacity
    /// is already in capacity units, so `false` is the dimensionally
    /// consistent reading; `true` follows the mean-value model as printed.
    pub normal_scale_by_nu_bar: bool,
    /// Evaluation sample size for the Normal variant.
    pub n_prime: usize,
    pub seed: u64,
}

impl Default for EvOptions {
    fn default() -> Self {
        Self { normal_scale_by_nu_bar: true, n_prime: 10_000, seed: 0 }
    }
}

/// Mean-value problem: one recourse copy with capacity `ξ̄_x^f`.
pub fn build_ev(inst: &NdfppInstance, variant: Variant, opts: &EvOptions) -> Result<BuiltModel, NdfppError> {
    let mut model = MipModel::new();
    let first = build_first_stage(inst, &mut model);
    let nd = inst.num_events();
    let probs = inst.event_probabilities();
    let caps: Vec<LinearExpr> = (0..inst.num_facilities())
        .map(|f| -> Result<LinearExpr, NdfppError> {
            let mut cap = LinearExpr::new();
            match variant {
                Variant::Selection => {
                    for (p, &x) in first.x[f].iter().enumerate() {
                        let zeta: f64 = (0..nd).map(|d| probs[d] * inst.max_capacity() * inst.params.phi_bar[d][f][p]).sum();
                        cap.add_term(x, zeta);
                    }
                }
                Variant::Binomial => {
                    for d in 0..nd {
                        cap.add_scaled(&binomial_phi_expr(inst, &first, d, f), probs[d] * inst.max_capacity());
                    }
                }
                Variant::Discrete => {
                    for d in 0..nd {
                        let mean = discrete_mean_var(inst, &mut model, &first, d, f)?;
                        cap.add_term(mean, probs[d]);
                    }
                }
                Variant::Normal => {
                    let s = if opts.normal_scale_by_nu_bar { inst.nu_bar } else { 1.0 };
                    for d in 0..nd {
                        cap.add_scaled(&normal_mean_expr(inst, &first, d, f), probs[d] * s);
                    }
                }
            }
            Ok(cap)
        })
        .collect::<Result<_, _>>()?;
    build_second_stage(inst, &mut model, &first, &caps, 1.0, "ev");
    Ok(BuiltModel { model, first, degenerate: 0 })
}

/// `φ_f^d = Σ_w ν_w u_w(x) / Σ_w u_w(x)` as a variable, via
/// `Σ_{i,p} (Σ_w ũ) g_{ip} = Σ_{i,p} (Σ_w ν_w ũ) x_i^p` with `g_{ip} = φ·x_i^p`.
fn discrete_mean_var(inst: &NdfppInstance, model: &mut MipModel, first: &super::FirstStage, d: usize, f: usize) -> Result<crate::model::VarId, NdfppError> {
    let ub = inst.max_capacity();
    let phi = model.add_continuous(0.0, ub, format!("ev.phi[{d}][{f}]"));
    let mut row = LinearExpr::new();
    for (i, xs) in first.x.iter().enumerate() {
        for (p, &x) in xs.iter().enumerate() {
            let u = &inst.params.u_tilde[d][f][i][p];
            let total: f64 = u.iter().sum();
            let weighted: f64 = u.iter().enumerate().map(|(w, v)| inst.capacity_of_level(w as u32) * v).sum();
            if ub > 0.0 {
                let g = mccormick_product(model, x, phi, ub, &format!("ev.g[{d}][{f}][{i}][{p}]"))?;
                row.add_scaled(&g.value_expr, total);
            }
            row.add_term(x, -weighted);
        }
    }
    model.add_constraint(row, Sense::Eq, 0.0);
    Ok(phi)
}

/// `v(x)`: exact for enumerable variants, an `N′`-sample estimate otherwise.
pub fn solution_value(inst: &NdfppInstance, variant: Variant, decision: &Decision, opts: &EvOptions) -> Result<f64, NdfppError> {
    if variant.is_enumerable() {
        evaluate_solution_exact(inst, variant, decision)
    } else {
        Ok(estimate_solution_value(inst, variant, decision, opts.seed, opts.n_prime)?.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvResult {
    pub ev_objective: f64,
    pub x_hat: Decision,
    pub eev: f64,
}

/// Solves the EV problem and evaluates its solution under the true law.
pub fn compute_eev(inst: &NdfppInstance, variant: Variant, solver: &dyn MilpSolver, params: &SolveParams, opts: &EvOptions) -> Result<EvResult, NdfppError> {
    let b = build_ev(inst, variant, opts)?;
    let r = solver.solve(&b.model, params)?;
    if !r.status.has_solution() {
        return Err(NdfppError::NoSolution(format!("EV problem ended with status {:?}", r.status)));
    }
    let x_hat = Decision::from_assignment(inst, &r.assignment.restrict(&b.first.all_vars(), true))?;
    let eev = solution_value(inst, variant, &x_hat, opts)?;
    Ok(EvResult { ev_objective: r.objective, x_hat, eev })
}

/// Relative value of the stochastic solution, `(EEV − v(x̄)) / EEV`.
pub fn vss_ratio(eev: f64, v_x_bar: f64) -> f64 {
    if eev == 0.0 {
        0.0
    } else {
        (eev - v_x_bar) / eev
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VssResult {
    pub eev: f64,
    pub v_x_bar: f64,
    pub vss: f64,
}

/// VSS of `x_bar` against the EV solution `x_hat`.
pub fn compute_vss(inst: &NdfppInstance, variant: Variant, x_hat: &Decision, x_bar: &Decision, opts: &EvOptions) -> Result<VssResult, NdfppError> {
    let eev = solution_value(inst, variant, x_hat, opts)?;
    let v_x_bar = solution_value(inst, variant, x_bar, opts)?;
    Ok(VssResult { eev, v_x_bar, vss: vss_ratio(eev, v_x_bar) })
}
