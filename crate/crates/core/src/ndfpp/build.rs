use std::collections::BTreeMap;

use log::debug;

use super::{protection_combos, Decision, NdfppError, NdfppInstance, NdfppScenario, Variant};
use crate::model::{LinearExpr, MipModel, Sense, VarId};
use crate::transforms::{emit_binomial_convolution, emit_selection, mccormick_product, ExogenousSample, TransformEmission};

/// First-stage variable ids; see the module docs for the fixed layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStage {
    /// `x[f][p]`.
    pub x: Vec<Vec<VarId>>,
    pub z: Vec<VarId>,
}

impl FirstStage {
    pub fn all_vars(&self) -> Vec<VarId> {
        self.x.iter().flatten().chain(&self.z).copied().collect()
    }
}

/// Binaries `x_f^p`, `z_e`; one protection per facility; budget row.
/// Must be called on an empty model.
pub fn build_first_stage(inst: &NdfppInstance, model: &mut MipModel) -> FirstStage {
    assert!(model.vars.is_empty(), "first stage must own the leading variable ids");
    let x: Vec<Vec<VarId>> = (0..inst.num_facilities())
        .map(|f| (0..inst.num_protections()).map(|p| model.add_binary(format!("x[{f}][{p}]"))).collect())
        .collect();
    let z: Vec<VarId> = (0..inst.edges.len()).map(|e| model.add_binary(format!("z[{e}]"))).collect();
    for (f, xs) in x.iter().enumerate() {
        let mut e = LinearExpr::new();
        xs.iter().for_each(|&v| {
            e.add_term(v, 1.0);
        });
        model.add_constraint(e, Sense::Eq, 1.0);
        model.rows.last_mut().expect("row just added").name = format!("protect[{f}]");
    }
    let mut budget = LinearExpr::new();
    for (f, xs) in x.iter().enumerate() {
        for (p, &v) in xs.iter().enumerate() {
            budget.add_term(v, inst.protection_costs[f][p]);
        }
    }
    for (e, &v) in z.iter().enumerate() {
        budget.add_term(v, inst.edges[e].cost);
    }
    model.add_constraint(budget, Sense::Le, inst.budget);
    model.rows.last_mut().expect("row just added").name = "budget".into();
    FirstStage { x, z }
}

/// Flow variables of one second-stage copy.
#[derive(Debug, Clone)]
pub struct SecondStage {
    pub y: Vec<VarId>,
}

/// One copy of the recourse network. Client balance is `in − out = b_n·scale`
/// and facility net outflow is at most `capacity_exprs[f]`; the objective
/// receives `weight · Σ q y`. `scale` is the constant 1 except in the DEP,
/// where flows are scaled by the scenario probability.
pub fn build_flow_block(
    inst: &NdfppInstance,
    model: &mut MipModel,
    first: &FirstStage,
    capacity_exprs: &[LinearExpr],
    demand_scale: &LinearExpr,
    weight: f64,
    tag: &str,
) -> SecondStage {
    let arcs = inst.arcs();
    let big_b = inst.total_demand();
    let y: Vec<VarId> = arcs.iter().map(|a| model.add_continuous(0.0, f64::INFINITY, format!("{tag}.y[{}->{}]", a.from, a.to))).collect();
    for (a, &v) in arcs.iter().zip(&y) {
        model.objective.add_term(v, weight * a.cost);
    }
    let n_total = inst.nodes.len() + 1;
    let mut net_in: Vec<LinearExpr> = vec![LinearExpr::new(); n_total];
    for (a, &v) in arcs.iter().zip(&y) {
        net_in[a.to].add_term(v, 1.0);
        net_in[a.from].add_term(v, -1.0);
    }
    for c in inst.clients() {
        let mut e = net_in[c].clone();
        e.add_scaled(demand_scale, -inst.nodes[c].demand);
        model.add_constraint(e, Sense::Eq, 0.0);
    }
    for (f, &node) in inst.facilities.iter().enumerate() {
        let mut e = net_in[node].scaled(-1.0);
        e.add_scaled(&capacity_exprs[f], -1.0);
        model.add_constraint(e, Sense::Le, 0.0);
    }
    for (a, &v) in arcs.iter().zip(&y) {
        if let Some(k) = a.edge {
            let mut e = LinearExpr::var(v);
            e.add_term(first.z[k], -big_b);
            model.add_constraint(e, Sense::Le, 0.0);
        }
    }
    SecondStage { y }
}

/// Program-(7) copy with fixed demands and capacities given as expressions.
pub fn build_second_stage(
    inst: &NdfppInstance,
    model: &mut MipModel,
    first: &FirstStage,
    capacity_exprs: &[LinearExpr],
    weight: f64,
    tag: &str,
) -> SecondStage {
    build_flow_block(inst, model, first, capacity_exprs, &LinearExpr::constant(1.0), weight, tag)
}

/// Expression `(1/ρ) Σ_i Σ_p φ̃_{fi}^{dp} x_i^p`.
pub fn binomial_phi_expr(inst: &NdfppInstance, first: &FirstStage, d: usize, f: usize) -> LinearExpr {
    let mut e = LinearExpr::new();
    for (i, xs) in first.x.iter().enumerate() {
        for (p, &v) in xs.iter().enumerate() {
            e.add_term(v, inst.params.phi_tilde[d][f][i][p] / inst.params.rho);
        }
    }
    e
}

/// Expression `u_{df}^w(x)`.
pub fn utility_expr(inst: &NdfppInstance, first: &FirstStage, d: usize, f: usize, w: usize) -> LinearExpr {
    let mut e = LinearExpr::new();
    for (i, xs) in first.x.iter().enumerate() {
        for (p, &v) in xs.iter().enumerate() {
            e.add_term(v, inst.params.u_tilde[d][f][i][p][w]);
        }
    }
    e
}

/// Expression `μ_f^d(x)`.
pub fn normal_mean_expr(inst: &NdfppInstance, first: &FirstStage, d: usize, f: usize) -> LinearExpr {
    let mut e = LinearExpr::new();
    for (i, xs) in first.x.iter().enumerate() {
        for (p, &v) in xs.iter().enumerate() {
            e.add_term(v, inst.params.mu_tilde[d][f][i][p] / inst.params.rho);
        }
    }
    e
}

/// Upper bound `û_f^d = Σ_w Σ_i max_p ũ_{fi}^{dpw}` of the total likelihood.
pub fn utility_bound(inst: &NdfppInstance, d: usize, f: usize) -> f64 {
    let u = &inst.params.u_tilde[d][f];
    (0..=inst.levels as usize)
        .map(|w| u.iter().map(|by_p| by_p.iter().map(|l| l[w]).fold(f64::NEG_INFINITY, f64::max)).sum::<f64>())
        .sum()
}

/// Emits capacity systems for several scenarios into one model, sharing the
/// `u_T` variables of the Discrete variant across scenarios with the same event.
pub struct CapacityEmitter<'a> {
    inst: &'a NdfppInstance,
    variant: Variant,
    eps: f64,
    u_total: BTreeMap<(usize, usize), VarId>,
    combos: Vec<Vec<usize>>,
    /// Scenarios whose draw lies within ε of a reachable breakpoint.
    pub degenerate: usize,
}

/// Largest protection-combination count checked for degeneracy.
const DEGENERACY_COMBO_LIMIT: usize = 1 << 14;

impl<'a> CapacityEmitter<'a> {
    pub fn new(inst: &'a NdfppInstance, variant: Variant, eps: f64) -> Self {
        let (nf, np) = (inst.num_facilities(), inst.num_protections());
        let combos = if np.checked_pow(nf as u32).map_or(false, |c| c <= DEGENERACY_COMBO_LIMIT) {
            protection_combos(nf, np).collect()
        } else {
            Vec::new()
        };
        Self { inst, variant, eps, u_total: BTreeMap::new(), combos, degenerate: 0 }
    }

    /// One emission per facility whose `value_expr` is the capacity `ξ_x^{fs}`.
    pub fn emit(&mut self, model: &mut MipModel, first: &FirstStage, s: &NdfppScenario, tag: &str) -> Result<Vec<TransformEmission>, NdfppError> {
        let inst = self.inst;
        s.check_shape(inst, self.variant)?;
        let d = s.event;
        let mut out = Vec::with_capacity(inst.num_facilities());
        for f in 0..inst.num_facilities() {
            let name = format!("{tag}.f{f}");
            let draws = &s.draws[f];
            let mut em = match self.variant {
                Variant::Selection => {
                    let sample = ExogenousSample { values: draws.clone(), stream_id: s.stream_id };
                    emit_selection(&sample, &first.x[f])?
                }
                Variant::Binomial => {
                    let phi = binomial_phi_expr(inst, first, d, f);
                    let mut em = emit_binomial_convolution(model, &phi, draws, self.eps, &name)?;
                    em.degenerate = self
                        .combos
                        .iter()
                        .any(|c| draws.iter().any(|&t| (super::binomial_phi(inst, d, f, c) - t).abs() < self.eps));
                    em
                }
                Variant::Discrete => self.emit_discrete(model, first, d, f, draws[0], &name)?,
                Variant::Normal => {
                    let mut e = normal_mean_expr(inst, first, d, f);
                    e.add_constant(inst.params.sigma_tilde[d][f] * draws[0]);
                    TransformEmission { new_vars: Vec::new(), new_rows: model.rows.len()..model.rows.len(), value_expr: e, degenerate: false }
                }
            };
            if matches!(self.variant, Variant::Selection | Variant::Binomial | Variant::Discrete) {
                em.value_expr = em.value_expr.scaled(inst.nu_bar);
            }
            if em.degenerate {
                self.degenerate += 1;
                debug!("{name}: draw within ε of a breakpoint");
            }
            out.push(em);
        }
        Ok(out)
    }

    fn u_total_var(&mut self, model: &mut MipModel, first: &FirstStage, d: usize, f: usize) -> Result<(VarId, f64), NdfppError> {
        let bound = utility_bound(self.inst, d, f);
        if !(bound > 0.0) {
            return Err(NdfppError::Invalid(format!("facility {f} has no positive likelihood under event {d}")));
        }
        if let Some(&v) = self.u_total.get(&(d, f)) {
            return Ok((v, bound));
        }
        let v = model.add_continuous(0.0, bound, format!("uT[{d}][{f}]"));
        let mut e = LinearExpr::var(v);
        for w in 0..=self.inst.levels as usize {
            e.add_scaled(&utility_expr(self.inst, first, d, f, w), -1.0);
        }
        model.add_constraint(e, Sense::Eq, 0.0);
        self.u_total.insert((d, f), v);
        Ok((v, bound))
    }

    /// Inverse transform over unnormalized likelihoods with the products
    /// `π_w·u_T` replaced by McCormick variables `τ_w`. Rows, scaled by ϑ and
    /// 1−ϑ: `ϑτ_w − Σ_{j≤w} u_j ≤ −ε·u_T` and `(1−ϑ)(u_T − τ_{w−1}) ≤ Σ_{j≥w} u_j`.
    /// The returned value is the level index; the caller scales it by ν̄.
    fn emit_discrete(&mut self, model: &mut MipModel, first: &FirstStage, d: usize, f: usize, theta: f64, name: &str) -> Result<TransformEmission, NdfppError> {
        let inst = self.inst;
        let w_max = inst.levels as usize;
        let row_start = model.rows.len();
        let var_start = model.vars.len();
        let (u_t, bound) = self.u_total_var(model, first, d, f)?;
        let th: Vec<VarId> = (0..=w_max).map(|w| model.add_binary(format!("{name}.theta[{w}]"))).collect();
        let pi: Vec<VarId> = (0..=w_max).map(|w| model.add_binary(format!("{name}.pi[{w}]"))).collect();
        model.fix(pi[w_max], 1.0);
        let tau: Vec<VarId> = (0..=w_max)
            .map(|w| mccormick_product(model, pi[w], u_t, bound, &format!("{name}.tau[{w}]")).map(|em| em.new_vars[0]))
            .collect::<Result<_, _>>()?;
        let u: Vec<LinearExpr> = (0..=w_max).map(|w| utility_expr(inst, first, d, f, w)).collect();
        let sum = |r: std::ops::Range<usize>| {
            let mut e = LinearExpr::new();
            u[r].iter().for_each(|x| {
                e.add_scaled(x, 1.0);
            });
            e
        };
        for w in 0..w_max {
            let mut e = LinearExpr::term(tau[w], theta);
            e.add_scaled(&sum(0..w + 1), -1.0).add_term(u_t, self.eps);
            model.add_constraint(e, Sense::Le, 0.0);
        }
        for w in 1..=w_max {
            let mut e = LinearExpr::term(u_t, 1.0 - theta);
            e.add_term(tau[w - 1], -(1.0 - theta));
            e.add_scaled(&sum(w..w_max + 1), -1.0);
            model.add_constraint(e, Sense::Le, 0.0);
        }
        for w in 0..w_max {
            let mut e = LinearExpr::var(pi[w]);
            e.add_term(pi[w + 1], -1.0).add_term(th[w + 1], 1.0);
            model.add_constraint(e, Sense::Eq, 0.0);
        }
        let mut total = LinearExpr::new();
        th.iter().for_each(|&t| {
            total.add_term(t, 1.0);
        });
        model.add_constraint(total, Sense::Eq, 1.0);

        let mut value = LinearExpr::new();
        for (w, &t) in th.iter().enumerate() {
            value.add_term(t, w as f64);
        }
        let degenerate = self.combos.iter().any(|c| {
            let u = super::discrete_utilities(inst, d, f, c);
            let total: f64 = u.iter().sum();
            let mut cdf = 0.0;
            u[..w_max].iter().any(|&x| {
                cdf += x;
                (cdf - theta * total).abs() <= self.eps * total || cdf < self.eps * total
            })
        });
        Ok(TransformEmission {
            new_vars: (var_start..model.vars.len()).map(VarId).filter(|&v| v != u_t).collect(),
            new_rows: row_start..model.rows.len(),
            value_expr: value,
            degenerate,
        })
    }
}

/// A built extensive-form model with its first-stage ids.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MipModel,
    pub first: FirstStage,
    pub degenerate: usize,
}

/// Transformed extensive form over `samples` with objective weights `weights`.
pub fn build_extensive(
    inst: &NdfppInstance,
    variant: Variant,
    samples: &[NdfppScenario],
    weights: &[f64],
    eps: f64,
) -> Result<BuiltModel, NdfppError> {
    if samples.len() != weights.len() {
        return Err(NdfppError::Invalid("one weight per sample is required".into()));
    }
    let mut model = MipModel::new();
    let first = build_first_stage(inst, &mut model);
    let mut emitter = CapacityEmitter::new(inst, variant, eps);
    for (k, (s, &wt)) in samples.iter().zip(weights).enumerate() {
        let tag = format!("s{k}");
        let caps: Vec<LinearExpr> = emitter.emit(&mut model, &first, s, &tag)?.into_iter().map(|e| e.value_expr).collect();
        build_second_stage(inst, &mut model, &first, &caps, wt, &tag);
    }
    if emitter.degenerate > 0 {
        debug!("{} of {} facility draws are ε-degenerate", emitter.degenerate, samples.len() * inst.num_facilities());
    }
    Ok(BuiltModel { model, first, degenerate: emitter.degenerate })
}

/// SAA program: equal weights `1/N`.
pub fn build_saa_extensive(inst: &NdfppInstance, variant: Variant, samples: &[NdfppScenario], eps: f64) -> Result<BuiltModel, NdfppError> {
    let w = 1.0 / samples.len().max(1) as f64;
    build_extensive(inst, variant, samples, &vec![w; samples.len()], eps)
}

/// Fixes the first-stage variables of `model` to `decision`.
pub fn fix_decision(inst: &NdfppInstance, model: &mut MipModel, decision: &Decision) {
    for (v, val) in decision.to_assignment(inst).iter() {
        model.fix(v, val);
    }
}
