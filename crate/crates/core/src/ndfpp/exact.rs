use std::collections::HashMap;

use rayon::prelude::*;

use super::{build_first_stage, build_flow_block, level_pmf, BuiltModel, Decision, NdfppError, NdfppInstance, NdfppScenario, RecourseEvaluator, Variant};
use crate::model::{LinearExpr, MipModel, Sense};
use crate::rng::StreamId;
use crate::transforms::{binomial_pmf, mccormick_product};

/// Default cap on enumerated supports.
pub const SCENARIO_CAP: u128 = 1_000_000;

/// One point of the endogenous support: an event and a capacity level per facility.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevelScenario {
    pub event: usize,
    pub levels: Vec<u32>,
}

pub fn scenario_count(inst: &NdfppInstance) -> u128 {
    (u128::from(inst.levels) + 1).saturating_pow(inst.num_facilities() as u32).saturating_mul(inst.num_events() as u128)
}

/// Full support, `|K| = |D|·(W+1)^{|F|}`, events outermost.
pub fn enumerate_scenarios(inst: &NdfppInstance, variant: Variant) -> Result<Vec<LevelScenario>, NdfppError> {
    if !variant.is_enumerable() {
        return Err(NdfppError::NotEnumerable(variant));
    }
    let count = scenario_count(inst);
    if count > SCENARIO_CAP {
        return Err(NdfppError::ScenarioCap { count, cap: SCENARIO_CAP });
    }
    let nf = inst.num_facilities();
    let base = inst.levels + 1;
    let per_event = base.pow(nf as u32);
    let mut out = Vec::with_capacity(count as usize);
    for event in 0..inst.num_events() {
        for mut c in 0..per_event {
            let levels = (0..nf)
                .map(|_| {
                    let l = c % base;
                    c /= base;
                    l
                })
                .collect();
            out.push(LevelScenario { event, levels });
        }
    }
    Ok(out)
}

/// `Π_f P(level_f | d, x)`, times `prob_d` when `joint`.
pub fn scenario_probability(inst: &NdfppInstance, variant: Variant, decision: &Decision, k: &LevelScenario, joint: bool) -> Result<f64, NdfppError> {
    let mut p = if joint { inst.events[k.event].probability } else { 1.0 };
    for (f, &l) in k.levels.iter().enumerate() {
        p *= level_pmf(inst, variant, &decision.protection, k.event, f)?[l as usize];
    }
    Ok(p)
}

/// `v(x) = Σ_k p_k(x) Q(x, ξ_k)`; the first stage has no objective cost.
pub fn evaluate_solution_exact(inst: &NdfppInstance, variant: Variant, decision: &Decision) -> Result<f64, NdfppError> {
    let scenarios = enumerate_scenarios(inst, variant)?;
    let nf = inst.num_facilities();
    // Per-(event, facility) pmfs, computed once.
    let pmfs: Vec<Vec<Vec<f64>>> = (0..inst.num_events())
        .map(|d| (0..nf).map(|f| level_pmf(inst, variant, &decision.protection, d, f)).collect())
        .collect::<Result<_, _>>()?;
    let eval = RecourseEvaluator::new(inst, &decision.open_edges);
    let mut cache: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut total = 0.0;
    for k in &scenarios {
        let mut p = inst.events[k.event].probability;
        for (f, &l) in k.levels.iter().enumerate() {
            p *= pmfs[k.event][f][l as usize];
        }
        if p == 0.0 {
            continue;
        }
        let q = *cache.entry(k.levels.clone()).or_insert_with(|| {
            let caps: Vec<f64> = k.levels.iter().map(|&l| inst.capacity_of_level(l)).collect();
            eval.cost(&caps)
        });
        total += p * q;
    }
    Ok(total)
}

/// Mean recourse over `n` evaluation-stream samples, for the Normal variant
/// or as a Monte Carlo cross-check.
pub fn estimate_solution_value(inst: &NdfppInstance, variant: Variant, decision: &Decision, seed: u64, n: usize) -> Result<(f64, f64), NdfppError> {
    let eval = RecourseEvaluator::new(inst, &decision.open_edges);
    let qs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = super::sample_scenario(inst, variant, seed, StreamId::new(crate::rng::EVAL_REPLICATION, i as u64))?;
            Ok(eval.cost(&super::realized_capacities(inst, variant, decision, &s)?))
        })
        .collect::<Result<_, NdfppError>>()?;
    let mean = crate::stats::mean(&qs);
    let var = if n > 1 { crate::stats::sample_variance(&qs) / n as f64 } else { 0.0 };
    Ok((mean, var))
}

/// Best budget-feasible decision by exhaustive search over first stages.
pub fn brute_force_optimum<F>(inst: &NdfppInstance, cap: usize, value: F) -> Result<(Decision, f64), NdfppError>
where
    F: Fn(&Decision) -> Result<f64, NdfppError> + Sync,
{
    let all = Decision::enumerate_feasible(inst, cap)?;
    let vals: Vec<f64> = all.par_iter().map(&value).collect::<Result<_, _>>()?;
    vals.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &v)| (all[i].clone(), v))
        .ok_or_else(|| NdfppError::InfeasibleDecision("no budget-feasible decision".into()))
}

/// Deterministic equivalent of the Selection variant over the enumerated
/// support. The decision-dependent weight `p_k(x) = prob_d Π_f Σ_p a_{fp} x_f^p`
/// is built as a chain `P_f = Σ_p a_{fp}·(x_f^p·P_{f−1})` with exact McCormick
/// products; flows are scaled by `p_k`, which keeps the program linear.
pub fn build_dep_selection(inst: &NdfppInstance) -> Result<BuiltModel, NdfppError> {
    let scenarios = enumerate_scenarios(inst, Variant::Selection)?;
    let mut model = MipModel::new();
    let first = build_first_stage(inst, &mut model);
    let w = inst.levels;
    for (k, sc) in scenarios.iter().enumerate() {
        let d = sc.event;
        let factor = |f: usize| -> Vec<f64> {
            (0..inst.num_protections()).map(|p| binomial_pmf(w, inst.params.phi_bar[d][f][p])[sc.levels[f] as usize]).collect()
        };
        let mut chain = LinearExpr::new();
        for (p, a) in factor(0).into_iter().enumerate() {
            chain.add_term(first.x[0][p], a);
        }
        for f in 1..inst.num_facilities() {
            let prev = model.add_continuous(0.0, 1.0, format!("k{k}.P[{}]", f - 1));
            let mut def = LinearExpr::var(prev);
            def.add_scaled(&chain, -1.0);
            model.add_constraint(def, Sense::Eq, 0.0);
            let mut next = LinearExpr::new();
            for (p, a) in factor(f).into_iter().enumerate() {
                if a != 0.0 {
                    let tau = mccormick_product(&mut model, first.x[f][p], prev, 1.0, &format!("k{k}.chain[{f}][{p}]"))?;
                    next.add_scaled(&tau.value_expr, a);
                }
            }
            chain = next;
        }
        let prob = chain.scaled(inst.events[d].probability);
        let caps: Vec<LinearExpr> = sc.levels.iter().map(|&l| prob.scaled(inst.capacity_of_level(l))).collect();
        build_flow_block(inst, &mut model, &first, &caps, &prob, 1.0, &format!("k{k}"));
    }
    Ok(BuiltModel { model, first, degenerate: 0 })
}

/// Every joint realization of the Selection exogenous vector (event and one
/// level per facility and protection) with its decision-independent weight
/// `prob_d Π_{f,p} Bin(W, φ̄_f^{dp})(level)`.
pub fn selection_realizations(inst: &NdfppInstance) -> Result<Vec<(NdfppScenario, f64)>, NdfppError> {
    let (nf, np) = (inst.num_facilities(), inst.num_protections());
    let base = u128::from(inst.levels) + 1;
    let count = base.saturating_pow((nf * np) as u32).saturating_mul(inst.num_events() as u128);
    if count > SCENARIO_CAP {
        return Err(NdfppError::ScenarioCap { count, cap: SCENARIO_CAP });
    }
    let per_event = base.pow((nf * np) as u32) as u64;
    let mut out = Vec::with_capacity(count as usize);
    for d in 0..inst.num_events() {
        let pmfs: Vec<Vec<Vec<f64>>> = (0..nf).map(|f| (0..np).map(|p| binomial_pmf(inst.levels, inst.params.phi_bar[d][f][p])).collect()).collect();
        for c in 0..per_event {
            let mut rest = c;
            let mut weight = inst.events[d].probability;
            let mut draws = vec![vec![0.0; np]; nf];
            for (f, row) in draws.iter_mut().enumerate() {
                for (p, slot) in row.iter_mut().enumerate() {
                    let l = (rest % base as u64) as usize;
                    rest /= base as u64;
                    *slot = l as f64;
                    weight *= pmfs[f][p][l];
                }
            }
            if weight > 0.0 {
                out.push((NdfppScenario { event: d, draws, stream_id: StreamId::new(0, out.len() as u64) }, weight));
            }
        }
    }
    Ok(out)
}

/// Transformed program over the enumerated Selection realizations.
pub fn build_enumerated_selection(inst: &NdfppInstance, eps: f64) -> Result<BuiltModel, NdfppError> {
    let (samples, weights): (Vec<_>, Vec<_>) = selection_realizations(inst)?.into_iter().unzip();
    super::build_extensive(inst, Variant::Selection, &samples, &weights, eps)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::tiny;
    use super::*;
    use crate::solver::{HighsSolver, MilpSolver, SolveParams};
    use crate::transforms::DEFAULT_EPSILON;

    fn with_counts(nd: usize, nf: usize, w: u32) -> NdfppInstance {
        let mut inst = tiny(w);
        inst.events = (0..nd).map(|d| super::super::Event { name: format!("e{d}"), probability: 1.0 / nd as f64, intensity: vec![0; nf] }).collect();
        inst.facilities = (0..nf).collect();
        inst
    }

    #[test]
    fn support_sizes() {
        assert_eq!(scenario_count(&with_counts(4, 4, 2)), 324);
        assert_eq!(scenario_count(&with_counts(4, 5, 2)), 972);
        assert_eq!(scenario_count(&with_counts(3, 4, 0)), 3);
        let inst = tiny(2);
        assert_eq!(enumerate_scenarios(&inst, Variant::Selection).unwrap().len(), 2 * 9);
        assert!(enumerate_scenarios(&inst, Variant::Normal).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let inst = with_counts(4, 12, 4);
        assert!(matches!(enumerate_scenarios(&inst, Variant::Selection), Err(NdfppError::ScenarioCap { .. })));
    }

    #[test]
    fn probabilities_normalize() {
        let inst = tiny(2);
        for variant in [Variant::Selection, Variant::Binomial, Variant::Discrete] {
            for prot in [[0, 0], [0, 1], [1, 0], [1, 1]] {
                let dec = Decision { protection: prot.to_vec(), open_edges: vec![true; 4] };
                let total: f64 = enumerate_scenarios(&inst, variant)
                    .unwrap()
                    .iter()
                    .map(|k| scenario_probability(&inst, variant, &dec, k, true).unwrap())
                    .sum();
                assert!((total - 1.0).abs() < 1e-9, "{variant}: {total}");
            }
        }
    }

    #[test]
    fn selection_conditional_probability() {
        let mut inst = tiny(1);
        inst.params.phi_bar[0][0] = vec![0.5, 0.5];
        let dec = Decision { protection: vec![0, 0], open_edges: vec![true; 4] };
        let pmf = level_pmf(&inst, Variant::Selection, &dec.protection, 0, 0).unwrap();
        assert!((pmf[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_capacity_value_is_dummy_cost() {
        let mut inst = tiny(1);
        inst.nu_bar = 0.0;
        let dec = Decision { protection: vec![1, 1], open_edges: vec![true; 4] };
        let v = evaluate_solution_exact(&inst, Variant::Selection, &dec).unwrap();
        assert!((v - inst.total_demand() * inst.dummy_cost()).abs() < 1e-9);
    }

    #[test]
    fn deterministic_instance_is_one_flow() {
        let mut inst = tiny(1);
        inst.params.phi_bar = vec![vec![vec![1.0, 1.0]; 2]; 2];
        let dec = Decision { protection: vec![0, 1], open_edges: vec![true, true, false, true] };
        let v = evaluate_solution_exact(&inst, Variant::Selection, &dec).unwrap();
        let q = RecourseEvaluator::new(&inst, &dec.open_edges).cost(&[inst.nu_bar, inst.nu_bar]);
        assert!((v - q).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let inst = tiny(2);
        for variant in [Variant::Selection, Variant::Binomial, Variant::Discrete] {
            let dec = Decision { protection: vec![1, 0], open_edges: vec![true, true, true, false] };
            let exact = evaluate_solution_exact(&inst, variant, &dec).unwrap();
            let (mc, var) = estimate_solution_value(&inst, variant, &dec, 9, 10_000).unwrap();
            // Four standard errors; the tiny instance is too noisy for a 1% band.
            assert!((mc - exact).abs() < 4.0 * var.sqrt(), "{variant}: {mc} vs {exact} (se {})", var.sqrt());
        }
    }

    #[test]
    fn dep_matches_brute_force() {
        let inst = tiny(1);
        let b = build_dep_selection(&inst).unwrap();
        let r = HighsSolver.solve(&b.model, &SolveParams::default()).unwrap();
        assert!(r.is_optimal());
        let (_, best) = brute_force_optimum(&inst, 1 << 16, |d| evaluate_solution_exact(&inst, Variant::Selection, d)).unwrap();
        assert!((r.objective - best).abs() < 1e-6 * best, "dep {} brute {best}", r.objective);
        let dec = Decision::from_assignment(&inst, &r.assignment.restrict(&b.first.all_vars(), true)).unwrap();
        let v = evaluate_solution_exact(&inst, Variant::Selection, &dec).unwrap();
        assert!((v - best).abs() < 1e-6 * best);
    }

    #[test]
    fn enumerated_transformed_program_matches_dep() {
        let inst = tiny(1);
        let dep = HighsSolver.solve(&build_dep_selection(&inst).unwrap().model, &SolveParams::default()).unwrap();
        let tr = HighsSolver.solve(&build_enumerated_selection(&inst, DEFAULT_EPSILON).unwrap().model, &SolveParams::default()).unwrap();
        assert!((dep.objective - tr.objective).abs() < 1e-6 * dep.objective);
    }

    #[test]
    fn chain_is_exact_at_binary_points() {
        let inst = tiny(1);
        let b = build_dep_selection(&inst).unwrap();
        for prot in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let dec = Decision { protection: prot.to_vec(), open_edges: vec![true, true, false, false] };
            assert!(dec.within_budget(&inst));
            let mut m = b.model.clone();
            super::super::fix_decision(&inst, &mut m, &dec);
            let r = HighsSolver.solve(&m, &SolveParams::default()).unwrap();
            let v = evaluate_solution_exact(&inst, Variant::Selection, &dec).unwrap();
            assert!((r.objective - v).abs() < 1e-6 * v, "{prot:?}: {} vs {v}", r.objective);
        }
    }
}
