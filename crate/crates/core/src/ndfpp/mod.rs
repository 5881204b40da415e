//! Network design and facility protection (NDFPP).
//!
//! First stage: one protection level per facility and a set of edges to open
//! under a budget. Second stage: after a disruption event, ship client demand
//! from facilities whose capacity is random and decision dependent, with an
//! expensive dummy supplier as fallback.
//!
//! First-stage variables always occupy the first ids of every model built
//! here: `x[f][p]` at `f·P + p`, then `z[e]` at `F·P + e`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Assignment, ModelError, VarId};
use crate::rng::{RngStream, StreamId};
use crate::solver::SolverError;
use crate::stats::norm_quantile;
use crate::transforms::{eval_discrete_inverse, DiscreteDist, TransformError, NORMAL_TRUNCATION};

mod build;
mod ev;
mod exact;
mod flow;
mod instance;
mod problem;

pub use build::*;
pub use ev::*;
pub use exact::*;
pub use flow::RecourseEvaluator;
pub use instance::*;
pub use problem::NdfppSaa;

#[derive(Debug, Error)]
pub enum NdfppError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("sample does not match variant {variant}: {detail}")]
    SampleShape { variant: Variant, detail: String },
    #[error("scenario count {count} exceeds the enumeration cap {cap}")]
    ScenarioCap { count: u128, cap: u128 },
    #[error("variant {0} has no finite support")]
    NotEnumerable(Variant),
    #[error("decision is infeasible: {0}")]
    InfeasibleDecision(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver returned {0}")]
    NoSolution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Selection,
    Binomial,
    Discrete,
    Normal,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Selection, Variant::Binomial, Variant::Discrete, Variant::Normal];

    pub fn is_enumerable(self) -> bool {
        self != Variant::Normal
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Selection => "selection",
            Variant::Binomial => "binomial",
            Variant::Discrete => "discrete",
            Variant::Normal => "normal",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "selection" => Ok(Variant::Selection),
            "binomial" => Ok(Variant::Binomial),
            "discrete" => Ok(Variant::Discrete),
            "normal" => Ok(Variant::Normal),
            other => Err(format!("unknown variant `{other}` (selection, binomial, discrete, normal)")),
        }
    }
}

/// One exogenous realization `ϑ^s` together with its event `d̂(s)`.
///
/// `draws[f]` holds, per variant: Selection, the capacity level for each
/// protection; Binomial, `W` uniforms; Discrete, one uniform; Normal, one
/// truncated standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdfppScenario {
    pub event: usize,
    pub draws: Vec<Vec<f64>>,
    pub stream_id: StreamId,
}

impl NdfppScenario {
    pub fn check_shape(&self, inst: &NdfppInstance, variant: Variant) -> Result<(), NdfppError> {
        let want = match variant {
            Variant::Selection => inst.num_protections(),
            Variant::Binomial => inst.levels as usize,
            Variant::Discrete | Variant::Normal => 1,
        };
        let bad = |detail: String| Err(NdfppError::SampleShape { variant, detail });
        if self.event >= inst.num_events() {
            return bad(format!("event {} out of range", self.event));
        }
        if self.draws.len() != inst.num_facilities() {
            return bad(format!("{} facility draws, expected {}", self.draws.len(), inst.num_facilities()));
        }
        if let Some(f) = self.draws.iter().position(|d| d.len() != want) {
            return bad(format!("facility {f} has {} draws, expected {want}", self.draws[f].len()));
        }
        Ok(())
    }
}

/// Draws scenario `id`. Element 0 of the stream is the event; element `1 + f`
/// belongs to facility `f`, with the trial index running over protections or
/// Bernoulli trials.
pub fn sample_scenario(inst: &NdfppInstance, variant: Variant, base_seed: u64, id: StreamId) -> Result<NdfppScenario, NdfppError> {
    let mut rng = RngStream::new(base_seed, id);
    let event = eval_discrete_inverse(&inst.event_probabilities(), rng.uniform(0, 0))?;
    let w = inst.levels;
    let draws = (0..inst.num_facilities())
        .map(|f| {
            let el = 1 + f as u64;
            match variant {
                Variant::Selection => (0..inst.num_protections())
                    .map(|p| DiscreteDist::binomial(w, inst.params.phi_bar[event][f][p]).quantile(rng.uniform(el, p as u64)))
                    .collect(),
                Variant::Binomial => (0..w as u64).map(|t| rng.uniform(el, t)).collect(),
                Variant::Discrete => vec![rng.uniform(el, 0)],
                Variant::Normal => {
                    let z = norm_quantile(rng.uniform_open(el, 0));
                    vec![z.clamp(-NORMAL_TRUNCATION, NORMAL_TRUNCATION)]
                }
            }
        })
        .collect();
    Ok(NdfppScenario { event, draws, stream_id: id })
}

/// Binary first-stage decision in compact form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    /// 0-based protection index per facility.
    pub protection: Vec<usize>,
    pub open_edges: Vec<bool>,
}

impl Decision {
    pub fn x_var(inst: &NdfppInstance, f: usize, p: usize) -> VarId {
        VarId(f * inst.num_protections() + p)
    }

    pub fn z_var(inst: &NdfppInstance, e: usize) -> VarId {
        VarId(inst.num_facilities() * inst.num_protections() + e)
    }

    pub fn first_stage_vars(inst: &NdfppInstance) -> Vec<VarId> {
        (0..inst.num_facilities() * inst.num_protections() + inst.edges.len()).map(VarId).collect()
    }

    pub fn from_assignment(inst: &NdfppInstance, a: &Assignment) -> Result<Self, NdfppError> {
        let np = inst.num_protections();
        let mut protection = Vec::with_capacity(inst.num_facilities());
        for f in 0..inst.num_facilities() {
            let chosen: Vec<usize> = (0..np).filter(|&p| a.value(Self::x_var(inst, f, p)).map_or(false, |v| v > 0.5)).collect();
            if chosen.len() != 1 {
                return Err(NdfppError::InfeasibleDecision(format!("facility {f} has {} protection levels selected", chosen.len())));
            }
            protection.push(chosen[0]);
        }
        let open_edges = (0..inst.edges.len())
            .map(|e| a.value(Self::z_var(inst, e)).map(|v| v > 0.5))
            .collect::<Result<_, _>>()?;
        Ok(Self { protection, open_edges })
    }

    pub fn to_assignment(&self, inst: &NdfppInstance) -> Assignment {
        let mut a = Assignment::new();
        for (f, &chosen) in self.protection.iter().enumerate() {
            for p in 0..inst.num_protections() {
                a.set(Self::x_var(inst, f, p), f64::from(u8::from(p == chosen)));
            }
        }
        for (e, &open) in self.open_edges.iter().enumerate() {
            a.set(Self::z_var(inst, e), f64::from(u8::from(open)));
        }
        a
    }

    pub fn cost(&self, inst: &NdfppInstance) -> f64 {
        let prot: f64 = self.protection.iter().enumerate().map(|(f, &p)| inst.protection_costs[f][p]).sum();
        let edges: f64 = inst.edges.iter().zip(&self.open_edges).filter(|(_, &o)| o).map(|(e, _)| e.cost).sum();
        prot + edges
    }

    pub fn within_budget(&self, inst: &NdfppInstance) -> bool {
        self.cost(inst) <= inst.budget + 1e-6 * inst.budget.abs().max(1.0)
    }

    /// Every budget-feasible decision, for brute-force oracles on tiny instances.
    pub fn enumerate_feasible(inst: &NdfppInstance, cap: usize) -> Result<Vec<Decision>, NdfppError> {
        let (nf, np, ne) = (inst.num_facilities(), inst.num_protections(), inst.edges.len());
        let total = (np as u128).pow(nf as u32) << ne;
        if total > cap as u128 {
            return Err(NdfppError::ScenarioCap { count: total, cap: cap as u128 });
        }
        let mut out = Vec::new();
        for combo in 0..np.pow(nf as u32) {
            let mut protection = vec![0; nf];
            let mut c = combo;
            for slot in protection.iter_mut() {
                *slot = c % np;
                c /= np;
            }
            for mask in 0u64..1 << ne {
                let d = Decision { protection: protection.clone(), open_edges: (0..ne).map(|e| mask >> e & 1 == 1).collect() };
                if d.within_budget(inst) {
                    out.push(d);
                }
            }
        }
        Ok(out)
    }
}

/// `φ_f^d(x) = (1/ρ) Σ_i Σ_p φ̃_{fi}^{dp} x_i^p` at a binary decision.
pub fn binomial_phi(inst: &NdfppInstance, d: usize, f: usize, protection: &[usize]) -> f64 {
    let s: f64 = protection.iter().enumerate().map(|(i, &p)| inst.params.phi_tilde[d][f][i][p]).sum();
    s / inst.params.rho
}

/// Likelihoods `u_{df}^w(x)` for `w = 0..=W`.
pub fn discrete_utilities(inst: &NdfppInstance, d: usize, f: usize, protection: &[usize]) -> Vec<f64> {
    (0..=inst.levels as usize)
        .map(|w| protection.iter().enumerate().map(|(i, &p)| inst.params.u_tilde[d][f][i][p][w]).sum())
        .collect()
}

/// `μ_f^d(x)` of the Normal variant.
pub fn normal_mean(inst: &NdfppInstance, d: usize, f: usize, protection: &[usize]) -> f64 {
    let s: f64 = protection.iter().enumerate().map(|(i, &p)| inst.params.mu_tilde[d][f][i][p]).sum();
    s / inst.params.rho
}

/// Capacity-level pmf of facility `f` under event `d` at a binary decision.
pub fn level_pmf(inst: &NdfppInstance, variant: Variant, protection: &[usize], d: usize, f: usize) -> Result<Vec<f64>, NdfppError> {
    match variant {
        Variant::Selection => Ok(crate::transforms::binomial_pmf(inst.levels, inst.params.phi_bar[d][f][protection[f]])),
        Variant::Binomial => Ok(crate::transforms::binomial_pmf(inst.levels, binomial_phi(inst, d, f, protection).clamp(0.0, 1.0))),
        Variant::Discrete => {
            let u = discrete_utilities(inst, d, f, protection);
            let total: f64 = u.iter().sum();
            if !(total > 0.0) {
                return Err(NdfppError::Invalid(format!("facility {f} has zero total likelihood under event {d}")));
            }
            Ok(u.iter().map(|v| v / total).collect())
        }
        Variant::Normal => Err(NdfppError::NotEnumerable(variant)),
    }
}

/// Oracle for `ξ_x^{fs}`: realized capacities computed directly from the
/// decision and the exogenous draws, without a model.
pub fn realized_capacities(inst: &NdfppInstance, variant: Variant, decision: &Decision, s: &NdfppScenario) -> Result<Vec<f64>, NdfppError> {
    s.check_shape(inst, variant)?;
    let d = s.event;
    let prot = &decision.protection;
    (0..inst.num_facilities())
        .map(|f| {
            let draws = &s.draws[f];
            Ok(match variant {
                Variant::Selection => inst.nu_bar * draws[prot[f]],
                Variant::Binomial => {
                    let phi = binomial_phi(inst, d, f, prot);
                    inst.nu_bar * draws.iter().filter(|&&t| t < phi).count() as f64
                }
                Variant::Discrete => {
                    let level = eval_discrete_inverse(&level_pmf(inst, variant, prot, d, f)?, draws[0])?;
                    inst.nu_bar * level as f64
                }
                Variant::Normal => normal_mean(inst, d, f, prot) + inst.params.sigma_tilde[d][f] * draws[0],
            })
        })
        .collect()
}

/// All protection vectors, for degeneracy checks and brute force.
pub(crate) fn protection_combos(nf: usize, np: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..np.pow(nf as u32)).map(move |mut c| {
        (0..nf)
            .map(|_| {
                let p = c % np;
                c /= np;
                p
            })
            .collect()
    })
}


#[cfg(test)]
mod tests {
    use super::testutil::tiny;
    use super::*;

    #[test]
    fn tiny_instance_is_valid() {
        tiny(1).validate().unwrap();
        tiny(2).validate().unwrap();
    }

    #[test]
    fn decision_round_trips_through_assignment() {
        let inst = tiny(1);
        let d = Decision { protection: vec![1, 0], open_edges: vec![true, false, true, false] };
        let back = Decision::from_assignment(&inst, &d.to_assignment(&inst)).unwrap();
        assert_eq!(back, d);
        assert_eq!(d.cost(&inst), 100.0 + 50.0 + 100.0 + 150.0);
    }

    #[test]
    fn scenario_shapes_follow_variant() {
        let inst = tiny(2);
        for v in Variant::ALL {
            let s = sample_scenario(&inst, v, 3, StreamId::new(1, 4)).unwrap();
            s.check_shape(&inst, v).unwrap();
        }
        let s = sample_scenario(&inst, Variant::Selection, 3, StreamId::new(1, 4)).unwrap();
        assert!(s.check_shape(&inst, Variant::Discrete).is_err());
    }

    #[test]
    fn binomial_phi_with_equal_bars() {
        // Two facilities at equal φ̄ = 0.8, cross impact 0.3, ρ = 1.3.
        let mut inst = tiny(1);
        inst.params.phi_tilde = vec![vec![vec![vec![0.8, 0.8], vec![0.24, 0.24]], vec![vec![0.24, 0.24], vec![0.8, 0.8]]]; 2];
        for f in 0..2 {
            assert!((binomial_phi(&inst, 0, f, &[0, 1]) - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_pmf_uniform_when_likelihoods_equal() {
        let mut inst = tiny(2);
        for v in inst.params.u_tilde.iter_mut().flatten().flatten().flatten() {
            let first = v[0];
            v.iter_mut().for_each(|u| *u = first);
        }
        let pmf = level_pmf(&inst, Variant::Discrete, &[0, 1], 1, 0).unwrap();
        assert!(pmf.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn binomial_level_pmf() {
        let mut inst = tiny(2);
        inst.params.phi_tilde = vec![vec![vec![vec![0.65, 0.65], vec![0.0, 0.0]]; 2]; 2];
        let pmf = level_pmf(&inst, Variant::Binomial, &[0, 0], 0, 0).unwrap();
        for (a, b) in pmf.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_capacity_is_mean_plus_scaled_draw() {
        let mut inst = tiny(1);
        inst.params.mu_tilde = vec![vec![vec![vec![13.0, 13.0], vec![0.0, 0.0]]; 2]; 2];
        inst.params.sigma_tilde = vec![vec![2.0, 2.0]; 2];
        let dec = Decision { protection: vec![0, 0], open_edges: vec![true; 4] };
        let s = NdfppScenario { event: 0, draws: vec![vec![-1.0], vec![-1.0]], stream_id: StreamId::new(0, 0) };
        let caps = realized_capacities(&inst, Variant::Normal, &dec, &s).unwrap();
        // μ = 13/1.3 = 10, σ̃ = 2, ϑ = −1.
        assert!((caps[0] - 8.0).abs() < 1e-12);
    }
}
