use serde::{Deserialize, Serialize};

use super::NdfppError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    /// `b_n`; ignored for facility nodes.
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length_km: f64,
    /// First-stage opening cost `c_e`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub name: String,
    pub probability: f64,
    /// Intensity level per facility; 0 for the no-disruption event.
    pub intensity: Vec<u8>,
}

/// Probability parameters of all four variants. Index order follows the
/// symbols: event `d`, facility `f`, influencing facility `i`, protection `p`,
/// capacity level `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantParams {
    /// `φ̄[d][f][p]`, success probability per capacity trial.
    pub phi_bar: Vec<Vec<Vec<f64>>>,
    /// `φ̃[d][f][i][p]`.
    pub phi_tilde: Vec<Vec<Vec<Vec<f64>>>>,
    pub rho: f64,
    /// `ũ[d][f][i][p][w]`.
    pub u_tilde: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    /// `μ̃[d][f][i][p]`.
    pub mu_tilde: Vec<Vec<Vec<Vec<f64>>>>,
    /// `σ̃[d][f]`.
    pub sigma_tilde: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdfppInstance {
    pub name: String,
    pub seed: u64,
    pub nodes: Vec<Node>,
    /// Node indices of facilities; all other nodes are clients.
    pub facilities: Vec<usize>,
    pub edges: Vec<Edge>,
    /// `c[f][p]` for protection levels `p = 1..P` stored at `p − 1`.
    pub protection_costs: Vec<Vec<f64>>,
    pub budget: f64,
    /// Dummy-arc cost multiplier `a`.
    pub penalty_multiplier: f64,
    pub events: Vec<Event>,
    /// Highest capacity level `W`.
    pub levels: u32,
    /// Capacity increment `ν̄`; level `w` has capacity `w·ν̄`.
    pub nu_bar: f64,
    pub params: VariantParams,
}

/// Directed arc of the second-stage network. The dummy supply node has index
/// `nodes.len()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
    pub edge: Option<usize>,
}

impl NdfppInstance {
    pub fn num_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn num_protections(&self) -> usize {
        self.protection_costs.first().map_or(0, Vec::len)
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn dummy_node(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_facility(&self, n: usize) -> bool {
        self.facilities.contains(&n)
    }

    pub fn clients(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&n| !self.is_facility(n)).collect()
    }

    /// `B = Σ b_n` over clients.
    pub fn total_demand(&self) -> f64 {
        self.clients().iter().map(|&n| self.nodes[n].demand).sum()
    }

    pub fn max_transport_cost(&self) -> f64 {
        self.edges.iter().map(|e| e.length_km).fold(0.0, f64::max)
    }

    pub fn dummy_cost(&self) -> f64 {
        self.penalty_multiplier * self.max_transport_cost()
    }

    /// Both directions of every edge, then one dummy arc per client.
    pub fn arcs(&self) -> Vec<Arc> {
        let mut out = Vec::with_capacity(2 * self.edges.len() + self.nodes.len());
        for (k, e) in self.edges.iter().enumerate() {
            out.push(Arc { from: e.u, to: e.v, cost: e.length_km, edge: Some(k) });
            out.push(Arc { from: e.v, to: e.u, cost: e.length_km, edge: Some(k) });
        }
        let dummy = self.dummy_cost();
        for c in self.clients() {
            out.push(Arc { from: self.dummy_node(), to: c, cost: dummy, edge: None });
        }
        out
    }

    pub fn capacity_of_level(&self, w: u32) -> f64 {
        f64::from(w) * self.nu_bar
    }

    /// Largest capacity `ν_W`.
    pub fn max_capacity(&self) -> f64 {
        self.capacity_of_level(self.levels)
    }

    pub fn event_probabilities(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.probability).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NdfppError> {
        let inst: NdfppInstance = serde_json::from_str(s).map_err(|e| NdfppError::Invalid(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), NdfppError> {
        let bad = |m: String| Err(NdfppError::Invalid(m));
        let (nf, np, nd, nn) = (self.num_facilities(), self.num_protections(), self.num_events(), self.nodes.len());
        let w = self.levels as usize;
        if nf == 0 || np == 0 || nd == 0 {
            return bad("instance needs facilities, protection levels and events".into());
        }
        if self.facilities.iter().any(|&f| f >= nn) {
            return bad("facility index out of range".into());
        }
        let mut sorted = self.facilities.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != nf {
            return bad("duplicate facility".into());
        }
        if self.edges.iter().any(|e| e.u >= nn || e.v >= nn || e.u == e.v) {
            return bad("edge endpoint out of range".into());
        }
        if self.protection_costs.len() != nf || self.protection_costs.iter().any(|r| r.len() != np) {
            return bad("protection_costs must be facilities × protections".into());
        }
        let total: f64 = self.event_probabilities().iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.events.iter().any(|e| e.probability < 0.0) {
            return bad(format!("event probabilities sum to {total}"));
        }
        if self.events.iter().any(|e| e.intensity.len() != nf) {
            return bad("event intensity must list every facility".into());
        }
        if !(self.nu_bar >= 0.0) {
            return bad("nu_bar must be nonnegative".into());
        }
        let p = &self.params;
        let shape3 = |v: &Vec<Vec<Vec<f64>>>, c: usize| v.len() == nd && v.iter().all(|a| a.len() == nf && a.iter().all(|b| b.len() == c));
        if !shape3(&p.phi_bar, np) {
            return bad("phi_bar must be events × facilities × protections".into());
        }
        let four = |v: &Vec<Vec<Vec<Vec<f64>>>>| v.len() == nd && v.iter().all(|a| a.len() == nf && a.iter().all(|b| b.len() == nf && b.iter().all(|c| c.len() == np)));
        if !four(&p.phi_tilde) || !four(&p.mu_tilde) {
            return bad("phi_tilde/mu_tilde must be events × facilities × facilities × protections".into());
        }
        let u_ok = p.u_tilde.len() == nd
            && p.u_tilde.iter().all(|a| a.len() == nf && a.iter().all(|b| b.len() == nf && b.iter().all(|c| c.len() == np && c.iter().all(|d| d.len() == w + 1))));
        if !u_ok {
            return bad("u_tilde must be events × facilities × facilities × protections × (W+1)".into());
        }
        if p.sigma_tilde.len() != nd || p.sigma_tilde.iter().any(|r| r.len() != nf) {
            return bad("sigma_tilde must be events × facilities".into());
        }
        if !(p.rho > 0.0) {
            return bad("rho must be positive".into());
        }
        if p.phi_bar.iter().flatten().flatten().any(|&v| !(0.0..=1.0).contains(&v)) {
            return bad("phi_bar outside [0, 1]".into());
        }
        Ok(())
    }
}
