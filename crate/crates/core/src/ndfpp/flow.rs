//! Second-stage recourse without an LP solver.
//!
//! Open edges carry capacity `B = Σ b_n`, which never binds in an acyclic
//! optimal flow, so the recourse problem reduces to a transportation problem:
//! facilities (capacity `ξ_f`) and the dummy node (unbounded) ship to clients
//! at shortest-path cost over the open network. That problem is solved by
//! successive shortest paths.

use super::instance::NdfppInstance;

const INF: f64 = f64::INFINITY;
const FLOW_TOL: f64 = 1e-12;

/// Shortest-path distances from each facility to each client for one set of
/// open edges; reusable across capacity realizations.
#[derive(Debug, Clone)]
pub struct RecourseEvaluator {
    /// `dist[f][c]` over the open network; infinite when unreachable.
    dist: Vec<Vec<f64>>,
    demand: Vec<f64>,
    dummy_cost: f64,
}

impl RecourseEvaluator {
    pub fn new(inst: &NdfppInstance, open_edges: &[bool]) -> Self {
        let n = inst.nodes.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (e, &open) in inst.edges.iter().zip(open_edges) {
            if open {
                adj[e.u].push((e.v, e.length_km));
                adj[e.v].push((e.u, e.length_km));
            }
        }
        let clients = inst.clients();
        let dist = inst
            .facilities
            .iter()
            .map(|&f| {
                let d = dijkstra(&adj, f);
                clients.iter().map(|&c| d[c]).collect()
            })
            .collect();
        Self { dist, demand: clients.iter().map(|&c| inst.nodes[c].demand).collect(), dummy_cost: inst.dummy_cost() }
    }

    /// Optimal recourse cost for facility capacities `caps` (clamped at 0).
    pub fn cost(&self, caps: &[f64]) -> f64 {
        let nf = self.dist.len();
        let nc = self.demand.len();
        // Nodes: 0 = source, 1..=nf facilities, nf+1 dummy, then clients, then sink.
        let dummy = nf + 1;
        let client0 = nf + 2;
        let sink = client0 + nc;
        let mut g = FlowGraph::new(sink + 1);
        for (f, &cap) in caps.iter().enumerate() {
            if cap > FLOW_TOL {
                g.add_arc(0, 1 + f, cap, 0.0);
            }
        }
        g.add_arc(0, dummy, INF, 0.0);
        for c in 0..nc {
            for f in 0..nf {
                if self.dist[f][c].is_finite() {
                    g.add_arc(1 + f, client0 + c, INF, self.dist[f][c]);
                }
            }
            g.add_arc(dummy, client0 + c, INF, self.dummy_cost);
            g.add_arc(client0 + c, sink, self.demand[c], 0.0);
        }
        g.min_cost_flow(0, sink, self.demand.iter().sum())
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![INF; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&v| !done[v] && dist[v].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else { break };
        done[u] = true;
        for &(v, w) in &adj[u] {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
            }
        }
    }
    dist
}

struct FlowArc {
    to: usize,
    cap: f64,
    cost: f64,
}

struct FlowGraph {
    arcs: Vec<FlowArc>,
    out: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self { arcs: Vec::new(), out: vec![Vec::new(); n] }
    }

    fn add_arc(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.out[from].push(self.arcs.len());
        self.arcs.push(FlowArc { to, cap, cost });
        self.out[to].push(self.arcs.len());
        self.arcs.push(FlowArc { to: from, cap: 0.0, cost: -cost });
    }

    /// Successive shortest paths with Johnson potentials; arc costs start
    /// nonnegative, so zero potentials are valid initially.
    fn min_cost_flow(&mut self, s: usize, t: usize, mut need: f64) -> f64 {
        let n = self.out.len();
        let tol = FLOW_TOL * need.max(1.0);
        let mut pot = vec![0.0; n];
        let mut total = 0.0;
        while need > tol {
            let mut dist = vec![INF; n];
            let mut prev = vec![usize::MAX; n];
            let mut done = vec![false; n];
            dist[s] = 0.0;
            loop {
                let Some(u) = (0..n).filter(|&v| !done[v] && dist[v].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else { break };
                done[u] = true;
                for &a in &self.out[u] {
                    let arc = &self.arcs[a];
                    // Settled nodes stay settled; rounding can make reduced
                    // costs slightly negative, and relaxing them would let
                    // `prev` form a cycle.
                    if arc.cap > tol && !done[arc.to] {
                        let nd = dist[u] + (arc.cost + pot[u] - pot[arc.to]).max(0.0);
                        if nd < dist[arc.to] {
                            dist[arc.to] = nd;
                            prev[arc.to] = a;
                        }
                    }
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    pot[v] += dist[v];
                }
            }
            let mut push = need;
            let mut v = t;
            while v != s {
                let a = prev[v];
                push = push.min(self.arcs[a].cap);
                v = self.arcs[a ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let a = prev[v];
                self.arcs[a].cap -= push;
                self.arcs[a ^ 1].cap += push;
                total += push * self.arcs[a].cost;
                v = self.arcs[a ^ 1].to;
            }
            need -= push;
        }
        total
    }
}
