//! NDFPP instance generation from a cities table.
//!
//! Nodes are the cities at or above a population threshold, edges come from a
//! planar Delaunay triangulation of (longitude, latitude), and all costs and
//! probability parameters follow closed forms driven by one seed.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinearExpr, MipModel, Sense};
use crate::ndfpp::{Edge, Event, NdfppError, NdfppInstance, Node, VariantParams};
use crate::rng::{RngStream, StreamId};
use crate::solver::{MilpSolver, SolveParams, SolverError};
use crate::transforms::binomial_pmf;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("network needs at least 3 non-collinear cities, got {0}")]
    TooFewPoints(usize),
    #[error("cities are collinear")]
    Collinear,
    #[error("unknown facility `{0}`")]
    UnknownFacility(String),
    #[error("cannot open {count} facilities among {nodes} nodes")]
    InfeasibleCount { count: usize, nodes: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("facility location ended with status {0}")]
    NoSolution(String),
    #[error(transparent)]
    Instance(#[from] NdfppError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRecord {
    pub name: String,
    pub state: String,
    pub latitude: f64,
    pub longitude: f64,
    pub population: u64,
    pub median_home_value: f64,
}

const COLUMNS: [&str; 6] = ["city", "state_id", "lat", "lng", "population", "home_value"];

/// Southeastern states used when no whitelist is configured.
pub const DEFAULT_STATES: [&str; 9] = ["AL", "FL", "GA", "KY", "MS", "NC", "SC", "TN", "VA"];

/// Parses a cities CSV and keeps rows whose state is in `states` (all rows
/// when `states` is empty).
pub fn load_cities(path: &Path, states: &[String]) -> Result<Vec<CityRecord>, GenError> {
    let text = std::fs::read_to_string(path).map_err(|source| GenError::Io { path: path.display().to_string(), source })?;
    parse_cities(&text, states)
}

pub fn parse_cities(text: &str, states: &[String]) -> Result<Vec<CityRecord>, GenError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| GenError::Malformed { line: 1, msg: e.to_string() })?.clone();
    let idx: Vec<usize> = COLUMNS
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).ok_or_else(|| GenError::MissingColumn((*c).into())))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| GenError::Malformed { line: e.position().map_or(0, |p| p.line()), msg: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let bad = |msg: String| GenError::Malformed { line, msg };
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(format!("{} = `{}` is not a number", COLUMNS[k], field(k))));
        let city = CityRecord {
            name: field(0).to_string(),
            state: field(1).to_string(),
            latitude: num(2)?,
            longitude: num(3)?,
            population: field(4).parse().map_err(|_| bad(format!("population = `{}` is not an integer", field(4))))?,
            median_home_value: num(5)?,
        };
        if city.latitude.abs() > 90.0 || city.longitude.abs() > 180.0 {
            return Err(bad("coordinates out of range".into()));
        }
        if city.population == 0 {
            return Err(bad("population must be positive".into()));
        }
        if states.is_empty() || states.iter().any(|s| s == &city.state) {
            out.push(city);
        }
    }
    Ok(out)
}

/// Great-circle distance between `(lat, lon)` points in degrees.
pub fn haversine_km(p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let (la1, lo1) = (p1.0.to_radians(), p1.1.to_radians());
    let (la2, lo2) = (p2.0.to_radians(), p2.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Sorted by population (descending), then name.
    pub nodes: Vec<CityRecord>,
    /// `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl Network {
    pub fn distance_km(&self, u: usize, v: usize) -> f64 {
        let (a, b) = (&self.nodes[u], &self.nodes[v]);
        haversine_km((a.latitude, a.longitude), (b.latitude, b.longitude))
    }
}

/// Cities with population `≥ threshold`, joined by Delaunay edges.
pub fn build_network(cities: &[CityRecord], threshold: u64) -> Result<Network, GenError> {
    let mut nodes: Vec<CityRecord> = cities.iter().filter(|c| c.population >= threshold).cloned().collect();
    nodes.sort_by(|a, b| b.population.cmp(&a.population).then_with(|| a.name.cmp(&b.name)).then_with(|| a.state.cmp(&b.state)));
    if nodes.len() < 3 {
        return Err(GenError::TooFewPoints(nodes.len()));
    }
    let pts: Vec<delaunator::Point> = nodes.iter().map(|c| delaunator::Point { x: c.longitude, y: c.latitude }).collect();
    let tri = delaunator::triangulate(&pts);
    if tri.triangles.is_empty() {
        return Err(GenError::Collinear);
    }
    let mut edges = BTreeSet::new();
    for t in tri.triangles.chunks(3) {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    Ok(Network { nodes, edges: edges.into_iter().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisruptionEvent {
    pub name: String,
    pub center_lat: f64,
    pub center_lon: f64,
    pub r1_km: f64,
    pub r2_km: f64,
    pub probability: f64,
}

pub fn default_events() -> Vec<DisruptionEvent> {
    let ev = |name: &str, lat, lon, r1, r2, p| DisruptionEvent { name: name.into(), center_lat: lat, center_lon: lon, r1_km: r1, r2_km: r2, probability: p };
    vec![
        ev("hurricane", 27.9506, -82.4572, 250.0, 800.0, 0.10),
        ev("snowstorm", 35.7796, -78.6382, 160.0, 800.0, 0.05),
        ev("tornado", 34.7304, -86.5861, 80.0, 400.0, 0.10),
    ]
}

/// Intensity level 1 (high) within `r1`, 2 within `r2`, else 3.
pub fn assign_intensity(lat: f64, lon: f64, event: &DisruptionEvent) -> u8 {
    let d = haversine_km((lat, lon), (event.center_lat, event.center_lon));
    if d <= event.r1_km {
        1
    } else if d <= event.r2_km {
        2
    } else {
        3
    }
}

/// How the Discrete-variant likelihoods `ũ^{dpw}` depend on the level `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityMode {
    /// Independent of `w`, which makes every level equally likely.
    Uniform,
    /// Scaled by the binomial pmf `Bin(W, φ̄)(w)`, so the level law depends on protection.
    BinomialWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub population_threshold: u64,
    pub facility_count: usize,
    /// Facility names; when empty they are chosen by [`select_facilities`].
    pub facilities: Vec<String>,
    pub levels: u32,
    pub protections: usize,
    pub intensity_levels: u32,
    pub seed: u64,
    pub budget_fraction: f64,
    pub penalty_multiplier: f64,
    pub edge_cost_per_km: f64,
    pub eta: f64,
    pub cross_impact: f64,
    pub malfunction: f64,
    pub protection_cost_range: (f64, f64),
    pub demand_divisor: f64,
    pub capacity_slack: f64,
    pub home_value_weight: f64,
    pub utility_mode: UtilityMode,
    pub states: Vec<String>,
    pub events: Vec<DisruptionEvent>,
    pub no_disruption_probability: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            population_threshold: 650_000,
            facility_count: 4,
            facilities: Vec::new(),
            levels: 2,
            protections: 4,
            intensity_levels: 3,
            seed: 0,
            budget_fraction: 0.5,
            penalty_multiplier: 10.0,
            edge_cost_per_km: 10.0,
            eta: 0.7,
            cross_impact: 0.3,
            malfunction: 0.05,
            protection_cost_range: (7500.0, 15000.0),
            demand_divisor: 1e4,
            capacity_slack: 0.9,
            home_value_weight: 0.01,
            utility_mode: UtilityMode::Uniform,
            states: DEFAULT_STATES.iter().map(|s| s.to_string()).collect(),
            events: default_events(),
            no_disruption_probability: 0.75,
        }
    }
}

/// Compact capacitated facility location: open exactly `count` nodes, each
/// with capacity `Σb / (0.9·count)`, assign demand fractionally, and minimize
/// demand-weighted distance plus `home_value_weight ×` median home value of
/// the opened nodes.
pub fn select_facilities(net: &Network, count: usize, demand_divisor: f64, home_value_weight: f64, solver: &dyn MilpSolver) -> Result<Vec<usize>, GenError> {
    let n = net.nodes.len();
    if count == 0 || count > n {
        return Err(GenError::InfeasibleCount { count, nodes: n });
    }
    if count == n {
        return Ok((0..n).collect());
    }
    let demand: Vec<f64> = net.nodes.iter().map(|c| c.population as f64 / demand_divisor).collect();
    let cap = demand.iter().sum::<f64>() / (0.9 * count as f64);
    let mut m = MipModel::new();
    let open: Vec<_> = (0..n).map(|f| m.add_binary(format!("open[{f}]"))).collect();
    let assign: Vec<Vec<_>> = (0..n).map(|c| (0..n).map(|f| m.add_continuous(0.0, 1.0, format!("a[{c}][{f}]"))).collect()).collect();
    for f in 0..n {
        m.objective.add_term(open[f], home_value_weight * net.nodes[f].median_home_value);
    }
    for c in 0..n {
        let mut row = LinearExpr::new();
        for f in 0..n {
            m.objective.add_term(assign[c][f], demand[c] * net.distance_km(c, f));
            row.add_term(assign[c][f], 1.0);
            let mut link = LinearExpr::var(assign[c][f]);
            link.add_term(open[f], -1.0);
            m.add_constraint(link, Sense::Le, 0.0);
        }
        m.add_constraint(row, Sense::Eq, 1.0);
    }
    for f in 0..n {
        let mut row = LinearExpr::term(open[f], -cap);
        for c in 0..n {
            row.add_term(assign[c][f], demand[c]);
        }
        m.add_constraint(row, Sense::Le, 0.0);
    }
    let mut total = LinearExpr::new();
    open.iter().for_each(|&v| {
        total.add_term(v, 1.0);
    });
    m.add_constraint(total, Sense::Eq, count as f64);
    let r = solver.solve(&m, &SolveParams::default())?;
    if !r.status.has_solution() {
        return Err(GenError::NoSolution(format!("{:?}", r.status)));
    }
    Ok((0..n).filter(|&f| r.assignment.get(open[f]).unwrap_or(0.0) > 0.5).collect())
}

/// `φ̄_f^{dp}` for intensity `l` (0 for the no-disruption event).
pub fn phi_bar(cfg: &GenConfig, p: usize, intensity: u8) -> f64 {
    let ratio = (1.0 - cfg.malfunction) * (p as f64 + 1.0) / cfg.protections as f64;
    if intensity == 0 {
        cfg.eta * ratio + (1.0 - cfg.eta)
    } else {
        ratio.powf(f64::from(intensity) / f64::from(cfg.intensity_levels))
    }
}

/// Normal-variant `μ̄_f^{dp}` (0-based `p`).
pub fn mu_bar(cfg: &GenConfig, nu_max: f64, p: usize, intensity: u8) -> f64 {
    let (pp, l) = (cfg.protections as f64, f64::from(cfg.intensity_levels));
    nu_max * (1.0 - (pp - p as f64) * (l + f64::from(intensity) + 2.0) / (2.0 * (pp + 1.0) * (l + 1.0)))
}

/// Normal-variant `σ̄_f^d`.
pub fn sigma_bar(cfg: &GenConfig, nu_max: f64, intensity: u8) -> f64 {
    let (pp, l) = (cfg.protections as f64, f64::from(cfg.intensity_levels));
    nu_max * (l + f64::from(intensity) + 2.0) / (8.0 * (pp + 1.0) * (l + 1.0))
}

/// Costs, events and the parameters of every variant for facility set `facilities`.
pub fn gen_parameters(net: &Network, facilities: &[usize], cfg: &GenConfig) -> Result<NdfppInstance, GenError> {
    if let Some(&f) = facilities.iter().find(|&&f| f >= net.nodes.len()) {
        return Err(GenError::UnknownFacility(format!("node index {f}")));
    }
    let nf = facilities.len();
    let np = cfg.protections;
    let w = cfg.levels;
    let nodes: Vec<Node> = net
        .nodes
        .iter()
        .enumerate()
        .map(|(k, c)| Node {
            name: format!("{}, {}", c.name, c.state),
            lat: c.latitude,
            lon: c.longitude,
            demand: if facilities.contains(&k) { 0.0 } else { c.population as f64 / cfg.demand_divisor },
        })
        .collect();
    let edges: Vec<Edge> = net
        .edges
        .iter()
        .map(|&(u, v)| {
            let len = net.distance_km(u, v);
            Edge { u, v, length_km: len, cost: len * cfg.edge_cost_per_km }
        })
        .collect();

    let mut rng = RngStream::new(cfg.seed, StreamId::new(0, 0));
    let (lo, hi) = cfg.protection_cost_range;
    let protection_costs: Vec<Vec<f64>> = (0..nf)
        .map(|f| {
            let c_max = lo + (hi - lo) * rng.uniform(f as u64, 0);
            (1..=np).map(|p| c_max * p as f64 / np as f64).collect()
        })
        .collect();
    let budget = cfg.budget_fraction * (protection_costs.iter().map(|c| c[np - 1]).sum::<f64>() + edges.iter().map(|e| e.cost).sum::<f64>());

    let mut events = vec![Event { name: "nd".into(), probability: cfg.no_disruption_probability, intensity: vec![0; nf] }];
    for ev in &cfg.events {
        let intensity = facilities.iter().map(|&f| assign_intensity(net.nodes[f].latitude, net.nodes[f].longitude, ev)).collect();
        events.push(Event { name: ev.name.clone(), probability: ev.probability, intensity });
    }
    let nd = events.len();

    let client_demand: f64 = nodes.iter().map(|n| n.demand).sum();
    let nu_max = client_demand / (cfg.capacity_slack * nf as f64);
    let nu_bar = if w == 0 { 0.0 } else { nu_max / f64::from(w) };
    let rho = 1.0 + cfg.cross_impact * (nf as f64 - 1.0);
    let impact = |f: usize, i: usize| if f == i { 1.0 } else { cfg.cross_impact };

    let phi_bar_v: Vec<Vec<Vec<f64>>> = events.iter().map(|e| (0..nf).map(|f| (0..np).map(|p| phi_bar(cfg, p, e.intensity[f])).collect()).collect()).collect();
    let phi_tilde = (0..nd)
        .map(|d| (0..nf).map(|f| (0..nf).map(|i| (0..np).map(|p| impact(f, i) * phi_bar_v[d][i][p]).collect()).collect()).collect())
        .collect();
    let u_tilde = (0..nd)
        .map(|d| {
            (0..nf)
                .map(|f| {
                    (0..nf)
                        .map(|i| {
                            (0..np)
                                .map(|p| {
                                    let base = impact(f, i) * phi_bar_v[d][i][p];
                                    match cfg.utility_mode {
                                        UtilityMode::Uniform => vec![base; w as usize + 1],
                                        UtilityMode::BinomialWeights => binomial_pmf(w, phi_bar_v[d][i][p]).into_iter().map(|q| base * q).collect(),
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mu_tilde = (0..nd)
        .map(|d| {
            (0..nf)
                .map(|f| (0..nf).map(|i| (0..np).map(|p| impact(f, i) * mu_bar(cfg, nu_max, p, events[d].intensity[f])).collect()).collect())
                .collect()
        })
        .collect();
    let sigma_tilde = (0..nd)
        .map(|d| {
            (0..nf)
                .map(|f| {
                    let own = sigma_bar(cfg, nu_max, events[d].intensity[f]);
                    let others: f64 = (0..nf).filter(|&i| i != f).map(|i| sigma_bar(cfg, nu_max, events[d].intensity[i])).sum();
                    (own + cfg.cross_impact * others) / rho
                })
                .collect()
        })
        .collect();

    let inst = NdfppInstance {
        name: format!("se{}-f{}-w{}-s{}", net.nodes.len(), nf, w, cfg.seed),
        seed: cfg.seed,
        nodes,
        facilities: facilities.to_vec(),
        edges,
        protection_costs,
        budget,
        penalty_multiplier: cfg.penalty_multiplier,
        events,
        levels: w,
        nu_bar,
        params: VariantParams { phi_bar: phi_bar_v, phi_tilde, rho, u_tilde, mu_tilde, sigma_tilde },
    };
    inst.validate()?;
    Ok(inst)
}

/// Full pipeline: threshold network, facility set (configured or solved), parameters.
pub fn generate_instance(cities: &[CityRecord], cfg: &GenConfig, solver: &dyn MilpSolver) -> Result<NdfppInstance, GenError> {
    let net = build_network(cities, cfg.population_threshold)?;
    let facilities = if cfg.facilities.is_empty() {
        select_facilities(&net, cfg.facility_count, cfg.demand_divisor, cfg.home_value_weight, solver)?
    } else {
        cfg.facilities
            .iter()
            .map(|name| {
                net.nodes
                    .iter()
                    .position(|c| &c.name == name || format!("{}, {}", c.name, c.state) == *name)
                    .ok_or_else(|| GenError::UnknownFacility(name.clone()))
            })
            .collect::<Result<_, _>>()?
    };
    gen_parameters(&net, &facilities, cfg)
}
