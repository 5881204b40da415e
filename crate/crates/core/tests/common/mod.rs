#![allow(dead_code)]

use std::path::PathBuf;

use endosaa::instance_gen::{generate_instance, load_cities, GenConfig, DEFAULT_STATES};
use endosaa::ndfpp::{Edge, Event, NdfppInstance, Node, VariantParams};
use endosaa::transforms::binomial_pmf;
use endosaa::HighsSolver;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dataset() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/se_cities.csv")
}

pub fn states() -> Vec<String> {
    DEFAULT_STATES.iter().map(|s| s.to_string()).collect()
}

pub fn desk_config(levels: u32, seed: u64) -> GenConfig {
    GenConfig { facility_count: 4, levels, seed, ..GenConfig::default() }
}

/// 15-node, 4-facility instance from the bundled snapshot.
pub fn desk_instance(levels: u32, seed: u64) -> NdfppInstance {
    let cities = load_cities(&dataset(), &states()).unwrap();
    generate_instance(&cities, &desk_config(levels, seed), &HighsSolver).unwrap()
}

/// Random small instance with valid parameters for every variant.
pub fn random_instance(seed: u64, nf: usize, np: usize, levels: u32, n_events: usize, n_clients: usize, max_edges: usize) -> NdfppInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nn = nf + n_clients;
    let nodes: Vec<Node> = (0..nn)
        .map(|k| Node {
            name: format!("n{k}"),
            lat: rng.gen_range(0.0..1.0),
            lon: rng.gen_range(0.0..1.0),
            demand: if k < nf { 0.0 } else { rng.gen_range(1.0..10.0_f64).round() },
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (0..nn).flat_map(|u| (u + 1..nn).map(move |v| (u, v))).collect();
    for i in (1..pairs.len()).rev() {
        pairs.swap(i, rng.gen_range(0..=i));
    }
    pairs.truncate(max_edges);
    pairs.sort_unstable();
    let edges: Vec<Edge> = pairs
        .into_iter()
        .map(|(u, v)| {
            let len = rng.gen_range(5.0..30.0_f64).round();
            Edge { u, v, length_km: len, cost: 10.0 * len }
        })
        .collect();
    let protection_costs: Vec<Vec<f64>> = (0..nf)
        .map(|_| {
            let c = rng.gen_range(50.0..150.0);
            (1..=np).map(|p| c * p as f64 / np as f64).collect()
        })
        .collect();
    let max_cost: f64 = protection_costs.iter().map(|c| c[np - 1]).sum::<f64>() + edges.iter().map(|e| e.cost).sum::<f64>();
    let budget = rng.gen_range(0.3..0.8) * max_cost + protection_costs.iter().map(|c| c[0]).sum::<f64>();

    let mut probs: Vec<f64> = (0..n_events).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let events: Vec<Event> = probs
        .iter()
        .enumerate()
        .map(|(d, &p)| Event { name: format!("e{d}"), probability: p, intensity: (0..nf).map(|_| if d == 0 { 0 } else { rng.gen_range(1..=3) }).collect() })
        .collect();
    let demand: f64 = nodes.iter().map(|n| n.demand).sum();
    let nu_bar = if levels == 0 { 0.0 } else { demand / (0.9 * nf as f64) / f64::from(levels) };

    let phi_bar: Vec<Vec<Vec<f64>>> = (0..n_events)
        .map(|_| {
            (0..nf)
                .map(|_| {
                    let mut v: Vec<f64> = (0..np).map(|_| rng.gen_range(0.05..0.95)).collect();
                    v.sort_by(f64::total_cmp);
                    v
                })
                .collect()
        })
        .collect();
    let impact = |f: usize, i: usize| if f == i { 1.0 } else { 0.3 };
    let rho = 1.0 + 0.3 * (nf as f64 - 1.0);
    let phi_tilde = (0..n_events).map(|d| (0..nf).map(|f| (0..nf).map(|i| (0..np).map(|p| impact(f, i) * phi_bar[d][i][p]).collect()).collect()).collect()).collect();
    let u_tilde = (0..n_events)
        .map(|d| {
            (0..nf)
                .map(|f| {
                    (0..nf)
                        .map(|i| (0..np).map(|p| binomial_pmf(levels, phi_bar[d][i][p]).into_iter().map(|q| impact(f, i) * q).collect()).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    let nu_max = nu_bar * f64::from(levels);
    let mu_tilde = (0..n_events)
        .map(|d| (0..nf).map(|f| (0..nf).map(|i| (0..np).map(|p| impact(f, i) * nu_max * (0.5 + 0.5 * phi_bar[d][i][p])).collect()).collect()).collect())
        .collect();
    let sigma_tilde = (0..n_events).map(|_| (0..nf).map(|_| nu_max * rng.gen_range(0.02..0.08)).collect()).collect();

    let inst = NdfppInstance {
        name: format!("random-{seed}"),
        seed,
        nodes,
        facilities: (0..nf).collect(),
        edges,
        protection_costs,
        budget,
        penalty_multiplier: 10.0,
        events,
        levels,
        nu_bar,
        params: VariantParams { phi_bar, phi_tilde, rho, u_tilde, mu_tilde, sigma_tilde },
    };
    inst.validate().unwrap();
    inst
}
