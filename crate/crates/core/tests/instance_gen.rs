mod common;

use endosaa::instance_gen::{build_network, load_cities, DEFAULT_STATES};
use endosaa::ndfpp::{level_pmf, realized_capacities, sample_scenario, Decision, RecourseEvaluator, Variant};
use endosaa::rng::StreamId;
use proptest::prelude::*;

#[test]
fn snapshot_network_sizes() {
    let cities = load_cities(&common::dataset(), &common::states()).unwrap();
    assert!(cities.iter().all(|c| DEFAULT_STATES.contains(&c.state.as_str())));
    let net = build_network(&cities, 650_000).unwrap();
    assert_eq!((net.nodes.len(), net.edges.len()), (15, 36));
    let big = build_network(&cities, 450_000).unwrap();
    assert_eq!((big.nodes.len(), big.edges.len()), (21, 54));
}

#[test]
fn triangulations_are_planar_and_connected() {
    let cities = load_cities(&common::dataset(), &common::states()).unwrap();
    for threshold in [300_000, 450_000, 650_000, 900_000] {
        let net = build_network(&cities, threshold).unwrap();
        let n = net.nodes.len();
        assert!(net.edges.len() <= 3 * n - 6, "{threshold}: {} edges on {n} nodes", net.edges.len());
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            stack.extend(net.edges.iter().filter_map(|&(a, b)| if a == u { Some(b) } else if b == u { Some(a) } else { None }));
        }
        assert!(seen.iter().all(|&s| s), "{threshold}: disconnected");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn level_laws_are_distributions(seed in 0u64..1000, prot in proptest::collection::vec(0usize..4, 4)) {
        let inst = common::desk_instance(2, seed % 5);
        for variant in [Variant::Selection, Variant::Binomial, Variant::Discrete] {
            for d in 0..inst.num_events() {
                for f in 0..inst.num_facilities() {
                    let pmf = level_pmf(&inst, variant, &prot, d, f).unwrap();
                    prop_assert_eq!(pmf.len(), inst.levels as usize + 1);
                    prop_assert!(pmf.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
                    prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn recourse_is_always_finite(seed in 0u64..1000, mask in any::<u64>(), variant_ix in 0usize..4) {
        let inst = common::desk_instance(2, 0);
        let variant = Variant::ALL[variant_ix];
        let decision = Decision {
            protection: (0..inst.num_facilities()).map(|f| ((mask >> (2 * f)) & 3) as usize).collect(),
            open_edges: (0..inst.edges.len()).map(|e| (mask >> (e % 64)) & 1 == 1).collect(),
        };
        let eval = RecourseEvaluator::new(&inst, &decision.open_edges);
        let s = sample_scenario(&inst, variant, seed, StreamId::new(1, 0)).unwrap();
        let caps = realized_capacities(&inst, variant, &decision, &s).unwrap();
        prop_assert!(caps.iter().all(|&c| c >= 0.0));
        let q = eval.cost(&caps);
        prop_assert!(q.is_finite() && q >= 0.0);
        // Everything shipped from the dummy bounds the recourse from above.
        prop_assert!(q <= inst.dummy_cost() * inst.total_demand() * (1.0 + 1e-12));
    }
}
