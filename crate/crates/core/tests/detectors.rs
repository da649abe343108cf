use coinvent::community::{
    adjusted_rand_index, detect, is_label_stable, modularity, randomize_within_structure, DetectorParams,
};
use coinvent::graph::is_connected;
use coinvent::{Algorithm, Partition, WeightedGraph};
use proptest::prelude::*;

fn connected_graph() -> impl Strategy<Value = WeightedGraph> {
    (3usize..16).prop_flat_map(|n| {
        let tree = (1..n).map(|i| (0..i, 0.5f64..3.0)).collect::<Vec<_>>();
        let extra = proptest::collection::vec((0..n, 0..n, 0.5f64..3.0), 0..2 * n);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges: Vec<(usize, usize, f64)> =
                tree.into_iter().enumerate().map(|(i, (j, w))| (j, i + 1, w)).collect();
            for (u, v, w) in extra {
                if u != v && !edges.iter().any(|&(a, b, _)| (a, b) == (u.min(v), u.max(v)) || (a, b) == (v, u)) {
                    edges.push((u.min(v), u.max(v), w));
                }
            }
            WeightedGraph::from_indexed(n, edges).unwrap()
        })
    })
}

fn labels(n: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..5, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn detectors_cover_every_node(g in connected_graph(), seed in 0u64..1000) {
        prop_assert!(is_connected(&g));
        for alg in Algorithm::ALL {
            let d = detect(&g, alg, &DetectorParams::default(), seed).unwrap();
            let p = &d.partition;
            prop_assert_eq!(p.len(), g.node_count());
            prop_assert_eq!(p.sizes().iter().sum::<usize>(), g.node_count());
            prop_assert!(p.sizes().iter().all(|&s| s > 0));
            let q = d.modularity.unwrap();
            prop_assert!((-0.5 - 1e-12..=1.0).contains(&q), "{alg}: Q = {q}");
        }
    }

    #[test]
    fn modularity_detectors_beat_singletons(g in connected_graph(), seed in 0u64..1000) {
        let base = modularity(&g, &Partition::singletons(g.node_count(), "s")).unwrap();
        for alg in [Algorithm::Greedy, Algorithm::Louvain] {
            let p = detect(&g, alg, &DetectorParams::default(), seed).unwrap().partition;
            prop_assert!(modularity(&g, &p).unwrap() >= base - 1e-12);
        }
    }

    #[test]
    fn detectors_are_reproducible(g in connected_graph(), seed in 0u64..1000) {
        for alg in Algorithm::ALL {
            let a = detect(&g, alg, &DetectorParams::default(), seed).unwrap().partition;
            let b = detect(&g, alg, &DetectorParams::default(), seed).unwrap().partition;
            prop_assert_eq!(a.assignment(), b.assignment());
        }
    }

    #[test]
    fn label_propagation_ends_stable(g in connected_graph(), seed in 0u64..1000) {
        let p = detect(&g, Algorithm::LabelProp, &DetectorParams::default(), seed).unwrap().partition;
        prop_assert!(is_label_stable(&g, p.assignment()));
    }

    #[test]
    fn ari_is_symmetric_and_bounded((x, y) in (2usize..30).prop_flat_map(|n| (labels(n), labels(n)))) {
        let px = Partition::from_labels(&x, "x", None);
        let py = Partition::from_labels(&y, "y", None);
        let a = adjusted_rand_index(&px, &py).unwrap().value();
        let b = adjusted_rand_index(&py, &px).unwrap().value();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&a));
        prop_assert_eq!(adjusted_rand_index(&px, &px).unwrap().value(), 1.0);
    }

    #[test]
    fn randomization_keeps_community_sizes(x in labels(40), seed in 0u64..1000) {
        let p = Partition::from_labels(&x, "x", None);
        let r = randomize_within_structure(&p, seed);
        prop_assert_eq!(p.sizes(), r.sizes());
        let again = randomize_within_structure(&p, seed);
        prop_assert_eq!(r.assignment(), again.assignment());
    }
}
