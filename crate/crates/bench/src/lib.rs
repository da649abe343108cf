//! Shared fixtures for the benchmarks.

use std::collections::BTreeSet;

use coinvent::graph::{build_bipartite, BipartiteNetwork};
use coinvent::ingest::filter_cohort;
use coinvent::stats::{histogram, LagHistogram};
use coinvent::synth::{generate, planted_partition_graph, CommunitySpec, SynthConfig};
use coinvent::WeightedGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

/// Bipartite network of a synthetic cohort with `count` communities of 20.
pub fn cohort_network(count: usize) -> BipartiteNetwork {
    let cfg = SynthConfig::new(1, CommunitySpec::Uniform { count, size: 20 }, 0.5, 0.001);
    let data = generate(&cfg).expect("valid synthetic config");
    let classes = BTreeSet::from([cfg.main_class.clone()]);
    let cohort = filter_cohort(&data.patents, &classes, cfg.start_year..=cfg.start_year + cfg.years as i32);
    build_bipartite(&cohort, &data.links)
}

/// Planted-partition graph with `k` blocks of 50 nodes.
pub fn planted_graph(k: usize) -> WeightedGraph {
    planted_partition_graph(&vec![50; k], 0.3, 0.01, 3).expect("valid planted graph").0
}

/// `n` shifted log-normal lags.
pub fn lag_sample(n: usize, seed: u64) -> Vec<f64> {
    let d = LogNormal::new(25f64.ln(), 0.55).expect("valid parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| d.sample(&mut rng) - 6.0).collect()
}

/// Two-month histogram of 50,000 lags.
pub fn lag_histogram() -> LagHistogram {
    histogram(&lag_sample(50_000, 5), 2.0).expect("positive bin width")
}
