//! Asynchronous weighted label propagation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Partition;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

/// Labels whose summed neighbour weight is within rounding of the maximum.
fn heaviest_labels(graph: &WeightedGraph, labels: &[usize], node: usize, tally: &mut [f64], out: &mut Vec<usize>) {
    out.clear();
    let mut touched: Vec<usize> = Vec::new();
    for &(j, w) in graph.neighbors(node) {
        let l = labels[j];
        if tally[l] == 0.0 {
            touched.push(l);
        }
        tally[l] += w;
    }
    let max = touched.iter().map(|&l| tally[l]).fold(0.0, f64::max);
    let tol = max * 1e-12;
    for &l in &touched {
        if tally[l] >= max - tol {
            out.push(l);
        }
        tally[l] = 0.0;
    }
    out.sort_unstable();
}

/// Every non-isolated node carries one of its neighbourhood's heaviest labels.
pub fn is_label_stable(graph: &WeightedGraph, labels: &[usize]) -> bool {
    let mut tally = vec![0.0; labels.iter().max().map_or(0, |&m| m + 1)];
    let mut best = Vec::new();
    (0..graph.node_count()).all(|i| {
        if graph.neighbors(i).is_empty() {
            return true;
        }
        heaviest_labels(graph, labels, i, &mut tally, &mut best);
        best.contains(&labels[i])
    })
}

/// Starts from unique labels and updates nodes in a freshly shuffled order
/// each sweep. A node keeps its label while that label is among the heaviest;
/// otherwise it adopts one of the heaviest labels uniformly at random.
pub fn detect_label_propagation(graph: &WeightedGraph, max_sweeps: usize, seed: u64) -> Result<Partition> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut tally = vec![0.0; n];
    let mut best = Vec::new();

    for _ in 0..max_sweeps {
        order.shuffle(&mut rng);
        let mut changed = false;
        for &i in &order {
            if graph.neighbors(i).is_empty() {
                continue;
            }
            heaviest_labels(graph, &labels, i, &mut tally, &mut best);
            if best.contains(&labels[i]) {
                continue;
            }
            labels[i] = *best.choose(&mut rng).expect("non-isolated node has a label");
            changed = true;
        }
        if !changed {
            debug_assert!(is_label_stable(graph, &labels));
            return Ok(Partition::from_labels(&labels, "labelprop", Some(seed)));
        }
    }
    Err(Error::NotConverged(max_sweeps))
}
