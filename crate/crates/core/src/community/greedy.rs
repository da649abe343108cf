//! Clauset–Newman–Moore agglomerative modularity maximisation.

use std::collections::{BTreeMap, BTreeSet};

use super::{Candidate, Partition};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Greedy modularity agglomeration. Deterministic given the node order; the
/// seed is recorded but not used.
pub fn detect_greedy(graph: &WeightedGraph, seed: u64) -> Result<Partition> {
    let (p, _) = greedy_with_trace(graph)?;
    Ok(p.with_meta("greedy", Some(seed)))
}

/// Runs the agglomeration and returns the modularity after every merge
/// (the first entry is the singleton partition).
pub fn greedy_with_trace(graph: &WeightedGraph) -> Result<(Partition, Vec<f64>)> {
    let m = graph.total_weight();
    if graph.is_empty() || m <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let n = graph.node_count();
    let two_m = 2.0 * m;
    let mut share: Vec<f64> = (0..n).map(|i| graph.strength(i) / two_m).collect();

    // delta_q[i][k]: modularity change from merging communities i and k
    let mut delta_q: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut queue: BTreeSet<Candidate> = BTreeSet::new();
    for e in graph.edges() {
        let dq = e.weight / m - 2.0 * share[e.u] * share[e.v];
        delta_q[e.u].insert(e.v, dq);
        delta_q[e.v].insert(e.u, dq);
        queue.insert(ordered(e.u, e.v, dq));
    }

    let mut q: f64 = -share.iter().map(|a| a * a).sum::<f64>();
    let mut trace = vec![q];
    let mut parent: Vec<usize> = (0..n).collect();

    while let Some(&best) = queue.first() {
        let gain = -best.score;
        if gain <= 0.0 {
            break;
        }
        let (keep, gone) = (best.i, best.j);

        let keep_row = std::mem::take(&mut delta_q[keep]);
        let gone_row = std::mem::take(&mut delta_q[gone]);
        for (&k, &dq) in &keep_row {
            queue.remove(&ordered(keep, k, dq));
        }
        for (&k, &dq) in &gone_row {
            queue.remove(&ordered(gone, k, dq));
        }

        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (&k, &dq) in &keep_row {
            if k == gone {
                continue;
            }
            let updated = match gone_row.get(&k) {
                Some(&other) => dq + other,
                None => dq - 2.0 * share[gone] * share[k],
            };
            merged.insert(k, updated);
        }
        for (&k, &dq) in &gone_row {
            if k == keep || keep_row.contains_key(&k) {
                continue;
            }
            merged.insert(k, dq - 2.0 * share[keep] * share[k]);
        }

        for (&k, &dq) in &merged {
            delta_q[k].remove(&gone);
            delta_q[k].insert(keep, dq);
            queue.insert(ordered(keep, k, dq));
        }
        delta_q[keep] = merged;
        share[keep] += share[gone];
        share[gone] = 0.0;
        parent[gone] = keep;

        q += gain;
        trace.push(q);
    }

    let labels: Vec<usize> = (0..n).map(|i| find(&parent, i)).collect();
    Ok((Partition::from_labels(&labels, "greedy", None), trace))
}

/// Queue key: negated gain so the set's first entry is the best merge, with
/// the lowest pair winning ties.
fn ordered(a: usize, b: usize, gain: f64) -> Candidate {
    Candidate {
        score: -gain,
        i: a.min(b),
        j: a.max(b),
    }
}

fn find(parent: &[usize], mut i: usize) -> usize {
    while parent[i] != i {
        i = parent[i];
    }
    i
}
