//! Walktrap: agglomerative clustering on random-walk distances, cut at the
//! level of maximum modularity.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::{Candidate, Partition};
use crate::error::{Error, Result};
use crate::graph::{connected_components, WeightedGraph};

pub const DEFAULT_WALK_STEPS: usize = 4;

type SparseVec = Vec<(usize, f64)>;

fn squared_distance(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let d = match (a.get(i), b.get(j)) {
            (Some(&(ka, va)), Some(&(kb, vb))) if ka == kb => {
                i += 1;
                j += 1;
                va - vb
            }
            (Some(&(ka, va)), Some(&(kb, _))) if ka < kb => {
                i += 1;
                va
            }
            (Some(&(_, va)), None) => {
                i += 1;
                va
            }
            (_, Some(&(_, vb))) => {
                j += 1;
                -vb
            }
            (None, None) => unreachable!(),
        };
        acc += d * d;
    }
    acc
}

fn weighted_mean(a: &SparseVec, wa: f64, b: &SparseVec, wb: f64) -> SparseVec {
    let total = wa + wb;
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ka, va)), Some(&(kb, vb))) if ka == kb => {
                out.push((ka, (wa * va + wb * vb) / total));
                i += 1;
                j += 1;
            }
            (Some(&(ka, va)), Some(&(kb, _))) if ka < kb => {
                out.push((ka, wa * va / total));
                i += 1;
            }
            (Some(&(ka, va)), None) => {
                out.push((ka, wa * va / total));
                i += 1;
            }
            (_, Some(&(kb, vb))) => {
                out.push((kb, wb * vb / total));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// Rows of `P^t` scaled by `D^{-1/2}`, where each node carries a self-loop
/// with the mean weight of its edges.
fn walk_profiles(graph: &WeightedGraph, steps: usize) -> Vec<SparseVec> {
    let n = graph.node_count();
    let loops: Vec<f64> = (0..n)
        .map(|i| {
            let nb = graph.neighbors(i);
            if nb.is_empty() {
                1.0
            } else {
                graph.strength(i) / nb.len() as f64
            }
        })
        .collect();
    let degree: Vec<f64> = (0..n).map(|i| graph.strength(i) + loops[i]).collect();

    let mut acc = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    (0..n)
        .map(|start| {
            let mut current: SparseVec = vec![(start, 1.0)];
            for _ in 0..steps {
                for &(k, p) in &current {
                    let share = p / degree[k];
                    for (j, w) in graph
                        .neighbors(k)
                        .iter()
                        .copied()
                        .chain(std::iter::once((k, loops[k])))
                    {
                        if acc[j] == 0.0 {
                            touched.push(j);
                        }
                        acc[j] += share * w;
                    }
                }
                touched.sort_unstable();
                current = touched.iter().map(|&j| (j, acc[j])).collect();
                for &j in &touched {
                    acc[j] = 0.0;
                }
                touched.clear();
            }
            current
                .into_iter()
                .map(|(j, p)| (j, p / degree[j].sqrt()))
                .collect()
        })
        .collect()
}

/// Walktrap on a connected graph. The dendrogram is cut where modularity
/// peaks. Deterministic; the seed is recorded but not used.
pub fn detect_random_walks(graph: &WeightedGraph, steps: usize, seed: u64) -> Result<Partition> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let components = connected_components(graph).count();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    if n == 1 {
        return Ok(Partition::singletons(1, "walktrap").with_meta("walktrap", Some(seed)));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("walk length must be positive".into()));
    }

    let m = graph.total_weight();
    let two_m = 2.0 * m;
    let nf = n as f64;
    let mut profile = walk_profiles(graph, steps);
    let mut size = vec![1usize; n];
    let mut share: Vec<f64> = (0..n).map(|i| graph.strength(i) / two_m).collect();
    let mut alive = vec![true; n];

    let delta_sigma = |a: &SparseVec, sa: usize, b: &SparseVec, sb: usize| -> f64 {
        let (sa, sb) = (sa as f64, sb as f64);
        sa * sb / (sa + sb) * squared_distance(a, b) / nf
    };

    // neighbour -> (connecting weight, delta sigma)
    let mut links: Vec<BTreeMap<usize, (f64, f64)>> = vec![BTreeMap::new(); n];
    let mut heap: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
    for e in graph.edges() {
        let ds = delta_sigma(&profile[e.u], 1, &profile[e.v], 1);
        links[e.u].insert(e.v, (e.weight, ds));
        links[e.v].insert(e.u, (e.weight, ds));
        heap.push(Reverse(Candidate { score: ds, i: e.u, j: e.v }));
    }

    let mut q = -share.iter().map(|a| a * a).sum::<f64>();
    let mut best_q = q;
    let mut best_len = 0;
    let mut merges: Vec<(usize, usize)> = Vec::with_capacity(n - 1);

    while let Some(Reverse(c)) = heap.pop() {
        if !(alive[c.i] && alive[c.j]) {
            continue;
        }
        match links[c.i].get(&c.j) {
            Some(&(_, ds)) if ds.to_bits() == c.score.to_bits() => {}
            _ => continue,
        }
        let (keep, gone) = (c.i, c.j);
        let between = links[keep][&gone].0;
        q += between / m - 2.0 * share[keep] * share[gone];
        merges.push((keep, gone));
        if q > best_q {
            best_q = q;
            best_len = merges.len();
        }

        let merged = weighted_mean(&profile[keep], size[keep] as f64, &profile[gone], size[gone] as f64);
        profile[keep] = merged;
        profile[gone] = Vec::new();
        size[keep] += size[gone];
        share[keep] += share[gone];
        alive[gone] = false;

        let gone_links = std::mem::take(&mut links[gone]);
        let mut neighbours: BTreeMap<usize, f64> = std::mem::take(&mut links[keep])
            .into_iter()
            .filter(|&(k, _)| k != gone)
            .map(|(k, (w, _))| (k, w))
            .collect();
        for (k, (w, _)) in gone_links {
            if k != keep {
                *neighbours.entry(k).or_insert(0.0) += w;
            }
        }
        for (k, w) in neighbours {
            links[k].remove(&gone);
            let ds = delta_sigma(&profile[keep], size[keep], &profile[k], size[k]);
            links[k].insert(keep, (w, ds));
            links[keep].insert(k, (w, ds));
            heap.push(Reverse(Candidate {
                score: ds,
                i: keep.min(k),
                j: keep.max(k),
            }));
        }
    }

    let mut parent: Vec<usize> = (0..n).collect();
    for &(keep, gone) in &merges[..best_len] {
        parent[gone] = keep;
    }
    let labels: Vec<usize> = (0..n)
        .map(|mut i| {
            while parent[i] != i {
                i = parent[i];
            }
            i
        })
        .collect();
    Ok(Partition::from_labels(&labels, "walktrap", Some(seed)))
}
