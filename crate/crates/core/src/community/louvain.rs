//! Louvain modularity optimisation: local moves followed by aggregation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{modularity, Partition};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

const MIN_GAIN: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000;

/// Aggregated graph for one level. `loops[i]` is the internal weight of
/// super-node `i`; adjacency excludes loops.
struct Level {
    adjacency: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph(graph: &WeightedGraph) -> Self {
        let n = graph.node_count();
        Level {
            adjacency: (0..n).map(|i| graph.neighbors(i).to_vec()).collect(),
            loops: vec![0.0; n],
            degree: (0..n).map(|i| graph.strength(i)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.adjacency.len()
    }

    fn aggregate(&self, community: &[usize], count: usize) -> Level {
        let mut loops = vec![0.0; count];
        let mut degree = vec![0.0; count];
        let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
        for i in 0..self.len() {
            let ci = community[i];
            loops[ci] += self.loops[i];
            degree[ci] += self.degree[i];
            for &(j, w) in &self.adjacency[i] {
                let cj = community[j];
                if ci == cj {
                    // each internal edge is seen from both ends
                    loops[ci] += 0.5 * w;
                } else {
                    *rows[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adjacency: rows.into_iter().map(|r| r.into_iter().collect()).collect(),
            loops,
            degree,
        }
    }
}

/// Moves nodes between communities while modularity improves. Returns the
/// dense community labels and whether any node moved.
fn local_moves(level: &Level, two_m: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = level.len();
    let mut community: Vec<usize> = (0..n).collect();
    let mut total: Vec<f64> = level.degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;

    for _ in 0..MAX_SWEEPS {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let k_i = level.degree[i];
            let own = community[i];
            for &(j, w) in &level.adjacency[i] {
                let c = community[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            total[own] -= k_i;
            let stay = link[own] - total[own] * k_i / two_m;
            let mut best = own;
            let mut best_gain = stay;
            touched.sort_unstable();
            for &c in &touched {
                let gain = link[c] - total[c] * k_i / two_m;
                if gain > best_gain + MIN_GAIN {
                    best = c;
                    best_gain = gain;
                }
            }
            total[best] += k_i;
            if best != own {
                community[i] = best;
                moved = true;
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        any_move = true;
    }
    let dense = Partition::from_labels(&community, "", None);
    (dense.assignment().to_vec(), any_move)
}

pub fn detect_louvain(graph: &WeightedGraph, seed: u64) -> Result<Partition> {
    let (p, _) = louvain_with_trace(graph, seed)?;
    Ok(p.with_meta("louvain", Some(seed)))
}

/// Runs Louvain and returns the modularity after each level (the first entry
/// is the singleton partition).
pub fn louvain_with_trace(graph: &WeightedGraph, seed: u64) -> Result<(Partition, Vec<f64>)> {
    let m = graph.total_weight();
    if graph.is_empty() || m <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let two_m = 2.0 * m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(graph);
    let mut membership: Vec<usize> = (0..graph.node_count()).collect();
    let mut trace = vec![modularity(graph, &Partition::singletons(graph.node_count(), ""))?];

    loop {
        let (community, moved) = local_moves(&level, two_m, &mut rng);
        if !moved {
            break;
        }
        for c in membership.iter_mut() {
            *c = community[*c];
        }
        let count = community.iter().max().map_or(0, |&c| c + 1);
        trace.push(modularity(
            graph,
            &Partition::from_labels(&membership, "", None),
        )?);
        if count == level.len() {
            break;
        }
        level = level.aggregate(&community, count);
    }
    Ok((Partition::from_labels(&membership, "louvain", Some(seed)), trace))
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::adjusted_rand_index;
    use super::*;

    #[test]
    fn recovers_two_disconnected_cliques() {
        let g = cliques(2, 4);
        let truth = Partition::from_labels(&block_labels(2, 4), "t", None);
        for seed in 0..5 {
            let p = detect_louvain(&g, seed).unwrap();
            assert_eq!(adjusted_rand_index(&p, &truth).unwrap().value(), 1.0);
        }
    }

    #[test]
    fn levels_never_decrease_modularity() {
        let g = ring_of_cliques(12, 5, 1.0);
        for seed in 0..5 {
            let (_, trace) = louvain_with_trace(&g, seed).unwrap();
            assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{trace:?}");
        }
    }

    #[test]
    fn same_seed_same_result() {
        let g = ring_of_cliques(8, 4, 1.0);
        assert_eq!(detect_louvain(&g, 9).unwrap(), detect_louvain(&g, 9).unwrap());
    }
}
