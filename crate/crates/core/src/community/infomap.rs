//! Two-level map equation and its minimisation by local moves with
//! aggregation.
//!
//! For an undirected graph the random walker visits node `a` with rate
//! `p_a = k_a / 2m` and crosses an edge in either direction with rate
//! `w / 2m`. With module exit rates `q_i` and module visit rates `p_i`:
//!
//! ```text
//! L(M) = plogp(Σ q_i) - 2 Σ plogp(q_i) - Σ_a plogp(p_a) + Σ plogp(q_i + p_i)
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Partition;
use crate::error::{Error, Result};
use crate::graph::{connected_components, WeightedGraph};

pub const DEFAULT_INFOMAP_TRIALS: usize = 3;

const MIN_IMPROVEMENT: f64 = 1e-10;
const MAX_SWEEPS: usize = 200;

fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Description length in bits of a random walk on `graph` under `partition`.
pub fn map_equation(graph: &WeightedGraph, partition: &Partition) -> Result<f64> {
    if partition.len() != graph.node_count() {
        return Err(Error::PartitionSize {
            assigned: partition.len(),
            nodes: graph.node_count(),
        });
    }
    let m = graph.total_weight();
    if m <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let two_m = 2.0 * m;
    let k = partition.community_count();
    let mut exit = vec![0.0; k];
    let mut flow = vec![0.0; k];
    let mut node_term = 0.0;
    for a in 0..graph.node_count() {
        let p = graph.strength(a) / two_m;
        flow[partition.community_of(a)] += p;
        node_term += plogp(p);
    }
    for e in graph.edges() {
        let (cu, cv) = (partition.community_of(e.u), partition.community_of(e.v));
        if cu != cv {
            exit[cu] += e.weight / two_m;
            exit[cv] += e.weight / two_m;
        }
    }
    let total_exit: f64 = exit.iter().sum();
    Ok(plogp(total_exit) - 2.0 * exit.iter().map(|&q| plogp(q)).sum::<f64>() - node_term
        + exit.iter().zip(&flow).map(|(&q, &p)| plogp(q + p)).sum::<f64>())
}

/// Codelength with every node in one module: the entropy of the visit rates.
pub fn one_module_codelength(graph: &WeightedGraph) -> Result<f64> {
    map_equation(graph, &Partition::whole(graph.node_count(), ""))
}

/// Flow network for one aggregation level.
struct FlowLevel {
    flow: Vec<f64>,
    exit: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl FlowLevel {
    fn from_graph(graph: &WeightedGraph) -> Self {
        let two_m = 2.0 * graph.total_weight();
        let n = graph.node_count();
        let adjacency: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| graph.neighbors(i).iter().map(|&(j, w)| (j, w / two_m)).collect())
            .collect();
        FlowLevel {
            flow: (0..n).map(|i| graph.strength(i) / two_m).collect(),
            exit: adjacency.iter().map(|a| a.iter().map(|&(_, f)| f).sum()).collect(),
            adjacency,
        }
    }

    fn len(&self) -> usize {
        self.flow.len()
    }

    fn aggregate(&self, module: &[usize], count: usize) -> FlowLevel {
        let mut flow = vec![0.0; count];
        let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
        for u in 0..self.len() {
            let mu = module[u];
            flow[mu] += self.flow[u];
            for &(v, f) in &self.adjacency[u] {
                let mv = module[v];
                if mu != mv {
                    *rows[mu].entry(mv).or_insert(0.0) += f;
                }
            }
        }
        let adjacency: Vec<Vec<(usize, f64)>> = rows.into_iter().map(|r| r.into_iter().collect()).collect();
        FlowLevel {
            exit: adjacency.iter().map(|a| a.iter().map(|&(_, f)| f).sum()).collect(),
            flow,
            adjacency,
        }
    }
}

/// Module bookkeeping with running sums of the codelength terms.
struct Modules {
    of: Vec<usize>,
    flow: Vec<f64>,
    exit: Vec<f64>,
    members: Vec<usize>,
    empty: Vec<usize>,
    sum_exit: f64,
    sum_plogp_exit: f64,
    sum_plogp_exit_flow: f64,
}

impl Modules {
    fn singletons(level: &FlowLevel) -> Self {
        let n = level.len();
        Modules {
            of: (0..n).collect(),
            flow: level.flow.clone(),
            exit: level.exit.clone(),
            members: vec![1; n],
            empty: Vec::new(),
            sum_exit: level.exit.iter().sum(),
            sum_plogp_exit: level.exit.iter().map(|&q| plogp(q)).sum(),
            sum_plogp_exit_flow: level.exit.iter().zip(&level.flow).map(|(&q, &p)| plogp(q + p)).sum(),
        }
    }

    /// Codelength change from moving a node with visit rate `p`, exit rate `x`
    /// and flows `to_old`/`to_new` into its current and target modules.
    fn delta(&self, old: usize, new: Option<usize>, p: f64, x: f64, to_old: f64, to_new: f64) -> f64 {
        let (q_a, p_a) = (self.exit[old], self.flow[old]);
        let (q_b, p_b) = new.map_or((0.0, 0.0), |b| (self.exit[b], self.flow[b]));
        let q_a2 = q_a - x + 2.0 * to_old;
        let p_a2 = p_a - p;
        let q_b2 = q_b + x - 2.0 * to_new;
        let p_b2 = p_b + p;
        let sum_exit2 = self.sum_exit - q_a - q_b + q_a2 + q_b2;
        (plogp(sum_exit2) - plogp(self.sum_exit))
            - 2.0 * (plogp(q_a2) + plogp(q_b2) - plogp(q_a) - plogp(q_b))
            + (plogp(q_a2 + p_a2) + plogp(q_b2 + p_b2) - plogp(q_a + p_a) - plogp(q_b + p_b))
    }

    fn apply(&mut self, u: usize, new: usize, p: f64, x: f64, to_old: f64, to_new: f64) {
        let old = self.of[u];
        let before = [(self.exit[old], self.flow[old]), (self.exit[new], self.flow[new])];
        self.exit[old] += -x + 2.0 * to_old;
        self.flow[old] -= p;
        self.exit[new] += x - 2.0 * to_new;
        self.flow[new] += p;
        let after = [(self.exit[old], self.flow[old]), (self.exit[new], self.flow[new])];
        for ((qb, pb), (qa, pa)) in before.into_iter().zip(after) {
            self.sum_exit += qa - qb;
            self.sum_plogp_exit += plogp(qa) - plogp(qb);
            self.sum_plogp_exit_flow += plogp(qa + pa) - plogp(qb + pb);
        }
        self.members[old] -= 1;
        self.members[new] += 1;
        if self.members[old] == 0 {
            self.empty.push(old);
        }
        self.of[u] = new;
    }
}

/// Local moves on one level; returns dense module labels and whether anything moved.
fn optimise_level(level: &FlowLevel, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = level.len();
    let mut modules = Modules::singletons(level);
    let mut order: Vec<usize> = (0..n).collect();
    let mut to_module = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;

    for _ in 0..MAX_SWEEPS {
        order.shuffle(rng);
        let mut moved = false;
        for &u in &order {
            let old = modules.of[u];
            for &(v, f) in &level.adjacency[u] {
                let mv = modules.of[v];
                if to_module[mv] == 0.0 {
                    touched.push(mv);
                }
                to_module[mv] += f;
            }
            touched.sort_unstable();
            let (p, x) = (level.flow[u], level.exit[u]);
            let to_old = to_module[old];

            let mut best: Option<(usize, f64, f64)> = None;
            for &b in &touched {
                if b == old {
                    continue;
                }
                let d = modules.delta(old, Some(b), p, x, to_old, to_module[b]);
                if best.is_none_or(|(_, bd, _)| d < bd) {
                    best = Some((b, d, to_module[b]));
                }
            }
            if modules.members[old] > 1 {
                let d = modules.delta(old, None, p, x, to_old, 0.0);
                if best.is_none_or(|(_, bd, _)| d < bd) {
                    let fresh = *modules.empty.last().expect("a module is free while another holds two nodes");
                    best = Some((fresh, d, 0.0));
                }
            }
            if let Some((b, d, to_new)) = best {
                if d < -MIN_IMPROVEMENT {
                    if modules.members[b] == 0 {
                        modules.empty.retain(|&e| e != b);
                    }
                    modules.apply(u, b, p, x, to_old, to_new);
                    moved = true;
                }
            }
            for &c in &touched {
                to_module[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        any_move = true;
    }
    let dense = Partition::from_labels(&modules.of, "", None);
    (dense.assignment().to_vec(), any_move)
}

fn one_trial(graph: &WeightedGraph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut level = FlowLevel::from_graph(graph);
    let mut membership: Vec<usize> = (0..graph.node_count()).collect();
    loop {
        let (module, moved) = optimise_level(&level, rng);
        if !moved {
            break;
        }
        for m in membership.iter_mut() {
            *m = module[*m];
        }
        let count = module.iter().max().map_or(0, |&c| c + 1);
        if count == level.len() || count == 1 {
            break;
        }
        level = level.aggregate(&module, count);
    }
    membership
}

/// Minimises the two-level map equation over `trials` seeded runs and keeps
/// the shortest description. Falls back to a single module when no split
/// compresses the walk.
pub fn detect_infomap(graph: &WeightedGraph, trials: usize, seed: u64) -> Result<Partition> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let components = connected_components(graph).count();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    if n == 1 {
        return Ok(Partition::singletons(1, "infomap").with_meta("infomap", Some(seed)));
    }

    let mut best = Partition::whole(n, "infomap");
    let mut best_len = one_module_codelength(graph)?;
    for t in 0..trials.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let p = Partition::from_labels(&one_trial(graph, &mut rng), "infomap", None);
        let len = map_equation(graph, &p)?;
        if len < best_len - MIN_IMPROVEMENT {
            best = p;
            best_len = len;
        }
    }
    Ok(best.with_meta("infomap", Some(seed)))
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::adjusted_rand_index;
    use super::*;

    #[test]
    fn complete_graph_k4_stays_whole() {
        let g = cliques(1, 4);
        // exhaustive: the one-module codelength is the unique minimum
        let whole = one_module_codelength(&g).unwrap();
        assert!((whole - 2.0).abs() < 1e-12);
        for labels in all_partitions(4) {
            let p = Partition::from_labels(&labels, "x", None);
            if p.community_count() > 1 {
                assert!(map_equation(&g, &p).unwrap() > whole + 1e-9);
            }
        }
        let p = detect_infomap(&g, 3, 0).unwrap();
        assert_eq!(p.community_count(), 1);
    }

    #[test]
    fn ring_of_four_k5_gives_the_cliques() {
        let g = ring_of_cliques(4, 5, 1.0);
        // exhaustive over unions of cliques
        let clique_of: Vec<usize> = block_labels(4, 5);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for grouping in all_partitions(4) {
            let labels: Vec<usize> = clique_of.iter().map(|&c| grouping[c]).collect();
            let l = map_equation(&g, &Partition::from_labels(&labels, "x", None)).unwrap();
            if best.as_ref().is_none_or(|(bl, _)| l < *bl) {
                best = Some((l, grouping));
            }
        }
        assert_eq!(best.unwrap().1, vec![0, 1, 2, 3]);
        let truth = Partition::from_labels(&clique_of, "t", None);
        for seed in 0..5 {
            let p = detect_infomap(&g, 1, seed).unwrap();
            assert_eq!(adjusted_rand_index(&p, &truth).unwrap().value(), 1.0);
        }
    }

    #[test]
    fn singleton_codelength_matches_closed_form() {
        // all-singleton modules on K4: 4 bits (hand evaluation)
        let g = cliques(1, 4);
        let l = map_equation(&g, &Partition::singletons(4, "s")).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_disconnected() {
        assert!(matches!(
            detect_infomap(&cliques(2, 3), 1, 0),
            Err(Error::Disconnected { .. })
        ));
    }
}
