//! Community detection on weighted co-inventor graphs, plus the measures used
//! to compare and control partitions.

mod ari;
mod greedy;
mod infomap;
mod labelprop;
mod louvain;
mod walktrap;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{connected_components, induced_subgraph, WeightedGraph};

pub use ari::{adjusted_rand_index, mean_cross_ari, mean_pairwise_ari, AriScore};
pub use greedy::{detect_greedy, greedy_with_trace};
pub use infomap::{detect_infomap, map_equation, one_module_codelength, DEFAULT_INFOMAP_TRIALS};
pub use labelprop::{detect_label_propagation, is_label_stable, DEFAULT_MAX_SWEEPS};
pub use louvain::{detect_louvain, louvain_with_trace};
pub use walktrap::{detect_random_walks, DEFAULT_WALK_STEPS};

/// Node-to-community assignment over a graph's node indices. Community ids
/// are dense in `0..count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    count: usize,
    /// Name of the producing algorithm (`greedy`, `randomized`, `planted`, ...).
    pub tag: String,
    pub seed: Option<u64>,
}

impl Partition {
    /// Relabels arbitrary labels densely, numbering communities by first appearance.
    pub fn from_labels<L: Eq + std::hash::Hash + Copy>(
        labels: &[L],
        tag: impl Into<String>,
        seed: Option<u64>,
    ) -> Self {
        let mut map: HashMap<L, usize> = HashMap::new();
        let assignment: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            assignment,
            count: map.len(),
            tag: tag.into(),
            seed,
        }
    }

    pub fn singletons(n: usize, tag: impl Into<String>) -> Self {
        Partition {
            assignment: (0..n).collect(),
            count: n,
            tag: tag.into(),
            seed: None,
        }
    }

    pub fn whole(n: usize, tag: impl Into<String>) -> Self {
        Partition {
            assignment: vec![0; n],
            count: usize::from(n > 0),
            tag: tag.into(),
            seed: None,
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.count
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    pub fn largest_size(&self) -> usize {
        self.sizes().into_iter().max().unwrap_or(0)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.count];
        for (i, &c) in self.assignment.iter().enumerate() {
            m[c].push(i);
        }
        m
    }

    /// Community per node key.
    pub fn by_key(&self, graph: &WeightedGraph) -> HashMap<String, usize> {
        graph
            .nodes()
            .iter()
            .cloned()
            .zip(self.assignment.iter().copied())
            .collect()
    }

    /// True when every P1 community lies inside one community of `coarser`.
    pub fn is_refinement_of(&self, coarser: &Partition) -> bool {
        if self.len() != coarser.len() {
            return false;
        }
        let mut image = vec![usize::MAX; self.count];
        self.assignment
            .iter()
            .zip(&coarser.assignment)
            .all(|(&fine, &coarse)| {
                if image[fine] == usize::MAX {
                    image[fine] = coarse;
                }
                image[fine] == coarse
            })
    }

    pub(crate) fn with_meta(mut self, tag: &str, seed: Option<u64>) -> Self {
        self.tag = tag.to_string();
        self.seed = seed;
        self
    }

    fn check_covers(&self, graph: &WeightedGraph) -> Result<()> {
        if self.len() != graph.node_count() {
            return Err(Error::PartitionSize {
                assigned: self.len(),
                nodes: graph.node_count(),
            });
        }
        Ok(())
    }
}

/// Weighted Newman–Girvan modularity.
pub fn modularity(graph: &WeightedGraph, partition: &Partition) -> Result<f64> {
    partition.check_covers(graph)?;
    let m = graph.total_weight();
    if m <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let mut internal = vec![0.0; partition.community_count()];
    let mut total = vec![0.0; partition.community_count()];
    for e in graph.edges() {
        let (cu, cv) = (partition.community_of(e.u), partition.community_of(e.v));
        if cu == cv {
            internal[cu] += e.weight;
        }
    }
    for i in 0..graph.node_count() {
        total[partition.community_of(i)] += graph.strength(i);
    }
    let two_m = 2.0 * m;
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(&inside, &tot)| inside / m - (tot / two_m).powi(2))
        .sum())
}

/// Community-size histogram with bins `[1, w], [w+1, 2w], ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub bin_width: usize,
    pub counts: Vec<usize>,
    /// Sizes of communities above the displayed range, ascending.
    pub out_of_range: Vec<usize>,
}

impl SizeHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.out_of_range.len()
    }

    /// Inclusive size range of bin `k`.
    pub fn bin_range(&self, k: usize) -> (usize, usize) {
        (k * self.bin_width + 1, (k + 1) * self.bin_width)
    }
}

/// Bins community sizes. Sizes above `display_max` are listed individually;
/// `None` displays everything.
pub fn size_distribution(
    partition: &Partition,
    bin_width: usize,
    display_max: Option<usize>,
) -> Result<SizeHistogram> {
    if bin_width == 0 {
        return Err(Error::InvalidConfig("bin width must be at least 1".into()));
    }
    let mut sizes = partition.sizes();
    sizes.sort_unstable();
    let (shown, hidden): (Vec<usize>, Vec<usize>) = sizes
        .into_iter()
        .partition(|&s| display_max.is_none_or(|m| s <= m));
    let bins = shown.last().map_or(0, |&s| (s - 1) / bin_width + 1);
    let mut counts = vec![0; bins];
    for s in shown {
        counts[(s - 1) / bin_width] += 1;
    }
    Ok(SizeHistogram {
        bin_width,
        counts,
        out_of_range: hidden,
    })
}

/// Reassigns nodes uniformly at random to the existing community slots,
/// keeping every community's size.
pub fn randomize_within_structure(partition: &Partition, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<usize> = Vec::with_capacity(partition.len());
    for (c, &s) in partition.sizes().iter().enumerate() {
        slots.extend(std::iter::repeat_n(c, s));
    }
    let mut order: Vec<usize> = (0..partition.len()).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0; partition.len()];
    for (node, slot) in order.into_iter().zip(slots) {
        assignment[node] = slot;
    }
    Partition {
        assignment,
        count: partition.count,
        tag: "randomized".into(),
        seed: Some(seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Greedy,
    Louvain,
    Infomap,
    Walktrap,
    #[serde(rename = "labelprop")]
    LabelProp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Greedy,
        Algorithm::Louvain,
        Algorithm::Infomap,
        Algorithm::Walktrap,
        Algorithm::LabelProp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Louvain => "louvain",
            Algorithm::Infomap => "infomap",
            Algorithm::Walktrap => "walktrap",
            Algorithm::LabelProp => "labelprop",
        }
    }

    /// Whether the result depends on the seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::Louvain | Algorithm::Infomap | Algorithm::LabelProp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown detector `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub walktrap_steps: usize,
    pub infomap_trials: usize,
    pub labelprop_max_sweeps: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            walktrap_steps: DEFAULT_WALK_STEPS,
            infomap_trials: DEFAULT_INFOMAP_TRIALS,
            labelprop_max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// A detector result with the metadata written to the partition sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub partition: Partition,
    /// The detector was run separately on each connected component.
    pub per_component: bool,
    pub modularity: Option<f64>,
    pub codelength: Option<f64>,
}

/// Runs one detector. Walk-based detectors on disconnected input are run per
/// component and the results united.
pub fn detect(
    graph: &WeightedGraph,
    algorithm: Algorithm,
    params: &DetectorParams,
    seed: u64,
) -> Result<Detection> {
    let needs_connected = matches!(algorithm, Algorithm::Walktrap | Algorithm::Infomap);
    let components = connected_components(graph);
    let per_component = needs_connected && components.count() > 1;

    let run = |g: &WeightedGraph| -> Result<Partition> {
        match algorithm {
            Algorithm::Greedy => detect_greedy(g, seed),
            Algorithm::Louvain => detect_louvain(g, seed),
            Algorithm::Infomap => detect_infomap(g, params.infomap_trials, seed),
            Algorithm::Walktrap => detect_random_walks(g, params.walktrap_steps, seed),
            Algorithm::LabelProp => detect_label_propagation(g, params.labelprop_max_sweeps, seed),
        }
    };

    let partition = if per_component {
        let mut labels = vec![0usize; graph.node_count()];
        let mut offset = 0;
        for c in 0..components.count() {
            let members: Vec<usize> = components.members(c).collect();
            let sub = induced_subgraph(graph, members.iter().map(|&i| graph.node(i)))?;
            let p = run(&sub)?;
            // sub preserves the relative order of members
            for (k, &i) in members.iter().enumerate() {
                labels[i] = offset + p.community_of(k);
            }
            offset += p.community_count();
        }
        Partition::from_labels(&labels, algorithm.name(), Some(seed))
    } else {
        run(graph)?.with_meta(algorithm.name(), Some(seed))
    };

    let modularity = modularity(graph, &partition).ok();
    let codelength = map_equation(graph, &partition).ok();
    Ok(Detection {
        partition,
        per_component,
        modularity,
        codelength,
    })
}

/// Writes `node_id<TAB>community_id`, one row per node in graph order.
pub fn write_partition(path: impl AsRef<Path>, graph: &WeightedGraph, partition: &Partition) -> Result<()> {
    let path = path.as_ref();
    partition.check_covers(graph)?;
    let mut s = String::new();
    for (node, c) in graph.nodes().iter().zip(partition.assignment()) {
        let _ = writeln!(s, "{node}\t{c}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a partition file onto `graph`; the file must name exactly the graph's nodes.
pub fn read_partition(
    path: impl AsRef<Path>,
    graph: &WeightedGraph,
    tag: impl Into<String>,
) -> Result<Partition> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels: Vec<Option<usize>> = vec![None; graph.node_count()];
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        let (node, comm) = line
            .split_once('\t')
            .ok_or_else(|| Error::malformed(line_no, "expected node_id<TAB>community_id"))?;
        let c: usize = comm
            .trim()
            .parse()
            .map_err(|_| Error::malformed(line_no, format!("bad community id `{comm}`")))?;
        let idx = graph.index_of(node).ok_or(Error::NodeSetMismatch)?;
        if labels[idx].replace(c).is_some() {
            return Err(Error::DuplicateId {
                kind: "partition node",
                id: node.to_string(),
            });
        }
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .collect::<Option<_>>()
        .ok_or(Error::NodeSetMismatch)?;
    // keep file ids when they are already dense
    let mut seen = labels.clone();
    seen.sort_unstable();
    seen.dedup();
    let dense = seen.iter().enumerate().all(|(i, &c)| i == c);
    Ok(if dense {
        Partition {
            count: seen.len(),
            assignment: labels,
            tag: tag.into(),
            seed: None,
        }
    } else {
        Partition::from_labels(&labels, tag, None)
    })
}

/// JSON sidecar accompanying a partition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSidecar {
    pub algorithm: String,
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub communities: usize,
    pub largest: usize,
    pub per_component: bool,
    pub modularity: Option<f64>,
    pub map_equation: Option<f64>,
}

impl PartitionSidecar {
    pub fn new(detection: &Detection, params: &DetectorParams) -> Self {
        let p = &detection.partition;
        let mut parameters = BTreeMap::new();
        match p.tag.as_str() {
            "walktrap" => {
                parameters.insert("steps".into(), params.walktrap_steps.into());
            }
            "infomap" => {
                parameters.insert("trials".into(), params.infomap_trials.into());
            }
            "labelprop" => {
                parameters.insert("max_sweeps".into(), params.labelprop_max_sweeps.into());
            }
            _ => {}
        }
        PartitionSidecar {
            algorithm: p.tag.clone(),
            seed: p.seed,
            parameters,
            communities: p.community_count(),
            largest: p.largest_size(),
            per_component: detection.per_component,
            modularity: detection.modularity,
            map_equation: detection.codelength,
        }
    }
}

/// Sorted-pair bookkeeping shared by the agglomerative detectors: a merge
/// candidate ordered by score, ties broken by the lowest `(i, j)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub score: f64,
    pub i: usize,
    pub j: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.i.cmp(&other.i))
            .then(self.j.cmp(&other.j))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn one_community_has_zero_modularity() {
        let g = ring_of_cliques(3, 4, 1.0);
        let q = modularity(&g, &Partition::whole(g.node_count(), "x")).unwrap();
        assert!(q.abs() < 1e-15);
    }

    #[test]
    fn two_disconnected_cliques_split_gives_half() {
        let g = cliques(2, 4);
        let p = Partition::from_labels(&block_labels(2, 4), "x", None);
        let q = modularity(&g, &p).unwrap();
        assert!((q - 0.5).abs() < 1e-15);
        assert!((q - dense_modularity(&g, &block_labels(2, 4))).abs() < 1e-15);
    }

    #[test]
    fn singleton_modularity_is_minus_sum_of_squared_shares() {
        let g = WeightedGraph::from_indexed(4, [(0, 1, 2.0), (1, 2, 1.0), (2, 3, 0.5), (0, 3, 1.5)]).unwrap();
        let q = modularity(&g, &Partition::singletons(4, "x")).unwrap();
        let two_m = 2.0 * g.total_weight();
        let expected: f64 = -(0..4).map(|i| (g.strength(i) / two_m).powi(2)).sum::<f64>();
        assert!((q - expected).abs() < 1e-15);
    }

    #[test]
    fn modularity_rejects_edgeless_graph() {
        let g = WeightedGraph::from_indexed(3, []).unwrap();
        assert!(matches!(modularity(&g, &Partition::singletons(3, "x")), Err(Error::EmptyGraph)));
    }

    #[test]
    fn size_histogram_examples() {
        let p = Partition::from_labels(&[0, 0, 1, 1, 2, 2, 2, 2, 2, 2, 2], "x", None);
        let h = size_distribution(&p, 5, None).unwrap();
        assert_eq!(h.counts, vec![2, 1]);
        assert_eq!(h.total(), 3);
        let h = size_distribution(&p, 5, Some(5)).unwrap();
        assert_eq!(h.counts, vec![2]);
        assert_eq!(h.out_of_range, vec![7]);
        let empty = size_distribution(&Partition::singletons(0, "x"), 5, None).unwrap();
        assert!(empty.counts.is_empty() && empty.out_of_range.is_empty());
    }

    #[test]
    fn randomization_keeps_sizes() {
        let p = Partition::from_labels(&[0, 0, 0, 1, 1, 2, 3, 3, 3, 3], "x", None);
        let r = randomize_within_structure(&p, 11);
        assert_eq!(r.sizes(), p.sizes());
        assert_eq!(r, randomize_within_structure(&p, 11));
        let whole = Partition::whole(6, "x");
        assert_eq!(randomize_within_structure(&whole, 3).assignment(), whole.assignment());
        let singles = Partition::singletons(6, "x");
        let r = randomize_within_structure(&singles, 3);
        assert_eq!(adjusted_rand_index(&singles, &r).unwrap().value(), 1.0);
    }

    #[test]
    fn partition_file_round_trip() {
        let g = ring_of_cliques(2, 3, 1.0);
        let p = Partition::from_labels(&block_labels(2, 3), "louvain", Some(4));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tsv");
        write_partition(&path, &g, &p).unwrap();
        let back = read_partition(&path, &g, "louvain").unwrap();
        assert_eq!(back.assignment(), p.assignment());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("spectral".parse::<Algorithm>().is_err());
    }

    #[test]
    fn refinement_relation() {
        let fine = Partition::from_labels(&[0, 0, 1, 1, 2, 2], "x", None);
        let coarse = Partition::from_labels(&[0, 0, 0, 0, 1, 1], "x", None);
        assert!(fine.is_refinement_of(&coarse));
        assert!(!coarse.is_refinement_of(&fine));
    }

    #[test]
    fn all_partitions_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(all_partitions(n).len(), b);
        }
    }

    #[test]
    fn per_component_detection_unites_results() {
        let g = cliques(2, 4);
        let d = detect(&g, Algorithm::Walktrap, &DetectorParams::default(), 1).unwrap();
        assert!(d.per_component);
        assert_eq!(d.partition.community_count(), 2);
        assert_eq!(d.partition.tag, "walktrap");
    }
}
