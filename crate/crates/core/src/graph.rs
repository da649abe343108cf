//! Bipartite patent–inventor network, its weighted projection onto inventors,
//! and connectivity.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{InventorLink, PatentSet};

/// Two-mode network: each cohort patent lists indices into `inventors`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteNetwork {
    pub patents: Vec<String>,
    pub inventors: Vec<String>,
    pub incidence: Vec<Vec<usize>>,
    /// Links whose patent is not in the cohort.
    pub excluded_links: usize,
}

impl BipartiteNetwork {
    pub fn team_size(&self, patent: usize) -> usize {
        self.incidence[patent].len()
    }
}

/// Builds the incidence lists for `cohort` from `links`. Patents keep ascending
/// key order and inventors are sorted by key.
pub fn build_bipartite(cohort: &PatentSet, links: &[InventorLink]) -> BipartiteNetwork {
    let patents: Vec<String> = cohort.ids().map(str::to_string).collect();
    let patent_index: HashMap<&str, usize> =
        patents.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();

    let mut excluded = 0;
    let mut pairs: Vec<(usize, &str)> = Vec::with_capacity(links.len());
    for link in links {
        match patent_index.get(link.patent_id.as_str()) {
            Some(&p) => pairs.push((p, link.inventor_id.as_str())),
            None => excluded += 1,
        }
    }

    let mut inventors: Vec<String> = pairs.iter().map(|(_, i)| i.to_string()).collect();
    inventors.sort();
    inventors.dedup();
    let inventor_index: HashMap<&str, usize> =
        inventors.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();

    let mut incidence = vec![Vec::new(); patents.len()];
    for (p, inv) in pairs {
        incidence[p].push(inventor_index[inv]);
    }
    for list in &mut incidence {
        list.sort_unstable();
        list.dedup();
    }

    BipartiteNetwork {
        patents,
        inventors,
        incidence,
        excluded_links: excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Undirected weighted graph over string-keyed nodes.
///
/// Nodes are sorted by key and every algorithm indexes against that order.
/// Edges satisfy `u < v`, carry positive weight and are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    strength: Vec<f64>,
    total_weight: f64,
}

impl WeightedGraph {
    /// Builds a graph from keyed nodes and keyed edges. Endpoints missing from
    /// `nodes` are added.
    pub fn from_keyed_edges<N, E>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = String>,
        E: IntoIterator<Item = (String, String, f64)>,
    {
        let edges: Vec<(String, String, f64)> = edges.into_iter().collect();
        let mut keys: Vec<String> = nodes.into_iter().collect();
        keys.extend(edges.iter().flat_map(|(u, v, _)| [u.clone(), v.clone()]));
        keys.sort();
        keys.dedup();
        let index: HashMap<&str, usize> =
            keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let indexed: Vec<(usize, usize, f64)> = edges
            .iter()
            .map(|(u, v, w)| (index[u.as_str()], index[v.as_str()], *w))
            .collect();
        Self::build(keys, indexed)
    }

    /// Graph over `n` nodes keyed `"000000"`, `"000001"`, ... so that key order
    /// equals index order.
    pub fn from_indexed(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let keys = (0..n).map(|i| format!("{i:06}")).collect();
        let edges: Vec<_> = edges.into_iter().collect();
        if let Some(&(u, v, _)) = edges.iter().find(|(u, v, _)| *u >= n || *v >= n) {
            return Err(Error::UnknownNode(format!("{}", u.max(v))));
        }
        Self::build(keys, edges)
    }

    /// `keys` must already be sorted and unique.
    fn build(keys: Vec<String>, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut canon: Vec<Edge> = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u == v {
                return Err(Error::InvalidConfig(format!("self-loop on `{}`", keys[u])));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "edge {}-{} has non-positive weight {w}",
                    keys[u], keys[v]
                )));
            }
            let (u, v) = if u < v { (u, v) } else { (v, u) };
            canon.push(Edge { u, v, weight: w });
        }
        canon.sort_by_key(|e| (e.u, e.v));
        if let Some(w) = canon.windows(2).find(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(Error::DuplicateId {
                kind: "edge",
                id: format!("{}-{}", keys[w[0].u], keys[w[0].v]),
            });
        }

        let n = keys.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut strength = vec![0.0; n];
        let mut total_weight = 0.0;
        for e in &canon {
            adjacency[e.u].push((e.v, e.weight));
            adjacency[e.v].push((e.u, e.weight));
            strength[e.u] += e.weight;
            strength[e.v] += e.weight;
            total_weight += e.weight;
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(j, _)| j);
        }
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(WeightedGraph {
            nodes: keys,
            index,
            edges: canon,
            adjacency,
            strength,
            total_weight,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &str {
        &self.nodes[i]
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbours of `i` with edge weights, in ascending index order.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Weighted degree.
    pub fn strength(&self, i: usize) -> f64 {
        self.strength[i]
    }

    /// Sum of edge weights, each undirected edge counted once.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Projects the bipartite network onto inventors.
///
/// Each patent listing `n >= 2` inventors adds `1 / (n - 1)` to the weight of
/// every pair among them. Patents are summed in ascending key order so the
/// floating-point result is reproducible. Every inventor becomes a node, even
/// those with no co-inventors.
pub fn project(bipartite: &BipartiteNetwork) -> WeightedGraph {
    let mut weights: HashMap<(usize, usize), f64> = HashMap::new();
    for team in &bipartite.incidence {
        let n = team.len();
        if n < 2 {
            continue;
        }
        let w = 1.0 / (n - 1) as f64;
        for (a, &i) in team.iter().enumerate() {
            for &j in &team[a + 1..] {
                *weights.entry((i, j)).or_insert(0.0) += w;
            }
        }
    }
    let edges = weights.into_iter().map(|((u, v), w)| (u, v, w)).collect();
    WeightedGraph::build(bipartite.inventors.clone(), edges)
        .expect("projection yields a simple graph with positive weights")
}

/// Component id per node plus component sizes. Ids are numbered in order of
/// each component's lowest node index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLabeling {
    pub component: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Largest component; ties go to the lowest id.
    pub fn largest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (c, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|b| s > self.sizes[b]) {
                best = Some(c);
            }
        }
        best
    }

    pub fn members(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.component
            .iter()
            .enumerate()
            .filter(move |&(_, &k)| k == c)
            .map(|(i, _)| i)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Undirected connectivity; weights are ignored.
pub fn connected_components(graph: &WeightedGraph) -> ComponentLabeling {
    let n = graph.node_count();
    let mut dsu = DisjointSet::new(n);
    for e in graph.edges() {
        dsu.union(e.u, e.v);
    }
    let mut root_to_id: HashMap<usize, usize> = HashMap::new();
    let mut component = Vec::with_capacity(n);
    let mut sizes = Vec::new();
    for i in 0..n {
        let root = dsu.find(i);
        let id = *root_to_id.entry(root).or_insert_with(|| {
            sizes.push(0);
            sizes.len() - 1
        });
        sizes[id] += 1;
        component.push(id);
    }
    ComponentLabeling { component, sizes }
}

/// Subgraph on the given node keys, keeping every edge with both endpoints inside.
pub fn induced_subgraph<'a, I>(graph: &WeightedGraph, nodes: I) -> Result<WeightedGraph>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut keep = vec![false; graph.node_count()];
    for key in nodes {
        let i = graph
            .index_of(key)
            .ok_or_else(|| Error::UnknownNode(key.to_string()))?;
        keep[i] = true;
    }
    let mut remap = vec![usize::MAX; graph.node_count()];
    let mut keys = Vec::new();
    for (i, k) in graph.nodes().iter().enumerate() {
        if keep[i] {
            remap[i] = keys.len();
            keys.push(k.clone());
        }
    }
    let edges = graph
        .edges()
        .iter()
        .filter(|e| keep[e.u] && keep[e.v])
        .map(|e| (remap[e.u], remap[e.v], e.weight))
        .collect();
    WeightedGraph::build(keys, edges)
}

/// The largest connected component as its own graph. Empty input gives an empty graph.
pub fn largest_component(graph: &WeightedGraph) -> WeightedGraph {
    let labels = connected_components(graph);
    let Some(c) = labels.largest() else {
        return graph.clone();
    };
    let members: Vec<&str> = labels.members(c).map(|i| graph.node(i)).collect();
    induced_subgraph(graph, members).expect("component members are graph nodes")
}

/// Fraction of nodes per attribute label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelShares {
    pub shares: BTreeMap<String, f64>,
    pub unlabeled: f64,
}

impl LabelShares {
    /// Labels by descending share, ties by label.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.shares.iter().map(|(k, &s)| (k.as_str(), s)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

pub fn composition_by_attribute<'a, I>(nodes: I, attribute: &HashMap<String, String>) -> LabelShares
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut unlabeled = 0usize;
    let mut total = 0usize;
    for n in nodes {
        total += 1;
        match attribute.get(n) {
            Some(label) => *counts.entry(label.clone()).or_insert(0) += 1,
            None => unlabeled += 1,
        }
    }
    if total == 0 {
        return LabelShares {
            shares: BTreeMap::new(),
            unlabeled: 0.0,
        };
    }
    let t = total as f64;
    LabelShares {
        shares: counts.into_iter().map(|(k, c)| (k, c as f64 / t)).collect(),
        unlabeled: unlabeled as f64 / t,
    }
}

/// Each inventor's most frequent assignee over the given patents; ties go to
/// the lexicographically smallest assignee. Inventors without any assigned
/// patent are absent.
pub fn inventor_assignees(patents: &PatentSet, links: &[InventorLink]) -> HashMap<String, String> {
    let mut tally: HashMap<&str, BTreeMap<&str, usize>> = HashMap::new();
    for link in links {
        if let Some(a) = patents
            .get(&link.patent_id)
            .and_then(|p| p.assignee_id.as_deref())
        {
            *tally
                .entry(link.inventor_id.as_str())
                .or_default()
                .entry(a)
                .or_insert(0) += 1;
        }
    }
    tally
        .into_iter()
        .map(|(inv, counts)| {
            let best = counts
                .iter()
                .fold(None::<(&str, usize)>, |acc, (&a, &c)| match acc {
                    Some((_, bc)) if bc >= c => acc,
                    _ => Some((a, c)),
                })
                .map(|(a, _)| a)
                .unwrap_or_default();
            (inv.to_string(), best.to_string())
        })
        .collect()
}

/// Writes `u<TAB>v<TAB>weight` lines in edge order. Weights use the shortest
/// representation that parses back to the same `f64`.
pub fn write_edge_list(path: impl AsRef<Path>, graph: &WeightedGraph) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::new();
    for e in graph.edges() {
        let _ = writeln!(body, "{}\t{}\t{}", graph.node(e.u), graph.node(e.v), e.weight);
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(u), Some(v), Some(w), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::malformed(i as u64 + 1, "expected u<TAB>v<TAB>weight"));
        };
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::malformed(i as u64 + 1, format!("bad weight `{w}`")))?;
        edges.push((u.to_string(), v.to_string(), w));
    }
    WeightedGraph::from_keyed_edges(std::iter::empty(), edges)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// GraphML export with a `weight` edge attribute and, when given, a
/// `community` node attribute.
pub fn write_graphml(
    path: impl AsRef<Path>,
    graph: &WeightedGraph,
    community: Option<&[usize]>,
) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    s.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    if community.is_some() {
        s.push_str("  <key id=\"community\" for=\"node\" attr.name=\"community\" attr.type=\"int\"/>\n");
    }
    s.push_str("  <graph id=\"G\" edgedefault=\"undirected\">\n");
    for (i, n) in graph.nodes().iter().enumerate() {
        match community {
            Some(c) => {
                let _ = writeln!(
                    s,
                    "    <node id=\"{}\"><data key=\"community\">{}</data></node>",
                    xml_escape(n),
                    c[i]
                );
            }
            None => {
                let _ = writeln!(s, "    <node id=\"{}\"/>", xml_escape(n));
            }
        }
    }
    for e in graph.edges() {
        let _ = writeln!(
            s,
            "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data></edge>",
            xml_escape(graph.node(e.u)),
            xml_escape(graph.node(e.v)),
            e.weight
        );
    }
    s.push_str("  </graph>\n</graphml>\n");
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// True when every node is reachable from node 0. The empty graph counts as connected.
pub fn is_connected(graph: &WeightedGraph) -> bool {
    connected_components(graph).count() <= 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PatentRecord;

    fn cohort(ids: &[&str]) -> PatentSet {
        let d = chrono::NaiveDate::from_ymd_opt(1996, 1, 1).unwrap();
        ids.iter()
            .map(|id| PatentRecord {
                patent_id: id.to_string(),
                grant_date: d,
                application_date: d,
                main_class: "257".into(),
                assignee_id: None,
            })
            .collect()
    }

    fn links(pairs: &[(&str, &str)]) -> Vec<InventorLink> {
        pairs
            .iter()
            .map(|(p, i)| InventorLink {
                patent_id: p.to_string(),
                inventor_id: i.to_string(),
            })
            .collect()
    }

    fn weight(g: &WeightedGraph, a: &str, b: &str) -> Option<f64> {
        let (ia, ib) = (g.index_of(a)?, g.index_of(b)?);
        g.neighbors(ia).iter().find(|(j, _)| *j == ib).map(|&(_, w)| w)
    }

    #[test]
    fn single_patent_two_inventors() {
        let b = build_bipartite(&cohort(&["p"]), &links(&[("p", "A"), ("p", "B")]));
        assert_eq!(b.incidence, vec![vec![0, 1]]);
        let g = project(&b);
        assert_eq!(weight(&g, "A", "B"), Some(1.0));
    }

    #[test]
    fn link_outside_cohort_is_excluded() {
        let b = build_bipartite(&cohort(&["p"]), &links(&[("p", "A"), ("q", "B")]));
        assert_eq!(b.excluded_links, 1);
        assert_eq!(b.inventors, vec!["A"]);
    }

    #[test]
    fn weights_sum_over_shared_patents() {
        let b = build_bipartite(
            &cohort(&["p1", "p2"]),
            &links(&[("p1", "A"), ("p1", "B"), ("p2", "A"), ("p2", "B"), ("p2", "C")]),
        );
        let g = project(&b);
        assert_eq!(weight(&g, "A", "B"), Some(1.5));
        assert_eq!(weight(&g, "A", "C"), Some(0.5));
        assert_eq!(weight(&g, "B", "C"), Some(0.5));
    }

    #[test]
    fn single_inventor_patent_has_no_edges() {
        let g = project(&build_bipartite(&cohort(&["p"]), &links(&[("p", "A")])));
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn components_of_two_disjoint_edges() {
        let g = WeightedGraph::from_indexed(4, [(0, 1, 1.0), (2, 3, 2.0)]).unwrap();
        let c = connected_components(&g);
        assert_eq!(c.sizes, vec![2, 2]);
        assert_eq!(c.component, vec![0, 0, 1, 1]);
        assert_eq!(connected_components(&WeightedGraph::from_indexed(0, []).unwrap()).count(), 0);
    }

    #[test]
    fn induced_subgraph_cases() {
        let tri = WeightedGraph::from_keyed_edges(
            [],
            [
                ("A".into(), "B".into(), 1.0),
                ("B".into(), "C".into(), 2.0),
                ("A".into(), "C".into(), 3.0),
            ],
        )
        .unwrap();
        let ab = induced_subgraph(&tri, ["A", "B"]).unwrap();
        assert_eq!(ab.edge_count(), 1);
        assert_eq!(weight(&ab, "A", "B"), Some(1.0));
        assert_eq!(induced_subgraph(&tri, ["A", "B", "C"]).unwrap(), tri);
        assert!(matches!(induced_subgraph(&tri, ["Z"]), Err(Error::UnknownNode(_))));

        let pairs = WeightedGraph::from_indexed(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let sub = induced_subgraph(&pairs, ["000000", "000002"]).unwrap();
        assert_eq!(sub.edge_count(), 0);
    }

    #[test]
    fn composition_shares() {
        let attr: HashMap<String, String> = [("a", "X"), ("b", "X"), ("c", "Y")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let s = composition_by_attribute(["a", "b", "c"], &attr);
        assert!((s.shares["X"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.shares["Y"] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.unlabeled, 0.0);
        let s = composition_by_attribute(["a", "b", "z"], &attr);
        assert_eq!(s.ranked()[0].0, "X");
        assert!((s.unlabeled - 1.0 / 3.0).abs() < 1e-15);
        let one = composition_by_attribute(["a", "b"], &attr);
        assert_eq!(one.shares["X"], 1.0);
    }

    #[test]
    fn majority_assignee_per_inventor() {
        let d = chrono::NaiveDate::from_ymd_opt(1996, 1, 1).unwrap();
        let mk = |id: &str, a: &str| PatentRecord {
            patent_id: id.into(),
            grant_date: d,
            application_date: d,
            main_class: "257".into(),
            assignee_id: Some(a.into()),
        };
        let set: PatentSet = [mk("p1", "IBM"), mk("p2", "IBM"), mk("p3", "HIT")].into_iter().collect();
        let m = inventor_assignees(&set, &links(&[("p1", "A"), ("p2", "A"), ("p3", "A"), ("p3", "B")]));
        assert_eq!(m["A"], "IBM");
        assert_eq!(m["B"], "HIT");
    }

    #[test]
    fn edge_list_round_trip_is_exact() {
        let g = WeightedGraph::from_keyed_edges(
            [],
            [("a".into(), "b".into(), 1.0 / 3.0), ("b".into(), "c".into(), 0.1 + 0.2)],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tsv");
        write_edge_list(&p, &g).unwrap();
        assert_eq!(read_edge_list(&p).unwrap(), g);
        write_graphml(dir.path().join("g.graphml"), &g, Some(&[0, 0, 1])).unwrap();
    }

    #[test]
    fn rejects_parallel_edges_and_loops() {
        assert!(WeightedGraph::from_indexed(2, [(0, 1, 1.0), (1, 0, 1.0)]).is_err());
        assert!(WeightedGraph::from_indexed(2, [(1, 1, 1.0)]).is_err());
        assert!(WeightedGraph::from_indexed(2, [(0, 1, 0.0)]).is_err());
    }
}
