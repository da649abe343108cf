//! Stage-by-stage orchestration. Each stage reads and writes files under the
//! output directory, so any stage can be rerun from cached intermediates.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::citation::{
    classify_all, count_cited_within, first_citations, inventors_by_patent, lags_of, lcc_associated,
    read_first_citations, summarize, write_first_citations, Category, CohortCitationSummary, Communities,
    FirstCitation, InventorsOf, PendingFirstCitation, TieRule, DEFAULT_WINDOW_MONTHS,
};
use crate::community::{
    adjusted_rand_index, detect, mean_cross_ari, mean_pairwise_ari, randomize_within_structure, read_partition,
    write_partition, Algorithm, DetectorParams, Partition, PartitionSidecar, DEFAULT_INFOMAP_TRIALS,
    DEFAULT_MAX_SWEEPS, DEFAULT_WALK_STEPS,
};
use crate::error::{Error, Result};
use crate::graph::{
    build_bipartite, composition_by_attribute, connected_components, inventor_assignees, largest_component,
    project, write_edge_list, write_graphml, WeightedGraph,
};
use crate::ingest::{
    filter_cohort, load_citations, load_events, load_links, load_patents, resolve_citation_events, write_events,
    write_links, write_patents, CitationEvent, CitationSchema, InventorLink, LinkSchema, PatentSchema, PatentSet,
};
use crate::stats::{
    adjust_zero_peak, fit_lognormal, histogram, log_shift_welch, raw_summary, subsample_welch, welch_t, FitOptions,
    LagHistogram, LogNormalFit, SubsampleResult, SummaryStats, WelchResult, ZeroPeak, DEFAULT_ALPHA,
    DEFAULT_BIN_WIDTH, DEFAULT_SUBSAMPLE_REPS, DEFAULT_SUBSAMPLE_SIZE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub patents: PathBuf,
    pub inventors: PathBuf,
    pub citations: PathBuf,
    #[serde(default)]
    pub patent_schema: PatentSchema,
    #[serde(default)]
    pub link_schema: LinkSchema,
    #[serde(default)]
    pub citation_schema: CitationSchema,
}

/// Main classes and inclusive grant-year range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub classes: Vec<String>,
    pub first_year: i32,
    pub last_year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub algorithms: Vec<Algorithm>,
    pub walktrap_steps: usize,
    pub infomap_trials: usize,
    pub labelprop_max_sweeps: usize,
    /// Runs per stochastic detector for the ARI comparison.
    pub ari_runs: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            algorithms: Algorithm::ALL.to_vec(),
            walktrap_steps: DEFAULT_WALK_STEPS,
            infomap_trials: DEFAULT_INFOMAP_TRIALS,
            labelprop_max_sweeps: DEFAULT_MAX_SWEEPS,
            ari_runs: 10,
        }
    }
}

impl DetectionConfig {
    pub fn params(&self) -> DetectorParams {
        DetectorParams {
            walktrap_steps: self.walktrap_steps,
            infomap_trials: self.infomap_trials,
            labelprop_max_sweeps: self.labelprop_max_sweeps,
        }
    }
}

/// Every seed is mandatory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub detection: u64,
    pub subsample: u64,
    pub control: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub window_months: f64,
    pub bin_width: f64,
    pub tie_rule: TieRule,
    /// Fit self-citation lags without the zero-centred bin.
    pub exclude_zero_bin_for_self: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            window_months: DEFAULT_WINDOW_MONTHS,
            bin_width: DEFAULT_BIN_WIDTH,
            tie_rule: TieRule::default(),
            exclude_zero_bin_for_self: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsampleConfig {
    pub k: usize,
    pub reps: usize,
    pub alpha: f64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            k: DEFAULT_SUBSAMPLE_SIZE,
            reps: DEFAULT_SUBSAMPLE_REPS,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Defaults to infomap when configured, else the first detector.
    pub algorithm: Option<Algorithm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub input: InputConfig,
    pub cohort: CohortConfig,
    pub seeds: Seeds,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub subsample: SubsampleConfig,
    #[serde(default)]
    pub control: ControlConfig,
    /// Worker threads; the rayon default when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl PipelineConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut c: PipelineConfig = toml::from_str(text)?;
        c.resolve_paths(base);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.output_dir,
            &mut self.input.patents,
            &mut self.input.inventors,
            &mut self.input.citations,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets a dotted key such as `analysis.window_months` from a TOML literal
    /// (bare words are taken as strings), then revalidates.
    pub fn apply_override(&mut self, key: &str, raw: &str) -> Result<()> {
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(&*self).expect("config serializes");
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| {
            Error::InvalidConfig(format!("empty override key `{key}`"))
        })?;
        let mut node = &mut root;
        for p in parts {
            node = node
                .as_table_mut()
                .and_then(|t| t.get_mut(p))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
        table.insert(last.to_string(), value);
        let text = toml::to_string(&root).expect("value serializes");
        *self = toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("override `{key}`: {e}")))?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.cohort.classes.is_empty() {
            return bad("cohort.classes is empty".into());
        }
        if self.cohort.first_year > self.cohort.last_year {
            return bad("cohort.first_year is after cohort.last_year".into());
        }
        let algs = &self.detection.algorithms;
        if algs.is_empty() {
            return bad("detection.algorithms is empty".into());
        }
        if algs.iter().collect::<BTreeSet<_>>().len() != algs.len() {
            return bad("detection.algorithms lists a detector twice".into());
        }
        if self.detection.ari_runs == 0 || self.detection.walktrap_steps == 0 || self.detection.infomap_trials == 0 {
            return bad("detection counts must be positive".into());
        }
        let (window, width) = (self.analysis.window_months, self.analysis.bin_width);
        if window.is_nan() || window <= 0.0 || width.is_nan() || width <= 0.0 {
            return bad("window_months and bin_width must be positive".into());
        }
        if self.subsample.k < 2 || self.subsample.reps == 0 {
            return bad("subsample.k must be at least 2 and reps positive".into());
        }
        if !(self.subsample.alpha > 0.0 && self.subsample.alpha < 1.0) {
            return bad("subsample.alpha must lie in (0, 1)".into());
        }
        if let Some(a) = self.control.algorithm {
            if !algs.contains(&a) {
                return bad(format!("control.algorithm `{a}` is not among the detectors"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        Ok(())
    }

    pub fn control_algorithm(&self) -> Algorithm {
        self.control.algorithm.unwrap_or_else(|| {
            if self.detection.algorithms.contains(&Algorithm::Infomap) {
                Algorithm::Infomap
            } else {
                self.detection.algorithms[0]
            }
        })
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.output_dir.clone(),
        }
    }
}

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    fn at(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.root.clone(), |p, s| p.join(s))
    }
    pub fn failed_marker(&self) -> PathBuf {
        self.at(&["FAILED"])
    }
    pub fn manifest(&self) -> PathBuf {
        self.at(&["manifest.json"])
    }
    pub fn ingest(&self, file: &str) -> PathBuf {
        self.at(&["ingest", file])
    }
    pub fn graph(&self, file: &str) -> PathBuf {
        self.at(&["graph", file])
    }
    pub fn partition(&self, alg: Algorithm) -> PathBuf {
        self.at(&["partitions", &format!("{alg}.tsv")])
    }
    pub fn partitions(&self, file: &str) -> PathBuf {
        self.at(&["partitions", file])
    }
    pub fn classified(&self, alg: Algorithm) -> PathBuf {
        self.at(&["citations", &format!("{alg}.csv")])
    }
    pub fn citations(&self, file: &str) -> PathBuf {
        self.at(&["citations", file])
    }
    pub fn stats(&self, file: &str) -> PathBuf {
        self.at(&["stats", file])
    }
    pub fn control(&self, file: &str) -> PathBuf {
        self.at(&["control", file])
    }
    pub fn report(&self, file: &str) -> PathBuf {
        self.at(&["report", file])
    }
}

/// A value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Value(T),
    Unavailable { unavailable: String },
}

impl<T> Outcome<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Outcome::Value(v) => Some(v),
            Outcome::Unavailable { .. } => None,
        }
    }
}

impl<T> From<Result<T>> for Outcome<T> {
    fn from(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Value(v),
            Err(e) => Outcome::Unavailable {
                unavailable: e.to_string(),
            },
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
    ensure_parent(path)?;
    let mut s = String::new();
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// Runs `f` inside the configured worker pool and tags failures with the
/// stage name, leaving a `FAILED` marker in the output directory.
fn staged<T: Send>(cfg: &PipelineConfig, stage: &'static str, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let result = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))
            .and_then(|pool| pool.install(f)),
        None => f(),
    };
    result.map_err(|e| {
        let marker = cfg.layout().failed_marker();
        let _ = ensure_parent(&marker);
        let _ = std::fs::write(&marker, format!("{stage}: {e}\n"));
        match e {
            Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub patents_loaded: usize,
    pub links_loaded: usize,
    pub citations_loaded: usize,
    /// Citations whose citing patent is not in the patent table.
    pub citations_unresolved: usize,
    pub cohort_patents: usize,
    pub cohort_citation_events: usize,
    /// Cohort patents plus every patent citing one.
    pub retained_patents: usize,
}

pub fn run_ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    staged(cfg, "ingest", || {
        let l = cfg.layout();
        let input = &cfg.input;
        let all = load_patents(&input.patents, &input.patent_schema)?;
        let links = load_links(&input.inventors, &input.link_schema)?;
        let citations = load_citations(&input.citations, &input.citation_schema)?;
        let classes: BTreeSet<String> = cfg.cohort.classes.iter().cloned().collect();
        let cohort = filter_cohort(&all, &classes, cfg.cohort.first_year..=cfg.cohort.last_year);
        let (events, unresolved) = resolve_citation_events(&citations, &all);
        let events: Vec<CitationEvent> = events.into_iter().filter(|e| cohort.contains(&e.cited_id)).collect();

        let keep: HashSet<&str> = cohort
            .ids()
            .chain(events.iter().map(|e| e.citing_id.as_str()))
            .collect();
        let retained: PatentSet = all.iter().filter(|p| keep.contains(p.patent_id.as_str())).cloned().collect();
        let kept_links: Vec<InventorLink> = links
            .iter()
            .filter(|k| keep.contains(k.patent_id.as_str()))
            .cloned()
            .collect();

        ensure_parent(&l.ingest("x"))?;
        write_patents(l.ingest("cohort.tsv"), &cohort, &PatentSchema::default())?;
        write_patents(l.ingest("patents.tsv"), &retained, &PatentSchema::default())?;
        write_links(l.ingest("inventors.tsv"), &kept_links, &LinkSchema::default())?;
        write_events(l.ingest("events.tsv"), &events)?;
        let summary = IngestSummary {
            patents_loaded: all.len(),
            links_loaded: links.len(),
            citations_loaded: citations.len(),
            citations_unresolved: unresolved,
            cohort_patents: cohort.len(),
            cohort_citation_events: events.len(),
            retained_patents: retained.len(),
        };
        write_json(&l.ingest("summary.json"), &summary)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub inventors: usize,
    pub edges: usize,
    pub total_weight: f64,
    pub components: usize,
    pub lcc_inventors: usize,
    pub lcc_edges: usize,
    /// Links naming patents outside the cohort or repeated.
    pub excluded_links: usize,
    /// Ten largest majority-assignee shares among LCC inventors.
    pub lcc_top_assignees: Vec<(String, f64)>,
}

fn load_cohort_inputs(l: &Layout) -> Result<(PatentSet, Vec<InventorLink>)> {
    let cohort = load_patents(l.ingest("cohort.tsv"), &PatentSchema::default())?;
    let links = load_links(l.ingest("inventors.tsv"), &LinkSchema::default())?;
    Ok((cohort, links))
}

fn write_graph(graph: &WeightedGraph, nodes: &Path, edges: &Path) -> Result<()> {
    write_lines(nodes, graph.nodes().iter().map(String::as_str))?;
    write_edge_list(edges, graph)
}

fn read_graph(nodes: &Path, edges: &Path) -> Result<WeightedGraph> {
    let keys = read_lines(nodes)?;
    let text = std::fs::read_to_string(edges).map_err(|e| Error::io(edges, e))?;
    let mut list = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let [u, v, w] = f[..] else {
            return Err(Error::malformed(i as u64 + 1, "expected u<TAB>v<TAB>weight"));
        };
        let w: f64 = w
            .parse()
            .map_err(|_| Error::malformed(i as u64 + 1, format!("bad weight `{w}`")))?;
        list.push((u.to_string(), v.to_string(), w));
    }
    WeightedGraph::from_keyed_edges(keys, list)
}

fn read_lcc(l: &Layout) -> Result<WeightedGraph> {
    read_graph(&l.graph("lcc_nodes.txt"), &l.graph("lcc_edges.tsv"))
}

pub fn run_project(cfg: &PipelineConfig) -> Result<GraphSummary> {
    staged(cfg, "project", || {
        let l = cfg.layout();
        let (cohort, links) = load_cohort_inputs(&l)?;
        let cohort_links: Vec<InventorLink> = links.into_iter().filter(|k| cohort.contains(&k.patent_id)).collect();
        let bip = build_bipartite(&cohort, &cohort_links);
        let graph = project(&bip);
        let lcc = largest_component(&graph);
        write_graph(&graph, &l.graph("nodes.txt"), &l.graph("edges.tsv"))?;
        write_graph(&lcc, &l.graph("lcc_nodes.txt"), &l.graph("lcc_edges.tsv"))?;
        write_graphml(l.graph("lcc.graphml"), &lcc, None)?;

        let assignees = inventor_assignees(&cohort, &cohort_links);
        let mut top: Vec<(String, f64)> = composition_by_attribute(lcc.nodes().iter().map(String::as_str), &assignees)
            .ranked()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        top.truncate(10);
        let summary = GraphSummary {
            inventors: graph.node_count(),
            edges: graph.edge_count(),
            total_weight: graph.total_weight(),
            components: connected_components(&graph).count(),
            lcc_inventors: lcc.node_count(),
            lcc_edges: lcc.edge_count(),
            excluded_links: bip.excluded_links,
            lcc_top_assignees: top,
        };
        write_json(&l.graph("summary.json"), &summary)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityRow {
    pub algorithm: Algorithm,
    pub communities: usize,
    pub largest: usize,
    pub modularity: Option<f64>,
    pub map_equation: Option<f64>,
    pub runs: usize,
}

/// Table-3-style comparison. `ari[i][j]` averages the ARI over all pairs of
/// runs of detectors `i` and `j`; the diagonal compares distinct runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityComparison {
    pub rows: Vec<CommunityRow>,
    pub ari: Vec<Vec<f64>>,
}

pub fn run_detect(cfg: &PipelineConfig) -> Result<CommunityComparison> {
    staged(cfg, "detect", || {
        let l = cfg.layout();
        let graph = read_lcc(&l)?;
        ensure_parent(&l.partitions("x"))?;
        let params = cfg.detection.params();
        let seed = cfg.seeds.detection;
        let algs = &cfg.detection.algorithms;

        let runs: Vec<Vec<crate::community::Detection>> = algs
            .par_iter()
            .map(|&alg| {
                let n = if alg.is_stochastic() { cfg.detection.ari_runs } else { 1 };
                (0..n as u64)
                    .into_par_iter()
                    .map(|r| detect(&graph, alg, &params, seed.wrapping_add(r)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let mut rows = Vec::new();
        for (&alg, dets) in algs.iter().zip(&runs) {
            let d = &dets[0];
            write_partition(l.partition(alg), &graph, &d.partition)?;
            write_json(&l.partitions(&format!("{alg}.json")), &PartitionSidecar::new(d, &params))?;
            write_graphml(l.partitions(&format!("{alg}.graphml")), &graph, Some(d.partition.assignment()))?;
            rows.push(CommunityRow {
                algorithm: alg,
                communities: d.partition.community_count(),
                largest: d.partition.largest_size(),
                modularity: d.modularity,
                map_equation: d.codelength,
                runs: dets.len(),
            });
        }

        let parts: Vec<Vec<Partition>> = runs
            .into_iter()
            .map(|d| d.into_iter().map(|x| x.partition).collect())
            .collect();
        let k = parts.len();
        let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
        let values: Vec<f64> = cells
            .par_iter()
            .map(|&(i, j)| {
                if i == j {
                    mean_pairwise_ari(&parts[i])
                } else {
                    mean_cross_ari(&parts[i], &parts[j])
                }
            })
            .collect::<Result<_>>()?;
        let mut ari = vec![vec![0.0; k]; k];
        for (&(i, j), v) in cells.iter().zip(values) {
            ari[i][j] = v;
            ari[j][i] = v;
        }
        let cmp = CommunityComparison { rows, ari };
        write_json(&l.partitions("comparison.json"), &cmp)?;
        Ok(cmp)
    })
}

/// Table-2-style counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortTable {
    pub cohort_patents: usize,
    pub cohort_inventors: usize,
    pub cohort_cited_within_window: usize,
    pub lcc_inventors: usize,
    pub lcc_associated_patents: usize,
    pub lcc_associated_cited_within_window: usize,
    pub first_cited_by_lcc_inventors: usize,
    pub first_citation_self: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub algorithm: Algorithm,
    #[serde(flatten)]
    pub summary: CohortCitationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub cohort: CohortTable,
    pub by_algorithm: Vec<ClassificationRow>,
}

/// Inputs shared by classification and the control.
struct CitationContext {
    cohort: PatentSet,
    inventors_of: InventorsOf,
    events: Vec<CitationEvent>,
    lcc: WeightedGraph,
    lcc_set: HashSet<String>,
    lcc_patents: PatentSet,
    pending: Vec<PendingFirstCitation>,
}

impl CitationContext {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let l = cfg.layout();
        let (cohort, links) = load_cohort_inputs(&l)?;
        let events = load_events(l.ingest("events.tsv"))?;
        let lcc = read_lcc(&l)?;
        let lcc_set: HashSet<String> = lcc.nodes().iter().cloned().collect();
        let inventors_of = inventors_by_patent(&links);
        let lcc_patents = lcc_associated(&cohort, &inventors_of, &lcc_set);
        let pending = first_citations(
            &lcc_patents,
            &events,
            &inventors_of,
            &lcc_set,
            cfg.analysis.window_months,
        );
        Ok(CitationContext {
            cohort,
            inventors_of,
            events,
            lcc,
            lcc_set,
            lcc_patents,
            pending,
        })
    }

    fn classify(&self, partition: &Partition, tie_rule: TieRule) -> Result<Vec<FirstCitation>> {
        let membership: HashMap<String, usize> = partition.by_key(&self.lcc);
        let communities = Communities {
            membership: &membership,
            lcc_inventors: &self.lcc_set,
        };
        classify_all(&self.pending, &self.inventors_of, &communities, tie_rule)
    }
}

pub fn run_classify(cfg: &PipelineConfig) -> Result<ClassificationSummary> {
    staged(cfg, "classify", || {
        let l = cfg.layout();
        let ctx = CitationContext::load(cfg)?;
        ensure_parent(&l.citations("x"))?;
        let window = cfg.analysis.window_months;
        let cohort_inventors = read_lines(&l.graph("nodes.txt"))?.len();
        let within = count_cited_within(&ctx.lcc_patents, &ctx.events, window);

        let by_algorithm: Vec<ClassificationRow> = cfg
            .detection
            .algorithms
            .par_iter()
            .map(|&alg| {
                let partition = read_partition(l.partition(alg), &ctx.lcc, alg.name())?;
                let first = ctx.classify(&partition, cfg.analysis.tie_rule)?;
                write_first_citations(l.classified(alg), &first)?;
                Ok(ClassificationRow {
                    algorithm: alg,
                    summary: summarize(ctx.lcc_patents.len(), within, &first),
                })
            })
            .collect::<Result<_>>()?;

        let first_row = &by_algorithm[0].summary;
        let summary = ClassificationSummary {
            cohort: CohortTable {
                cohort_patents: ctx.cohort.len(),
                cohort_inventors,
                cohort_cited_within_window: count_cited_within(&ctx.cohort, &ctx.events, window),
                lcc_inventors: ctx.lcc.node_count(),
                lcc_associated_patents: ctx.lcc_patents.len(),
                lcc_associated_cited_within_window: within,
                first_cited_by_lcc_inventors: ctx.pending.len(),
                first_citation_self: first_row.first_citation_self,
            },
            by_algorithm,
        };
        write_json(&l.citations("summary.json"), &summary)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub count: usize,
    pub raw: Outcome<SummaryStats>,
    pub fit: Outcome<LogNormalFit>,
}

/// Table-4-style statistics for one detector. Welch tests compare
/// out-of-community against in-community lags, so a positive `t` means
/// in-community citations come sooner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorStats {
    pub algorithm: Algorithm,
    pub in_community: ArmStats,
    pub out_of_community: ArmStats,
    pub welch: Outcome<WelchResult>,
    pub welch_log_shifted: Outcome<WelchResult>,
    pub subsample: Outcome<SubsampleResult>,
}

/// Table-5-style self-citation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfStats {
    pub count: usize,
    pub zero_bin_count: u64,
    pub raw: Outcome<SummaryStats>,
    pub fit: Outcome<LogNormalFit>,
    pub interpolated_fit: Outcome<LogNormalFit>,
    pub removed_fit: Outcome<LogNormalFit>,
}

fn arm_stats(lags: &[f64], bin_width: f64, options: &FitOptions) -> Result<(ArmStats, LagHistogram)> {
    let hist = histogram(lags, bin_width)?;
    Ok((
        ArmStats {
            count: lags.len(),
            raw: raw_summary(lags, bin_width).into(),
            fit: fit_lognormal(&hist, options).into(),
        },
        hist,
    ))
}

pub fn detector_stats(cfg: &PipelineConfig, alg: Algorithm, first: &[FirstCitation]) -> Result<DetectorStats> {
    let l = cfg.layout();
    let w = cfg.analysis.bin_width;
    let inside = lags_of(first, Category::InCommunity);
    let outside = lags_of(first, Category::OutOfCommunity);
    let (in_stats, in_hist) = arm_stats(&inside, w, &FitOptions::default())?;
    let (out_stats, out_hist) = arm_stats(&outside, w, &FitOptions::default())?;
    in_hist.write_csv(l.stats(&format!("{alg}_in_community.csv")))?;
    out_hist.write_csv(l.stats(&format!("{alg}_out_of_community.csv")))?;
    let s = cfg.subsample;
    Ok(DetectorStats {
        algorithm: alg,
        in_community: in_stats,
        out_of_community: out_stats,
        welch: welch_t(&outside, &inside).into(),
        welch_log_shifted: log_shift_welch(&outside, &inside).into(),
        subsample: subsample_welch(&outside, &inside, s.k, s.reps, s.alpha, cfg.seeds.subsample).into(),
    })
}

pub fn self_stats(cfg: &PipelineConfig, first: &[FirstCitation]) -> Result<SelfStats> {
    let l = cfg.layout();
    let w = cfg.analysis.bin_width;
    let lags = lags_of(first, Category::SelfCitation);
    let hist = histogram(&lags, w)?;
    hist.write_csv(l.stats("self.csv"))?;
    let opts = FitOptions {
        exclude_zero_bin: cfg.analysis.exclude_zero_bin_for_self,
        ..FitOptions::default()
    };
    let plain = FitOptions::default();
    let adjusted = |mode| adjust_zero_peak(&hist, mode).and_then(|h| fit_lognormal(&h, &plain));
    Ok(SelfStats {
        count: lags.len(),
        zero_bin_count: hist.count(0).unwrap_or(0),
        raw: raw_summary(&lags, w).into(),
        fit: fit_lognormal(&hist, &opts).into(),
        interpolated_fit: adjusted(ZeroPeak::Interpolate).into(),
        removed_fit: adjusted(ZeroPeak::Remove).into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub by_algorithm: Vec<DetectorStats>,
    pub self_citation: SelfStats,
}

pub fn run_stats(cfg: &PipelineConfig) -> Result<StatsSummary> {
    staged(cfg, "stats", || {
        let l = cfg.layout();
        ensure_parent(&l.stats("x"))?;
        let algs = &cfg.detection.algorithms;
        let classified: Vec<Vec<FirstCitation>> = algs
            .iter()
            .map(|&a| read_first_citations(l.classified(a)))
            .collect::<Result<_>>()?;
        let by_algorithm: Vec<DetectorStats> = algs
            .iter()
            .zip(&classified)
            .map(|(&a, first)| {
                let s = detector_stats(cfg, a, first)?;
                write_json(&l.stats(&format!("{a}.json")), &s)?;
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let self_citation = self_stats(cfg, &classified[0])?;
        write_json(&l.stats("self.json"), &self_citation)?;
        Ok(StatsSummary {
            by_algorithm,
            self_citation,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub original_in_community: usize,
    pub randomized_in_community: usize,
    pub original_in_community_raw: Outcome<SummaryStats>,
    pub randomized_in_community_raw: Outcome<SummaryStats>,
    /// Out-of-community against in-community under the randomized partition.
    pub randomized_welch: Outcome<WelchResult>,
    pub ari_vs_original: f64,
}

/// Randomizes the partition of `algorithm` within its size structure,
/// reclassifies and compares. `partition` overrides the stage's partition file.
pub fn run_control(cfg: &PipelineConfig, algorithm: Algorithm, partition: Option<&Path>) -> Result<ControlReport> {
    staged(cfg, "control", || {
        let l = cfg.layout();
        let ctx = CitationContext::load(cfg)?;
        let path = partition.map_or_else(|| l.partition(algorithm), Path::to_path_buf);
        let original = read_partition(&path, &ctx.lcc, algorithm.name())?;
        let shuffled = randomize_within_structure(&original, cfg.seeds.control);
        let before = ctx.classify(&original, cfg.analysis.tie_rule)?;
        let after = ctx.classify(&shuffled, cfg.analysis.tie_rule)?;
        let w = cfg.analysis.bin_width;

        ensure_parent(&l.control("x"))?;
        write_partition(l.control(&format!("{algorithm}_partition.tsv")), &ctx.lcc, &shuffled)?;
        write_first_citations(l.control(&format!("{algorithm}_citations.csv")), &after)?;

        let in_before = lags_of(&before, Category::InCommunity);
        let in_after = lags_of(&after, Category::InCommunity);
        let out_after = lags_of(&after, Category::OutOfCommunity);
        let report = ControlReport {
            algorithm,
            seed: cfg.seeds.control,
            original_in_community: in_before.len(),
            randomized_in_community: in_after.len(),
            original_in_community_raw: raw_summary(&in_before, w).into(),
            randomized_in_community_raw: raw_summary(&in_after, w).into(),
            randomized_welch: welch_t(&out_after, &in_after).into(),
            ari_vs_original: adjusted_rand_index(&original, &shuffled)?.value(),
        };
        write_json(&l.control(&format!("{algorithm}.json")), &report)?;
        Ok(report)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3 {
    pub comparison: CommunityComparison,
    pub in_community_first_citations: Vec<(Algorithm, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub table2: CohortTable,
    pub table3: Table3,
    pub table4: Vec<DetectorStats>,
    pub table5: SelfStats,
    pub control: Option<ControlReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seeds: Seeds,
    pub config: PipelineConfig,
    /// Output files relative to the output directory.
    pub files: Vec<String>,
}

fn list_files(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(rel) = p.strip_prefix(root) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Assembles the tables from stage outputs and writes the manifest.
pub fn run_report(cfg: &PipelineConfig) -> Result<ReportBundle> {
    staged(cfg, "report", || {
        let l = cfg.layout();
        let classification: ClassificationSummary = read_json(&l.citations("summary.json"))?;
        let comparison: CommunityComparison = read_json(&l.partitions("comparison.json"))?;
        let table4: Vec<DetectorStats> = cfg
            .detection
            .algorithms
            .iter()
            .map(|a| read_json(&l.stats(&format!("{a}.json"))))
            .collect::<Result<_>>()?;
        let table5: SelfStats = read_json(&l.stats("self.json"))?;
        let control_path = l.control(&format!("{}.json", cfg.control_algorithm()));
        let control: Option<ControlReport> = if control_path.exists() {
            Some(read_json(&control_path)?)
        } else {
            None
        };
        let bundle = ReportBundle {
            table2: classification.cohort,
            table3: Table3 {
                comparison,
                in_community_first_citations: classification
                    .by_algorithm
                    .iter()
                    .map(|r| (r.algorithm, r.summary.first_citation_in_community))
                    .collect(),
            },
            table4,
            table5,
            control,
        };
        write_json(&l.report("table2.json"), &bundle.table2)?;
        write_json(&l.report("table3.json"), &bundle.table3)?;
        write_json(&l.report("table4.json"), &bundle.table4)?;
        write_json(&l.report("table5.json"), &bundle.table5)?;
        if let Some(c) = &bundle.control {
            write_json(&l.report("control.json"), c)?;
        }
        let manifest_path = l.manifest();
        let files = list_files(&l.root)?
            .into_iter()
            .filter(|f| f != "manifest.json" && f != "FAILED")
            .collect();
        write_json(
            &manifest_path,
            &Manifest {
                version: env!("CARGO_PKG_VERSION").to_string(),
                seeds: cfg.seeds,
                config: cfg.clone(),
                files,
            },
        )?;
        Ok(bundle)
    })
}

/// Runs every stage in order. A stale failure marker is cleared first.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let marker = cfg.layout().failed_marker();
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    run_ingest(cfg)?;
    run_project(cfg)?;
    run_detect(cfg)?;
    run_classify(cfg)?;
    run_stats(cfg)?;
    run_control(cfg, cfg.control_algorithm(), None)?;
    run_report(cfg)
}
