//! Synthetic cohorts with planted inventor communities and a planted
//! in-community first-citation lag advantage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Days, Months, NaiveDate};
use rand::distr::{Distribution, Uniform};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::citation::{Category, DAYS_PER_MONTH};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::ingest::{
    write_citations, write_links, write_patents, CitationRecord, CitationSchema, InventorLink, LinkSchema,
    PatentRecord, PatentSchema, PatentSet,
};

/// Either `{ count, size }` or an explicit list of sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CommunitySpec {
    Uniform { count: usize, size: usize },
    Sizes(Vec<usize>),
}

impl CommunitySpec {
    pub fn sizes(&self) -> Vec<usize> {
        match self {
            CommunitySpec::Uniform { count, size } => vec![*size; *count],
            CommunitySpec::Sizes(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeamSize {
    pub min: usize,
    pub max: usize,
}

impl Default for TeamSize {
    fn default() -> Self {
        TeamSize { min: 2, max: 4 }
    }
}

/// Shifted log-normal in months.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagDistribution {
    pub shift: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for LagDistribution {
    fn default() -> Self {
        LagDistribution {
            shift: -6.0,
            mu: 25f64.ln(),
            sigma: 0.55,
        }
    }
}

/// Relative frequency of each kind of first citation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmWeights {
    pub self_citation: f64,
    pub in_community: f64,
    pub out_of_community: f64,
}

impl Default for ArmWeights {
    fn default() -> Self {
        ArmWeights {
            self_citation: 0.1,
            in_community: 0.45,
            out_of_community: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub communities: CommunitySpec,
    /// Probability that two members of one community co-invent at least once.
    pub p_within: f64,
    /// The same for members of different communities.
    pub p_between: f64,
    /// Overrides the patent count implied by `p_within`.
    #[serde(default)]
    pub patents_per_inventor: Option<f64>,
    #[serde(default)]
    pub team_size: TeamSize,
    #[serde(default)]
    pub lag: LagDistribution,
    /// Months subtracted from in-community first-citation lags.
    #[serde(default)]
    pub advantage_months: f64,
    #[serde(default)]
    pub arms: ArmWeights,
    /// Share of self first citations placed at lag zero.
    #[serde(default = "default_zero_peak")]
    pub zero_peak_fraction: f64,
    /// Upper bound on later citations per cited patent.
    #[serde(default = "default_extra")]
    pub extra_citations: usize,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    #[serde(default = "default_years")]
    pub years: u32,
    #[serde(default = "default_class")]
    pub main_class: String,
}

fn default_zero_peak() -> f64 {
    0.3
}
fn default_extra() -> usize {
    2
}
fn default_start_year() -> i32 {
    1996
}
fn default_years() -> u32 {
    5
}
fn default_class() -> String {
    "257".into()
}

/// Class assigned to generated citing patents, outside any cohort.
pub const CITING_CLASS: &str = "999";
const CITING_GRANT_DELAY_DAYS: u64 = 540;

impl SynthConfig {
    /// A config with defaults for everything but the community layout.
    pub fn new(seed: u64, communities: CommunitySpec, p_within: f64, p_between: f64) -> Self {
        SynthConfig {
            seed,
            communities,
            p_within,
            p_between,
            patents_per_inventor: None,
            team_size: TeamSize::default(),
            lag: LagDistribution::default(),
            advantage_months: 0.0,
            arms: ArmWeights::default(),
            zero_peak_fraction: default_zero_peak(),
            extra_citations: default_extra(),
            start_year: default_start_year(),
            years: default_years(),
            main_class: default_class(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SynthConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let sizes = self.communities.sizes();
        if sizes.is_empty() || sizes.contains(&0) {
            return bad("community sizes must be positive".into());
        }
        for (name, p) in [
            ("p_within", self.p_within),
            ("p_between", self.p_between),
            ("zero_peak_fraction", self.zero_peak_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.advantage_months.is_nan() || self.advantage_months < 0.0 {
            return bad("advantage_months must be non-negative".into());
        }
        if self.lag.sigma.is_nan() || self.lag.sigma <= 0.0 {
            return bad("lag sigma must be positive".into());
        }
        let a = self.arms;
        if [a.self_citation, a.in_community, a.out_of_community]
            .iter()
            .any(|w| w.is_nan() || *w < 0.0)
            || a.self_citation + a.in_community + a.out_of_community <= 0.0
        {
            return bad("arm weights must be non-negative with a positive sum".into());
        }
        if self.years == 0 {
            return bad("years must be positive".into());
        }
        let TeamSize { min, max } = self.team_size;
        if min < 2 || max < min {
            return bad(format!("team size range {min}..={max} is invalid"));
        }
        let smallest = *sizes.iter().min().expect("nonempty");
        if max > smallest {
            return Err(Error::InfeasibleConfig(format!(
                "team size {max} exceeds smallest community ({smallest})"
            )));
        }
        if let Some(ppi) = self.patents_per_inventor {
            if ppi.is_nan() || ppi <= 0.0 {
                return bad("patents_per_inventor must be positive".into());
            }
        }
        Ok(())
    }
}

/// A generated first citation with the arm it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCitation {
    pub cited_patent: String,
    pub citing_patent: String,
    pub arm: Category,
    pub lag_months: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub patents: PatentSet,
    pub links: Vec<InventorLink>,
    pub citations: Vec<CitationRecord>,
    /// Planted community of every inventor.
    pub planted: BTreeMap<String, usize>,
    pub first_citations: Vec<PlantedCitation>,
}

impl SynthData {
    /// Writes `patents.tsv`, `inventors.tsv`, `citations.tsv`, `planted.tsv`
    /// and `planted_citations.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_patents(dir.join("patents.tsv"), &self.patents, &PatentSchema::default())?;
        write_links(dir.join("inventors.tsv"), &self.links, &LinkSchema::default())?;
        write_citations(dir.join("citations.tsv"), &self.citations, &CitationSchema::default())?;

        let mut s = String::new();
        for (inv, c) in &self.planted {
            let _ = writeln!(s, "{inv}\t{c}");
        }
        let path = dir.join("planted.tsv");
        std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;

        let mut s = String::from("cited_id,citing_id,lag_months,arm\n");
        for f in &self.first_citations {
            let _ = writeln!(s, "{},{},{},{}", f.cited_patent, f.citing_patent, f.lag_months, f.arm.name());
        }
        let path = dir.join("planted_citations.csv");
        std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
    }

    pub fn planted_lags(&self, arm: Category) -> Vec<f64> {
        self.first_citations
            .iter()
            .filter(|f| f.arm == arm)
            .map(|f| f.lag_months)
            .collect()
    }
}

fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Expected distinct-pair draws giving each pair probability `p` of being hit.
fn pair_draws(pairs: f64, p: f64) -> f64 {
    -pairs * (1.0 - p).max(1e-9).ln()
}

/// Number of team patents per community and the outsider probability.
fn team_plan(config: &SynthConfig, sizes: &[usize]) -> (Vec<usize>, f64) {
    let TeamSize { min, max } = config.team_size;
    let span = (max - min + 1) as f64;
    let mean_pairs = (min..=max).map(pairs).sum::<f64>() / span;
    let mean_team = (min + max) as f64 / 2.0;

    let total: usize = sizes.iter().sum();
    let within_pairs: f64 = sizes.iter().map(|&s| pairs(s)).sum();
    let between_pairs = pairs(total) - within_pairs;
    let dw = pair_draws(within_pairs, config.p_within);
    let db = pair_draws(between_pairs, config.p_between);
    let f_between = if dw + db > 0.0 { db / (dw + db) } else { 0.0 };
    // A pair straddles communities when exactly one member is an outsider.
    let epsilon = if sizes.len() > 1 {
        (1.0 - (1.0 - 2.0 * f_between.min(0.5)).sqrt()) / 2.0
    } else {
        0.0
    };

    let counts = sizes
        .iter()
        .map(|&s| {
            let n = match config.patents_per_inventor {
                Some(ppi) => ppi * s as f64 / mean_team,
                None => pair_draws(pairs(s), config.p_within) / ((1.0 - f_between) * mean_pairs),
            };
            n.round() as usize
        })
        .collect();
    (counts, epsilon)
}

fn add_months(date: NaiveDate, lag_months: f64) -> NaiveDate {
    let days = (lag_months * DAYS_PER_MONTH).round() as i64;
    if days >= 0 {
        date + Days::new(days as u64)
    } else {
        date - Days::new(days.unsigned_abs())
    }
}

/// Generates a cohort. Deterministic given the config.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let sizes = config.communities.sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut inventors: Vec<String> = Vec::new();
    let mut community_of: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (c, &s) in sizes.iter().enumerate() {
        let mut m = Vec::with_capacity(s);
        for _ in 0..s {
            m.push(inventors.len());
            inventors.push(format!("I{:06}", inventors.len()));
            community_of.push(c);
        }
        members.push(m);
    }
    let n = inventors.len();

    let (counts, epsilon) = team_plan(config, &sizes);
    let start = NaiveDate::from_ymd_opt(config.start_year, 1, 1)
        .ok_or_else(|| Error::InvalidConfig(format!("bad start year {}", config.start_year)))?;
    let month = Uniform::new(0, 12 * config.years).expect("years positive");
    let team_size = Uniform::new_inclusive(config.team_size.min, config.team_size.max).expect("valid range");

    let mut patents = PatentSet::new();
    let mut links = Vec::new();
    // (patent id, grant date, team, home community)
    let mut cohort: Vec<(String, NaiveDate, Vec<usize>, usize)> = Vec::new();
    for (c, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let t = team_size.sample(&mut rng);
            let mut team: BTreeSet<usize> = BTreeSet::new();
            let mut home_left: Vec<usize> = members[c].clone();
            // the first member always comes from the home community
            while team.len() < t {
                if !team.is_empty() && rng.random::<f64>() < epsilon {
                    let o = rng.random_range(0..n);
                    if community_of[o] != c {
                        team.insert(o);
                    }
                } else {
                    let k = rng.random_range(0..home_left.len());
                    team.insert(home_left.swap_remove(k));
                }
            }
            let id = format!("P{:07}", cohort.len());
            let grant = start + Months::new(month.sample(&mut rng));
            patents.insert(PatentRecord {
                patent_id: id.clone(),
                grant_date: grant,
                application_date: grant - Months::new(24),
                main_class: config.main_class.clone(),
                assignee_id: Some(format!("A{c:04}")),
            })?;
            for &i in &team {
                links.push(InventorLink {
                    patent_id: id.clone(),
                    inventor_id: inventors[i].clone(),
                });
            }
            cohort.push((id, grant, team.into_iter().collect(), c));
        }
    }

    let base = LogNormal::new(config.lag.mu, config.lag.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let draw_lag = |rng: &mut ChaCha8Rng| config.lag.shift + base.sample(rng);
    let a = config.arms;
    let arm_total = a.self_citation + a.in_community + a.out_of_community;
    let mut citations = Vec::new();
    let mut first_citations = Vec::new();
    let mut citing_count = 0usize;
    let mut add_citing = |inventor: usize, cited: &str, date: NaiveDate, patents: &mut PatentSet, links: &mut Vec<InventorLink>| -> Result<String> {
        let id = format!("C{citing_count:07}");
        citing_count += 1;
        patents.insert(PatentRecord {
            patent_id: id.clone(),
            grant_date: date + Days::new(CITING_GRANT_DELAY_DAYS),
            application_date: date,
            main_class: CITING_CLASS.into(),
            assignee_id: None,
        })?;
        links.push(InventorLink {
            patent_id: id.clone(),
            inventor_id: inventors[inventor].clone(),
        });
        citations.push(CitationRecord {
            citing_id: id.clone(),
            cited_id: cited.to_string(),
        });
        Ok(id)
    };

    for (id, grant, team, home) in &cohort {
        let u = rng.random::<f64>() * arm_total;
        let mut arm = if u < a.self_citation {
            Category::SelfCitation
        } else if u < a.self_citation + a.in_community {
            Category::InCommunity
        } else {
            Category::OutOfCommunity
        };
        let insiders: Vec<usize> = members[*home]
            .iter()
            .copied()
            .filter(|i| !team.contains(i))
            .collect();
        if arm == Category::InCommunity && insiders.is_empty() {
            arm = Category::OutOfCommunity;
        }
        let citer = match arm {
            Category::SelfCitation => *team.choose(&mut rng).expect("team nonempty"),
            Category::InCommunity => *insiders.choose(&mut rng).expect("checked nonempty"),
            Category::OutOfCommunity => {
                let on_team: BTreeSet<usize> = team.iter().map(|&i| community_of[i]).collect();
                let others: Vec<usize> = (0..sizes.len()).filter(|c| !on_team.contains(c)).collect();
                let Some(&c) = others.choose(&mut rng) else {
                    continue;
                };
                *members[c].choose(&mut rng).expect("communities nonempty")
            }
        };
        let lag = match arm {
            Category::SelfCitation if rng.random::<f64>() < config.zero_peak_fraction => 0.0,
            Category::InCommunity => draw_lag(&mut rng) - config.advantage_months,
            _ => draw_lag(&mut rng),
        };
        let date = add_months(*grant, lag);
        let citing = add_citing(citer, id, date, &mut patents, &mut links)?;
        first_citations.push(PlantedCitation {
            cited_patent: id.clone(),
            citing_patent: citing,
            arm,
            lag_months: (date - *grant).num_days() as f64 / DAYS_PER_MONTH,
        });

        let extra = rng.random_range(0..=config.extra_citations);
        for _ in 0..extra {
            let later = add_months(date, rng.random_range(1.0..48.0));
            let who = rng.random_range(0..n);
            add_citing(who, id, later, &mut patents, &mut links)?;
        }
    }

    Ok(SynthData {
        patents,
        links,
        citations,
        planted: inventors.into_iter().zip(community_of).collect(),
        first_citations,
    })
}

/// Unit-weight stochastic block model with the given block sizes. Returns the
/// graph and each node's block.
pub fn planted_partition_graph(
    sizes: &[usize],
    p_within: f64,
    p_between: f64,
    seed: u64,
) -> Result<(WeightedGraph, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let n = labels.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_within } else { p_between };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    Ok((WeightedGraph::from_indexed(n, edges)?, labels))
}
