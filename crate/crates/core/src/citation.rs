//! First-citation tracking and classification against a community partition.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CitationEvent, InventorLink, PatentRecord, PatentSet};

/// Mean Gregorian month, 365.25 / 12 days.
pub const DAYS_PER_MONTH: f64 = 30.4375;
pub const DEFAULT_WINDOW_MONTHS: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    #[serde(rename = "self")]
    SelfCitation,
    InCommunity,
    OutOfCommunity,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::SelfCitation => "self",
            Category::InCommunity => "in_community",
            Category::OutOfCommunity => "out_of_community",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Category::SelfCitation, Category::InCommunity, Category::OutOfCommunity]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

/// How to pick among citations sharing the earliest date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Self, then in-community, then out-of-community; then lowest citing key.
    #[default]
    CategoryPriority,
    /// Lowest citing key only.
    LowestKey,
}

impl std::str::FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "category_priority" => Ok(TieRule::CategoryPriority),
            "lowest_key" => Ok(TieRule::LowestKey),
            other => Err(Error::InvalidConfig(format!("unknown tie rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstCitation {
    pub cited_patent: String,
    pub citing_patent: String,
    pub lag_months: f64,
    pub category: Category,
}

/// The earliest qualifying citation date of a cited patent together with
/// every citing patent on that date, before a partition is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingFirstCitation {
    pub cited_patent: String,
    pub lag_months: f64,
    pub date: NaiveDate,
    /// Sorted ascending.
    pub citers: Vec<String>,
}

pub type InventorsOf = HashMap<String, BTreeSet<String>>;

pub fn inventors_by_patent(links: &[InventorLink]) -> InventorsOf {
    let mut m: InventorsOf = HashMap::new();
    for l in links {
        m.entry(l.patent_id.clone())
            .or_default()
            .insert(l.inventor_id.clone());
    }
    m
}

/// Months from `grant` to `citation_date`; negative when the citing
/// application predates the grant.
pub fn lag_between(grant: NaiveDate, citation_date: NaiveDate) -> f64 {
    (citation_date - grant).num_days() as f64 / DAYS_PER_MONTH
}

/// Lag from the cited patent's grant to the citing patent's application.
pub fn compute_lag(cited: &PatentRecord, citing: &PatentRecord) -> f64 {
    lag_between(cited.grant_date, citing.application_date)
}

/// Cohort patents listing at least one LCC inventor.
pub fn lcc_associated(cohort: &PatentSet, inventors_of: &InventorsOf, lcc_inventors: &HashSet<String>) -> PatentSet {
    cohort
        .iter()
        .filter(|p| {
            inventors_of
                .get(&p.patent_id)
                .is_some_and(|inv| inv.iter().any(|i| lcc_inventors.contains(i)))
        })
        .cloned()
        .collect()
}

/// Number of `patents` with any citation at lag at most `window_months`.
pub fn count_cited_within(patents: &PatentSet, events: &[CitationEvent], window_months: f64) -> usize {
    events
        .iter()
        .filter_map(|e| {
            let p = patents.get(&e.cited_id)?;
            (lag_between(p.grant_date, e.date) <= window_months).then_some(e.cited_id.as_str())
        })
        .collect::<HashSet<_>>()
        .len()
}

/// Earliest citation of each patent in `lcc_patents` made by a patent with at
/// least one LCC inventor, within `window_months` of grant. Patents without a
/// qualifying citation are omitted. Output is sorted by cited key.
pub fn first_citations(
    lcc_patents: &PatentSet,
    events: &[CitationEvent],
    inventors_of: &InventorsOf,
    lcc_inventors: &HashSet<String>,
    window_months: f64,
) -> Vec<PendingFirstCitation> {
    let cites_from_lcc = |citing: &str| {
        inventors_of
            .get(citing)
            .is_some_and(|inv| inv.iter().any(|i| lcc_inventors.contains(i)))
    };
    let mut earliest: BTreeMap<&str, (NaiveDate, BTreeSet<&str>)> = BTreeMap::new();
    for e in events {
        let Some(cited) = lcc_patents.get(&e.cited_id) else {
            continue;
        };
        if lag_between(cited.grant_date, e.date) > window_months || !cites_from_lcc(&e.citing_id) {
            continue;
        }
        match earliest.get_mut(e.cited_id.as_str()) {
            Some((d, citers)) if e.date == *d => {
                citers.insert(&e.citing_id);
            }
            Some((d, citers)) if e.date < *d => {
                *d = e.date;
                citers.clear();
                citers.insert(&e.citing_id);
            }
            Some(_) => {}
            None => {
                earliest.insert(&e.cited_id, (e.date, BTreeSet::from([e.citing_id.as_str()])));
            }
        }
    }
    earliest
        .into_iter()
        .map(|(cited, (date, citers))| PendingFirstCitation {
            cited_patent: cited.to_string(),
            lag_months: lag_between(lcc_patents.get(cited).expect("cited is in set").grant_date, date),
            date,
            citers: citers.into_iter().map(str::to_string).collect(),
        })
        .collect()
}

/// Community lookup for LCC inventors.
pub struct Communities<'a> {
    pub membership: &'a HashMap<String, usize>,
    pub lcc_inventors: &'a HashSet<String>,
}

impl Communities<'_> {
    fn of(&self, inventors: &BTreeSet<String>) -> Result<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        for i in inventors.iter().filter(|i| self.lcc_inventors.contains(*i)) {
            let c = self
                .membership
                .get(i)
                .ok_or_else(|| Error::UnpartitionedNode(i.clone()))?;
            out.insert(*c);
        }
        Ok(out)
    }
}

/// Self when the inventor lists intersect; in-community when an LCC inventor
/// of each patent shares a community; otherwise out-of-community.
pub fn classify(
    cited: &str,
    citing: &str,
    inventors_of: &InventorsOf,
    communities: &Communities<'_>,
) -> Result<Category> {
    let empty = BTreeSet::new();
    let a = inventors_of.get(cited).unwrap_or(&empty);
    let b = inventors_of.get(citing).unwrap_or(&empty);
    if !a.is_disjoint(b) {
        return Ok(Category::SelfCitation);
    }
    let ca = communities.of(a)?;
    let cb = communities.of(b)?;
    Ok(if ca.is_disjoint(&cb) {
        Category::OutOfCommunity
    } else {
        Category::InCommunity
    })
}

/// Resolves each pending first citation under a partition.
pub fn classify_all(
    pending: &[PendingFirstCitation],
    inventors_of: &InventorsOf,
    communities: &Communities<'_>,
    tie_rule: TieRule,
) -> Result<Vec<FirstCitation>> {
    pending
        .iter()
        .map(|p| {
            let mut chosen: Option<(Category, &str)> = None;
            for citer in &p.citers {
                let cat = classify(&p.cited_patent, citer, inventors_of, communities)?;
                let better = match (tie_rule, chosen) {
                    (_, None) => true,
                    (TieRule::CategoryPriority, Some((c, _))) => cat < c,
                    (TieRule::LowestKey, Some(_)) => false,
                };
                if better {
                    chosen = Some((cat, citer));
                }
            }
            let (category, citing) = chosen.ok_or(Error::EmptySample)?;
            Ok(FirstCitation {
                cited_patent: p.cited_patent.clone(),
                citing_patent: citing.to_string(),
                lag_months: p.lag_months,
                category,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortCitationSummary {
    pub lcc_associated_patents: usize,
    pub lcc_associated_cited_within_window: usize,
    pub first_cited_by_lcc_inventors: usize,
    pub first_citation_self: usize,
    pub first_citation_in_community: usize,
    pub first_citation_out_of_community: usize,
}

pub fn summarize(
    lcc_associated_patents: usize,
    lcc_associated_cited_within_window: usize,
    first: &[FirstCitation],
) -> CohortCitationSummary {
    let count = |c: Category| first.iter().filter(|f| f.category == c).count();
    CohortCitationSummary {
        lcc_associated_patents,
        lcc_associated_cited_within_window,
        first_cited_by_lcc_inventors: first.len(),
        first_citation_self: count(Category::SelfCitation),
        first_citation_in_community: count(Category::InCommunity),
        first_citation_out_of_community: count(Category::OutOfCommunity),
    }
}

pub fn lags_of(first: &[FirstCitation], category: Category) -> Vec<f64> {
    first
        .iter()
        .filter(|f| f.category == category)
        .map(|f| f.lag_months)
        .collect()
}

/// CSV `cited_id,citing_id,lag_months,category`.
pub fn write_first_citations(path: impl AsRef<Path>, first: &[FirstCitation]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("cited_id,citing_id,lag_months,category\n");
    for f in first {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            f.cited_patent,
            f.citing_patent,
            f.lag_months,
            f.category.name()
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_first_citations(path: impl AsRef<Path>) -> Result<Vec<FirstCitation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let [cited, citing, lag, cat] = fields[..] else {
            return Err(Error::malformed(line_no, "expected 4 fields"));
        };
        out.push(FirstCitation {
            cited_patent: cited.to_string(),
            citing_patent: citing.to_string(),
            lag_months: lag
                .parse()
                .map_err(|_| Error::malformed(line_no, format!("bad lag `{lag}`")))?,
            category: Category::parse(cat)
                .ok_or_else(|| Error::malformed(line_no, format!("bad category `{cat}`")))?,
        });
    }
    Ok(out)
}
