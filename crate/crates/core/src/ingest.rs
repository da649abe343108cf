//! Loading of patent, inventor-link and citation tables, cohort filtering and
//! dating of citation events.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatentRecord {
    pub patent_id: String,
    pub grant_date: NaiveDate,
    pub application_date: NaiveDate,
    /// USPC main class code.
    pub main_class: String,
    pub assignee_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InventorLink {
    pub patent_id: String,
    pub inventor_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CitationRecord {
    pub citing_id: String,
    pub cited_id: String,
}

/// A citation dated by the application date of the citing patent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CitationEvent {
    pub citing_id: String,
    pub cited_id: String,
    pub date: NaiveDate,
}

/// Patents keyed by id, iterated in ascending key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatentSet {
    records: BTreeMap<String, PatentRecord>,
}

impl PatentSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a record, rejecting a repeated id.
    pub fn insert(&mut self, record: PatentRecord) -> Result<()> {
        if self.records.contains_key(&record.patent_id) {
            return Err(Error::DuplicateId {
                kind: "patent_id",
                id: record.patent_id,
            });
        }
        self.records.insert(record.patent_id.clone(), record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PatentRecord> {
        self.records.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PatentRecord> {
        self.records.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }
}

impl FromIterator<PatentRecord> for PatentSet {
    /// Later duplicates overwrite earlier ones; use [`PatentSet::insert`] to reject them.
    fn from_iter<I: IntoIterator<Item = PatentRecord>>(iter: I) -> Self {
        PatentSet {
            records: iter
                .into_iter()
                .map(|r| (r.patent_id.clone(), r))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Tab,
    Comma,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Tab => b'\t',
            Delimiter::Comma => b',',
        }
    }
}

/// Maps header column names onto patent fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatentSchema {
    pub delimiter: Delimiter,
    pub patent_id: String,
    pub grant_date: String,
    pub application_date: String,
    pub main_class: String,
    /// Optional column; absent from the header means no assignees.
    pub assignee_id: Option<String>,
}

impl Default for PatentSchema {
    fn default() -> Self {
        PatentSchema {
            delimiter: Delimiter::Tab,
            patent_id: "patent_id".into(),
            grant_date: "grant_date".into(),
            application_date: "application_date".into(),
            main_class: "main_class".into(),
            assignee_id: Some("assignee_id".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkSchema {
    pub delimiter: Delimiter,
    pub patent_id: String,
    pub inventor_id: String,
}

impl Default for LinkSchema {
    fn default() -> Self {
        LinkSchema {
            delimiter: Delimiter::Tab,
            patent_id: "patent_id".into(),
            inventor_id: "inventor_id".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CitationSchema {
    pub delimiter: Delimiter,
    pub citing_id: String,
    pub cited_id: String,
}

impl Default for CitationSchema {
    fn default() -> Self {
        CitationSchema {
            delimiter: Delimiter::Tab,
            citing_id: "citing_id".into(),
            cited_id: "cited_id".into(),
        }
    }
}

struct Table {
    reader: csv::Reader<File>,
    path: std::path::PathBuf,
    headers: csv::StringRecord,
}

impl Table {
    fn open(path: &Path, delimiter: Delimiter) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter.byte())
            .has_headers(true)
            .flexible(false)
            .from_reader(file);
        let headers = reader.headers()?.clone();
        Ok(Table {
            reader,
            path: path.to_path_buf(),
            headers,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::SchemaMismatch {
                path: self.path.clone(),
                column: name.to_string(),
            })
    }

    fn optional_column(&self, name: Option<&str>) -> Option<usize> {
        name.and_then(|n| self.headers.iter().position(|h| h.trim() == n))
    }

    /// Yields `(line, record)` pairs; unequal field counts surface as `MalformedRow`.
    fn rows(&mut self) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
        self.reader.records().map(|rec| match rec {
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line());
                Ok((line, r))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                Err(Error::malformed(line, e.to_string()))
            }
        })
    }
}

fn field<'r>(rec: &'r csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<&'r str> {
    match rec.get(idx).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::malformed(line, format!("missing `{name}`"))),
    }
}

/// Parses a strict ISO-8601 calendar date. Sentinels such as `0000-00-00` fail.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn date_field(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<NaiveDate> {
    let raw = field(rec, idx, name, line)?;
    parse_date(raw).ok_or_else(|| Error::malformed(line, format!("bad date `{raw}` in `{name}`")))
}

pub fn load_patents(path: impl AsRef<Path>, schema: &PatentSchema) -> Result<PatentSet> {
    let mut table = Table::open(path.as_ref(), schema.delimiter)?;
    let id_col = table.column(&schema.patent_id)?;
    let grant_col = table.column(&schema.grant_date)?;
    let app_col = table.column(&schema.application_date)?;
    let class_col = table.column(&schema.main_class)?;
    let assignee_col = table.optional_column(schema.assignee_id.as_deref());

    let mut set = PatentSet::new();
    for row in table.rows() {
        let (line, rec) = row?;
        let grant_date = date_field(&rec, grant_col, &schema.grant_date, line)?;
        let application_date = date_field(&rec, app_col, &schema.application_date, line)?;
        if application_date > grant_date {
            return Err(Error::malformed(line, "application date after grant date"));
        }
        let assignee_id = assignee_col
            .and_then(|c| rec.get(c))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        set.insert(PatentRecord {
            patent_id: field(&rec, id_col, &schema.patent_id, line)?.to_string(),
            grant_date,
            application_date,
            main_class: field(&rec, class_col, &schema.main_class, line)?.to_string(),
            assignee_id,
        })?;
    }
    Ok(set)
}

pub fn load_links(path: impl AsRef<Path>, schema: &LinkSchema) -> Result<Vec<InventorLink>> {
    let mut table = Table::open(path.as_ref(), schema.delimiter)?;
    let patent_col = table.column(&schema.patent_id)?;
    let inventor_col = table.column(&schema.inventor_id)?;
    let mut seen = HashSet::new();
    let mut links = Vec::new();
    for row in table.rows() {
        let (line, rec) = row?;
        let link = InventorLink {
            patent_id: field(&rec, patent_col, &schema.patent_id, line)?.to_string(),
            inventor_id: field(&rec, inventor_col, &schema.inventor_id, line)?.to_string(),
        };
        if !seen.insert((link.patent_id.clone(), link.inventor_id.clone())) {
            return Err(Error::DuplicateId {
                kind: "inventor link",
                id: format!("{}/{}", link.patent_id, link.inventor_id),
            });
        }
        links.push(link);
    }
    Ok(links)
}

pub fn load_citations(
    path: impl AsRef<Path>,
    schema: &CitationSchema,
) -> Result<Vec<CitationRecord>> {
    let mut table = Table::open(path.as_ref(), schema.delimiter)?;
    let citing_col = table.column(&schema.citing_id)?;
    let cited_col = table.column(&schema.cited_id)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in table.rows() {
        let (line, rec) = row?;
        let c = CitationRecord {
            citing_id: field(&rec, citing_col, &schema.citing_id, line)?.to_string(),
            cited_id: field(&rec, cited_col, &schema.cited_id, line)?.to_string(),
        };
        if c.citing_id == c.cited_id {
            return Err(Error::malformed(line, "patent cites itself"));
        }
        if !seen.insert((c.citing_id.clone(), c.cited_id.clone())) {
            return Err(Error::DuplicateId {
                kind: "citation",
                id: format!("{}->{}", c.citing_id, c.cited_id),
            });
        }
        out.push(c);
    }
    Ok(out)
}

fn writer(path: &Path, delimiter: Delimiter) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .delimiter(delimiter.byte())
        .from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes patents with the schema's column names, in ascending id order.
pub fn write_patents(path: impl AsRef<Path>, patents: &PatentSet, schema: &PatentSchema) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, schema.delimiter)?;
    let mut header = vec![
        schema.patent_id.as_str(),
        schema.grant_date.as_str(),
        schema.application_date.as_str(),
        schema.main_class.as_str(),
    ];
    if let Some(a) = &schema.assignee_id {
        header.push(a);
    }
    w.write_record(&header)?;
    for p in patents.iter() {
        let grant = p.grant_date.format("%Y-%m-%d").to_string();
        let app = p.application_date.format("%Y-%m-%d").to_string();
        let mut row = vec![p.patent_id.as_str(), &grant, &app, p.main_class.as_str()];
        if schema.assignee_id.is_some() {
            row.push(p.assignee_id.as_deref().unwrap_or(""));
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_links(path: impl AsRef<Path>, links: &[InventorLink], schema: &LinkSchema) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, schema.delimiter)?;
    w.write_record([&schema.patent_id, &schema.inventor_id])?;
    for l in links {
        w.write_record([&l.patent_id, &l.inventor_id])?;
    }
    finish(w, path)
}

pub fn write_citations(
    path: impl AsRef<Path>,
    citations: &[CitationRecord],
    schema: &CitationSchema,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, schema.delimiter)?;
    w.write_record([&schema.citing_id, &schema.cited_id])?;
    for c in citations {
        w.write_record([&c.citing_id, &c.cited_id])?;
    }
    finish(w, path)
}

/// Dated citation events as `citing_id<TAB>cited_id<TAB>date`.
pub fn write_events(path: impl AsRef<Path>, events: &[CitationEvent]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("citing_id\tcited_id\tdate\n");
    for e in events {
        body.push_str(&format!("{}\t{}\t{}\n", e.citing_id, e.cited_id, e.date.format("%Y-%m-%d")));
    }
    file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<CitationEvent>> {
    let mut table = Table::open(path.as_ref(), Delimiter::Tab)?;
    let citing = table.column("citing_id")?;
    let cited = table.column("cited_id")?;
    let date = table.column("date")?;
    let mut out = Vec::new();
    for row in table.rows() {
        let (line, rec) = row?;
        out.push(CitationEvent {
            citing_id: field(&rec, citing, "citing_id", line)?.to_string(),
            cited_id: field(&rec, cited, "cited_id", line)?.to_string(),
            date: date_field(&rec, date, "date", line)?,
        });
    }
    Ok(out)
}

/// Records whose main class is in `classes` and whose grant year lies in `grant_years`.
///
/// Only the main class is matched; secondary classifications are not considered.
pub fn filter_cohort(
    patents: &PatentSet,
    classes: &BTreeSet<String>,
    grant_years: RangeInclusive<i32>,
) -> PatentSet {
    patents
        .iter()
        .filter(|p| classes.contains(&p.main_class) && grant_years.contains(&p.grant_date.year()))
        .cloned()
        .collect()
}

/// Dates every citation by its citing patent's application date.
///
/// Returns the events (in input order) and the number of citations dropped
/// because the citing patent is unknown.
pub fn resolve_citation_events(
    citations: &[CitationRecord],
    all_patents: &PatentSet,
) -> (Vec<CitationEvent>, usize) {
    let mut dropped = 0;
    let events = citations
        .iter()
        .filter_map(|c| match all_patents.get(&c.citing_id) {
            Some(citing) => Some(CitationEvent {
                citing_id: c.citing_id.clone(),
                cited_id: c.cited_id.clone(),
                date: citing.application_date,
            }),
            None => {
                dropped += 1;
                None
            }
        })
        .collect();
    (events, dropped)
}
