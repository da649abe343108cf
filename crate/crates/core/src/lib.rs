//! Co-inventor network analysis of patent first-citation dynamics.
//!
//! The crate builds a weighted co-inventor graph from patent records,
//! detects inventor communities with five algorithms, classifies each
//! patent's first citation as self, in-community or out-of-community, and
//! compares the resulting time-lag distributions.

pub mod citation;
pub mod community;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use citation::{Category, FirstCitation, TieRule};
pub use community::{Algorithm, DetectorParams, Partition};
pub use error::{Error, Result};
pub use graph::{BipartiteNetwork, WeightedGraph};
pub use ingest::{CitationEvent, CitationRecord, InventorLink, PatentRecord, PatentSet};
pub use pipeline::{Outcome, PipelineConfig};
pub use stats::{LagHistogram, LogNormalFit, SummaryStats, WelchResult};
pub use synth::SynthConfig;
