use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Partition;
use crate::error::{Error, Result};

/// Adjusted Rand index, in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AriScore(f64);

impl AriScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Hubert–Arabie adjusted Rand index from the contingency table.
///
/// When the index cannot be normalised (both partitions all-singletons or both
/// a single block, which forces them to be identical) the score is 1.
pub fn adjusted_rand_index(p1: &Partition, p2: &Partition) -> Result<AriScore> {
    if p1.len() != p2.len() {
        return Err(Error::NodeSetMismatch);
    }
    let n = p1.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    for (&a, &b) in p1.assignment().iter().zip(p2.assignment()) {
        *table.entry((a, b)).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let rows: f64 = p1.sizes().iter().map(|&s| pairs(s as u64)).sum();
    let cols: f64 = p2.sizes().iter().map(|&s| pairs(s as u64)).sum();
    let total = pairs(n);
    if total == 0.0 {
        return Ok(AriScore(1.0));
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(AriScore(1.0));
    }
    Ok(AriScore((index - expected) / (max - expected)))
}

/// Mean ARI over all unordered pairs in `runs`; 1 for fewer than two runs.
pub fn mean_pairwise_ari(runs: &[Partition]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            sum += adjusted_rand_index(a, b)?.value();
            count += 1;
        }
    }
    Ok(if count == 0 { 1.0 } else { sum / count as f64 })
}

/// Mean ARI over all cross pairs of two run sets.
pub fn mean_cross_ari(a: &[Partition], b: &[Partition]) -> Result<f64> {
    let mut sum = 0.0;
    for x in a {
        for y in b {
            sum += adjusted_rand_index(x, y)?.value();
        }
    }
    let count = a.len() * b.len();
    if count == 0 {
        return Err(Error::EmptySample);
    }
    Ok(sum / count as f64)
}
