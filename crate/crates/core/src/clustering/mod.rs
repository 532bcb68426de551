//! k-means over embedded points, vulnerability ranking of labels, cross-wave
//! stability and agglomerative clustering.

mod hierarchy;
mod kmeans;
mod ranking;
mod stability;

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, Method, PointKey, WaveMode};

pub use hierarchy::{agglomerative, cut_dendrogram, Dendrogram, Linkage, Merge};
pub use kmeans::{kmeans, KMeansRun, DEFAULT_RESTARTS};
pub use ranking::{rank_by_values, rank_labels, relabel_map, RankStatistic};
pub use stability::{stability, write_stability_csv, StabilityReport};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} must be between 1 and the number of points ({n})")]
    KExceedsN { k: usize, n: usize },
    #[error("no value on the ranking scale for `{0}`")]
    MissingScaleValue(String),
    #[error("solutions do not cover the same neighborhoods: {0}")]
    KeyMismatch(String),
    #[error("{n} points is too few (need at least {min})")]
    TooFewPoints { n: usize, min: usize },
    #[error("label count {labels} does not match point count {points}")]
    LengthMismatch { labels: usize, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSolution {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub wcss: f64,
    pub k: usize,
    pub restarts_used: usize,
    pub seed: u64,
    /// WCSS after each Lloyd iteration of the winning restart.
    pub wcss_trace: Vec<f64>,
    pub keys: Vec<PointKey>,
    pub mode: Option<WaveMode>,
    pub method: Option<Method>,
}

impl ClusterSolution {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Default cluster count per wave mode and projector.
pub fn default_k(mode: WaveMode, method: Method) -> usize {
    match (mode, method) {
        (WaveMode::SingleWave(_), _) => 3,
        (WaveMode::AllWave, Method::Umap) => 4,
        (WaveMode::AllWave, _) => 6,
    }
}

/// k-means on an embedding, carrying its keys and provenance.
pub fn cluster_embedding(
    emb: &Embedding,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterSolution, ClusterError> {
    let mut sol = kmeans(emb.points.view(), k, seed, restarts)?;
    sol.keys = emb.keys.clone();
    sol.mode = Some(emb.mode);
    sol.method = Some(emb.config.method);
    Ok(sol)
}

/// `key,wave,x,y,label`
pub fn write_solution_csv<W: Write>(emb: &Embedding, sol: &ClusterSolution, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["key", "wave", "x", "y", "label"])?;
    for ((k, row), label) in emb.keys.iter().zip(emb.points.rows()).zip(&sol.labels) {
        w.write_record([
            k.neighborhood.0.clone(),
            k.wave.to_string(),
            row[0].to_string(),
            row[1].to_string(),
            label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Hubert-Arabie adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, f64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let c2 = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Wave;

    #[test]
    fn defaults_per_mode() {
        let w = WaveMode::SingleWave(Wave::new(6).unwrap());
        assert_eq!(default_k(w, Method::Tsne), 3);
        assert_eq!(default_k(WaveMode::AllWave, Method::Tsne), 6);
        assert_eq!(default_k(WaveMode::AllWave, Method::Umap), 4);
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }
}
