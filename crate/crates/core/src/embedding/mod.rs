//! Projection of EDI scale vectors into the plane.
//!
//! Three projectors share one [`EmbeddingConfig`]: exact t-SNE, a simplified
//! UMAP (exact k-NN graph, seeded random initialisation) and PCA. All are
//! deterministic for a fixed seed regardless of the rayon pool size: parallel
//! work is split per row and reduced in a fixed order.

mod pca;
mod tsne;
mod umap;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dataset, NeighborhoodId, Wave};

pub use pca::{pca, principal_axes};
pub use tsne::{conditional_affinities, tsne};
pub use umap::{fit_curve, fuzzy_graph, umap};

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("neighborhood `{neighborhood}` has no record for wave {wave}")]
    MissingWave { neighborhood: String, wave: u8 },
    #[error("perplexity {perplexity} exceeds (n-1)/3 = {max}")]
    PerplexityTooLarge { perplexity: f64, max: f64 },
    #[error("{n} points is too few (need at least {min})")]
    TooFewPoints { n: usize, min: usize },
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tsne,
    Umap,
    Pca,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tsne => "tsne",
            Method::Umap => "umap",
            Method::Pca => "pca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "tsne" => Ok(Method::Tsne),
            "umap" => Ok(Method::Umap),
            "pca" => Ok(Method::Pca),
            _ => Err(format!("unknown embedding method `{s}`")),
        }
    }
}

/// Starting layout for the iterative projectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Seeded random draw indexed by row.
    #[default]
    Random,
    /// Leading principal components; independent of row order.
    Pca,
}

impl FromStr for Init {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Init::Random),
            "pca" => Ok(Init::Pca),
            _ => Err(format!("unknown init `{s}` (expected random or pca)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub method: Method,
    pub seed: u64,
    /// t-SNE; `None` resolves to min(30, floor((n-1)/3)).
    pub perplexity: Option<f64>,
    pub iterations: usize,
    /// t-SNE; `None` resolves to max(50, n/12).
    pub learning_rate: Option<f64>,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub standardize: bool,
    pub init: Init,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            method: Method::Tsne,
            seed: 0,
            perplexity: None,
            iterations: 1000,
            learning_rate: None,
            n_neighbors: 15,
            min_dist: 0.1,
            epochs: 500,
            standardize: true,
            init: Init::Random,
        }
    }
}

impl EmbeddingConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        EmbeddingConfig {
            method,
            seed,
            ..Default::default()
        }
    }
}

pub fn default_perplexity(n: usize) -> f64 {
    (((n.saturating_sub(1)) / 3) as f64).min(30.0)
}

pub fn default_learning_rate(n: usize) -> f64 {
    (n as f64 / 12.0).max(50.0)
}

/// Which rows enter the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", content = "wave", rename_all = "snake_case")]
pub enum WaveMode {
    SingleWave(Wave),
    AllWave,
}

impl fmt::Display for WaveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WaveMode::SingleWave(w) => write!(f, "wave{w}"),
            WaveMode::AllWave => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointKey {
    pub neighborhood: NeighborhoodId,
    pub wave: Wave,
}

/// Scale matrix (rows = points, columns = the five developmental scales).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatrix {
    pub data: Array2<f64>,
    pub keys: Vec<PointKey>,
    pub warnings: Vec<String>,
}

/// Raw projector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Array2<f64>,
    /// (iteration, objective) checkpoints: KL divergence for t-SNE, fuzzy
    /// cross-entropy for UMAP, empty for PCA.
    pub objective_trace: Vec<(usize, f64)>,
    /// The configuration with defaults resolved.
    pub config: EmbeddingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Array2<f64>,
    pub keys: Vec<PointKey>,
    pub objective_trace: Vec<(usize, f64)>,
    pub config: EmbeddingConfig,
    pub mode: WaveMode,
    pub warnings: Vec<String>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// Assembles the n×5 scale matrix for a wave mode; z-scores columns when
/// `standardize` is set. A zero-variance column is left centred at 0 with a
/// warning.
pub fn build_matrix(
    dataset: &Dataset,
    mode: WaveMode,
    standardize: bool,
) -> Result<ScaleMatrix, EmbeddingError> {
    let mut rows = Vec::new();
    let mut keys = Vec::new();
    match mode {
        WaveMode::SingleWave(w) => {
            for n in &dataset.neighborhoods {
                let rec = dataset.record(&n.id, w).ok_or_else(|| EmbeddingError::MissingWave {
                    neighborhood: n.id.0.clone(),
                    wave: w.index(),
                })?;
                rows.push(rec.developmental_vector());
                keys.push(PointKey {
                    neighborhood: n.id.clone(),
                    wave: w,
                });
            }
        }
        WaveMode::AllWave => {
            for n in &dataset.neighborhoods {
                for w in Wave::all() {
                    if let Some(rec) = dataset.record(&n.id, w) {
                        rows.push(rec.developmental_vector());
                        keys.push(PointKey {
                            neighborhood: n.id.clone(),
                            wave: w,
                        });
                    }
                }
            }
        }
    }
    let mut data = Array2::zeros((rows.len(), 5));
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            data[[i, j]] = *v;
        }
    }
    let mut warnings = Vec::new();
    if standardize && !rows.is_empty() {
        warnings = zscore_columns(&mut data);
    }
    Ok(ScaleMatrix {
        data,
        keys,
        warnings,
    })
}

/// Population z-score per column. Returns one warning per constant column.
pub fn zscore_columns(data: &mut Array2<f64>) -> Vec<String> {
    let n = data.nrows() as f64;
    let mut warnings = Vec::new();
    for (j, mut col) in data.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            col.fill(0.0);
            warnings.push(format!("column {j} has zero variance; left centred at 0"));
        } else {
            col.mapv_inplace(|v| (v - mean) / sd);
        }
    }
    warnings
}

/// Runs the configured projector on a raw matrix.
pub fn project(x: ArrayView2<f64>, config: &EmbeddingConfig) -> Result<Projection, EmbeddingError> {
    match config.method {
        Method::Tsne => tsne(x, config),
        Method::Umap => umap(x, config),
        Method::Pca => pca(x, config),
    }
}

/// Builds the matrix for `mode` and projects it.
pub fn embed(
    dataset: &Dataset,
    mode: WaveMode,
    config: &EmbeddingConfig,
) -> Result<Embedding, EmbeddingError> {
    let m = build_matrix(dataset, mode, config.standardize)?;
    let p = project(m.data.view(), config)?;
    Ok(Embedding {
        points: p.points,
        keys: m.keys,
        objective_trace: p.objective_trace,
        config: p.config,
        mode,
        warnings: m.warnings,
    })
}

pub(crate) fn squared_distances(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}

/// `key,wave,x,y`
pub fn write_embedding_csv<W: Write>(emb: &Embedding, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["key", "wave", "x", "y"])?;
    for (k, row) in emb.keys.iter().zip(emb.points.rows()) {
        w.write_record([
            k.neighborhood.0.clone(),
            k.wave.to_string(),
            row[0].to_string(),
            row[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `iteration,objective`
pub fn write_trace_csv<W: Write>(trace: &[(usize, f64)], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["iteration", "objective"])?;
    for (it, obj) in trace {
        w.write_record([it.to_string(), obj.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::EdiFixture;

    #[test]
    fn matrix_shapes_per_mode() {
        let fx = EdiFixture::default().generate(3);
        let w6 = Wave::new(6).unwrap();
        let single = build_matrix(&fx.dataset, WaveMode::SingleWave(w6), true).unwrap();
        assert_eq!(single.data.dim(), (24, 5));
        let all = build_matrix(&fx.dataset, WaveMode::AllWave, true).unwrap();
        assert_eq!(all.data.dim(), (120, 5));
        for col in all.data.columns() {
            let mean = col.sum() / 120.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 120.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_is_zeroed_with_warning() {
        let mut fx = EdiFixture::default().generate(3);
        for r in &mut fx.dataset.edi {
            r.social = 7.0;
        }
        let m = build_matrix(&fx.dataset, WaveMode::SingleWave(Wave::new(2).unwrap()), true).unwrap();
        assert!(m.data.column(1).iter().all(|v| *v == 0.0));
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn missing_wave_names_the_neighborhood() {
        let mut fx = EdiFixture::default().generate(3);
        fx.dataset
            .edi
            .retain(|r| !(r.neighborhood.id.0 == "n07" && r.wave.index() == 4));
        let err = build_matrix(&fx.dataset, WaveMode::SingleWave(Wave::new(4).unwrap()), true).unwrap_err();
        assert_eq!(
            err,
            EmbeddingError::MissingWave {
                neighborhood: "n07".into(),
                wave: 4
            }
        );
    }

    #[test]
    fn defaults_follow_small_sample_rules() {
        assert_eq!(default_perplexity(24), 7.0);
        assert_eq!(default_perplexity(1000), 30.0);
        assert_eq!(default_learning_rate(24), 50.0);
        assert_eq!(default_learning_rate(1200), 100.0);
    }
}
