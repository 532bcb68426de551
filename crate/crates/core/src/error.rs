//! Crate-wide error with stable machine-readable codes, shared by the
//! pipeline, the CLI (exit codes) and the HTTP service (status + JSON body).

use thiserror::Error;

use crate::clustering::ClusterError;
use crate::domain::DomainError;
use crate::embedding::EmbeddingError;
use crate::geo::GeoError;
use crate::retention::RetentionError;
use crate::stats::StatsError;
use crate::validation::ValidationError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Retention(#[from] RetentionError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{0} not found")]
    NotFound(String),
    /// A valid request whose prerequisite state is missing.
    #[error("{0}")]
    Precondition(String),
    #[error("input `{name}` changed since the manifest was written")]
    InputChanged { name: String },
    #[error("replay differs from the manifest in: {}", .0.join(", "))]
    ReplayMismatch(Vec<String>),
}

/// Broad class used for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments, configuration or input data.
    Invalid,
    NotFound,
    /// The request is valid but a prerequisite is missing.
    Conflict,
    Runtime,
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(e) => match e {
                DomainError::Io { .. } => "io_error",
                DomainError::InvalidWave(_) | DomainError::BaselineWave { .. } => "invalid_wave",
                _ => "invalid_input",
            },
            Error::Embedding(e) => match e {
                EmbeddingError::MissingWave { .. } => "missing_wave",
                EmbeddingError::PerplexityTooLarge { .. } => "invalid_perplexity",
                EmbeddingError::TooFewPoints { .. } => "too_few_points",
                EmbeddingError::NonFiniteGradient { .. } => "non_finite_gradient",
                EmbeddingError::InvalidConfig(_) => "invalid_config",
            },
            Error::Cluster(e) => match e {
                ClusterError::KExceedsN { .. } => "invalid_k",
                ClusterError::MissingScaleValue(_) => "missing_scale_value",
                ClusterError::KeyMismatch(_) => "key_mismatch",
                ClusterError::TooFewPoints { .. } => "too_few_points",
                ClusterError::LengthMismatch { .. } => "length_mismatch",
            },
            Error::Validation(e) => match e {
                ValidationError::TooFewPoints { .. } => "too_few_points",
                ValidationError::DegenerateCloud => "degenerate_input",
                ValidationError::InvalidConfig(_) => "invalid_config",
                ValidationError::LengthMismatch { .. } => "length_mismatch",
            },
            Error::Stats(e) => match e {
                StatsError::NoRunAvailable => "no_run_available",
                StatsError::InvalidConfig(_) => "invalid_config",
                StatsError::LabelWithoutProfile(_) => "missing_profile",
                StatsError::SampleTooSmall { .. } => "sample_too_small",
                StatsError::LengthMismatch(..) => "length_mismatch",
                _ => "degenerate_input",
            },
            Error::Retention(e) => match e {
                RetentionError::EmptyInput => "empty_input",
                RetentionError::MissingPopulation(_) => "missing_population",
                RetentionError::InvalidRules(_) => "invalid_rules",
                RetentionError::UnknownFacet(_) => "unknown_facet",
                RetentionError::Csv(_) => "invalid_input",
                RetentionError::Io(_) => "io_error",
            },
            Error::Geo(e) => match e {
                GeoError::OverlapAmbiguity { .. } => "overlap_ambiguity",
                GeoError::MissingWeight(_) | GeoError::ZeroPopulationWeight { .. } => "invalid_weight",
                _ => "invalid_geometry",
            },
            Error::Io { .. } => "io_error",
            Error::Json(_) | Error::Csv(_) => "invalid_input",
            Error::Invalid(_) => "invalid_request",
            Error::NotFound(_) => "not_found",
            Error::Precondition(_) => "precondition_failed",
            Error::InputChanged { .. } => "input_changed",
            Error::ReplayMismatch(_) => "replay_mismatch",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self.code() {
            "not_found" => ErrorClass::NotFound,
            "no_run_available" | "precondition_failed" => ErrorClass::Conflict,
            "io_error" | "non_finite_gradient" | "replay_mismatch" => ErrorClass::Runtime,
            _ => ErrorClass::Invalid,
        }
    }

    /// 0 success, 1 validation or usage error, 2 runtime error.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Runtime => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
