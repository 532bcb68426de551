//! Domain types and file ingestion for EDI, census and registration data.
//!
//! Loaders are strict: an out-of-range or malformed cell is rejected with the
//! data-row number (1-based, header excluded) and the offending field rather
//! than coerced.

mod census;
mod edi;
mod registration;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use census::{
    default_catalog, load_catalog, load_census, read_catalog, read_census_table, write_catalog, write_census_table, Aggregation,
    CensusCategory, CensusProfile, CensusVariable, DaRow, DaTable, VariableKind,
};
pub use edi::{load_edi, read_edi, write_edi, EDI_HEADER};
pub use registration::{
    load_registrations, read_registrations, write_registrations, Gender, RegistrationRecord,
    Season, REGISTRATION_HEADER,
};

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` in field `{field}`")]
    Parse {
        row: usize,
        field: String,
        value: String,
    },
    #[error("row {row}: field `{field}` is out of range")]
    RangeViolation { row: usize, field: String },
    #[error("duplicate record for neighborhood `{neighborhood}` in wave {wave}")]
    DuplicateKey { neighborhood: String, wave: u8 },
    #[error("row {row}: wave 1 is the vulnerability baseline and is not a data wave")]
    BaselineWave { row: usize },
    #[error("wave {0} is outside the usable range 2..=6")]
    InvalidWave(i64),
    #[error("unknown census variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate census variable `{0}`")]
    DuplicateVariable(String),
    #[error("row {row}: value `{value}` of `{var_id}` is not numeric")]
    KindMismatch {
        row: usize,
        var_id: String,
        value: String,
    },
    #[error("row {row}: bad date `{value}` in `{field}`")]
    BadDate {
        row: usize,
        field: String,
        value: String,
    },
    #[error("row {row}: registration date precedes birth date")]
    NegativeAge { row: usize },
    #[error("unknown neighborhood `{0}`")]
    UnknownNeighborhood(String),
    #[error("duplicate neighborhood `{0}`")]
    DuplicateNeighborhood(String),
    #[error("row {row}: field `{field}` must not be empty")]
    EmptyField { row: usize, field: String },
}

/// Stable short token identifying a neighborhood.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeighborhoodId(pub String);

impl NeighborhoodId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NeighborhoodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NeighborhoodId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Neighborhood {
    pub id: NeighborhoodId,
    pub name: String,
}

/// An EDI collection wave. Wave 1 defines the vulnerability cutoffs and is
/// never a data point, so only 2 through 6 are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Wave(u8);

impl Wave {
    pub const FIRST: u8 = 2;
    pub const LAST: u8 = 6;

    pub fn new(index: i64) -> Result<Self, DomainError> {
        if (Self::FIRST as i64..=Self::LAST as i64).contains(&index) {
            Ok(Wave(index as u8))
        } else {
            Err(DomainError::InvalidWave(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Wave> {
        (Self::FIRST..=Self::LAST).map(Wave)
    }
}

impl TryFrom<i64> for Wave {
    type Error = DomainError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Wave::new(v)
    }
}

impl From<Wave> for u8 {
    fn from(w: Wave) -> u8 {
        w.0
    }
}

impl fmt::Display for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The seven EDI vulnerability percentages carried per neighborhood and wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Physical,
    Social,
    Emotional,
    LanguageCognitive,
    Communication,
    OneOrMore,
    TwoOrMore,
}

impl Scale {
    /// The five developmental scales that form the embedding vector.
    pub const DEVELOPMENTAL: [Scale; 5] = [
        Scale::Physical,
        Scale::Social,
        Scale::Emotional,
        Scale::LanguageCognitive,
        Scale::Communication,
    ];

    pub const ALL: [Scale; 7] = [
        Scale::Physical,
        Scale::Social,
        Scale::Emotional,
        Scale::LanguageCognitive,
        Scale::Communication,
        Scale::OneOrMore,
        Scale::TwoOrMore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Physical => "physical",
            Scale::Social => "social",
            Scale::Emotional => "emotional",
            Scale::LanguageCognitive => "language_cognitive",
            Scale::Communication => "communication",
            Scale::OneOrMore => "one_or_more",
            Scale::TwoOrMore => "two_or_more",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scale::ALL
            .iter()
            .copied()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| format!("unknown EDI scale `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdiRecord {
    pub neighborhood: Neighborhood,
    pub wave: Wave,
    pub n_children: u32,
    pub physical: f64,
    pub social: f64,
    pub emotional: f64,
    pub language_cognitive: f64,
    pub communication: f64,
    pub one_or_more: f64,
    pub two_or_more: f64,
}

impl EdiRecord {
    pub fn value(&self, scale: Scale) -> f64 {
        match scale {
            Scale::Physical => self.physical,
            Scale::Social => self.social,
            Scale::Emotional => self.emotional,
            Scale::LanguageCognitive => self.language_cognitive,
            Scale::Communication => self.communication,
            Scale::OneOrMore => self.one_or_more,
            Scale::TwoOrMore => self.two_or_more,
        }
    }

    /// The point in five-dimensional scale space.
    pub fn developmental_vector(&self) -> [f64; 5] {
        [
            self.physical,
            self.social,
            self.emotional,
            self.language_cognitive,
            self.communication,
        ]
    }

    /// Checks percentage ranges and the one-or-more / two-or-more ordering.
    /// Returns the first offending field.
    pub fn check(&self) -> Result<(), &'static str> {
        for scale in Scale::ALL {
            let v = self.value(scale);
            if !v.is_finite() || !(0.0..=100.0).contains(&v) {
                return Err(scale.as_str());
            }
        }
        if self.two_or_more > self.one_or_more {
            return Err("two_or_more");
        }
        Ok(())
    }
}

/// EDI, census and neighborhood registry bundled with cross-reference checks.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub neighborhoods: Vec<Neighborhood>,
    pub edi: Vec<EdiRecord>,
    pub census: Vec<CensusProfile>,
    pub catalog: Vec<CensusVariable>,
}

impl Dataset {
    /// Builds a dataset whose neighborhood registry is derived from the EDI
    /// records, sorted by id.
    pub fn from_edi(edi: Vec<EdiRecord>) -> Result<Self, DomainError> {
        let mut seen = BTreeMap::new();
        for r in &edi {
            seen.entry(r.neighborhood.id.clone())
                .or_insert_with(|| r.neighborhood.clone());
        }
        let ds = Dataset {
            neighborhoods: seen.into_values().collect(),
            edi,
            census: Vec::new(),
            catalog: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_census(
        mut self,
        catalog: Vec<CensusVariable>,
        census: Vec<CensusProfile>,
    ) -> Result<Self, DomainError> {
        self.catalog = catalog;
        self.census = census;
        self.validate()?;
        Ok(self)
    }

    /// Re-runnable invariant check: known neighborhoods, unique
    /// (neighborhood, wave) keys, catalogued census variables.
    pub fn validate(&self) -> Result<(), DomainError> {
        let mut ids = BTreeSet::new();
        for n in &self.neighborhoods {
            if n.id.0.is_empty() || n.name.is_empty() {
                return Err(DomainError::EmptyField {
                    row: 0,
                    field: "neighborhood".into(),
                });
            }
            if !ids.insert(&n.id) {
                return Err(DomainError::DuplicateNeighborhood(n.id.0.clone()));
            }
        }
        let mut keys = BTreeSet::new();
        for r in &self.edi {
            if !ids.contains(&r.neighborhood.id) {
                return Err(DomainError::UnknownNeighborhood(r.neighborhood.id.0.clone()));
            }
            if !keys.insert((&r.neighborhood.id, r.wave)) {
                return Err(DomainError::DuplicateKey {
                    neighborhood: r.neighborhood.id.0.clone(),
                    wave: r.wave.index(),
                });
            }
        }
        let vars: BTreeSet<&str> = self.catalog.iter().map(|v| v.var_id.as_str()).collect();
        for p in &self.census {
            if !ids.contains(&p.neighborhood) {
                return Err(DomainError::UnknownNeighborhood(p.neighborhood.0.clone()));
            }
            if let Some(v) = p.values.keys().find(|k| !vars.contains(k.as_str())) {
                return Err(DomainError::UnknownVariable(v.clone()));
            }
        }
        Ok(())
    }

    pub fn record(&self, id: &NeighborhoodId, wave: Wave) -> Option<&EdiRecord> {
        self.edi
            .iter()
            .find(|r| &r.neighborhood.id == id && r.wave == wave)
    }

    pub fn waves(&self) -> Vec<Wave> {
        let set: BTreeSet<Wave> = self.edi.iter().map(|r| r.wave).collect();
        set.into_iter().collect()
    }

    pub fn latest_wave(&self) -> Option<Wave> {
        self.edi.iter().map(|r| r.wave).max()
    }

    pub fn profile(&self, id: &NeighborhoodId) -> Option<&CensusProfile> {
        self.census.iter().find(|p| &p.neighborhood == id)
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, DomainError> {
    std::fs::read(path).map_err(|source| DomainError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Shortest round-trip decimal rendering used by every CSV writer.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
