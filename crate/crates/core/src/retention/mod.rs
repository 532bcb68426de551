//! Program-retention analysis of registration records: retrieval filters,
//! program grouping, per-client journeys and their distributions.

mod distributions;
mod filter;
mod grouping;
mod journeys;

pub use distributions::{
    distributions, enrollment_rates, populations_from_edi, write_enrollment_csv, write_facet_csv, Cell,
    EnrollmentRate, Facet, FacetRow, FacetTable,
};
pub use filter::{apply_filters, write_rejections_csv, FilterOutcome, FilterPolicy, RejectReason, Rejection};
pub use grouping::{GroupRule, GroupingRules, DEFAULT_GROUP, DEFAULT_RULES_CSV};
pub use journeys::{age_on, build_journeys, write_journeys_csv, ClientJourney, JourneyStep};

use thiserror::Error;

use crate::domain::NeighborhoodId;

#[derive(Debug, Error)]
pub enum RetentionError {
    #[error("no journeys to summarise")]
    EmptyInput,
    #[error("no child population for neighborhood `{0}`")]
    MissingPopulation(NeighborhoodId),
    #[error("invalid grouping rules: {0}")]
    InvalidRules(String),
    #[error("unknown facet `{0}`")]
    UnknownFacet(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
