//! Neighborhood vulnerability analytics: embedding, clustering, clustering
//! tendency, census screening and program-retention statistics.

pub mod domain;
pub mod embedding;
pub mod error;
pub mod cli;
pub mod clustering;
pub mod geo;
pub mod pipeline;
pub mod retention;
pub mod seed;
pub mod service;
pub mod synth;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
