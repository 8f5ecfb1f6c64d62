//! Sequential recommendation from item popularity dynamics.
//!
//! Items are represented by the recent history of their popularity
//! percentiles rather than by learned per-item embeddings, so a model
//! trained on one interaction log can score items from a completely
//! disjoint catalog. The crate covers the full pipeline: interaction-log
//! ingestion and leave-one-out splitting ([`ingest`]), popularity
//! counting and percentile dynamics ([`popdyn`]), the fixed percentile /
//! time-interval / positional encoders ([`encoders`]), a small
//! reverse-mode tensor core ([`numcore`]), the causal transformer
//! ([`model`]), training ([`train`]), and evaluation harnesses including
//! zero-shot transfer ([`eval`]).

pub mod encoders;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod numcore;
pub mod popdyn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
