//! Core library for the `adappeal` toolkit: corpus preparation and
//! deduplication, a 21-label advertising-appeal taxonomy, annotation
//! adjudication and agreement statistics, span- and document-level appeal
//! detection over a small trainable encoder, aspect-aware CTR regression,
//! and per-industry correlation analytics.

pub mod analytics;
pub mod annotation;
pub mod aspects;
pub mod corpus;
pub mod crf;
pub mod ctr;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod model_io;
pub mod nn;
pub mod synth;
pub mod taxonomy;
pub mod text;
pub mod train;

pub use error::{Error, Result};
