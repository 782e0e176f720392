//! Event-based non-intrusive load monitoring with combined power and water
//! signals: step-change detection, KNN event classification, LSTM
//! disaggregation pipelines and profile reconstruction.

pub mod cli;
pub mod config;
pub mod data;
pub mod detect;
pub mod error;
pub mod knn;
pub mod lstm;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod types;

pub use error::{NilmError, Result};
