//! Back-end for dialect identification from utterance i-vectors.
//!
//! Recursive whitening, per-dialect cosine models with TRN/DEV interpolation,
//! a Siamese embedding, LDA, a linear SVM, text featurizers, calibration and
//! fusion, plus a synthetic data generator for testing.

pub mod calibration;
pub mod config;
pub mod dialect_model;
pub mod error;
pub mod io;
pub mod lda;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod siamese;
pub mod svm;
pub mod synth;
pub mod text_features;
pub mod types;
pub mod whitening;

pub use error::{Error, ErrorKind, Result};
pub use types::{
    validate_dataset, DialectLabel, Domain, Entry, IVector, IVectorSet, LabelSet, ScoreRow, ScoreTable, Utterance,
    ValidationReport, Violation, DEFAULT_LABELS,
};
