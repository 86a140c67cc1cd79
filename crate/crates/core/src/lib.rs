//! Correlation-aware compression of federated-learning model updates.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: SVD, symmetric eigendecomposition and minimum-norm least
//!   squares with fixed ordering and sign conventions;
//! * [`updates`]: reshaping flat parameter vectors into `m × n` update
//!   matrices;
//! * [`metrics`]: cosine similarity, energy ratios and the correlation
//!   measurement / basis selection operators;
//! * [`compressors`]: the lossy codecs and the wire format for compressed
//!   payloads;
//! * [`adaptive`]: the per-layer AdaSVDFed state machine and the PCAFed
//!   sharing-case controller;
//! * [`fedsim`]: models, partitioning, local training, aggregation,
//!   communication accounting and correlation probes;
//! * [`ingest`]: LIBSVM / IDX parsers and synthetic datasets;
//! * [`config`] and [`cost`]: run configuration and closed-form helpers.

pub mod error;
pub mod numerics;
pub mod updates;
pub mod metrics;
pub mod compressors;
pub mod adaptive;
pub mod ingest;
pub mod fedsim;
pub mod config;
pub mod cost;

pub use error::{Error, Result};
