//! Mission-specific knowledge-graph reasoning for weakly supervised video
//! anomaly detection and recognition.
//!
//! The pipeline has four stages:
//!
//! 1. [`kg`] — generate one reasoning DAG per anomaly class from an LLM plus
//!    ConceptNet, with error detection, bounded repair, and pruning.
//! 2. [`embed`] — joint-space embeddings for node labels (text) and video
//!    frames (image), backed by a binary cache, an HTTP service, or a
//!    deterministic synthetic generator.
//! 3. [`hgnn`] / [`temporal`] — hierarchical message passing over each
//!    mission graph per frame, fused across missions and scored by a single
//!    transformer encoder layer plus a linear softmax head.
//! 4. [`trainer`] / [`metrics`] — weakly supervised frame-level training with
//!    decaying-threshold localization, and frame-level AUC/AP evaluation.
//!
//! Batch-level inner loops run on rayon when the `parallel` feature is
//! enabled (default) and fall back to sequential iteration otherwise; both
//! modes produce identical results because reductions are order-pinned.

pub mod checkpoint;
pub mod config;
pub mod embed;
pub mod hgnn;
pub mod kg;
pub mod linalg;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod par;
pub mod stream;
pub mod temporal;
pub mod trainer;

pub use config::RunConfig;
pub use linalg::{Mat, Scalar};
