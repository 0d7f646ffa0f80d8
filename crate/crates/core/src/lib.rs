// SPDX-License-Identifier: MIT OR Apache-2.0

//! Streaming detection and localization of robot errors from a human
//! observer's facial action unit (AU) intensities.
//!
//! Frames from up to two cameras are arbitrated and aggregated into 1/3 s
//! timesteps ([`ingest`]). A small network scores each timestep
//! ([`model`]), and a sliding window turns the weighted scores into
//! localized error events ([`detector`]). [`eval`] scores detections
//! against ground truth and [`simgen`] produces synthetic corpora with exact
//! annotations.

pub mod cli;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod live;
pub mod model;
pub mod simgen;
pub mod stats;
pub mod types;

pub use detector::{Detector, WindowConfig};
pub use error::{Error, Result};
pub use ingest::{Aggregator, ArbitrationPolicy, AssemblerConfig, TimestepAssembler};
pub use model::{ModelParams, TrainConfig};
pub use simgen::{ScenarioSpec, SimCorpus};
pub use types::{AuCatalog, AuFrame, AuVector, ErrorEvent, ErrorType, GroundTruth, Timestep, TrialRecord};
