// SPDX-License-Identifier: MIT OR Apache-2.0

//! Domain types shared by every stage of the pipeline: the AU catalog, AU
//! intensity vectors, camera frames, 1/3 s timesteps, annotated trials and
//! detector events.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of action units fed to the classifier.
pub const AU_COUNT: usize = 17;

/// Length of one timestep in seconds.
pub const TIMESTEP_SECONDS: f64 = 1.0 / 3.0;

/// Number of timesteps per second.
pub const TIMESTEPS_PER_SECOND: f64 = 3.0;

/// Upper bound of the AU intensity scale.
pub const MAX_INTENSITY: f64 = 5.0;

/// Timestamps within this distance below a timestep boundary are assigned to
/// the later timestep, absorbing the representation error of 1/3.
const CLOCK_EPSILON: f64 = 1e-6;

const AU_IDS: [&str; AU_COUNT] = [
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12", "AU14", "AU15", "AU17",
    "AU20", "AU23", "AU25", "AU26", "AU45",
];

const AU_NAMES: [&str; AU_COUNT] = [
    "inner brow raiser",
    "outer brow raiser",
    "brow lowerer",
    "upper lid raiser",
    "cheek raiser",
    "lid tightener",
    "nose wrinkler",
    "upper lip raiser",
    "lip corner puller",
    "dimpler",
    "lip corner depressor",
    "chin raiser",
    "lip stretcher",
    "lip tightener",
    "lips part",
    "jaw drop",
    "blink",
];

/// The fixed AU ordering. Index `i` of every [`AuVector`] refers to
/// `AuCatalog::ids()[i]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuCatalog;

impl AuCatalog {
    pub fn ids() -> &'static [&'static str; AU_COUNT] {
        &AU_IDS
    }

    pub fn names() -> &'static [&'static str; AU_COUNT] {
        &AU_NAMES
    }

    pub fn index_of(id: &str) -> Option<usize> {
        AU_IDS.iter().position(|a| a.eq_ignore_ascii_case(id))
    }

    /// Lower-case CSV column stems, e.g. `au01`.
    pub fn column_stems() -> Vec<String> {
        AU_IDS.iter().map(|id| id.to_ascii_lowercase()).collect()
    }

    /// Hex SHA-256 of the comma-joined ids. Embedded in model files.
    pub fn hash() -> String {
        let mut hasher = Sha256::new();
        hasher.update(AU_IDS.join(",").as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Checks that `ids` lists the catalog in order.
    pub fn check_ordering<S: AsRef<str>>(ids: &[S]) -> Result<()> {
        if ids.len() != AU_COUNT {
            return Err(Error::CatalogMismatch(format!(
                "expected {AU_COUNT} AU ids, found {}",
                ids.len()
            )));
        }
        for (i, (got, want)) in ids.iter().zip(AU_IDS.iter()).enumerate() {
            if !got.as_ref().eq_ignore_ascii_case(want) {
                return Err(Error::CatalogMismatch(format!(
                    "position {i}: expected {want}, found {}",
                    got.as_ref()
                )));
            }
        }
        Ok(())
    }
}

/// Seventeen AU intensities on the [0, 5] scale. The all-zero vector stands
/// for "no reliable face detection".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AuVector([f64; AU_COUNT]);

impl AuVector {
    pub const ZERO: AuVector = AuVector([0.0; AU_COUNT]);

    /// Strict constructor: every entry must be finite and inside [0, 5].
    pub fn new(values: [f64; AU_COUNT]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > MAX_INTENSITY {
                return Err(Error::InvalidInput(format!(
                    "{} intensity {v} outside [0, {MAX_INTENSITY}]",
                    AU_IDS[i]
                )));
            }
        }
        Ok(AuVector(values))
    }

    /// Clamps finite out-of-range entries into [0, 5] and reports how many
    /// were clamped. Non-finite entries are rejected.
    pub fn clamped(mut values: [f64; AU_COUNT]) -> Result<(Self, usize)> {
        let mut clamped = 0;
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{} intensity is not finite",
                    AU_IDS[i]
                )));
            }
            let c = v.clamp(0.0, MAX_INTENSITY);
            if c != *v {
                clamped += 1;
                *v = c;
            }
        }
        Ok((AuVector(values), clamped))
    }

    pub fn as_array(&self) -> &[f64; AU_COUNT] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

impl Default for AuVector {
    fn default() -> Self {
        AuVector::ZERO
    }
}

impl TryFrom<Vec<f64>> for AuVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        let arr: [f64; AU_COUNT] = values.try_into().map_err(|v: Vec<f64>| {
            Error::InvalidInput(format!("expected {AU_COUNT} intensities, found {}", v.len()))
        })?;
        AuVector::new(arr)
    }
}

impl From<AuVector> for Vec<f64> {
    fn from(v: AuVector) -> Self {
        v.0.to_vec()
    }
}

/// One camera frame as reported by an upstream AU extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuFrame {
    pub source_id: String,
    /// Seconds since trial start.
    pub t: f64,
    pub au: AuVector,
    pub occurrences: [bool; AU_COUNT],
    pub confidence: f64,
    /// False when the frame was zeroed for low face-detection confidence.
    pub valid_face: bool,
}

impl AuFrame {
    /// A zero frame standing in for a missing or unreliable observation.
    pub fn zeroed(source_id: impl Into<String>, t: f64, confidence: f64) -> Self {
        AuFrame {
            source_id: source_id.into(),
            t,
            au: AuVector::ZERO,
            occurrences: [false; AU_COUNT],
            confidence,
            valid_face: false,
        }
    }
}

/// One 1/3 s aggregated sample, the classifier's input unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestep {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub au: AuVector,
    pub valid_face: bool,
}

impl Timestep {
    pub fn new(index: usize, au: AuVector, valid_face: bool) -> Self {
        Timestep {
            index,
            t_start: index_to_seconds(index),
            t_end: index_to_seconds(index + 1),
            au,
            valid_face,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    Physical,
    Concept,
    Generalization,
    None,
}

impl ErrorType {
    pub const ALL: [ErrorType; 4] = [
        ErrorType::Physical,
        ErrorType::Concept,
        ErrorType::Generalization,
        ErrorType::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorType::Physical => "physical",
            ErrorType::Concept => "concept",
            ErrorType::Generalization => "generalization",
            ErrorType::None => "none",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "physical" => Ok(ErrorType::Physical),
            "concept" => Ok(ErrorType::Concept),
            "generalization" => Ok(ErrorType::Generalization),
            "none" | "" => Ok(ErrorType::None),
            other => Err(Error::InvalidInput(format!("unknown error type {other:?}"))),
        }
    }
}

/// Coder annotations for one trial, in timestep indices.
///
/// Timesteps in `[reaction_start, reaction_end]` are labeled error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub reaction_start: usize,
    pub reaction_end: usize,
    pub perceived_error_start: usize,
}

impl GroundTruth {
    pub fn new(reaction_start: usize, reaction_end: usize, perceived_error_start: usize) -> Result<Self> {
        if reaction_start > reaction_end {
            return Err(Error::InvalidInput(format!(
                "reaction_start {reaction_start} after reaction_end {reaction_end}"
            )));
        }
        Ok(GroundTruth {
            reaction_start,
            reaction_end,
            perceived_error_start,
        })
    }

    pub fn is_error(&self, index: usize) -> bool {
        (self.reaction_start..=self.reaction_end).contains(&index)
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.reaction_start > self.reaction_end {
            return Err(Error::InvalidInput(format!(
                "reaction_start {} after reaction_end {}",
                self.reaction_start, self.reaction_end
            )));
        }
        let max = self
            .reaction_end
            .max(self.perceived_error_start)
            .max(self.reaction_start);
        if max >= len {
            return Err(Error::InvalidInput(format!(
                "annotation index {max} outside trial of {len} timesteps"
            )));
        }
        Ok(())
    }
}

/// An ordered timestep sequence for one robot-execution trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub participant_id: String,
    pub error_type: ErrorType,
    pub timesteps: Vec<Timestep>,
    pub annotations: Option<GroundTruth>,
}

impl TrialRecord {
    pub fn validate(&self) -> Result<()> {
        for (i, ts) in self.timesteps.iter().enumerate() {
            if ts.index != i {
                return Err(Error::StreamIntegrity {
                    expected: i,
                    got: ts.index,
                });
            }
        }
        if let Some(gt) = &self.annotations {
            gt.validate(self.timesteps.len())
                .map_err(|e| Error::InvalidInput(format!("trial {}: {e}", self.trial_id)))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    /// Per-timestep error labels.
    pub fn labels(&self) -> Vec<bool> {
        (0..self.timesteps.len())
            .map(|i| self.annotations.is_some_and(|gt| gt.is_error(i)))
            .collect()
    }
}

/// A detection emitted by the sliding-window filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub detected_at: usize,
    pub estimated_start: usize,
    /// Window sum at the trigger.
    pub score: f64,
    /// True when the event was absorbed into an earlier detection.
    pub merged: bool,
}

/// Index of the timestep containing `t`, both in seconds.
pub fn timestep_of(t: f64, trial_start: f64) -> Result<usize> {
    let elapsed = t - trial_start;
    if !elapsed.is_finite() || elapsed < 0.0 {
        return Err(Error::InvalidInput(format!(
            "timestamp {t} precedes trial start {trial_start}"
        )));
    }
    Ok((elapsed * TIMESTEPS_PER_SECOND + CLOCK_EPSILON).floor() as usize)
}

/// Start of timestep `index` in seconds since trial start.
pub fn index_to_seconds(index: usize) -> f64 {
    index as f64 / TIMESTEPS_PER_SECOND
}

/// Signed difference `a - b` between two timestep indices, in seconds.
pub fn steps_to_seconds(a: usize, b: usize) -> f64 {
    (a as f64 - b as f64) / TIMESTEPS_PER_SECOND
}
