// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sliding-window filter over weighted classifications.
//!
//! The window holds the last `window_len` weights. Once it is full and its
//! sum reaches `threshold`, a candidate event is raised at the newest
//! timestep, with the estimated start backtracked to the earliest nonzero
//! weight in the window. A candidate whose estimated start or detection lies
//! within `merge_gap` of the previous detection is folded into that earlier
//! event, and the stored detection moves forward to the candidate's.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{classify, ModelParams, WeightedClassification};
use crate::types::{ErrorEvent, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: usize,
    pub threshold: f64,
    pub merge_gap: usize,
    /// Timesteps ignored at stream start before the window begins to fill.
    pub warmup: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_len: 11,
            threshold: 6.0,
            merge_gap: 1,
            warmup: 0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::InvalidInput("window_len must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= self.window_len as f64) {
            return Err(Error::InvalidInput(format!(
                "threshold {} outside (0, {}]",
                self.threshold, self.window_len
            )));
        }
        Ok(())
    }
}

/// Streaming detector state for a single stream.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: WindowConfig,
    window: VecDeque<(usize, f64)>,
    last_timestep: Option<usize>,
    last_detected_at: Option<usize>,
}

impl Detector {
    pub fn new(cfg: WindowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Detector {
            cfg,
            window: VecDeque::with_capacity(cfg.window_len),
            last_timestep: None,
            last_detected_at: None,
        })
    }

    pub fn config(&self) -> &WindowConfig {
        &self.cfg
    }

    pub fn buffered(&self) -> usize {
        self.window.len()
    }

    pub fn last_detected_at(&self) -> Option<usize> {
        self.last_detected_at
    }

    /// Feeds the next weighted classification. Timesteps must arrive
    /// contiguously.
    pub fn step(&mut self, wc: WeightedClassification) -> Result<Option<ErrorEvent>> {
        if let Some(prev) = self.last_timestep {
            if wc.timestep != prev + 1 {
                return Err(Error::StreamIntegrity {
                    expected: prev + 1,
                    got: wc.timestep,
                });
            }
        }
        self.last_timestep = Some(wc.timestep);
        if wc.timestep < self.cfg.warmup {
            return Ok(None);
        }
        if self.window.len() == self.cfg.window_len {
            self.window.pop_front();
        }
        self.window.push_back((wc.timestep, wc.weight));
        if self.window.len() < self.cfg.window_len {
            return Ok(None);
        }
        // Summed oldest to newest each step so the result does not drift.
        let score: f64 = self.window.iter().map(|(_, w)| w).sum();
        if score < self.cfg.threshold {
            return Ok(None);
        }
        let estimated_start = self
            .window
            .iter()
            .find(|(_, w)| *w > 0.0)
            .map(|(t, _)| *t)
            .expect("window sum above a positive threshold has a nonzero weight");
        let candidate = ErrorEvent {
            detected_at: wc.timestep,
            estimated_start,
            score,
            merged: false,
        };
        Ok(Some(self.merge(candidate)))
    }

    /// Applies the merge rule to a candidate and records its detection.
    pub fn merge(&mut self, mut candidate: ErrorEvent) -> ErrorEvent {
        candidate.merged = self.last_detected_at.is_some_and(|last| {
            candidate.estimated_start.abs_diff(last) <= self.cfg.merge_gap
                || candidate.detected_at.abs_diff(last) <= self.cfg.merge_gap
        });
        self.last_detected_at = Some(
            self.last_detected_at
                .map_or(candidate.detected_at, |l| l.max(candidate.detected_at)),
        );
        candidate
    }
}

/// Runs the detector over a precomputed weight sequence (timesteps 0..n).
pub fn detect_weights(weights: &[f64], cfg: &WindowConfig) -> Result<Vec<ErrorEvent>> {
    let mut det = Detector::new(*cfg)?;
    let mut events = Vec::new();
    for (i, &w) in weights.iter().enumerate() {
        let wc = WeightedClassification {
            timestep: i,
            p_error: w,
            weight: w,
        };
        events.extend(det.step(wc)?);
    }
    Ok(events)
}

/// Classifies every timestep of a trial.
pub fn classify_trial(trial: &TrialRecord, params: &ModelParams) -> Result<Vec<WeightedClassification>> {
    trial.timesteps.iter().map(|ts| classify(params, ts)).collect()
}

/// Classifies and filters a whole trial; merged events are included with
/// their flag set.
pub fn run_trial(trial: &TrialRecord, params: &ModelParams, cfg: &WindowConfig) -> Result<Vec<ErrorEvent>> {
    let mut det = Detector::new(*cfg)?;
    let mut events = Vec::new();
    for ts in &trial.timesteps {
        events.extend(det.step(classify(params, ts)?)?);
    }
    Ok(events)
}
