// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk corpus layout.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/annotations.csv
//! <dir>/frames/<trial_id>.jsonl
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_timesteps, write_frames_jsonl, ArbitrationPolicy, AssemblerConfig, FrameFormat};
use crate::simgen::SimCorpus;
use crate::types::{AuCatalog, ErrorType, GroundTruth, TrialRecord};

pub const MANIFEST_FORMAT: &str = "ausentinel-corpus";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrial {
    pub trial_id: String,
    pub participant_id: String,
    pub error_type: ErrorType,
    /// Path relative to the corpus directory.
    pub frames: String,
    pub timesteps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub catalog: Vec<String>,
    pub catalog_hash: String,
    pub fps: f64,
    pub seed: Option<u64>,
    pub trials: Vec<ManifestTrial>,
}

impl Manifest {
    fn check(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT || self.version != MANIFEST_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported manifest {} v{}",
                self.format, self.version
            )));
        }
        AuCatalog::check_ordering(&self.catalog)?;
        if self.catalog_hash != AuCatalog::hash() {
            return Err(Error::CatalogMismatch(format!("manifest hash {}", self.catalog_hash)));
        }
        Ok(())
    }
}

/// One row of `annotations.csv`; the three indices are empty for error-free
/// trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub trial_id: String,
    pub participant_id: String,
    pub error_type: ErrorType,
    pub reaction_start: Option<usize>,
    pub reaction_end: Option<usize>,
    pub perceived_error_start: Option<usize>,
}

impl AnnotationRow {
    pub fn from_record(r: &TrialRecord) -> Self {
        AnnotationRow {
            trial_id: r.trial_id.clone(),
            participant_id: r.participant_id.clone(),
            error_type: r.error_type,
            reaction_start: r.annotations.map(|g| g.reaction_start),
            reaction_end: r.annotations.map(|g| g.reaction_end),
            perceived_error_start: r.annotations.map(|g| g.perceived_error_start),
        }
    }

    pub fn ground_truth(&self) -> Result<Option<GroundTruth>> {
        match (self.reaction_start, self.reaction_end, self.perceived_error_start) {
            (Some(s), Some(e), Some(p)) => GroundTruth::new(s, e, p).map(Some),
            (None, None, None) => Ok(None),
            _ => Err(Error::InvalidInput(format!(
                "trial {}: annotation indices must be all present or all empty",
                self.trial_id
            ))),
        }
    }
}

pub fn write_annotations<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(AnnotationRow::from_record(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_annotations<R: Read>(r: R) -> Result<Vec<AnnotationRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes a generated corpus as manifest, annotations and per-trial frame files.
pub fn write_corpus(dir: impl AsRef<Path>, corpus: &SimCorpus) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("frames"))?;
    let mut trials = Vec::with_capacity(corpus.trials.len());
    for t in &corpus.trials {
        let rel = format!("frames/{}.jsonl", t.record.trial_id);
        let mut w = BufWriter::new(File::create(dir.join(&rel))?);
        write_frames_jsonl(&mut w, &t.frames)?;
        w.flush()?;
        trials.push(ManifestTrial {
            trial_id: t.record.trial_id.clone(),
            participant_id: t.record.participant_id.clone(),
            error_type: t.record.error_type,
            frames: rel,
            timesteps: t.record.len(),
        });
    }
    let records = corpus.records();
    write_annotations(BufWriter::new(File::create(dir.join("annotations.csv"))?), &records)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        catalog: AuCatalog::ids().iter().map(|s| s.to_string()).collect(),
        catalog_hash: AuCatalog::hash(),
        fps: corpus.spec.fps,
        seed: Some(corpus.spec.seed),
        trials,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let f = File::open(dir.as_ref().join("manifest.json"))?;
    let m: Manifest = serde_json::from_reader(BufReader::new(f))?;
    m.check()?;
    Ok(m)
}

/// Reads a corpus directory back into trial records. `policy` overrides the
/// arbitration derived from the manifest frame rate.
pub fn load_corpus(
    dir: impl AsRef<Path>,
    policy: Option<ArbitrationPolicy>,
    budget: usize,
) -> Result<Vec<TrialRecord>> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let policy = match policy {
        Some(p) => p,
        None => ArbitrationPolicy::for_fps(manifest.fps)?,
    };
    let rows = read_annotations(File::open(dir.join("annotations.csv"))?)?;
    let mut out = Vec::with_capacity(manifest.trials.len());
    for mt in &manifest.trials {
        let row = rows
            .iter()
            .find(|r| r.trial_id == mt.trial_id)
            .ok_or_else(|| Error::InvalidInput(format!("trial {} has no annotation row", mt.trial_id)))?;
        let file = File::open(dir.join(&mt.frames))?;
        let (timesteps, stats) = read_timesteps(
            BufReader::new(file),
            FrameFormat::Jsonl,
            AssemblerConfig::new(policy),
            budget,
        )?;
        if stats.skipped > 0 || stats.clamped > 0 {
            log::warn!(
                "{}: {} malformed records skipped, {} values clamped",
                mt.frames,
                stats.skipped,
                stats.clamped
            );
        }
        let record = TrialRecord {
            trial_id: mt.trial_id.clone(),
            participant_id: row.participant_id.clone(),
            error_type: row.error_type,
            timesteps,
            annotations: row.ground_truth()?,
        };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotations_round_trip_with_empty_fields() {
        let text = "trial_id,participant_id,error_type,reaction_start,reaction_end,perceived_error_start\n\
                    a,P1,physical,3,9,2\nb,P1,none,,,\n";
        let rows = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(rows[0].ground_truth().unwrap(), Some(GroundTruth::new(3, 9, 2).unwrap()));
        assert_eq!(rows[1].ground_truth().unwrap(), None);
        let mut out = Vec::new();
        {
            let mut wtr = csv::Writer::from_writer(&mut out);
            for r in &rows {
                wtr.serialize(r).unwrap();
            }
        }
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn partial_annotation_is_rejected() {
        let text = "trial_id,participant_id,error_type,reaction_start,reaction_end,perceived_error_start\n\
                    a,P1,physical,3,,2\n";
        let rows = read_annotations(text.as_bytes()).unwrap();
        assert!(rows[0].ground_truth().is_err());
    }
}
