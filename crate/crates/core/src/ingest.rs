// SPDX-License-Identifier: MIT OR Apache-2.0

//! Frame ingestion: parsing AU frame streams, choosing between two cameras by
//! face-detection confidence, and folding frames into 1/3 s timesteps.
//!
//! Frames are grouped onto a frame-tick grid (`round(t * fps)`), arbitrated
//! tick by tick, and averaged per timestep. A timestep is released once every
//! known source has moved past it, or once any source is more than
//! `max_lag_timesteps` ahead, so memory stays bounded for live streams.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AuCatalog, AuFrame, AuVector, Timestep, AU_COUNT};

/// Frame-to-timestep reducer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    Last,
    Max,
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregator::Mean),
            "last" => Ok(Aggregator::Last),
            "max" => Ok(Aggregator::Max),
            other => Err(Error::InvalidInput(format!("unknown aggregator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationPolicy {
    /// Frames at or below this face-detection confidence are zeroed.
    pub min_confidence: f64,
    pub frames_per_timestep: usize,
    pub aggregator: Aggregator,
}

impl Default for ArbitrationPolicy {
    fn default() -> Self {
        ArbitrationPolicy {
            min_confidence: 0.5,
            frames_per_timestep: 10,
            aggregator: Aggregator::Mean,
        }
    }
}

impl ArbitrationPolicy {
    /// Policy for a camera running at `fps`; a timestep is a third of a second.
    pub fn for_fps(fps: f64) -> Result<Self> {
        if !fps.is_finite() || fps < 3.0 {
            return Err(Error::InvalidInput(format!("fps must be at least 3, got {fps}")));
        }
        Ok(ArbitrationPolicy {
            frames_per_timestep: (fps / 3.0).round() as usize,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidInput(format!(
                "min_confidence {} outside [0, 1]",
                self.min_confidence
            )));
        }
        if self.frames_per_timestep == 0 {
            return Err(Error::InvalidInput("frames_per_timestep must be >= 1".into()));
        }
        Ok(())
    }

    pub fn fps(&self) -> f64 {
        self.frames_per_timestep as f64 * 3.0
    }
}

/// Picks the frame with strictly higher confidence; ties go to the
/// lexicographically first source id. If the winner's confidence does not
/// exceed `min_confidence`, a zeroed frame is returned instead. Returns
/// `None` when both frames are absent (a stream gap).
pub fn arbitrate(
    frame_a: Option<&AuFrame>,
    frame_b: Option<&AuFrame>,
    policy: &ArbitrationPolicy,
) -> Option<AuFrame> {
    let best = match (frame_a, frame_b) {
        (None, None) => return None,
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (Some(a), Some(b)) => {
            if a.confidence > b.confidence {
                a
            } else if b.confidence > a.confidence {
                b
            } else if b.source_id < a.source_id {
                b
            } else {
                a
            }
        }
    };
    if best.confidence <= policy.min_confidence {
        Some(AuFrame::zeroed(best.source_id.clone(), best.t, best.confidence))
    } else {
        Some(best.clone())
    }
}

/// Reduces the arbitrated frames of one timestep. Only frames with a valid
/// face contribute; with none, the timestep is the zero vector.
pub fn aggregate(frames: &[AuFrame], index: usize, policy: &ArbitrationPolicy) -> Result<Timestep> {
    if frames.len() > policy.frames_per_timestep {
        return Err(Error::InvalidInput(format!(
            "{} frames exceed {} frames per timestep",
            frames.len(),
            policy.frames_per_timestep
        )));
    }
    let valid: Vec<&AuFrame> = frames.iter().filter(|f| f.valid_face).collect();
    if valid.is_empty() {
        return Ok(Timestep::new(index, AuVector::ZERO, false));
    }
    let mut out = [0.0; AU_COUNT];
    match policy.aggregator {
        Aggregator::Mean => {
            for f in &valid {
                for (o, v) in out.iter_mut().zip(f.au.as_array()) {
                    *o += v;
                }
            }
            let n = valid.len() as f64;
            out.iter_mut().for_each(|o| *o /= n);
        }
        Aggregator::Last => out = *valid[valid.len() - 1].au.as_array(),
        Aggregator::Max => {
            for f in &valid {
                for (o, v) in out.iter_mut().zip(f.au.as_array()) {
                    *o = o.max(*v);
                }
            }
        }
    }
    let (au, _) = AuVector::clamped(out)?;
    Ok(Timestep::new(index, au, true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    Jsonl,
    Csv,
}

impl FromStr for FrameFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(FrameFormat::Jsonl),
            "csv" => Ok(FrameFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown frame format {other:?}"))),
        }
    }
}

/// Counters kept while reading and assembling a stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub frames: usize,
    pub skipped: usize,
    /// Intensities pulled back into [0, 5].
    pub clamped: usize,
    pub duplicates: usize,
    pub late: usize,
}

#[derive(Debug, Deserialize)]
struct RawLine {
    catalog: Option<Vec<String>>,
    source_id: Option<String>,
    t: Option<f64>,
    confidence: Option<f64>,
    au: Option<Vec<f64>>,
    occ: Option<Vec<bool>>,
}

#[derive(Serialize)]
struct FrameHeader<'a> {
    format: &'a str,
    version: u32,
    catalog: &'a [&'a str; AU_COUNT],
}

#[derive(Serialize)]
struct FrameLine<'a> {
    source_id: &'a str,
    t: f64,
    confidence: f64,
    au: &'a [f64; AU_COUNT],
    occ: &'a [bool; AU_COUNT],
}

enum Records<R: BufRead> {
    Jsonl(std::io::Lines<R>),
    Csv(csv::StringRecordsIntoIter<R>),
}

/// Streaming reader yielding frames from JSONL or CSV input.
///
/// Malformed records are skipped and counted; once more than `budget`
/// records have been skipped the reader returns [`Error::BudgetExceeded`].
/// A header whose AU ordering differs from the catalog is always fatal.
pub struct FrameReader<R: BufRead> {
    records: Records<R>,
    line: usize,
    budget: usize,
    stats: IngestStats,
    last_t: BTreeMap<String, f64>,
    failed: bool,
}

pub const DEFAULT_ERROR_BUDGET: usize = 16;

impl<R: BufRead> FrameReader<R> {
    pub fn jsonl(reader: R) -> Self {
        Self::with_records(Records::Jsonl(reader.lines()))
    }

    /// CSV input must start with the canonical header row.
    pub fn csv(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let expected = csv_header();
        if header.len() != expected.len() {
            return Err(Error::CatalogMismatch(format!(
                "csv header has {} columns, expected {}",
                header.len(),
                expected.len()
            )));
        }
        for (got, want) in header.iter().zip(&expected) {
            if !got.eq_ignore_ascii_case(want) {
                return Err(Error::CatalogMismatch(format!(
                    "csv header column {got:?}, expected {want:?}"
                )));
            }
        }
        let mut reader = Self::with_records(Records::Csv(rdr.into_records()));
        reader.line = 1;
        Ok(reader)
    }

    pub fn new(reader: R, format: FrameFormat) -> Result<Self> {
        match format {
            FrameFormat::Jsonl => Ok(Self::jsonl(reader)),
            FrameFormat::Csv => Self::csv(reader),
        }
    }

    fn with_records(records: Records<R>) -> Self {
        FrameReader {
            records,
            line: 0,
            budget: DEFAULT_ERROR_BUDGET,
            stats: IngestStats::default(),
            last_t: BTreeMap::new(),
            failed: false,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    /// Line number of the most recently read record.
    pub fn line(&self) -> usize {
        self.line
    }

    fn skip(&mut self, message: String) -> Result<()> {
        self.stats.skipped += 1;
        log::warn!("line {}: skipping malformed frame: {message}", self.line);
        if self.stats.skipped > self.budget {
            self.failed = true;
            return Err(Error::BudgetExceeded {
                line: self.line,
                skipped: self.stats.skipped,
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn finish_frame(
        &mut self,
        source_id: String,
        t: f64,
        confidence: f64,
        au: Vec<f64>,
        occ: Vec<bool>,
    ) -> std::result::Result<AuFrame, String> {
        if source_id.is_empty() {
            return Err("empty source_id".into());
        }
        if !t.is_finite() || t < 0.0 {
            return Err(format!("bad timestamp {t}"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(format!("confidence {confidence} outside [0, 1]"));
        }
        let au: [f64; AU_COUNT] = au
            .try_into()
            .map_err(|v: Vec<f64>| format!("expected {AU_COUNT} intensities, found {}", v.len()))?;
        let occurrences: [bool; AU_COUNT] = occ
            .try_into()
            .map_err(|v: Vec<bool>| format!("expected {AU_COUNT} occurrences, found {}", v.len()))?;
        let (au, clamped) = AuVector::clamped(au).map_err(|e| e.to_string())?;
        if let Some(prev) = self.last_t.get(&source_id) {
            if t < *prev {
                return Err(format!("timestamp {t} precedes {prev} for source {source_id}"));
            }
        }
        self.last_t.insert(source_id.clone(), t);
        self.stats.clamped += clamped;
        self.stats.frames += 1;
        Ok(AuFrame {
            source_id,
            t,
            au,
            occurrences,
            confidence,
            valid_face: true,
        })
    }

    fn next_jsonl(&mut self, text: String) -> Option<Result<AuFrame>> {
        if text.trim().is_empty() {
            return None;
        }
        let raw: RawLine = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(e) => return self.skip(e.to_string()).err().map(Err),
        };
        if let Some(catalog) = raw.catalog {
            return AuCatalog::check_ordering(&catalog).err().map(|e| {
                self.failed = true;
                Err(e)
            });
        }
        let parsed = match (raw.source_id, raw.t, raw.confidence, raw.au) {
            (Some(s), Some(t), Some(c), Some(au)) => {
                let occ = raw.occ.unwrap_or_else(|| vec![false; AU_COUNT]);
                self.finish_frame(s, t, c, au, occ)
            }
            _ => Err("missing one of source_id, t, confidence, au".into()),
        };
        match parsed {
            Ok(f) => Some(Ok(f)),
            Err(msg) => self.skip(msg).err().map(Err),
        }
    }

    fn next_csv(&mut self, record: csv::StringRecord) -> Option<Result<AuFrame>> {
        let expected = 3 + 2 * AU_COUNT;
        let parsed = (|| {
            if record.len() != expected {
                return Err(format!("expected {expected} fields, found {}", record.len()));
            }
            let num = |i: usize| -> std::result::Result<f64, String> {
                record[i].parse::<f64>().map_err(|e| format!("field {i}: {e}"))
            };
            let t = num(1)?;
            let confidence = num(2)?;
            let au = (0..AU_COUNT).map(|i| num(3 + i)).collect::<std::result::Result<Vec<_>, _>>()?;
            let occ = (0..AU_COUNT)
                .map(|i| parse_bool(&record[3 + AU_COUNT + i]))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok((record[0].to_string(), t, confidence, au, occ))
        })();
        let parsed = parsed.and_then(|(s, t, c, au, occ)| self.finish_frame(s, t, c, au, occ));
        match parsed {
            Ok(f) => Some(Ok(f)),
            Err(msg) => self.skip(msg).err().map(Err),
        }
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "1" | "true" | "True" | "TRUE" => Ok(true),
        "0" | "false" | "False" | "FALSE" => Ok(false),
        other => Err(format!("bad occurrence flag {other:?}")),
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<AuFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let out = match &mut self.records {
                Records::Jsonl(lines) => {
                    let text = match lines.next()? {
                        Ok(t) => t,
                        Err(e) => {
                            self.failed = true;
                            return Some(Err(e.into()));
                        }
                    };
                    self.line += 1;
                    self.next_jsonl(text)
                }
                Records::Csv(records) => {
                    let rec = records.next()?;
                    self.line += 1;
                    match rec {
                        Ok(r) => self.next_csv(r),
                        Err(e) => self.skip(e.to_string()).err().map(Err),
                    }
                }
            };
            if out.is_some() {
                return out;
            }
        }
    }
}

/// Canonical CSV header columns.
pub fn csv_header() -> Vec<String> {
    let stems = AuCatalog::column_stems();
    let mut cols = vec!["source_id".to_string(), "t".to_string(), "confidence".to_string()];
    cols.extend(stems.iter().map(|s| format!("{s}_int")));
    cols.extend(stems.iter().map(|s| format!("{s}_occ")));
    cols
}

/// Writes the JSONL header record that declares the AU ordering.
pub fn write_jsonl_header<W: Write>(mut w: W) -> Result<()> {
    let header = FrameHeader {
        format: "ausentinel-frames",
        version: 1,
        catalog: AuCatalog::ids(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes one frame as a JSONL record.
pub fn write_jsonl_frame<W: Write>(mut w: W, frame: &AuFrame) -> Result<()> {
    let line = FrameLine {
        source_id: &frame.source_id,
        t: frame.t,
        confidence: frame.confidence,
        au: frame.au.as_array(),
        occ: &frame.occurrences,
    };
    serde_json::to_writer(&mut w, &line)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_frames_jsonl<W: Write>(mut w: W, frames: &[AuFrame]) -> Result<()> {
    write_jsonl_header(&mut w)?;
    for f in frames {
        write_jsonl_frame(&mut w, f)?;
    }
    Ok(())
}

pub fn write_frames_csv<W: Write>(w: W, frames: &[AuFrame]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(csv_header())?;
    for f in frames {
        let mut row = vec![f.source_id.clone(), f.t.to_string(), f.confidence.to_string()];
        row.extend(f.au.as_array().iter().map(|v| v.to_string()));
        row.extend(f.occurrences.iter().map(|o| if *o { "1" } else { "0" }.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblerConfig {
    pub policy: ArbitrationPolicy,
    /// Seconds subtracted from every frame timestamp.
    pub trial_start: f64,
    /// A timestep is forced out once any source is this many timesteps past it.
    pub max_lag_timesteps: usize,
    /// Sources that must have reported before a timestep can be released
    /// early; until then only the lag bound releases timesteps.
    pub expected_sources: usize,
}

impl Default for AssemblerConfig {
    fn default() -> Self {
        AssemblerConfig {
            policy: ArbitrationPolicy::default(),
            trial_start: 0.0,
            max_lag_timesteps: 2,
            expected_sources: 2,
        }
    }
}

impl AssemblerConfig {
    pub fn new(policy: ArbitrationPolicy) -> Self {
        AssemblerConfig {
            policy,
            ..Default::default()
        }
    }
}

/// Incremental frame-to-timestep assembler for one trial.
///
/// Accepts frames from at most two sources in any interleaving and emits
/// timesteps with contiguous indices starting at 0.
#[derive(Debug)]
pub struct TimestepAssembler {
    cfg: AssemblerConfig,
    sources: Vec<(String, usize)>,
    /// timestep index -> frame tick -> frames (one per source)
    pending: BTreeMap<usize, BTreeMap<usize, Vec<AuFrame>>>,
    next_index: usize,
    max_tick: Option<usize>,
    stats: IngestStats,
}

impl TimestepAssembler {
    pub fn new(cfg: AssemblerConfig) -> Result<Self> {
        cfg.policy.validate()?;
        if !(1..=2).contains(&cfg.expected_sources) {
            return Err(Error::InvalidInput("expected_sources must be 1 or 2".into()));
        }
        Ok(TimestepAssembler {
            cfg,
            sources: Vec::new(),
            pending: BTreeMap::new(),
            next_index: 0,
            max_tick: None,
            stats: IngestStats::default(),
        })
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    /// Number of timesteps buffered but not yet emitted.
    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn next_index(&self) -> usize {
        self.next_index
    }

    fn tick_of(&self, t: f64) -> Result<usize> {
        let elapsed = t - self.cfg.trial_start;
        if !elapsed.is_finite() || elapsed < -0.5 / self.cfg.policy.fps() {
            return Err(Error::InvalidInput(format!(
                "timestamp {t} precedes trial start {}",
                self.cfg.trial_start
            )));
        }
        Ok((elapsed * self.cfg.policy.fps()).round().max(0.0) as usize)
    }

    /// Adds one frame and returns every timestep that became complete.
    pub fn push(&mut self, frame: AuFrame) -> Result<Vec<Timestep>> {
        let tick = self.tick_of(frame.t)?;
        let fpt = self.cfg.policy.frames_per_timestep;
        let index = tick / fpt;
        match self.sources.iter_mut().find(|(s, _)| *s == frame.source_id) {
            Some((_, latest)) => *latest = (*latest).max(tick),
            None => {
                if self.sources.len() == 2 {
                    return Err(Error::InvalidInput(format!(
                        "third source {:?}; at most two sources are supported",
                        frame.source_id
                    )));
                }
                self.sources.push((frame.source_id.clone(), tick));
            }
        }
        self.max_tick = Some(self.max_tick.map_or(tick, |m| m.max(tick)));
        self.stats.frames += 1;

        if index < self.next_index {
            self.stats.late += 1;
            log::debug!("dropping late frame at t={} for timestep {index}", frame.t);
        } else {
            let slot = self.pending.entry(index).or_default().entry(tick).or_default();
            if slot.iter().any(|f| f.source_id == frame.source_id) {
                self.stats.duplicates += 1;
            } else {
                slot.push(frame);
            }
        }
        self.drain_ready()
    }

    fn drain_ready(&mut self) -> Result<Vec<Timestep>> {
        let fpt = self.cfg.policy.frames_per_timestep;
        let Some(max_tick) = self.max_tick else {
            return Ok(Vec::new());
        };
        let min_latest = self.sources.iter().map(|(_, t)| *t).min().unwrap_or(0);
        let mut out = Vec::new();
        loop {
            let end_tick = (self.next_index + 1) * fpt - 1;
            let all_past = self.sources.len() >= self.cfg.expected_sources && min_latest >= end_tick;
            let forced = max_tick >= (self.next_index + 1 + self.cfg.max_lag_timesteps) * fpt;
            if !(all_past || forced) {
                break;
            }
            out.push(self.emit_next()?);
        }
        Ok(out)
    }

    fn emit_next(&mut self) -> Result<Timestep> {
        let index = self.next_index;
        self.next_index += 1;
        let ticks = self.pending.remove(&index).unwrap_or_default();
        let mut frames = Vec::with_capacity(ticks.len());
        for (_, mut slot) in ticks {
            slot.sort_by(|a, b| a.source_id.cmp(&b.source_id));
            if let Some(f) = arbitrate(slot.first(), slot.get(1), &self.cfg.policy) {
                frames.push(f);
            }
        }
        aggregate(&frames, index, &self.cfg.policy)
    }

    /// Flushes every timestep up to the last frame seen.
    pub fn finish(mut self) -> Result<(Vec<Timestep>, IngestStats)> {
        let mut out = Vec::new();
        if let Some(max_tick) = self.max_tick {
            let last = max_tick / self.cfg.policy.frames_per_timestep;
            while self.next_index <= last {
                out.push(self.emit_next()?);
            }
        }
        Ok((out, self.stats))
    }
}

/// Batch assembly: orders frames by tick and source id first, so the result
/// does not depend on how the two sources were interleaved.
pub fn assemble_timesteps(frames: &[AuFrame], cfg: AssemblerConfig) -> Result<(Vec<Timestep>, IngestStats)> {
    let mut asm = TimestepAssembler::new(cfg)?;
    let mut keyed = Vec::with_capacity(frames.len());
    for f in frames {
        keyed.push((asm.tick_of(f.t)?, f));
    }
    keyed.sort_by(|(ta, a), (tb, b)| ta.cmp(tb).then_with(|| a.source_id.cmp(&b.source_id)));
    let mut out = Vec::new();
    for (_, f) in keyed {
        out.extend(asm.push(f.clone())?);
    }
    let (rest, stats) = asm.finish()?;
    out.extend(rest);
    Ok((out, stats))
}

/// Reads a whole frame file and assembles its timesteps.
pub fn read_timesteps<R: BufRead>(
    reader: R,
    format: FrameFormat,
    cfg: AssemblerConfig,
    budget: usize,
) -> Result<(Vec<Timestep>, IngestStats)> {
    let mut rdr = FrameReader::new(reader, format)?.with_budget(budget);
    let frames = rdr.by_ref().collect::<Result<Vec<_>>>()?;
    let read_stats = rdr.stats();
    let (steps, mut stats) = assemble_timesteps(&frames, cfg)?;
    stats.skipped = read_stats.skipped;
    stats.clamped = read_stats.clamped;
    Ok((steps, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(source: &str, t: f64, conf: f64, value: f64) -> AuFrame {
        AuFrame {
            source_id: source.into(),
            t,
            au: AuVector::new([value; AU_COUNT]).unwrap(),
            occurrences: [false; AU_COUNT],
            confidence: conf,
            valid_face: true,
        }
    }

    #[test]
    fn arbitrate_examples() {
        let p = ArbitrationPolicy::default();
        let a = frame("A", 0.0, 0.9, 1.0);
        let b = frame("B", 0.0, 0.7, 2.0);
        assert_eq!(arbitrate(Some(&a), Some(&b), &p).unwrap().source_id, "A");

        let a = frame("A", 0.0, 0.40, 1.0);
        let b = frame("B", 0.0, 0.45, 2.0);
        let out = arbitrate(Some(&a), Some(&b), &p).unwrap();
        assert!(out.au.is_zero());
        assert!(!out.valid_face);
        assert_eq!(out.confidence, 0.45);

        let a = frame("A", 0.0, 0.80, 1.0);
        assert_eq!(arbitrate(Some(&a), None, &p).unwrap(), a);
        assert!(arbitrate(None, None, &p).is_none());
    }

    #[test]
    fn arbitrate_ties_go_to_first_source_id() {
        let p = ArbitrationPolicy::default();
        let a = frame("cam0", 0.0, 0.8, 1.0);
        let b = frame("cam1", 0.0, 0.8, 2.0);
        assert_eq!(arbitrate(Some(&a), Some(&b), &p).unwrap().source_id, "cam0");
        assert_eq!(arbitrate(Some(&b), Some(&a), &p).unwrap().source_id, "cam0");
        // exactly at the threshold is not "above 50%"
        let c = frame("cam0", 0.0, 0.5, 1.0);
        assert!(arbitrate(Some(&c), None, &p).unwrap().au.is_zero());
    }

    #[test]
    fn aggregate_examples() {
        let p = ArbitrationPolicy::default();
        let v = frame("A", 0.0, 0.9, 1.25);
        let ts = aggregate(&vec![v.clone(); 10], 3, &p).unwrap();
        assert_eq!(ts.au, v.au);
        assert_eq!(ts.index, 3);
        assert!(ts.valid_face);

        let mut frames = Vec::new();
        for _ in 0..5 {
            let mut values = [0.0; AU_COUNT];
            values[0] = 2.0;
            frames.push(AuFrame {
                au: AuVector::new(values).unwrap(),
                ..frame("A", 0.0, 0.9, 0.0)
            });
        }
        for _ in 0..5 {
            frames.push(AuFrame::zeroed("A", 0.0, 0.2));
        }
        let ts = aggregate(&frames, 0, &p).unwrap();
        assert_eq!(ts.au.get(0), 2.0);
        assert_eq!(ts.au.get(1), 0.0);

        let invalid = vec![AuFrame::zeroed("A", 0.0, 0.2); 10];
        let ts = aggregate(&invalid, 0, &p).unwrap();
        assert!(ts.au.is_zero() && !ts.valid_face);

        let ts = aggregate(&[], 7, &p).unwrap();
        assert!(ts.au.is_zero() && !ts.valid_face);
        assert!(aggregate(&vec![v; 11], 0, &p).is_err());
    }

    #[test]
    fn aggregate_last_and_max() {
        let mut p = ArbitrationPolicy::default();
        let frames = vec![frame("A", 0.0, 0.9, 1.0), frame("A", 0.0, 0.9, 3.0), frame("A", 0.0, 0.9, 2.0)];
        p.aggregator = Aggregator::Last;
        assert_eq!(aggregate(&frames, 0, &p).unwrap().au.get(5), 2.0);
        p.aggregator = Aggregator::Max;
        assert_eq!(aggregate(&frames, 0, &p).unwrap().au.get(5), 3.0);
    }

    fn jsonl_record(source: &str, t: f64, n: usize) -> String {
        let au = vec![1.0; n];
        let occ = vec![false; AU_COUNT];
        serde_json::json!({"source_id": source, "t": t, "confidence": 0.9, "au": au, "occ": occ}).to_string()
    }

    #[test]
    fn read_jsonl_examples() {
        let text = format!("{}\n{}\n", jsonl_record("A", 0.0, 17), jsonl_record("A", 0.033, 17));
        let frames: Vec<_> = FrameReader::jsonl(text.as_bytes()).collect::<Result<_>>().unwrap();
        assert_eq!(frames.len(), 2);

        let text = format!("{}\n{}\n", jsonl_record("A", 0.0, 16), jsonl_record("A", 0.033, 17));
        let mut rdr = FrameReader::jsonl(text.as_bytes());
        let frames: Vec<_> = rdr.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(rdr.stats().skipped, 1);

        let mut ids: Vec<&str> = AuCatalog::ids().to_vec();
        ids.swap(2, 3);
        let text = format!("{}\n{}\n", serde_json::json!({"catalog": ids}), jsonl_record("A", 0.0, 17));
        let res: Result<Vec<_>> = FrameReader::jsonl(text.as_bytes()).collect();
        assert!(matches!(res, Err(Error::CatalogMismatch(_))));
    }

    #[test]
    fn budget_exceeded_reports_line() {
        let mut buf = Vec::new();
        write_jsonl_header(&mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str(&jsonl_record("A", 0.0, 17));
        text.push_str("\nnot json\n{\"t\": 1}\n");
        let res: Result<Vec<_>> = FrameReader::jsonl(text.as_bytes()).with_budget(1).collect();
        match res {
            Err(Error::BudgetExceeded { line, skipped, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(skipped, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_order_timestamp_is_skipped() {
        let text = format!("{}\n{}\n", jsonl_record("A", 1.0, 17), jsonl_record("A", 0.5, 17));
        let mut rdr = FrameReader::jsonl(text.as_bytes());
        assert_eq!(rdr.by_ref().filter_map(|r| r.ok()).count(), 1);
        assert_eq!(rdr.stats().skipped, 1);
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let frames = vec![frame("cam0", 0.0, 0.9, 1.5), frame("cam1", 0.0, 0.6, 4.75)];
        let mut buf = Vec::new();
        write_frames_csv(&mut buf, &frames).unwrap();
        let back: Vec<_> = FrameReader::csv(buf.as_slice()).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(back, frames);

        let text = String::from_utf8(buf).unwrap().replacen("au01_int,au02_int", "au02_int,au01_int", 1);
        assert!(matches!(FrameReader::csv(text.as_bytes()), Err(Error::CatalogMismatch(_))));
    }

    #[test]
    fn out_of_range_intensity_is_clamped_and_counted() {
        let mut au = vec![1.0; AU_COUNT];
        au[0] = 5.4;
        let text = serde_json::json!({"source_id": "A", "t": 0.0, "confidence": 0.9, "au": au}).to_string();
        let mut rdr = FrameReader::jsonl(text.as_bytes());
        let f = rdr.next().unwrap().unwrap();
        assert_eq!(f.au.get(0), 5.0);
        assert_eq!(rdr.stats().clamped, 1);
    }

    #[test]
    fn gaps_become_zero_timesteps() {
        let frames = vec![frame("A", 0.0, 0.9, 1.0), frame("A", 1.0, 0.9, 1.0)];
        let (steps, _) = assemble_timesteps(&frames, AssemblerConfig::default()).unwrap();
        assert_eq!(steps.len(), 4);
        assert!(steps[0].valid_face);
        assert!(!steps[1].valid_face && steps[1].au.is_zero());
        assert!(!steps[2].valid_face);
        assert!(steps[3].valid_face);
    }

    #[test]
    fn third_source_is_rejected() {
        let mut asm = TimestepAssembler::new(AssemblerConfig::default()).unwrap();
        asm.push(frame("A", 0.0, 0.9, 1.0)).unwrap();
        asm.push(frame("B", 0.0, 0.9, 1.0)).unwrap();
        assert!(asm.push(frame("C", 0.0, 0.9, 1.0)).is_err());
    }

    #[test]
    fn lagging_source_does_not_stall_the_clock() {
        let mut asm = TimestepAssembler::new(AssemblerConfig::default()).unwrap();
        asm.push(frame("B", 0.0, 0.9, 1.0)).unwrap();
        let mut emitted = 0;
        for k in 0..100 {
            emitted += asm.push(frame("A", k as f64 / 30.0, 0.9, 1.0)).unwrap().len();
            assert!(asm.pending_len() <= 3);
        }
        assert!(emitted >= 7);
    }

    fn two_source_stream(n: usize, conf: impl Fn(usize, usize) -> f64) -> Vec<AuFrame> {
        let mut out = Vec::new();
        for k in 0..n {
            for s in 0..2 {
                out.push(frame(&format!("cam{s}"), k as f64 / 30.0, conf(k, s), (k % 7) as f64 * 0.5 + s as f64 * 0.1));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn indices_are_contiguous_and_interleaving_invariant(
            n in 1usize..200,
            lag in 0usize..15,
            confs in prop::collection::vec(0.0f64..1.0, 400),
        ) {
            let frames = two_source_stream(n, |k, s| confs[(2 * k + s) % confs.len()]);
            let (batch, _) = assemble_timesteps(&frames, AssemblerConfig::default()).unwrap();
            for (i, ts) in batch.iter().enumerate() {
                prop_assert_eq!(ts.index, i);
            }
            prop_assert_eq!(batch.len(), (n - 1) / 10 + 1);

            // deliver cam1 `lag` frames behind cam0 (within the lag bound)
            let a: Vec<_> = frames.iter().filter(|f| f.source_id == "cam0").cloned().collect();
            let b: Vec<_> = frames.iter().filter(|f| f.source_id == "cam1").cloned().collect();
            let mut asm = TimestepAssembler::new(AssemblerConfig::default()).unwrap();
            let mut out = Vec::new();
            for k in 0..n + lag {
                if k < n { out.extend(asm.push(a[k].clone()).unwrap()); }
                if k >= lag { out.extend(asm.push(b[k - lag].clone()).unwrap()); }
            }
            let (rest, _) = asm.finish().unwrap();
            out.extend(rest);
            prop_assert_eq!(out, batch);
        }

        #[test]
        fn low_confidence_timesteps_are_zero(n in 1usize..60, confs in prop::collection::vec(0.0f64..=0.5, 120)) {
            let frames = two_source_stream(n, |k, s| confs[(2 * k + s) % confs.len()]);
            let (steps, _) = assemble_timesteps(&frames, AssemblerConfig::default()).unwrap();
            for ts in steps {
                prop_assert!(ts.au.is_zero());
                prop_assert!(!ts.valid_face);
            }
        }
    }
}
