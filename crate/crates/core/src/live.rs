// SPDX-License-Identifier: MIT OR Apache-2.0

//! Frame-in, event-out streaming pipeline and its stdin/TCP front ends.
//!
//! Memory stays bounded by the assembler lag and the detector window no
//! matter how long the stream runs.

use std::io::{BufRead, BufReader};
use std::net::{SocketAddr, TcpListener};
use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::detector::{Detector, WindowConfig};
use crate::error::{Error, Result};
use crate::ingest::{AssemblerConfig, FrameFormat, FrameReader, IngestStats, TimestepAssembler};
use crate::model::{classify, ModelParams};
use crate::types::{index_to_seconds, AuFrame, ErrorEvent, Timestep};

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub trial_id: String,
    pub detected_at: usize,
    pub estimated_start: usize,
    pub detected_t_seconds: f64,
    pub estimated_t_seconds: f64,
    pub score: f64,
    pub merged: bool,
}

impl EventRecord {
    pub fn new(trial_id: &str, e: &ErrorEvent) -> Self {
        EventRecord {
            trial_id: trial_id.to_string(),
            detected_at: e.detected_at,
            estimated_start: e.estimated_start,
            detected_t_seconds: index_to_seconds(e.detected_at),
            estimated_t_seconds: index_to_seconds(e.estimated_start),
            score: e.score,
            merged: e.merged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiveSummary {
    pub timesteps: usize,
    pub events: usize,
    pub unmerged_events: usize,
    pub ingest: IngestStats,
}

#[derive(Debug)]
struct Scorer {
    params: ModelParams,
    detector: Detector,
    timesteps: usize,
    events: usize,
    unmerged: usize,
}

impl Scorer {
    fn push(&mut self, ts: &Timestep) -> Result<Option<ErrorEvent>> {
        self.timesteps += 1;
        let ev = self.detector.step(classify(&self.params, ts)?)?;
        if let Some(e) = &ev {
            self.events += 1;
            self.unmerged += usize::from(!e.merged);
        }
        Ok(ev)
    }
}

/// Assembler, classifier and detector chained for one stream.
#[derive(Debug)]
pub struct LivePipeline {
    assembler: TimestepAssembler,
    scorer: Scorer,
}

impl LivePipeline {
    pub fn new(params: ModelParams, window: WindowConfig, assembler: AssemblerConfig) -> Result<Self> {
        params.validate()?;
        Ok(LivePipeline {
            assembler: TimestepAssembler::new(assembler)?,
            scorer: Scorer {
                params,
                detector: Detector::new(window)?,
                timesteps: 0,
                events: 0,
                unmerged: 0,
            },
        })
    }

    /// Feeds one frame; returns the events raised by timesteps it completed.
    pub fn push(&mut self, frame: AuFrame) -> Result<Vec<ErrorEvent>> {
        let ready = self.assembler.push(frame)?;
        let mut out = Vec::new();
        for ts in ready {
            out.extend(self.scorer.push(&ts)?);
        }
        Ok(out)
    }

    /// Feeds an already assembled timestep, bypassing the assembler.
    pub fn push_timestep(&mut self, ts: &Timestep) -> Result<Option<ErrorEvent>> {
        self.scorer.push(ts)
    }

    /// Memory held by the pipeline: pending timesteps and window entries.
    pub fn buffered(&self) -> (usize, usize) {
        (self.assembler.pending_len(), self.scorer.detector.buffered())
    }

    /// Flushes the tail of the stream.
    pub fn finish(self) -> Result<(Vec<ErrorEvent>, LiveSummary)> {
        let LivePipeline { assembler, mut scorer } = self;
        let (rest, ingest) = assembler.finish()?;
        let mut out = Vec::new();
        for ts in rest {
            out.extend(scorer.push(&ts)?);
        }
        Ok((
            out,
            LiveSummary {
                timesteps: scorer.timesteps,
                events: scorer.events,
                unmerged_events: scorer.unmerged,
                ingest,
            },
        ))
    }
}

/// Runs a pipeline over one reader until end of input.
pub fn run_reader<R: BufRead>(
    reader: R,
    format: FrameFormat,
    budget: usize,
    mut pipeline: LivePipeline,
    mut on_event: impl FnMut(&ErrorEvent) -> Result<()>,
) -> Result<LiveSummary> {
    let mut frames = FrameReader::new(reader, format)?.with_budget(budget);
    for frame in frames.by_ref() {
        for e in pipeline.push(frame?)? {
            on_event(&e)?;
        }
    }
    let read = frames.stats();
    let (tail, mut summary) = pipeline.finish()?;
    for e in &tail {
        on_event(e)?;
    }
    summary.ingest.skipped = read.skipped;
    summary.ingest.clamped = read.clamped;
    Ok(summary)
}

/// How long the merger waits for a connected but silent client before
/// carrying on without it.
pub const STALL_PATIENCE: Duration = Duration::from_millis(500);

/// Accepts `connections` JSONL clients on `listener`, one reader thread per
/// client, and feeds their frames into a single pipeline in timestamp order.
/// A client that stays silent for [`STALL_PATIENCE`] is skipped until it
/// delivers again, so one stalled camera cannot stop the clock. Returns once
/// every client has disconnected.
pub fn serve(
    listener: TcpListener,
    connections: usize,
    budget: usize,
    mut pipeline: LivePipeline,
    mut on_event: impl FnMut(&ErrorEvent) -> Result<()>,
) -> Result<LiveSummary> {
    if connections == 0 {
        return Err(Error::InvalidInput("need at least one connection".into()));
    }
    let mut clients = Vec::with_capacity(connections);
    let mut handles = Vec::with_capacity(connections);
    for _ in 0..connections {
        let (stream, peer) = listener.accept()?;
        log::info!("client {peer} connected");
        let (tx, rx) = mpsc::sync_channel::<Result<AuFrame>>(256);
        handles.push(thread::spawn(move || {
            let reader = FrameReader::jsonl(BufReader::new(stream)).with_budget(budget);
            for item in reader {
                if tx.send(item).is_err() {
                    break;
                }
            }
            log::info!("client {peer} closed");
        }));
        clients.push(Client {
            peer,
            rx: Some(rx),
            head: None,
            stalled: false,
        });
    }

    loop {
        let deadline = Instant::now() + STALL_PATIENCE;
        for c in clients.iter_mut().filter(|c| c.head.is_none()) {
            let Some(rx) = &c.rx else { continue };
            let got = if c.stalled {
                rx.try_recv().map_err(|e| match e {
                    TryRecvError::Empty => RecvTimeoutError::Timeout,
                    TryRecvError::Disconnected => RecvTimeoutError::Disconnected,
                })
            } else {
                rx.recv_timeout(deadline.saturating_duration_since(Instant::now()))
            };
            match got {
                Ok(Ok(frame)) => {
                    c.head = Some(frame);
                    c.stalled = false;
                }
                Ok(Err(e)) => {
                    log::error!("client {}: {e}", c.peer);
                    return Err(e);
                }
                Err(RecvTimeoutError::Timeout) => {
                    if !c.stalled {
                        log::warn!("client {} stalled; continuing without it", c.peer);
                    }
                    c.stalled = true;
                }
                Err(RecvTimeoutError::Disconnected) => c.rx = None,
            }
        }
        let next = clients
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.head.as_ref().map(|f| (i, f.t)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match next {
            Some((i, _)) => {
                let frame = clients[i].head.take().expect("head present");
                for e in pipeline.push(frame)? {
                    on_event(&e)?;
                }
            }
            None if clients.iter().all(|c| c.rx.is_none()) => break,
            None => thread::sleep(Duration::from_millis(1)),
        }
    }
    for h in handles {
        h.join().expect("frame reader thread panicked");
    }
    let (tail, summary) = pipeline.finish()?;
    for e in &tail {
        on_event(e)?;
    }
    Ok(summary)
}

struct Client {
    peer: SocketAddr,
    rx: Option<mpsc::Receiver<Result<AuFrame>>>,
    head: Option<AuFrame>,
    stalled: bool,
}
