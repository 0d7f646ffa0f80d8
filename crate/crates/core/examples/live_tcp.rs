// SPDX-License-Identifier: MIT OR Apache-2.0

//! Live detection over TCP: one connection per camera, frames as JSONL.
//! Equivalent to `ausentinel detect --listen 127.0.0.1:7878 --connections 2`.

use std::io::{BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use ausentinel::ingest::{write_jsonl_frame, DEFAULT_ERROR_BUDGET};
use ausentinel::live::{serve, EventRecord, LivePipeline};
use ausentinel::model::train;
use ausentinel::simgen::generate;
use ausentinel::{AssemblerConfig, ScenarioSpec, TrainConfig, WindowConfig};

fn main() -> ausentinel::Result<()> {
    let corpus = generate(&ScenarioSpec {
        participants: 5,
        ..Default::default()
    })?;
    let records = corpus.records();
    let (model, _) = train(&records[3..], &TrainConfig::default())?;
    let trial = corpus.trials[0].clone();

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    println!("# serving on {addr}");

    let mut cameras = Vec::new();
    for cam in ["cam0", "cam1"] {
        let frames: Vec<_> = trial.frames.iter().filter(|f| f.source_id == cam).cloned().collect();
        cameras.push(thread::spawn(move || -> ausentinel::Result<()> {
            let mut w = BufWriter::new(TcpStream::connect(addr)?);
            for f in &frames {
                write_jsonl_frame(&mut w, f)?;
            }
            w.flush()?;
            Ok(())
        }));
    }

    let pipe = LivePipeline::new(model, WindowConfig::default(), AssemblerConfig::default())?;
    let id = trial.record.trial_id.clone();
    let summary = serve(listener, 2, DEFAULT_ERROR_BUDGET, pipe, |e| {
        println!("{}", serde_json::to_string(&EventRecord::new(&id, e))?);
        Ok(())
    })?;
    for c in cameras {
        c.join().expect("camera thread")?;
    }
    println!("# {}", serde_json::to_string(&summary)?);
    Ok(())
}
