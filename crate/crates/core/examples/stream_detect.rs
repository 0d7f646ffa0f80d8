// SPDX-License-Identifier: MIT OR Apache-2.0

//! Feeds one trial's frames through the live pipeline one at a time and
//! prints events as JSONL the moment they fire.

use ausentinel::live::{EventRecord, LivePipeline};
use ausentinel::model::train;
use ausentinel::simgen::generate;
use ausentinel::{AssemblerConfig, ScenarioSpec, TrainConfig, WindowConfig};

fn main() -> ausentinel::Result<()> {
    // usage: stream_detect [held-out trial 0..3]
    let pick: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0).min(2);
    let corpus = generate(&ScenarioSpec::default())?;
    let records = corpus.records();
    // hold out the last participant
    let held_out = records.len() - 3;
    let (model, _) = train(&records[..held_out], &TrainConfig::default())?;
    let trial = &corpus.trials[held_out + pick];
    let gt = trial.record.annotations.unwrap();
    println!(
        "# {}: perceived error at {}, reaction {}..={}",
        trial.record.trial_id, gt.perceived_error_start, gt.reaction_start, gt.reaction_end
    );
    let mut pipe = LivePipeline::new(model, WindowConfig::default(), AssemblerConfig::default())?;
    for frame in trial.frames.iter().cloned() {
        for e in pipe.push(frame)? {
            println!("{}", serde_json::to_string(&EventRecord::new(&trial.record.trial_id, &e))?);
        }
    }
    let (tail, summary) = pipe.finish()?;
    for e in &tail {
        println!("{}", serde_json::to_string(&EventRecord::new(&trial.record.trial_id, e))?);
    }
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(())
}
