// SPDX-License-Identifier: MIT OR Apache-2.0

//! Generates a small corpus and writes it in the on-disk layout read by the
//! `train`, `detect`, `evaluate` and `analyze` subcommands.
//!
//! cargo run --example simulate_corpus -- /tmp/corpus

use ausentinel::dataset::write_corpus;
use ausentinel::simgen::generate;
use ausentinel::ScenarioSpec;

fn main() -> ausentinel::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "corpus".into());
    let spec = ScenarioSpec {
        participants: 4,
        trials_per_participant: 3,
        ..Default::default()
    };
    let corpus = generate(&spec)?;
    let manifest = write_corpus(&out, &corpus)?;
    for t in &corpus.trials {
        let gt = t.record.annotations.expect("every default trial has an error");
        println!(
            "{:<7} {:<14} {} timesteps, reaction {}..={} (perceived error at {})",
            t.record.trial_id,
            t.record.error_type.as_str(),
            t.record.len(),
            gt.reaction_start,
            gt.reaction_end,
            gt.perceived_error_start
        );
    }
    println!("wrote {} trials to {out}", manifest.trials.len());
    Ok(())
}
