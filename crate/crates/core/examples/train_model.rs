// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trains the classifier on a generated corpus and saves the model file.
//!
//! cargo run --release --example train_model -- model.json

use ausentinel::model::{forward, train};
use ausentinel::simgen::generate;
use ausentinel::types::AuCatalog;
use ausentinel::{AuVector, ScenarioSpec, TrainConfig};

fn main() -> ausentinel::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "model.json".into());
    let corpus = generate(&ScenarioSpec::default())?.records();
    let (model, report) = train(&corpus, &TrainConfig::default())?;
    println!(
        "{} error / {} no-error timesteps; each epoch trains on {} + {}",
        report.error_timesteps,
        report.no_error_timesteps,
        report.epochs[0].error_samples,
        report.epochs[0].no_error_samples
    );
    for e in report.epochs.iter().step_by(100) {
        println!("epoch {:>4}  loss {:.4}", e.epoch, e.loss);
    }
    let mut raised = [0.3; 17];
    for id in ["AU01", "AU02", "AU25", "AU26"] {
        raised[AuCatalog::index_of(id).unwrap()] = 2.5;
    }
    let p = forward(&model, &AuVector::new(raised)?)?;
    println!("raised brows and open mouth: p_error {:.3}", p.p_error);
    model.save(&out)?;
    println!("saved {out}");
    Ok(())
}
