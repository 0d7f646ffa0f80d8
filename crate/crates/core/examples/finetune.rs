// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-participant tailoring: each participant's cross-validation model is
//! tuned on their first trial and compared with the untuned model on their
//! remaining trials.
//!
//! cargo run --release --example finetune

use ausentinel::cli::FINETUNE_EPOCHS;
use ausentinel::eval::{finetune_per_participant, BaseModel};
use ausentinel::simgen::generate;
use ausentinel::{ScenarioSpec, TrainConfig, WindowConfig};

fn main() -> ausentinel::Result<()> {
    let corpus = generate(&ScenarioSpec::default())?.records();
    let base = TrainConfig::default();
    let tune = TrainConfig {
        epochs: FINETUNE_EPOCHS,
        ..base
    };
    let report = finetune_per_participant(&corpus, BaseModel::Loocv(&base), &tune, &WindowConfig::default())?;
    println!("base");
    print!("{}", report.base.score.table());
    println!("tuned");
    print!("{}", report.tuned.score.table());
    let b = report.base.score.overall.mean_detection_delay_s.unwrap_or(f64::NAN);
    let t = report.tuned.score.overall.mean_detection_delay_s.unwrap_or(f64::NAN);
    println!("mean detection delay {b:.3} s -> {t:.3} s");
    Ok(())
}
