// SPDX-License-Identifier: MIT OR Apache-2.0

//! Leave-one-participant-out evaluation on a generated 20 x 3 corpus.
//!
//! cargo run --release --example loocv -- [seed]

use std::time::Instant;

use ausentinel::eval::loocv;
use ausentinel::simgen::generate;
use ausentinel::{ScenarioSpec, TrainConfig, WindowConfig};

fn main() -> ausentinel::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(1), |s| s.parse()).expect("seed must be an integer");
    let started = Instant::now();
    let corpus = generate(&ScenarioSpec { seed, ..Default::default() })?.records();
    let report = loocv(&corpus, &TrainConfig::default(), &WindowConfig::default())?;
    print!("{}", report.score.table());
    println!("{} folds in {:.1?}", report.folds.len(), started.elapsed());
    Ok(())
}
