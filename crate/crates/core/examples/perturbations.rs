// SPDX-License-Identifier: MIT OR Apache-2.0

//! Failure modes on purpose: silent participants, novelty reactions to robot
//! motion, and face occlusions followed by an intensity rebound.

use ausentinel::detector::run_trial;
use ausentinel::eval::{flag_occlusion_candidates, score_trial};
use ausentinel::model::train;
use ausentinel::simgen::{generate, perturb, Perturbation, SimCorpus};
use ausentinel::{ModelParams, ScenarioSpec, TrainConfig, WindowConfig};

fn report(label: &str, corpus: &SimCorpus, model: &ModelParams) -> ausentinel::Result<()> {
    let window = WindowConfig::default();
    println!("{label}");
    for t in &corpus.trials {
        let events = run_trial(&t.record, model, &window)?;
        let flagged = flag_occlusion_candidates(&t.record, &events, window.window_len).len();
        let s = score_trial(&t.record, events).score;
        println!(
            "  {:<6} TP {} FP {} FN {} occlusion-flagged {}",
            t.record.trial_id, s.true_positives.len(), s.false_positives, s.false_negatives, flagged
        );
    }
    Ok(())
}

fn main() -> ausentinel::Result<()> {
    let (model, _) = train(&generate(&ScenarioSpec::default())?.records(), &TrainConfig::default())?;
    let spec = ScenarioSpec {
        participants: 2,
        trials_per_participant: 2,
        seed: 99,
        ..Default::default()
    };
    let corpus = generate(&spec)?;
    report("unperturbed", &corpus, &model)?;
    report(
        "reactions flattened",
        &perturb(&corpus, &Perturbation::AmplitudeScale { factor: 0.0 })?,
        &model,
    )?;
    report(
        "novelty bursts at robot motion onsets",
        &perturb(&corpus, &Perturbation::Novelty { strength: 1.0 })?,
        &model,
    )?;
    report(
        "3 s occlusion at 40 s",
        &perturb(
            &corpus,
            &Perturbation::Occlusion {
                start_s: 40.0,
                duration_s: 3.0,
                rebound: 1.0,
            },
        )?,
        &model,
    )?;
    Ok(())
}
