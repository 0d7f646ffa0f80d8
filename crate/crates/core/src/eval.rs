// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scoring detections against coder annotations, leave-one-participant-out
//! cross validation, per-participant fine-tuning and the per-AU Welch
//! analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detector::{run_trial, WindowConfig};
use crate::error::{Error, Result};
use crate::model::{finetune, train, ModelParams, TrainConfig};
use crate::stats::{welch, WelchResult};
use crate::types::{steps_to_seconds, AuCatalog, ErrorEvent, ErrorType, GroundTruth, Timestep, TrialRecord, AU_COUNT};

/// Seconds from perceived error start to detection; negative when the
/// detector fired before the error fully manifested.
pub fn detection_delay(event: &ErrorEvent, gt: &GroundTruth) -> f64 {
    steps_to_seconds(event.detected_at, gt.perceived_error_start)
}

/// Seconds from the coded reaction start to detection.
pub fn reaction_diff(event: &ErrorEvent, gt: &GroundTruth) -> f64 {
    steps_to_seconds(event.detected_at, gt.reaction_start)
}

/// Seconds between the estimated error start and the detection.
pub fn internal_delay(event: &ErrorEvent) -> f64 {
    steps_to_seconds(event.detected_at, event.estimated_start)
}

fn overlaps(event: &ErrorEvent, gt: &GroundTruth) -> bool {
    event.estimated_start <= gt.reaction_end && gt.reaction_start <= event.detected_at
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub true_positives: Vec<ErrorEvent>,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub detection_delay_s: Option<f64>,
    pub reaction_diff_s: Option<f64>,
    pub internal_delay_s: Option<f64>,
}

/// Matches unmerged events against a trial's annotated reaction.
///
/// An event is a true positive when `[estimated_start, detected_at]`
/// intersects `[reaction_start, reaction_end]`; the earliest true positive
/// supplies the delays. Any other unmerged event is a false positive.
pub fn match_events(events: &[ErrorEvent], gt: Option<&GroundTruth>) -> TrialScore {
    let mut score = TrialScore {
        true_positives: Vec::new(),
        false_positives: 0,
        false_negatives: 0,
        detection_delay_s: None,
        reaction_diff_s: None,
        internal_delay_s: None,
    };
    for ev in events.iter().filter(|e| !e.merged) {
        match gt {
            Some(gt) if overlaps(ev, gt) => score.true_positives.push(*ev),
            _ => score.false_positives += 1,
        }
    }
    if let Some(gt) = gt {
        match score.true_positives.iter().min_by_key(|e| e.detected_at) {
            Some(first) => {
                score.detection_delay_s = Some(detection_delay(first, gt));
                score.reaction_diff_s = Some(reaction_diff(first, gt));
                score.internal_delay_s = Some(internal_delay(first));
            }
            None => score.false_negatives = 1,
        }
    }
    score
}

/// A scored trial with the identifiers needed for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_id: String,
    pub participant_id: String,
    pub error_type: ErrorType,
    pub events: Vec<ErrorEvent>,
    pub score: TrialScore,
}

pub fn score_trial(trial: &TrialRecord, events: Vec<ErrorEvent>) -> TrialOutcome {
    let score = match_events(&events, trial.annotations.as_ref());
    TrialOutcome {
        trial_id: trial.trial_id.clone(),
        participant_id: trial.participant_id.clone(),
        error_type: trial.error_type,
        events,
        score,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub trials: usize,
    pub matched: usize,
    pub rmse_detection_delay_s: Option<f64>,
    /// Signed mean; kept for diagnostics alongside the RMSE.
    pub mean_detection_delay_s: Option<f64>,
    pub rmse_reaction_diff_s: Option<f64>,
    pub mean_internal_delay_s: Option<f64>,
    pub sd_internal_delay_s: Option<f64>,
    pub fp_rate: f64,
    pub fp_sd: f64,
    pub fn_rate: f64,
    pub fn_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub overall: ScoreSummary,
    pub by_error_type: BTreeMap<ErrorType, ScoreSummary>,
}

pub fn rmse(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some((xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt())
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; 0 for fewer than two values.
fn sd(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn summarize<'a>(outcomes: impl Iterator<Item = &'a TrialOutcome>) -> ScoreSummary {
    let mut delays = Vec::new();
    let mut reaction = Vec::new();
    let mut internal = Vec::new();
    let mut fps = Vec::new();
    let mut fns = Vec::new();
    for o in outcomes {
        delays.extend(o.score.detection_delay_s);
        reaction.extend(o.score.reaction_diff_s);
        internal.extend(o.score.internal_delay_s);
        fps.push(o.score.false_positives as f64);
        fns.push(o.score.false_negatives as f64);
    }
    ScoreSummary {
        trials: fps.len(),
        matched: delays.len(),
        rmse_detection_delay_s: rmse(&delays),
        mean_detection_delay_s: mean(&delays),
        rmse_reaction_diff_s: rmse(&reaction),
        mean_internal_delay_s: mean(&internal),
        sd_internal_delay_s: sd(&internal),
        fp_rate: mean(&fps).unwrap_or(0.0),
        fp_sd: sd(&fps).unwrap_or(0.0),
        fn_rate: mean(&fns).unwrap_or(0.0),
        fn_sd: sd(&fns).unwrap_or(0.0),
    }
}

/// Aggregates trial outcomes overall and per error type.
pub fn score_corpus(outcomes: &[TrialOutcome]) -> CorpusScore {
    let types: BTreeSet<ErrorType> = outcomes.iter().map(|o| o.error_type).collect();
    CorpusScore {
        overall: summarize(outcomes.iter()),
        by_error_type: types
            .into_iter()
            .map(|t| (t, summarize(outcomes.iter().filter(|o| o.error_type == t))))
            .collect(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl CorpusScore {
    /// Plain-text table: one overall row and one row per error type.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>10} {:>10} {:>14} {:>12} {:>12}",
            "subset", "trials", "delay_s", "react_s", "internal_s", "fp/trial", "fn/trial"
        );
        let mut row = |name: &str, s: &ScoreSummary| {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>10} {:>10} {:>14} {:>12} {:>12}",
                name,
                s.trials,
                fmt_opt(s.rmse_detection_delay_s),
                fmt_opt(s.rmse_reaction_diff_s),
                format!(
                    "{} ({})",
                    fmt_opt(s.mean_internal_delay_s),
                    fmt_opt(s.sd_internal_delay_s)
                ),
                format!("{:.2} ({:.2})", s.fp_rate, s.fp_sd),
                format!("{:.2} ({:.2})", s.fn_rate, s.fn_sd),
            );
        };
        row("overall", &self.overall);
        for (t, s) in &self.by_error_type {
            row(t.as_str(), s);
        }
        out
    }

    /// Flat CSV, one row per subset.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "subset,trials,matched,rmse_detection_delay_s,mean_detection_delay_s,rmse_reaction_diff_s,mean_internal_delay_s,sd_internal_delay_s,fp_rate,fp_sd,fn_rate,fn_sd\n",
        );
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let mut row = |name: &str, s: &ScoreSummary| {
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{},{},{},{},{},{},{}",
                s.trials,
                s.matched,
                opt(s.rmse_detection_delay_s),
                opt(s.mean_detection_delay_s),
                opt(s.rmse_reaction_diff_s),
                opt(s.mean_internal_delay_s),
                opt(s.sd_internal_delay_s),
                s.fp_rate,
                s.fp_sd,
                s.fn_rate,
                s.fn_sd
            );
        };
        row("overall", &self.overall);
        for (t, s) in &self.by_error_type {
            row(t.as_str(), s);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub held_out: String,
    pub train_trials: Vec<String>,
    pub test_trials: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<Fold>,
    pub outcomes: Vec<TrialOutcome>,
    pub score: CorpusScore,
}

/// Participant ids in first-appearance order.
pub fn participants(corpus: &[TrialRecord]) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for t in corpus {
        if !seen.contains(&t.participant_id) {
            seen.push(t.participant_id.clone());
        }
    }
    seen
}

/// Scores a fixed model on every trial.
pub fn evaluate_fixed(corpus: &[TrialRecord], params: &ModelParams, cfg: &WindowConfig) -> Result<EvalReport> {
    let outcomes = corpus
        .iter()
        .map(|t| Ok(score_trial(t, run_trial(t, params, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        folds: Vec::new(),
        score: score_corpus(&outcomes),
        outcomes,
    })
}

fn split<'a>(corpus: &'a [TrialRecord], participant: &str) -> (Vec<TrialRecord>, Vec<&'a TrialRecord>) {
    let train_set = corpus
        .iter()
        .filter(|t| t.participant_id != participant)
        .cloned()
        .collect();
    let test_set = corpus.iter().filter(|t| t.participant_id == participant).collect();
    (train_set, test_set)
}

/// Trains the model used for one held-out participant.
pub fn fold_model(corpus: &[TrialRecord], held_out: &str, cfg: &TrainConfig) -> Result<ModelParams> {
    let (train_set, _) = split(corpus, held_out);
    Ok(train(&train_set, cfg)?.0)
}

/// Leave-one-participant-out cross validation.
pub fn loocv(corpus: &[TrialRecord], train_cfg: &TrainConfig, window: &WindowConfig) -> Result<EvalReport> {
    let people = participants(corpus);
    if people.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "cross validation needs at least two participants, found {}",
            people.len()
        )));
    }
    let mut folds = Vec::with_capacity(people.len());
    let mut outcomes = Vec::with_capacity(corpus.len());
    for person in &people {
        let (train_set, test_set) = split(corpus, person);
        assert!(train_set.iter().all(|t| &t.participant_id != person));
        let (params, _) = train(&train_set, train_cfg)?;
        for trial in &test_set {
            outcomes.push(score_trial(trial, run_trial(trial, &params, window)?));
        }
        folds.push(Fold {
            held_out: person.clone(),
            train_trials: train_set.iter().map(|t| t.trial_id.clone()).collect(),
            test_trials: test_set.iter().map(|t| t.trial_id.clone()).collect(),
        });
    }
    Ok(EvalReport {
        folds,
        score: score_corpus(&outcomes),
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    /// Base model scored on each participant's remaining trials.
    pub base: EvalReport,
    /// Fine-tuned model scored on the same trials.
    pub tuned: EvalReport,
    /// Trial each participant's model was tuned on.
    pub tuning_trials: Vec<String>,
}

/// Where each participant's base model comes from.
pub enum BaseModel<'a> {
    /// One model for everyone.
    Fixed(&'a ModelParams),
    /// The participant's cross-validation fold model.
    Loocv(&'a TrainConfig),
}

/// Tunes a base model on each participant's first annotated trial and
/// scores base and tuned models on that participant's remaining trials.
pub fn finetune_per_participant(
    corpus: &[TrialRecord],
    base: BaseModel<'_>,
    tune_cfg: &TrainConfig,
    window: &WindowConfig,
) -> Result<FinetuneReport> {
    let mut base_out = Vec::new();
    let mut tuned_out = Vec::new();
    let mut tuning_trials = Vec::new();
    let mut folds = Vec::new();
    for person in participants(corpus) {
        let (_, trials) = split(corpus, &person);
        let Some(tune_idx) = trials.iter().position(|t| t.annotations.is_some()) else {
            log::warn!("participant {person} has no annotated trial to tune on; skipped");
            continue;
        };
        if trials.len() < 2 {
            log::warn!("participant {person} has no trials left after tuning; skipped");
            continue;
        }
        let params = match &base {
            BaseModel::Fixed(p) => (*p).clone(),
            BaseModel::Loocv(cfg) => fold_model(corpus, &person, cfg)?,
        };
        let tune_trial = trials[tune_idx].clone();
        let (tuned, _) = finetune(&params, std::slice::from_ref(&tune_trial), tune_cfg)?;
        let test: Vec<&TrialRecord> = trials
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != tune_idx)
            .map(|(_, t)| *t)
            .collect();
        for t in &test {
            base_out.push(score_trial(t, run_trial(t, &params, window)?));
            tuned_out.push(score_trial(t, run_trial(t, &tuned, window)?));
        }
        tuning_trials.push(tune_trial.trial_id.clone());
        folds.push(Fold {
            held_out: person.clone(),
            train_trials: vec![tune_trial.trial_id],
            test_trials: test.iter().map(|t| t.trial_id.clone()).collect(),
        });
    }
    if base_out.is_empty() {
        return Err(Error::InvalidInput("no participant has a tuning trial and a test trial".into()));
    }
    Ok(FinetuneReport {
        base: EvalReport {
            folds: folds.clone(),
            score: score_corpus(&base_out),
            outcomes: base_out,
        },
        tuned: EvalReport {
            folds,
            score: score_corpus(&tuned_out),
            outcomes: tuned_out,
        },
        tuning_trials,
    })
}

/// Indices of timesteps where a valid face returns after at least one
/// invalid timestep.
pub fn occlusion_releases(timesteps: &[Timestep]) -> Vec<usize> {
    timesteps
        .windows(2)
        .filter(|w| !w[0].valid_face && w[1].valid_face)
        .map(|w| w[1].index)
        .collect()
}

/// False-positive events whose span touches the `horizon` timesteps after an
/// occlusion release; these are the detections most likely caused by the
/// intensity jump when the face reappears.
pub fn flag_occlusion_candidates(trial: &TrialRecord, events: &[ErrorEvent], horizon: usize) -> Vec<ErrorEvent> {
    let releases = occlusion_releases(&trial.timesteps);
    events
        .iter()
        .filter(|e| !e.merged)
        .filter(|e| trial.annotations.as_ref().is_none_or(|gt| !overlaps(e, gt)))
        .filter(|e| {
            releases
                .iter()
                .any(|&r| e.estimated_start <= r + horizon && r <= e.detected_at)
        })
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuWelch {
    pub au: String,
    pub name: String,
    pub result: WelchResult,
    /// p < .05
    pub significant: bool,
}

/// Compares error against no-error timestep intensities, one test per AU.
pub fn welch_ttest(corpus: &[TrialRecord]) -> Result<Vec<AuWelch>> {
    let mut err: Vec<Vec<f64>> = vec![Vec::new(); AU_COUNT];
    let mut clean: Vec<Vec<f64>> = vec![Vec::new(); AU_COUNT];
    for trial in corpus {
        for (ts, label) in trial.timesteps.iter().zip(trial.labels()) {
            let bucket = if label { &mut err } else { &mut clean };
            for (i, v) in ts.au.as_array().iter().enumerate() {
                bucket[i].push(*v);
            }
        }
    }
    (0..AU_COUNT)
        .map(|i| {
            let result = welch(&err[i], &clean[i])?;
            Ok(AuWelch {
                au: AuCatalog::ids()[i].to_string(),
                name: AuCatalog::names()[i].to_string(),
                significant: result.p.is_some_and(|p| p < 0.05),
                result,
            })
        })
        .collect()
}

pub fn welch_table(rows: &[AuWelch]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<22} {:>9} {:>9} {:>10} {:>10}  sig",
        "au", "name", "t", "dof", "p", "diff"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6} {:<22} {:>9} {:>9} {:>10} {:>10.3}  {}",
            r.au,
            r.name,
            r.result.t.map_or("undef".into(), |t| format!("{t:.3}")),
            r.result.dof.map_or("undef".into(), |d| format!("{d:.2}")),
            r.result.p.map_or("undef".into(), |p| format!("{p:.4}")),
            r.result.mean_a - r.result.mean_b,
            if r.significant { "*" } else { "" }
        );
    }
    out
}
