// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic dual-camera AU traces with exact ground truth.
//!
//! Each trial is described by a [`TrialSynth`]: baseline intensities, an
//! optional reaction injected over a known support, extra bursts and
//! occlusion spans. Frames are rendered from the synth deterministically
//! (per-trial seeded ChaCha streams), then arbitrated and aggregated with the
//! regular ingest path, so the generated timesteps are exactly what a reader
//! of the written frame files will reconstruct.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{assemble_timesteps, ArbitrationPolicy, AssemblerConfig};
use crate::types::{AuCatalog, AuFrame, AuVector, ErrorType, GroundTruth, TrialRecord, AU_COUNT, MAX_INTENSITY};

pub const SOURCES: [&str; 2] = ["cam0", "cam1"];

/// Shape and timing of a facial reaction to a robot error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactionProfile {
    pub onset_latency_mean_s: f64,
    pub onset_latency_sd_s: f64,
    /// Sampled latencies are clamped into this range.
    pub onset_latency_range_s: (f64, f64),
    pub duration_mean_s: f64,
    pub duration_sd_s: f64,
    pub duration_range_s: (f64, f64),
    /// Peak intensity added to each AU at full activation.
    pub amplitude: [f64; AU_COUNT],
    /// Linear ramp from onset to full activation.
    pub attack_s: f64,
    /// Length of the exponential tail at the end of the reaction.
    pub decay_s: f64,
    pub decay_tau_s: f64,
    /// Predictable errors unfold gradually, so reactions start earlier.
    pub predictable: bool,
    pub predictable_lead_s: f64,
}

impl Default for ReactionProfile {
    fn default() -> Self {
        let mut amplitude = [0.0; AU_COUNT];
        for (id, a) in [("AU01", 1.0), ("AU02", 0.875), ("AU05", 0.625), ("AU25", 1.25), ("AU26", 1.125)] {
            amplitude[AuCatalog::index_of(id).unwrap()] = a;
        }
        ReactionProfile {
            onset_latency_mean_s: 0.5,
            onset_latency_sd_s: 0.68,
            onset_latency_range_s: (-2.0, 3.0),
            duration_mean_s: 11.78,
            duration_sd_s: 7.08,
            duration_range_s: (4.0, 30.0),
            amplitude,
            attack_s: 1.0,
            decay_s: 2.0,
            decay_tau_s: 1.0,
            predictable: false,
            predictable_lead_s: 1.5,
        }
    }
}

impl ReactionProfile {
    fn validate(&self) -> Result<()> {
        if self.amplitude.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Spec("amplitudes must be finite and >= 0".into()));
        }
        let (dlo, dhi) = self.duration_range_s;
        if !(dlo > 0.0 && dlo <= dhi) {
            return Err(Error::Spec("duration range must be positive and ordered".into()));
        }
        let (llo, lhi) = self.onset_latency_range_s;
        if llo > lhi {
            return Err(Error::Spec("onset latency range is inverted".into()));
        }
        if self.onset_latency_sd_s < 0.0 || self.duration_sd_s < 0.0 {
            return Err(Error::Spec("standard deviations must be >= 0".into()));
        }
        if self.attack_s < 0.0 || self.decay_s < 0.0 || self.decay_tau_s <= 0.0 {
            return Err(Error::Spec("envelope parameters must be non-negative".into()));
        }
        Ok(())
    }

    fn earliest_onset_s(&self) -> f64 {
        self.onset_latency_range_s.0 - if self.predictable { self.predictable_lead_s } else { 0.0 }
    }
}

/// One scheduled trial; applies to the same trial slot of every participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub error_type: ErrorType,
    /// Drawn from `ScenarioSpec::error_window_s` when absent.
    #[serde(default)]
    pub perceived_error_start_s: Option<f64>,
}

/// A span during which both cameras lose the face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionWindow {
    /// Restrict to one participant index; all participants when absent.
    #[serde(default)]
    pub participant: Option<usize>,
    #[serde(default)]
    pub trial: Option<usize>,
    pub start_s: f64,
    pub duration_s: f64,
    /// Relative size of the intensity jump when the face reappears.
    #[serde(default = "default_rebound")]
    pub rebound: f64,
}

fn default_rebound() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub participants: usize,
    pub trials_per_participant: usize,
    pub trial_duration_s: f64,
    pub fps: f64,
    /// Per-slot error schedule; slots beyond it cycle physical, concept,
    /// generalization.
    pub schedule: Vec<TrialPlan>,
    /// Range for unscheduled perceived error starts.
    pub error_window_s: (f64, f64),
    pub profile: ReactionProfile,
    /// Relative per-participant jitter of each reactive AU's amplitude.
    pub participant_variation: f64,
    /// Give each participant one extra reactive AU of their own.
    pub idiosyncratic_au: bool,
    /// Per-participant resting intensities are drawn from [0, baseline_max].
    pub baseline_max: f64,
    /// Per-frame estimator noise.
    pub noise_sd: f64,
    /// Participant indices whose reactions have zero amplitude.
    pub no_reaction_participants: Vec<usize>,
    /// Reaction-like bursts at every robot motion onset.
    pub novelty_effect: bool,
    pub motion_onsets_s: Vec<f64>,
    pub occlusions: Vec<OcclusionWindow>,
    /// Each camera looks away this many times per trial (the other keeps
    /// the face).
    pub look_aways_per_trial: usize,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            participants: 20,
            trials_per_participant: 3,
            trial_duration_s: 60.0,
            fps: 30.0,
            schedule: Vec::new(),
            error_window_s: (10.0, 22.0),
            profile: ReactionProfile::default(),
            participant_variation: 0.35,
            idiosyncratic_au: true,
            baseline_max: 0.6,
            noise_sd: 0.35,
            no_reaction_participants: Vec::new(),
            novelty_effect: false,
            motion_onsets_s: vec![3.0, 45.0],
            occlusions: Vec::new(),
            look_aways_per_trial: 2,
            seed: 1,
        }
    }
}

/// An intensity bump over a timestep range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub start: usize,
    pub end: usize,
    pub amplitude: [f64; AU_COUNT],
    pub attack_steps: usize,
    pub decay_steps: usize,
    pub decay_tau_steps: f64,
}

impl Injection {
    /// Envelope value at timestep `index`: a linear attack, a plateau and an
    /// exponential tail. Strictly positive on `[start, end]`, zero elsewhere.
    pub fn envelope(&self, index: usize) -> f64 {
        if index < self.start || index > self.end {
            return 0.0;
        }
        let len = self.end - self.start + 1;
        let k = index - self.start;
        let attack = ((k + 1) as f64 / self.attack_steps.max(1) as f64).min(1.0);
        let tail_from = len.saturating_sub(self.decay_steps);
        let decay = if k >= tail_from {
            (-((k - tail_from + 1) as f64) / self.decay_tau_steps).exp()
        } else {
            1.0
        };
        attack * decay
    }
}

/// Everything needed to render one trial's frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSynth {
    pub seed: u64,
    pub timesteps: usize,
    pub fps: f64,
    pub baseline: [f64; AU_COUNT],
    pub noise_sd: f64,
    /// Participant's reaction amplitudes, reused by perturbations.
    pub participant_amplitude: [f64; AU_COUNT],
    pub reaction: Option<Injection>,
    pub bursts: Vec<Injection>,
    /// Tick ranges `[start, end)` where both cameras lose the face.
    pub occlusions: Vec<(usize, usize)>,
    /// Tick ranges where one camera (by index) looks away.
    pub look_aways: Vec<(usize, usize, usize)>,
}

impl TrialSynth {
    fn frames_per_timestep(&self) -> usize {
        (self.fps / 3.0).round() as usize
    }

    pub fn ticks(&self) -> usize {
        self.timesteps * self.frames_per_timestep()
    }

    /// Renders both cameras' frames, interleaved by tick.
    pub fn render(&self) -> Vec<AuFrame> {
        let fpt = self.frames_per_timestep();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sd.max(0.0)).unwrap();
        let conf_noise = Normal::new(0.0, 0.03).unwrap();
        let mut out = Vec::with_capacity(self.ticks() * SOURCES.len());
        for tick in 0..self.ticks() {
            let index = tick / fpt;
            let mut face = self.baseline;
            let injections = self.reaction.iter().chain(&self.bursts);
            for inj in injections {
                let env = inj.envelope(index);
                if env > 0.0 {
                    for (f, a) in face.iter_mut().zip(&inj.amplitude) {
                        *f += env * a;
                    }
                }
            }
            let occluded = self.occlusions.iter().any(|(s, e)| (*s..*e).contains(&tick));
            for (cam, source) in SOURCES.iter().enumerate() {
                let mut values = [0.0; AU_COUNT];
                let mut occurrences = [false; AU_COUNT];
                for i in 0..AU_COUNT {
                    let v = (face[i] + noise.sample(&mut rng)).clamp(0.0, MAX_INTENSITY);
                    values[i] = v;
                    occurrences[i] = v >= 1.0;
                }
                let base_conf = if cam == 0 { 0.88 } else { 0.80 };
                let jitter: f64 = conf_noise.sample(&mut rng);
                let looked_away = self
                    .look_aways
                    .iter()
                    .any(|(c, s, e)| *c == cam && (*s..*e).contains(&tick));
                let confidence = if occluded {
                    0.15 + 0.2 * rng.random::<f64>()
                } else if looked_away {
                    0.2 + 0.25 * rng.random::<f64>()
                } else {
                    (base_conf + jitter).clamp(0.55, 0.99)
                };
                out.push(AuFrame {
                    source_id: source.to_string(),
                    t: tick as f64 / self.fps,
                    au: AuVector::new(values).expect("clamped"),
                    occurrences,
                    confidence,
                    valid_face: true,
                });
            }
        }
        out
    }
}

/// A generated trial: the timestep record, its frames and the synth that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrial {
    pub record: TrialRecord,
    pub frames: Vec<AuFrame>,
    pub synth: TrialSynth,
}

impl SimTrial {
    fn build(synth: TrialSynth, mut record: TrialRecord) -> Result<Self> {
        let frames = synth.render();
        let policy = ArbitrationPolicy::for_fps(synth.fps)?;
        let (timesteps, _) = assemble_timesteps(&frames, AssemblerConfig::new(policy))?;
        record.timesteps = timesteps;
        record.validate()?;
        Ok(SimTrial { record, frames, synth })
    }

    fn rebuild(&self, synth: TrialSynth) -> Result<Self> {
        Self::build(synth, self.record.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimCorpus {
    pub spec: ScenarioSpec,
    pub trials: Vec<SimTrial>,
}

impl SimCorpus {
    pub fn records(&self) -> Vec<TrialRecord> {
        self.trials.iter().map(|t| t.record.clone()).collect()
    }
}

/// SplitMix64 finalizer used to derive independent per-trial seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(seed) ^ a) ^ b.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

fn steps(seconds: f64) -> i64 {
    (seconds * 3.0).round() as i64
}

fn sample_clamped(rng: &mut ChaCha8Rng, mean: f64, sd: f64, range: (f64, f64)) -> f64 {
    let v = if sd > 0.0 {
        Normal::new(mean, sd).unwrap().sample(rng)
    } else {
        mean
    };
    v.clamp(range.0, range.1)
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.participants == 0 || self.trials_per_participant == 0 {
            return Err(Error::Spec("participants and trials_per_participant must be >= 1".into()));
        }
        if !(self.trial_duration_s.is_finite() && self.trial_duration_s > 0.0 && self.trial_duration_s <= 86_400.0) {
            return Err(Error::Spec("trial_duration_s must be in (0, 24 h]".into()));
        }
        let fpt = self.fps / 3.0;
        if !(self.fps >= 3.0 && (fpt - fpt.round()).abs() < 1e-9) {
            return Err(Error::Spec(format!("fps {} must be a positive multiple of 3", self.fps)));
        }
        if self.noise_sd < 0.0 || self.baseline_max < 0.0 || self.baseline_max > MAX_INTENSITY {
            return Err(Error::Spec("noise_sd and baseline_max must be within range".into()));
        }
        if !(0.0..1.0).contains(&self.participant_variation) {
            return Err(Error::Spec("participant_variation must be in [0, 1)".into()));
        }
        if self.schedule.len() > self.trials_per_participant {
            return Err(Error::Spec(format!(
                "schedule has {} entries for {} trials per participant",
                self.schedule.len(),
                self.trials_per_participant
            )));
        }
        self.profile.validate()?;
        let (lo, hi) = self.error_window_s;
        if lo > hi {
            return Err(Error::Spec("error_window_s is inverted".into()));
        }
        for slot in 0..self.trials_per_participant {
            let plan = self.plan(slot);
            if plan.error_type == ErrorType::None {
                continue;
            }
            let (first, last) = match plan.perceived_error_start_s {
                Some(s) => (s, s),
                None => self.error_window_s,
            };
            let earliest = first + self.profile.earliest_onset_s();
            let latest = last + self.profile.onset_latency_range_s.1 + self.profile.duration_range_s.1;
            if earliest < 0.0 || latest > self.trial_duration_s {
                return Err(Error::Spec(format!(
                    "trial slot {slot}: reaction span [{earliest:.2}, {latest:.2}] s does not fit a {} s trial",
                    self.trial_duration_s
                )));
            }
            for occ in &self.occlusions {
                if occ.trial.is_some_and(|t| t != slot) {
                    continue;
                }
                if occ.start_s < latest && earliest < occ.start_s + occ.duration_s {
                    return Err(Error::Spec(format!(
                        "occlusion at {} s overlaps the reaction span of trial slot {slot}",
                        occ.start_s
                    )));
                }
            }
        }
        Ok(())
    }

    fn plan(&self, slot: usize) -> TrialPlan {
        self.schedule.get(slot).copied().unwrap_or_else(|| {
            let cycle = [ErrorType::Physical, ErrorType::Concept, ErrorType::Generalization];
            TrialPlan {
                error_type: cycle[slot % cycle.len()],
                perceived_error_start_s: None,
            }
        })
    }
}

struct Participant {
    id: String,
    baseline: [f64; AU_COUNT],
    amplitude: [f64; AU_COUNT],
}

fn make_participant(spec: &ScenarioSpec, index: usize) -> Participant {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index as u64, u64::MAX));
    let mut baseline = [0.0; AU_COUNT];
    for b in baseline.iter_mut() {
        *b = rng.random_range(0.0..=spec.baseline_max);
    }
    let v = spec.participant_variation;
    let mut amplitude = spec.profile.amplitude;
    for a in amplitude.iter_mut() {
        *a *= rng.random_range(1.0 - v..=1.0 + v);
    }
    if spec.idiosyncratic_au {
        let brow_lowerer = AuCatalog::index_of("AU04").unwrap();
        let quiet: Vec<usize> = (0..AU_COUNT)
            .filter(|&i| spec.profile.amplitude[i] == 0.0 && i != brow_lowerer)
            .collect();
        if !quiet.is_empty() {
            let pick = quiet[rng.random_range(0..quiet.len())];
            amplitude[pick] = rng.random_range(0.8..=1.5);
        }
    }
    if spec.no_reaction_participants.contains(&index) {
        amplitude = [0.0; AU_COUNT];
    }
    Participant {
        id: format!("P{:02}", index + 1),
        baseline,
        amplitude,
    }
}

fn burst_at(start: usize, len: usize, amplitude: [f64; AU_COUNT], scale: f64, limit: usize) -> Option<Injection> {
    if start >= limit {
        return None;
    }
    let mut amp = amplitude;
    amp.iter_mut().for_each(|a| *a *= scale);
    Some(Injection {
        start,
        end: (start + len - 1).min(limit - 1),
        amplitude: amp,
        attack_steps: 1,
        decay_steps: 3,
        decay_tau_steps: 2.0,
    })
}

/// Novelty bursts last three seconds.
const NOVELTY_STEPS: usize = 9;
/// Intensity rebound after an occlusion lasts two and a half seconds.
const REBOUND_STEPS: usize = 8;

fn novelty_bursts(synth: &TrialSynth, onsets_s: &[f64], strength: f64) -> Vec<Injection> {
    onsets_s
        .iter()
        .filter_map(|&s| {
            let start = steps(s).max(0) as usize;
            let clear = synth
                .reaction
                .as_ref()
                .is_none_or(|r| start + NOVELTY_STEPS + 3 < r.start || start > r.end + 3);
            clear
                .then(|| burst_at(start, NOVELTY_STEPS, synth.participant_amplitude, strength, synth.timesteps))
                .flatten()
        })
        .collect()
}

/// The rebound is a tracker re-acquisition transient, so it follows the
/// nominal profile rather than the participant's own reaction.
fn occlusion_layers(synth: &mut TrialSynth, start_s: f64, duration_s: f64, rebound: f64, nominal: [f64; AU_COUNT]) {
    let fpt = synth.frames_per_timestep();
    let start_step = steps(start_s).max(0) as usize;
    let end_step = (start_step + steps(duration_s).max(1) as usize).min(synth.timesteps);
    synth.occlusions.push((start_step * fpt, end_step * fpt));
    if rebound > 0.0 {
        synth.bursts.extend(burst_at(
            end_step,
            REBOUND_STEPS,
            nominal,
            rebound,
            synth.timesteps,
        ));
    }
}

/// Generates a corpus. Deterministic in `spec.seed`.
pub fn generate(spec: &ScenarioSpec) -> Result<SimCorpus> {
    spec.validate()?;
    let n_steps = steps(spec.trial_duration_s) as usize;
    let fpt = (spec.fps / 3.0).round() as usize;
    let profile = &spec.profile;
    let mut trials = Vec::with_capacity(spec.participants * spec.trials_per_participant);
    for p in 0..spec.participants {
        let person = make_participant(spec, p);
        for slot in 0..spec.trials_per_participant {
            let trial_seed = derive_seed(spec.seed, p as u64, slot as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let plan = spec.plan(slot);
            let mut synth = TrialSynth {
                seed: derive_seed(trial_seed, 1, 1),
                timesteps: n_steps,
                fps: spec.fps,
                baseline: person.baseline,
                noise_sd: spec.noise_sd,
                participant_amplitude: person.amplitude,
                reaction: None,
                bursts: Vec::new(),
                occlusions: Vec::new(),
                look_aways: Vec::new(),
            };
            let mut annotations = None;
            if plan.error_type != ErrorType::None {
                let perceived_s = plan
                    .perceived_error_start_s
                    .unwrap_or_else(|| rng.random_range(spec.error_window_s.0..=spec.error_window_s.1));
                let mut latency = sample_clamped(
                    &mut rng,
                    profile.onset_latency_mean_s,
                    profile.onset_latency_sd_s,
                    profile.onset_latency_range_s,
                );
                if profile.predictable {
                    latency -= profile.predictable_lead_s;
                }
                let duration = sample_clamped(
                    &mut rng,
                    profile.duration_mean_s,
                    profile.duration_sd_s,
                    profile.duration_range_s,
                );
                let perceived = steps(perceived_s);
                let start = (perceived + steps(latency)).max(0) as usize;
                let len = steps(duration).max(1) as usize;
                let end = (start + len - 1).min(n_steps - 1);
                let attack_s = if profile.predictable {
                    profile.attack_s + profile.predictable_lead_s
                } else {
                    profile.attack_s
                };
                synth.reaction = Some(Injection {
                    start,
                    end,
                    amplitude: person.amplitude,
                    attack_steps: steps(attack_s).max(1) as usize,
                    decay_steps: steps(profile.decay_s).max(0) as usize,
                    decay_tau_steps: (profile.decay_tau_s * 3.0).max(1e-6),
                });
                annotations = Some(GroundTruth::new(start, end, perceived.max(0) as usize)?);
            }
            if spec.novelty_effect {
                synth.bursts = novelty_bursts(&synth, &spec.motion_onsets_s, 1.0);
            }
            for occ in &spec.occlusions {
                if occ.participant.is_some_and(|x| x != p) || occ.trial.is_some_and(|x| x != slot) {
                    continue;
                }
                occlusion_layers(&mut synth, occ.start_s, occ.duration_s, occ.rebound, spec.profile.amplitude);
            }
            for cam in 0..SOURCES.len() {
                for _ in 0..spec.look_aways_per_trial {
                    let len = 2 * 3 * fpt;
                    let ticks = n_steps * fpt;
                    if ticks > len {
                        let s = rng.random_range(0..ticks - len);
                        // keep the other camera on the face
                        let other = 1 - cam;
                        let clash = synth
                            .look_aways
                            .iter()
                            .any(|(c, a, b)| *c == other && s < *b && *a < s + len);
                        if !clash {
                            synth.look_aways.push((cam, s, s + len));
                        }
                    }
                }
            }
            let record = TrialRecord {
                trial_id: format!("{}-T{}", person.id, slot + 1),
                participant_id: person.id.clone(),
                error_type: plan.error_type,
                timesteps: Vec::new(),
                annotations,
            };
            trials.push(SimTrial::build(synth, record)?);
        }
    }
    Ok(SimCorpus {
        spec: spec.clone(),
        trials,
    })
}

/// Contamination applied to an existing corpus for robustness studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Perturbation {
    /// Reaction-like bursts of the given relative strength at every robot
    /// motion onset that does not touch the annotated reaction.
    Novelty { strength: f64 },
    /// Both cameras lose the face, then intensities rebound.
    Occlusion { start_s: f64, duration_s: f64, rebound: f64 },
    /// Scales every injected reaction; 0 flattens reactions to baseline.
    AmplitudeScale { factor: f64 },
}

impl Perturbation {
    /// Builds a perturbation from a kind name and a single magnitude. For
    /// occlusion the magnitude is the occlusion length in seconds, placed
    /// five seconds into the trial with a unit rebound.
    pub fn from_kind(kind: &str, magnitude: f64) -> Result<Self> {
        match kind {
            "novelty" => Ok(Perturbation::Novelty { strength: magnitude }),
            "occlusion" => Ok(Perturbation::Occlusion {
                start_s: 5.0,
                duration_s: magnitude,
                rebound: 1.0,
            }),
            "amplitude-scale" | "amplitude_scale" => Ok(Perturbation::AmplitudeScale { factor: magnitude }),
            other => Err(Error::InvalidInput(format!("unknown perturbation {other:?}"))),
        }
    }
}

/// Applies a perturbation to every trial, re-rendering frames and timesteps.
pub fn perturb(corpus: &SimCorpus, perturbation: &Perturbation) -> Result<SimCorpus> {
    let mut trials = Vec::with_capacity(corpus.trials.len());
    for trial in &corpus.trials {
        let mut synth = trial.synth.clone();
        match *perturbation {
            Perturbation::Novelty { strength } => {
                if !(strength.is_finite() && strength >= 0.0) {
                    return Err(Error::InvalidInput("novelty strength must be >= 0".into()));
                }
                let bursts = novelty_bursts(&synth, &corpus.spec.motion_onsets_s, strength);
                synth.bursts.extend(bursts);
            }
            Perturbation::Occlusion {
                start_s,
                duration_s,
                rebound,
            } => {
                if !(start_s >= 0.0 && duration_s > 0.0 && rebound >= 0.0) {
                    return Err(Error::InvalidInput("occlusion needs start >= 0, duration > 0".into()));
                }
                occlusion_layers(&mut synth, start_s, duration_s, rebound, corpus.spec.profile.amplitude);
            }
            Perturbation::AmplitudeScale { factor } => {
                if !(factor.is_finite() && factor >= 0.0) {
                    return Err(Error::InvalidInput("amplitude factor must be >= 0".into()));
                }
                if let Some(r) = synth.reaction.as_mut() {
                    r.amplitude.iter_mut().for_each(|a| *a *= factor);
                }
            }
        }
        trials.push(trial.rebuild(synth)?);
    }
    Ok(SimCorpus {
        spec: corpus.spec.clone(),
        trials,
    })
}
