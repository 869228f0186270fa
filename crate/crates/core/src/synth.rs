//! Synthetic picture-naming sessions with known ground truth.
//!
//! Each subject gets a set of phase-locked brain oscillation bursts with
//! smooth central/parietal topographies, pink background activity, a speech
//! artifact (15–30 Hz filtered noise gated on at the speech onset, riding on
//! a slow potential with the same gate) projected with a fronto-temporal
//! topography, a lip EMG that records the same burst,
//! blink transients on the EOG channels before onset, and a common reference
//! signal that the mastoid re-reference removes. Brain sources share a
//! session-wide template across subjects, so they survive grand averaging;
//! the artifact is independent noise in every trial.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::artifact::ClusterSet;
use crate::error::{Error, Result};
use crate::eval::{windowed_corr, ChannelCollapse, TimeGrid};
use crate::preproc::{Behavior, Channel, ChannelRole, ContinuousRecording, EventKind, EventMark};

const LAYOUT_CSV: &str = include_str!("../data/standard_1020.csv");

/// EEG channels in recording order; the first `n_eeg_channels` are used.
pub const EEG_CHANNELS: [&str; 27] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7", "C3", "Cz", "C4", "T8", "CP5",
    "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8", "O1", "O2",
];

/// The shipped 10-20 layout as `(name, x, y)`, x to the right, y to the nose.
pub fn standard_layout() -> Vec<(String, f64, f64)> {
    LAYOUT_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[1].parse().expect("layout x"),
                f[2].parse().expect("layout y"),
            )
        })
        .collect()
}

pub fn layout_position(name: &str) -> Option<(f64, f64)> {
    standard_layout()
        .into_iter()
        .find(|(n, _, _)| n == name)
        .map(|(_, x, y)| (x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetDistribution {
    pub mean_ms: f64,
    pub sd_ms: f64,
    pub min_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrainSourceSpec {
    pub count: usize,
    /// Frequency bands the sources are drawn from, Hz.
    pub bands_hz: Vec<(f64, f64)>,
    /// Peak amplitude of a source at its topography maximum, µV.
    pub amplitude_uv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_trials: usize,
    /// Trials labeled incorrect/missed/self-repair per subject.
    pub n_error_trials: usize,
    pub n_eeg_channels: usize,
    pub sample_rate: f64,
    pub onset: OnsetDistribution,
    /// Artifact burst duration range after the rise, ms.
    pub artifact_duration_ms: (f64, f64),
    /// Amplitude of the slow onset-locked potential riding on the burst,
    /// relative to the burst carrier RMS.
    pub artifact_slow_ratio: f64,
    /// RMS of the artifact at its topography peak relative to the brain
    /// source amplitude, dB.
    pub artifact_snr_db: f64,
    pub brain: BrainSourceSpec,
    /// Pink background activity per channel, RMS µV.
    pub background_uv: f64,
    /// White sensor noise per channel, RMS µV.
    pub sensor_noise_uv: f64,
    /// Common reference signal added to EEG and mastoids, RMS µV.
    pub reference_uv: f64,
    /// Lip-EMG burst RMS, µV.
    pub emg_uv: f64,
    /// Independent noise on each EMG electrode, RMS µV.
    pub emg_noise_uv: f64,
    pub blink_probability: f64,
    pub blink_uv: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 8,
            n_trials: 90,
            n_error_trials: 4,
            n_eeg_channels: 26,
            sample_rate: 512.0,
            onset: OnsetDistribution {
                mean_ms: 900.0,
                sd_ms: 80.0,
                min_ms: 700.0,
            },
            artifact_duration_ms: (400.0, 700.0),
            artifact_slow_ratio: 0.35,
            artifact_snr_db: 12.0,
            brain: BrainSourceSpec {
                count: 5,
                bands_hz: vec![(4.0, 7.0), (8.0, 12.0), (13.0, 20.0)],
                amplitude_uv: 3.0,
            },
            background_uv: 3.0,
            sensor_noise_uv: 1.0,
            reference_uv: 5.0,
            emg_uv: 40.0,
            emg_noise_uv: 2.0,
            blink_probability: 0.2,
            blink_uv: 80.0,
            seed: 0,
        }
    }
}

pub const PRE_STIMULUS_S: f64 = 1.0;
pub const POST_STIMULUS_S: f64 = 3.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 || self.n_subjects == 0 {
            return Err(Error::InvalidArgument("need at least one subject and one trial".into()));
        }
        if self.n_error_trials >= self.n_trials {
            return Err(Error::InvalidArgument("every trial would be an error trial".into()));
        }
        if self.n_eeg_channels == 0 || self.n_eeg_channels > EEG_CHANNELS.len() {
            return Err(Error::InvalidArgument(format!(
                "n_eeg_channels must be in 1..={}",
                EEG_CHANNELS.len()
            )));
        }
        if self.sample_rate < 64.0 {
            return Err(Error::InvalidArgument("sample rate must be at least 64 Hz".into()));
        }
        if self.onset.min_ms < 0.0 || self.onset.sd_ms < 0.0 {
            return Err(Error::InvalidArgument("onset minimum and SD must be non-negative".into()));
        }
        let latest = self.onset.mean_ms.max(self.onset.min_ms) + 4.0 * self.onset.sd_ms + self.artifact_duration_ms.1 + 100.0;
        if latest > POST_STIMULUS_S * 1000.0 {
            return Err(Error::InvalidArgument("artifact bursts would run past the trial end".into()));
        }
        if self.brain.count > 0 && self.brain.bands_hz.is_empty() {
            return Err(Error::InvalidArgument("brain sources need at least one band".into()));
        }
        Ok(())
    }

    pub fn trial_samples(&self) -> usize {
        ((PRE_STIMULUS_S + POST_STIMULUS_S) * self.sample_rate).round() as usize
    }

    pub fn artifact_gain(&self) -> f64 {
        self.brain.amplitude_uv * 10f64.powf(self.artifact_snr_db / 20.0)
    }

    fn subject_seed(&self, subject: usize) -> u64 {
        self.seed
            .wrapping_mul(0x2545_F491_4F6C_DD1D)
            .wrapping_add((subject as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTopography {
    pub label: String,
    /// Weight per recording channel (zero for EOG/EMG).
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Brain activity (evoked sources + background), recording channels × time.
    pub clean_brain: DMatrix<f64>,
    /// Speech artifact, recording channels × time.
    pub artifact: DMatrix<f64>,
    /// Lip-EMG burst (OOS − OOI without electrode noise), per sample.
    pub emg_trace: Vec<f64>,
    /// Bipolar EMG as recorded (OOS − OOI including electrode noise).
    pub emg_bipolar: Vec<f64>,
    pub onsets_ms: Vec<f64>,
    pub topographies: Vec<SourceTopography>,
}

#[derive(Debug, Clone)]
pub struct SynthSession {
    pub subject_id: String,
    pub recording: ContinuousRecording,
    pub behavior: Vec<Behavior>,
    pub truth: GroundTruth,
}

/// Session-wide brain source template shared by all subjects.
#[derive(Debug, Clone)]
struct SourceTemplate {
    freq: f64,
    center_s: f64,
    width_s: f64,
    phase: f64,
    pos: (f64, f64),
    spread: f64,
    sign: f64,
}

fn templates(cfg: &SynthConfig) -> Vec<SourceTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_7E3F);
    (0..cfg.brain.count)
        .map(|k| {
            let (lo, hi) = cfg.brain.bands_hz[k % cfg.brain.bands_hz.len()];
            // central/parietal disk, away from the fronto-temporal artifact region
            let ang = rng.random_range(0.0..2.0 * PI);
            let rad = 0.3 * rng.random::<f64>().sqrt();
            SourceTemplate {
                freq: rng.random_range(lo..hi),
                center_s: rng.random_range(0.15..1.6),
                width_s: rng.random_range(0.12..0.3),
                phase: rng.random_range(0.0..2.0 * PI),
                pos: (0.05 + rad * ang.cos(), -0.1 + 0.8 * rad * ang.sin()),
                spread: rng.random_range(0.14..0.22),
                sign: if rng.random::<bool>() { 1.0 } else { -1.0 },
            }
        })
        .collect()
}

fn gaussian_topo(positions: &[Option<(f64, f64)>], center: (f64, f64), width: f64) -> Vec<f64> {
    positions
        .iter()
        .map(|p| {
            p.map_or(0.0, |(x, y)| {
                let d2 = (x - center.0).powi(2) + (y - center.1).powi(2);
                (-d2 / (2.0 * width * width)).exp()
            })
        })
        .collect()
}

/// Real noise with the given amplitude spectrum shape, unit RMS.
fn shaped_noise(rng: &mut ChaCha8Rng, n: usize, fs: f64, shape: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        *b *= shape(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms == 0.0 {
        return out;
    }
    out.into_iter().map(|v| v / rms).collect()
}

/// Gate: 50 ms raised-cosine rise at `onset`, flat for `dur`, 50 ms fall.
fn gate(t_ms: f64, onset: f64, dur: f64) -> f64 {
    const RAMP: f64 = 50.0;
    let u = t_ms - onset;
    if u < 0.0 || u > dur + 2.0 * RAMP {
        0.0
    } else if u < RAMP {
        0.5 - 0.5 * (PI * u / RAMP).cos()
    } else if u <= RAMP + dur {
        1.0
    } else {
        0.5 + 0.5 * (PI * (u - RAMP - dur) / RAMP).cos()
    }
}

/// Generates one subject of the session. Deterministic in `(cfg, subject)`.
pub fn generate_session(cfg: &SynthConfig, subject: usize) -> Result<SynthSession> {
    cfg.validate()?;
    let fs = cfg.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.subject_seed(subject));
    let n_eeg = cfg.n_eeg_channels;

    let mut channels: Vec<Channel> = EEG_CHANNELS[..n_eeg]
        .iter()
        .map(|n| Channel {
            name: n.to_string(),
            role: ChannelRole::Eeg,
            position: layout_position(n),
        })
        .collect();
    for (n, role) in [("M1", ChannelRole::MastoidL), ("M2", ChannelRole::MastoidR)] {
        channels.push(Channel {
            name: n.into(),
            role,
            position: layout_position(n),
        });
    }
    channels.push(Channel::new("EOGu", ChannelRole::EogUpper));
    channels.push(Channel::new("EOGl", ChannelRole::EogLower));
    channels.push(Channel::new("OOS", ChannelRole::EmgOos));
    channels.push(Channel::new("OOI", ChannelRole::EmgOoi));
    let n_ch = channels.len();
    let (ml, mr) = (n_eeg, n_eeg + 1);
    let (eog_u, eog_l, oos, ooi) = (n_eeg + 2, n_eeg + 3, n_eeg + 4, n_eeg + 5);
    let positions: Vec<Option<(f64, f64)>> = channels.iter().map(|c| c.position).collect();
    let scalp = |i: usize| i < n_eeg + 2;

    let trial_len = cfg.trial_samples();
    let pre = (PRE_STIMULUS_S * fs).round() as usize;
    let total = cfg.n_trials * trial_len;
    let stims: Vec<usize> = (0..cfg.n_trials).map(|i| i * trial_len + pre).collect();

    // behavior
    let mut behavior = vec![Behavior::Correct; cfg.n_trials];
    let errors = [Behavior::Incorrect, Behavior::Missed, Behavior::SelfRepair];
    for (k, i) in sample(&mut rng, cfg.n_trials, cfg.n_error_trials).into_iter().enumerate() {
        behavior[i] = errors[k % errors.len()];
    }

    // onsets: truncated normal by rejection
    let onset_dist = Normal::new(cfg.onset.mean_ms, cfg.onset.sd_ms.max(1e-9))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let onsets: Vec<f64> = (0..cfg.n_trials)
        .map(|_| loop {
            let v = onset_dist.sample(&mut rng);
            if v >= cfg.onset.min_ms && v <= cfg.onset.mean_ms + 4.0 * cfg.onset.sd_ms {
                break v;
            }
        })
        .collect();

    // topographies
    let mut topographies = Vec::new();
    let art_center = (-0.42 + rng.random_range(-0.03..0.03), 0.2 + rng.random_range(-0.03..0.03));
    let left = gaussian_topo(&positions, art_center, 0.17);
    let right = gaussian_topo(&positions, (-art_center.0, art_center.1), 0.17);
    let art_topo: Vec<f64> = (0..n_ch)
        .map(|i| if i < n_eeg { left[i] + 0.3 * right[i] } else { 0.0 })
        .collect();
    topographies.push(SourceTopography {
        label: "speech_artifact".into(),
        weights: art_topo.clone(),
    });
    let sources: Vec<(SourceTemplate, Vec<f64>)> = templates(cfg)
        .into_iter()
        .enumerate()
        .map(|(k, mut t)| {
            t.freq += rng.random_range(-0.3..0.3);
            t.center_s += rng.random_range(-0.01..0.01);
            t.pos.0 += rng.random_range(-0.03..0.03);
            t.pos.1 += rng.random_range(-0.03..0.03);
            let topo: Vec<f64> = gaussian_topo(&positions, t.pos, t.spread)
                .into_iter()
                .enumerate()
                .map(|(i, w)| if scalp(i) { t.sign * w } else { 0.0 })
                .collect();
            topographies.push(SourceTopography {
                label: format!("brain_{k}"),
                weights: topo.clone(),
            });
            (t, topo)
        })
        .collect();

    let mut brain = DMatrix::zeros(n_ch, total);
    let mut artifact = DMatrix::zeros(n_ch, total);
    let mut emg_trace = vec![0.0; total];
    let gain = cfg.artifact_gain();
    let amp_jitter = Normal::new(1.0f64, 0.15).expect("valid normal");

    for (tr, &stim) in stims.iter().enumerate() {
        let start = stim - pre;
        // evoked brain bursts
        for (t, topo) in &sources {
            let a = cfg.brain.amplitude_uv * amp_jitter.sample(&mut rng).max(0.2);
            let lat = rng.random_range(-0.01..0.01);
            for s in 0..trial_len {
                let tt = s as f64 / fs - PRE_STIMULUS_S - t.center_s - lat;
                let env = (-tt * tt / (2.0 * t.width_s * t.width_s)).exp();
                if env < 1e-6 {
                    continue;
                }
                let v = a * env * (2.0 * PI * t.freq * tt + t.phase).sin();
                for (c, &w) in topo.iter().enumerate() {
                    if w != 0.0 {
                        brain[(c, start + s)] += w * v;
                    }
                }
            }
        }
        // artifact burst: 15–30 Hz noise, gated at onset
        let dur = rng.random_range(cfg.artifact_duration_ms.0..=cfg.artifact_duration_ms.1);
        let carrier = shaped_noise(&mut rng, trial_len, fs, |f| {
            if (15.0..=30.0).contains(&f) {
                1.0
            } else {
                0.0
            }
        });
        for (s, &c) in carrier.iter().enumerate() {
            let t_ms = (s as f64 / fs - PRE_STIMULUS_S) * 1000.0;
            let g = gate(t_ms, onsets[tr], dur);
            if g == 0.0 {
                continue;
            }
            let burst = g * (c + cfg.artifact_slow_ratio);
            emg_trace[start + s] = cfg.emg_uv * burst;
            for (ch, &w) in art_topo.iter().enumerate() {
                if w != 0.0 {
                    artifact[(ch, start + s)] += gain * w * burst;
                }
            }
        }
    }

    // background: pink noise on every scalp channel
    for c in (0..n_ch).filter(|&c| scalp(c)) {
        let pink = shaped_noise(&mut rng, total, fs, |f| if f < 0.5 { 0.0 } else { 1.0 / f });
        for (s, v) in pink.into_iter().enumerate() {
            brain[(c, s)] += cfg.background_uv * v;
        }
    }

    let mut samples = &brain + &artifact;
    let reference = shaped_noise(&mut rng, total, fs, |f| if f < 0.2 { 0.0 } else { 1.0 / f });
    let mastoid_diff = shaped_noise(&mut rng, total, fs, |f| if f < 0.2 { 0.0 } else { 1.0 / f });
    for s in 0..total {
        let r = cfg.reference_uv * reference[s];
        for c in 0..n_eeg {
            samples[(c, s)] += r;
        }
        let d = 0.5 * cfg.reference_uv * mastoid_diff[s];
        samples[(ml, s)] += r + d;
        samples[(mr, s)] += r - d;
    }
    let white = Normal::new(0.0f64, 1.0).expect("valid normal");
    for c in (0..n_ch).filter(|&c| scalp(c)) {
        for s in 0..total {
            samples[(c, s)] += cfg.sensor_noise_uv * white.sample(&mut rng);
        }
    }
    // EMG electrodes
    let mut emg_bipolar = vec![0.0; total];
    for s in 0..total {
        let n1 = cfg.emg_noise_uv * white.sample(&mut rng);
        let n2 = cfg.emg_noise_uv * white.sample(&mut rng);
        samples[(oos, s)] = 0.5 * emg_trace[s] + n1;
        samples[(ooi, s)] = -0.5 * emg_trace[s] + n2;
        emg_bipolar[s] = samples[(oos, s)] - samples[(ooi, s)];
    }
    // EOG: small noise plus pre-onset blinks in random trials
    for s in 0..total {
        samples[(eog_u, s)] = cfg.sensor_noise_uv * white.sample(&mut rng);
        samples[(eog_l, s)] = cfg.sensor_noise_uv * white.sample(&mut rng);
    }
    for (tr, &stim) in stims.iter().enumerate() {
        if rng.random::<f64>() >= cfg.blink_probability {
            continue;
        }
        let latest = (onsets[tr] - 150.0).max(-800.0);
        let center_ms = rng.random_range(-800.0..=latest);
        for s in 0..trial_len {
            let t_ms = (s as f64 / fs - PRE_STIMULUS_S) * 1000.0;
            let u = (t_ms - center_ms) / 60.0;
            if u.abs() > 5.0 || t_ms >= onsets[tr] {
                continue;
            }
            let b = cfg.blink_uv * (-0.5 * u * u).exp();
            samples[(eog_u, stim - pre + s)] += b;
            samples[(eog_l, stim - pre + s)] -= 0.2 * b;
        }
    }

    let events = stims
        .iter()
        .flat_map(|&s| {
            [
                EventMark {
                    sample: s - pre / 2,
                    kind: EventKind::Fixation,
                },
                EventMark {
                    sample: s,
                    kind: EventKind::Stimulus,
                },
            ]
        })
        .collect();
    let recording = ContinuousRecording::new(fs, channels, samples, events)?;
    Ok(SynthSession {
        subject_id: format!("sub-{:02}", subject + 1),
        recording,
        behavior,
        truth: GroundTruth {
            clean_brain: brain,
            artifact,
            emg_trace,
            emg_bipolar,
            onsets_ms: onsets,
            topographies,
        },
    })
}

impl SynthSession {
    /// A recording with the same channels and events whose samples are
    /// `data` (used to push truth components through preprocessing).
    pub fn with_samples(&self, data: DMatrix<f64>) -> Result<ContinuousRecording> {
        ContinuousRecording::new(
            self.recording.sample_rate,
            self.recording.channels.clone(),
            data,
            self.recording.events.clone(),
        )
    }
}

/// Truth components after the same preprocessing as the data, trial-averaged
/// over the accepted trials (EEG channels × time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthAverages {
    pub artifact: DMatrix<f64>,
    pub clean_brain: DMatrix<f64>,
    pub sample_rate: f64,
    pub pre_stimulus_s: f64,
    pub onsets_ms: Vec<f64>,
}

/// Ground truth stored beside a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub subject_id: String,
    /// True speech onset of every trial, ms.
    pub onsets_ms: Vec<f64>,
    pub topographies: Vec<SourceTopography>,
    pub averages: TruthAverages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthScores {
    pub window_ms: (f64, f64),
    /// r(cluster 2, truth artifact)
    pub artifact_r: f64,
    /// r(cluster 3, truth clean brain)
    pub clean_r: f64,
}

/// Channel-mean correlations of cluster 2 with the artifact truth and of
/// cluster 3 with the clean-brain truth, per window.
pub fn score_against_truth(
    clusters: &ClusterSet,
    truth: &TruthAverages,
    windows: &[(f64, f64)],
) -> Result<Vec<TruthScores>> {
    if clusters.cluster1.shape() != truth.artifact.shape()
        || clusters.sample_rate != truth.sample_rate
        || clusters.pre_stimulus_s != truth.pre_stimulus_s
    {
        return Err(Error::DimensionMismatch(format!(
            "clusters {:?} at {} Hz vs truth {:?} at {} Hz",
            clusters.cluster1.shape(),
            clusters.sample_rate,
            truth.artifact.shape(),
            truth.sample_rate
        )));
    }
    let grid = TimeGrid {
        sample_rate: truth.sample_rate,
        pre_stimulus_s: truth.pre_stimulus_s,
    };
    let art = crate::eval::channel_mean(&truth.artifact);
    let clean = crate::eval::channel_mean(&truth.clean_brain);
    windows
        .iter()
        .map(|&w| {
            Ok(TruthScores {
                window_ms: w,
                artifact_r: windowed_corr(&clusters.cluster2, &art, grid, w, ChannelCollapse::Mean)?.0,
                clean_r: windowed_corr(&clusters.cluster3, &clean, grid, w, ChannelCollapse::Mean)?.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_trials: 12,
            n_error_trials: 2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn layout_has_all_channels() {
        for n in EEG_CHANNELS.iter().chain(&["Oz", "M1", "M2"]) {
            assert!(layout_position(n).is_some(), "{n}");
        }
        let (x, y) = layout_position("Cz").unwrap();
        assert!(x.abs() < 1e-9 && y.abs() < 1e-9);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_session(&small(), 0).unwrap();
        let b = generate_session(&small(), 0).unwrap();
        assert_eq!(a.recording, b.recording);
        assert_eq!(a.truth.onsets_ms, b.truth.onsets_ms);
        let c = generate_session(&small(), 1).unwrap();
        assert_ne!(a.recording.samples, c.recording.samples);
    }

    #[test]
    fn artifact_is_zero_before_onset() {
        let s = generate_session(&small(), 0).unwrap();
        let fs = s.recording.sample_rate;
        let trial_len = small().trial_samples();
        for (tr, &onset) in s.truth.onsets_ms.iter().enumerate() {
            let start = tr * trial_len;
            let n_pre = ((1.0 + onset / 1000.0) * fs).floor() as usize;
            let m = s.truth.artifact.columns(start, n_pre).amax();
            assert_eq!(m, 0.0, "trial {tr}");
        }
    }

    #[test]
    fn additivity_without_noise() {
        let cfg = SynthConfig {
            sensor_noise_uv: 0.0,
            reference_uv: 0.0,
            ..small()
        };
        let s = generate_session(&cfg, 0).unwrap();
        let n_eeg = cfg.n_eeg_channels + 2;
        let sum = &s.truth.clean_brain + &s.truth.artifact;
        let diff = (s.recording.samples.rows(0, n_eeg) - sum.rows(0, n_eeg)).amax();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn artifact_gain_zero_removes_artifact() {
        let cfg = SynthConfig {
            artifact_snr_db: f64::NEG_INFINITY,
            ..small()
        };
        let s = generate_session(&cfg, 0).unwrap();
        assert_eq!(s.truth.artifact.amax(), 0.0);
    }

    #[test]
    fn behavior_and_events() {
        let s = generate_session(&small(), 0).unwrap();
        assert_eq!(s.behavior.len(), 12);
        assert_eq!(s.behavior.iter().filter(|b| **b != Behavior::Correct).count(), 2);
        assert_eq!(s.recording.stimulus_samples().len(), 12);
        assert!(s.truth.onsets_ms.iter().all(|&o| o >= 700.0));
    }

    #[test]
    fn artifact_power_is_in_band() {
        let cfg = SynthConfig {
            n_trials: 30,
            ..SynthConfig::default()
        };
        let s = generate_session(&cfg, 0).unwrap();
        let x: Vec<rustfft::num_complex::Complex<f64>> =
            s.truth.emg_trace.iter().map(|&v| rustfft::num_complex::Complex::new(v, 0.0)).collect();
        let mut spec = x;
        rustfft::FftPlanner::new().plan_fft_forward(spec.len()).process(&mut spec);
        let df = cfg.sample_rate / spec.len() as f64;
        let (mut inside, mut total) = (0.0, 0.0);
        for (k, c) in spec.iter().enumerate().take(spec.len() / 2 + 1) {
            let p = c.norm_sqr();
            total += p;
            if (15.0..=30.0).contains(&(k as f64 * df)) {
                inside += p;
            }
        }
        assert!(inside / total >= 0.8, "in-band fraction {}", inside / total);
    }

    #[test]
    fn onset_statistics_match_config() {
        let cfg = SynthConfig::default();
        let s = generate_session(&cfg, 3).unwrap();
        let o = &s.truth.onsets_ms;
        let n = o.len() as f64;
        let mean = o.iter().sum::<f64>() / n;
        let se = cfg.onset.sd_ms / n.sqrt();
        assert!((mean - cfg.onset.mean_ms).abs() <= 3.0 * se, "mean {mean}");
        assert!(o.iter().all(|&v| v >= cfg.onset.min_ms));
    }
}
