//! Speech-onset estimation from the bipolar lip EMG.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnsetOptions {
    /// Baseline window relative to the stimulus, ms.
    pub baseline_ms: (f64, f64),
    /// Trailing RMS window length, ms.
    pub rms_window_ms: f64,
    /// Minimum time the envelope must stay above threshold, ms.
    pub sustain_ms: f64,
    /// Threshold = baseline mean + `k_sd` · baseline SD.
    pub k_sd: f64,
}

impl Default for OnsetOptions {
    fn default() -> Self {
        Self {
            baseline_ms: (-1000.0, 0.0),
            rms_window_ms: 50.0,
            sustain_ms: 100.0,
            k_sd: 3.0,
        }
    }
}

/// Trailing-window RMS; the first `w - 1` samples use the partial window.
pub fn rms_envelope(x: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += x[i] * x[i];
        if i >= w {
            acc -= x[i - w] * x[i - w];
        }
        let len = (i + 1).min(w);
        out.push((acc.max(0.0) / len as f64).sqrt());
    }
    out
}

/// First post-stimulus time (ms) at which the RMS envelope rises above the
/// baseline threshold and stays there.
///
/// `pre_s` is the length of the pre-stimulus part of the trial. Because the
/// trailing envelope of a burst outlasts the burst by one RMS window, a run
/// must last `sustain + window` to count; a burst shorter than `sustain`
/// therefore never produces an onset.
pub fn estimate_speech_onset(emg: &[f64], fs: f64, pre_s: f64, opts: &OnsetOptions) -> Option<f64> {
    let to_idx = |ms: f64| ((pre_s + ms / 1000.0) * fs).round().max(0.0) as usize;
    let w = ((opts.rms_window_ms / 1000.0) * fs).round().max(1.0) as usize;
    let env = rms_envelope(emg, w);
    let b0 = (to_idx(opts.baseline_ms.0) + w - 1).min(env.len());
    let b1 = to_idx(opts.baseline_ms.1).min(env.len());
    if b1 <= b0 + 1 {
        return None;
    }
    let base = &env[b0..b1];
    let n = base.len() as f64;
    let mean = base.iter().sum::<f64>() / n;
    let sd = (base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let threshold = mean + opts.k_sd * sd;
    let need = (((opts.sustain_ms + opts.rms_window_ms) / 1000.0) * fs).round() as usize;
    let start = to_idx(0.0);
    let mut run_start = None;
    for (i, &v) in env.iter().enumerate().skip(start) {
        if v > threshold {
            let s = *run_start.get_or_insert(i);
            if i + 1 - s >= need {
                return Some((s as f64 / fs - pre_s) * 1000.0);
            }
        } else {
            run_start = None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial_with_burst(seed: u64, burst_ms: Option<(f64, f64)>) -> Vec<f64> {
        let fs = 512.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2048)
            .map(|i| {
                let t_ms = (i as f64 / fs - 1.0) * 1000.0;
                let noise: f64 = rng.random_range(-1.0..1.0);
                let on = burst_ms.is_some_and(|(a, b)| t_ms >= a && t_ms < b);
                if on {
                    noise + 8.0 * (2.0 * std::f64::consts::PI * 22.0 * t_ms / 1000.0).sin()
                } else {
                    noise
                }
            })
            .collect()
    }

    #[test]
    fn finds_injected_burst() {
        for seed in 0..5 {
            let x = trial_with_burst(seed, Some((850.0, 1400.0)));
            let onset = estimate_speech_onset(&x, 512.0, 1.0, &OnsetOptions::default()).unwrap();
            assert!((onset - 850.0).abs() <= 30.0, "seed {seed}: onset {onset}");
        }
    }

    #[test]
    fn flat_emg_has_no_onset() {
        let x = trial_with_burst(3, None);
        assert_eq!(estimate_speech_onset(&x, 512.0, 1.0, &OnsetOptions::default()), None);
    }

    #[test]
    fn short_burst_is_ignored() {
        let x = trial_with_burst(4, Some((850.0, 910.0)));
        assert_eq!(estimate_speech_onset(&x, 512.0, 1.0, &OnsetOptions::default()), None);
    }

    #[test]
    fn envelope_of_constant() {
        let env = rms_envelope(&[2.0; 10], 4);
        assert!(env.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }
}
