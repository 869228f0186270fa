//! Complex Morlet time–frequency magnitude or power.
//!
//! The wavelet is defined in the frequency domain as
//! `Ψ̂(ν) = 2·exp(−(ν − f)² / 2σ_f²)` for `ν > 0` (zero otherwise), with
//! `σ_f = f / cycles`. It is analytic and scaled so that a cosine of
//! amplitude `A` at `f` has magnitude `A`. Convolution is done by FFT with
//! enough zero padding to avoid wrap-around. When the frame hop is a whole
//! number of samples, the filtered spectrum is folded so the inverse FFT only
//! produces the frame samples.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wavelet support in standard deviations (time and frequency).
const SUPPORT_SD: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfOptions {
    pub freqs_hz: Vec<f64>,
    pub cycles: f64,
    pub frame_step_ms: f64,
    /// Analysis span relative to the stimulus, ms; frames start at `span.0`.
    pub span_ms: (f64, f64),
    pub measure: TfMeasure,
}

/// What each tensor entry holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfMeasure {
    /// `|W(t, f)|`
    #[default]
    Magnitude,
    /// `|W(t, f)|²`; adds across independent sources in expectation.
    Power,
}

impl Default for TfOptions {
    fn default() -> Self {
        Self {
            freqs_hz: (1..=30).map(f64::from).collect(),
            cycles: 7.0,
            frame_step_ms: 31.25,
            span_ms: (0.0, 2000.0),
            measure: TfMeasure::default(),
        }
    }
}

impl TfOptions {
    pub fn frame_times_ms(&self) -> Vec<f64> {
        let n = ((self.span_ms.1 - self.span_ms.0) / self.frame_step_ms + 1e-9).floor() as usize;
        (0..n)
            .map(|m| self.span_ms.0 + m as f64 * self.frame_step_ms)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.freqs_hz.is_empty() || self.freqs_hz.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidArgument("frequencies must be positive and non-empty".into()));
        }
        if !(self.cycles > 0.0) || !(self.frame_step_ms > 0.0) {
            return Err(Error::InvalidArgument("cycles and frame step must be positive".into()));
        }
        if self.frame_times_ms().is_empty() {
            return Err(Error::InvalidArgument(format!(
                "span {:?} ms holds no frame of {} ms",
                self.span_ms, self.frame_step_ms
            )));
        }
        Ok(())
    }
}

struct Band {
    first_bin: usize,
    gains: Vec<f64>,
}

/// Precomputed transform for signals of one length and rate.
pub struct MorletTransform {
    n: usize,
    len: usize,
    fold: usize,
    first_sample: usize,
    frame_index: Vec<usize>,
    bands: Vec<Band>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    freqs: Vec<f64>,
    measure: TfMeasure,
}

impl MorletTransform {
    /// `n` samples at `fs`, with stimulus at `pre_s` seconds into the signal.
    pub fn new(n: usize, fs: f64, pre_s: f64, opts: &TfOptions) -> Result<Self> {
        opts.validate()?;
        let times = opts.frame_times_ms();
        let samples: Vec<f64> = times.iter().map(|t| (pre_s + t / 1000.0) * fs).collect();
        let first = samples[0].round();
        let last = samples[samples.len() - 1].round();
        if first < 0.0 || last >= n as f64 {
            return Err(Error::InvalidArgument(format!(
                "analysis span {:?} ms falls outside the {n}-sample trial",
                opts.span_ms
            )));
        }
        let hop = opts.frame_step_ms * fs / 1000.0;
        let decim = if (hop - hop.round()).abs() < 1e-9 && hop >= 1.0 {
            hop.round() as usize
        } else {
            1
        };
        let first_sample = first as usize;
        let frame_index: Vec<usize> = samples
            .iter()
            .map(|s| (s.round() as usize - first_sample) / decim)
            .collect();
        let f_min = opts.freqs_hz.iter().copied().fold(f64::INFINITY, f64::min);
        let sigma_t_max = opts.cycles / (2.0 * PI * f_min);
        let pad = (SUPPORT_SD * sigma_t_max * fs).ceil() as usize;
        let fold = (n + pad).div_ceil(decim).next_power_of_two();
        let len = fold * decim;

        let bin_hz = fs / len as f64;
        let bands = opts
            .freqs_hz
            .iter()
            .map(|&f| {
                let sigma_f = f / opts.cycles;
                let lo = (((f - SUPPORT_SD * sigma_f) / bin_hz).ceil().max(1.0)) as usize;
                let hi = (((f + SUPPORT_SD * sigma_f) / bin_hz).floor() as usize).min(len / 2);
                let gains = (lo..=hi)
                    .map(|k| {
                        let d = k as f64 * bin_hz - f;
                        2.0 * (-d * d / (2.0 * sigma_f * sigma_f)).exp()
                    })
                    .collect();
                Band { first_bin: lo, gains }
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            len,
            fold,
            first_sample,
            frame_index,
            bands,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(fold),
            freqs: opts.freqs_hz.clone(),
            measure: opts.measure,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frame_index.len()
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    /// Adds `|W(t_m, f_k)|` (or its square) into `out[m * n_freqs + k]`.
    pub fn accumulate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "transform built for {} samples, got {}",
                self.n,
                x.len()
            )));
        }
        let nf = self.n_freqs();
        debug_assert_eq!(out.len(), self.n_frames() * nf);
        let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spec.resize(self.len, Complex64::new(0.0, 0.0));
        self.forward.process(&mut spec);
        let mut folded = vec![Complex64::new(0.0, 0.0); self.fold];
        let scale = 1.0 / self.len as f64;
        let shift = 2.0 * PI * self.first_sample as f64 / self.len as f64;
        for (k_idx, band) in self.bands.iter().enumerate() {
            folded.fill(Complex64::new(0.0, 0.0));
            for (off, &g) in band.gains.iter().enumerate() {
                let k = band.first_bin + off;
                // move the first frame sample to output index 0
                let phase = Complex64::from_polar(1.0, shift * (k % self.len) as f64);
                folded[k % self.fold] += spec[k] * g * phase;
            }
            self.inverse.process(&mut folded);
            for (m, &q) in self.frame_index.iter().enumerate() {
                let mag = folded[q].norm() * scale;
                out[m * nf + k_idx] += match self.measure {
                    TfMeasure::Magnitude => mag,
                    TfMeasure::Power => mag * mag,
                };
            }
        }
        Ok(())
    }

    /// One signal's transform as a `frames × freqs` row-major vector.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_frames() * self.n_freqs()];
        self.accumulate(x, &mut out)?;
        Ok(out)
    }
}
