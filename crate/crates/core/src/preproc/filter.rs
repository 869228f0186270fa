//! Zero-phase Butterworth band-pass filtering.
//!
//! The band-pass is a 4th-order Butterworth high-pass cascaded with a
//! 4th-order Butterworth low-pass, each realized as two biquads designed by
//! the bilinear transform with frequency pre-warping. [`BandpassFilter::apply`]
//! runs the cascade forward and backward, so the effective magnitude response
//! is `|H(f)|²` with zero phase.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Q factors of the two second-order sections of a 4th-order Butterworth.
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_5];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cos) / a0;
        Self {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn highpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b1 = (1.0 + cos) / a0;
        Self {
            b: [b1 / 2.0, -b1, b1 / 2.0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    /// Filters `x` in place (transposed direct form II) from rest.
    fn run(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[0] * y + s2;
            s2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }

    fn response(&self, f: f64, fs: f64) -> f64 {
        // |H(e^{jw})|
        let w = 2.0 * PI * f / fs;
        let (z1r, z1i) = (w.cos(), -w.sin());
        let (z2r, z2i) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let nr = self.b[0] + self.b[1] * z1r + self.b[2] * z2r;
        let ni = self.b[1] * z1i + self.b[2] * z2i;
        let dr = 1.0 + self.a[0] * z1r + self.a[1] * z2r;
        let di = self.a[0] * z1i + self.a[1] * z2i;
        ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    sample_rate: f64,
    low_hz: f64,
    high_hz: f64,
    sections: Vec<Biquad>,
}

impl BandpassFilter {
    pub fn new(sample_rate: f64, low_hz: f64, high_hz: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("sample rate must be positive, got {sample_rate}")));
        }
        if !(low_hz > 0.0 && low_hz < high_hz) {
            return Err(Error::InvalidArgument(format!(
                "band edges must satisfy 0 < low < high, got ({low_hz}, {high_hz})"
            )));
        }
        if high_hz >= sample_rate / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "high edge {high_hz} Hz must be below Nyquist ({} Hz)",
                sample_rate / 2.0
            )));
        }
        let mut sections = Vec::with_capacity(4);
        for q in BUTTERWORTH4_Q {
            sections.push(Biquad::highpass(low_hz, sample_rate, q));
        }
        for q in BUTTERWORTH4_Q {
            sections.push(Biquad::lowpass(high_hz, sample_rate, q));
        }
        Ok(Self {
            sample_rate,
            low_hz,
            high_hz,
            sections,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn band(&self) -> (f64, f64) {
        (self.low_hz, self.high_hz)
    }

    /// Magnitude response of the forward-backward filter at `f` Hz.
    pub fn zero_phase_gain(&self, f: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.response(f, self.sample_rate))
            .product::<f64>()
            .powi(2)
    }

    fn run_cascade(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Zero-phase filtering with mirror extension at both ends.
    ///
    /// The mean is removed before filtering (the high-pass rejects it anyway)
    /// and the cascade starts from rest. Starting from the steady state of the
    /// first sample instead, or padding with the usual odd extension, feeds a
    /// step into the 0.1 Hz high-pass whose transient lasts several seconds,
    /// longer than an epoch.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return vec![0.0; n];
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let pad = n - 1;
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| x[i] - mean));
        ext.extend(x.iter().map(|v| v - mean));
        ext.extend((1..=pad).map(|i| x[n - 1 - i] - mean));
        self.run_cascade(&mut ext);
        ext.reverse();
        self.run_cascade(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}
