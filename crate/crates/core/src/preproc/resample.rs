//! Windowed-sinc resampling between arbitrary rates.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Zero crossings of the sinc kernel on each side of the center, in units of
/// the (lower) output Nyquist period.
const HALF_ZEROS: f64 = 16.0;

/// Cutoff as a fraction of the lower of the two Nyquist rates.
const CUTOFF: f64 = 0.9;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos()
}

/// Mirror index into `0..n` (edge sample not repeated).
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Number of output samples for `n` input samples.
pub fn resampled_len(n: usize, from_hz: f64, to_hz: f64) -> usize {
    (n as f64 * to_hz / from_hz).round() as usize
}

/// Resamples `x` from `from_hz` to `to_hz`. Output sample `m` sits at time
/// `m / to_hz`, so both series start at the same instant. Equal rates return
/// the input unchanged.
pub fn resample(x: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>> {
    if !(from_hz > 0.0 && to_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample rates must be positive, got {from_hz} -> {to_hz}"
        )));
    }
    if from_hz == to_hz || x.is_empty() {
        return Ok(x.to_vec());
    }
    let n = x.len();
    let ratio = to_hz / from_hz;
    // cutoff in cycles per input sample
    let fc = 0.5 * CUTOFF * ratio.min(1.0);
    let half = HALF_ZEROS / (2.0 * fc);
    let out_len = resampled_len(n, from_hz, to_hz);
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let center = m as f64 / ratio;
        let lo = (center - half).ceil() as isize;
        let hi = (center + half).floor() as isize;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in lo..=hi {
            let d = center - k as f64;
            let w = 2.0 * fc * sinc(2.0 * fc * d) * blackman(d / half);
            acc += w * x[reflect(k, n)];
            norm += w;
        }
        // normalize so DC passes exactly regardless of the kernel phase
        out.push(acc / norm);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_rates_match() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(resample(&x, 512.0, 512.0).unwrap(), x);
    }

    #[test]
    fn downsample_preserves_5hz() {
        let (fs_in, fs_out) = (1024.0, 512.0);
        let x: Vec<f64> = (0..4096)
            .map(|i| (2.0 * PI * 5.0 * i as f64 / fs_in).sin())
            .collect();
        let y = resample(&x, fs_in, fs_out).unwrap();
        assert_eq!(y.len(), 2048);
        let mid = &y[256..1792];
        let amp = mid.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!((amp - 1.0).abs() < 0.02, "amplitude {amp}");
        // zero crossings (rising and falling) of a 5 Hz sine sit at multiples of 100 ms
        for (i, w) in y.windows(2).enumerate().skip(256).take(1536) {
            if w[0].signum() != w[1].signum() && w[0] != 0.0 {
                let t = (i as f64 + w[0] / (w[0] - w[1])) / fs_out;
                let nearest = (t * 10.0).round() / 10.0;
                assert!((t - nearest).abs() < 1e-3, "crossing at {t}");
            }
        }
    }

    #[test]
    fn upsample_then_down_roundtrip() {
        let x: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 7.0 * i as f64 / 500.0).cos()).collect();
        let up = resample(&x, 500.0, 512.0).unwrap();
        assert_eq!(up.len(), 1024);
        let back = resample(&up, 512.0, 500.0).unwrap();
        let err = x[100..900]
            .iter()
            .zip(&back[100..900])
            .fold(0.0_f64, |a, (p, q)| a.max((p - q).abs()));
        assert!(err < 0.01, "roundtrip error {err}");
    }

    #[test]
    fn length_arithmetic() {
        assert_eq!(resampled_len(2048, 512.0, 512.0), 2048);
        assert_eq!(resampled_len(4096, 1024.0, 512.0), 2048);
        assert_eq!(resampled_len(4000, 1000.0, 512.0), 2048);
    }
}
