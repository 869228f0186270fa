//! BSS-CCA baseline: blind source separation by canonical correlation
//! between the signal and its one-sample delay, with a band-power rule for
//! muscle components.
//!
//! Muscle activity is weakly autocorrelated, so it ends up in the sources
//! with the lowest lag-1 canonical correlation. A source is marked as muscle
//! when its mean power in 15–30 Hz is at least `1/n` of its mean power in
//! 0–15 Hz.

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::artifact::TimeDomainAverage;
use crate::error::{Error, Result};
use crate::preproc::{ChannelRole, EpochedDataset};

pub const DEFAULT_N: f64 = 7.0;

/// Fraction of variance kept when the covariance is rank-deficient.
const KEEP_VARIANCE: f64 = 0.999;

/// Eigenvalues below this fraction of the largest count as rank deficiency.
const RANK_TOL: f64 = 1e-10;

pub const EEG_BAND_HZ: (f64, f64) = (0.0, 15.0);
pub const EMG_BAND_HZ: (f64, f64) = (15.0, 30.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcaSources {
    /// components × time
    pub sources: DMatrix<f64>,
    /// Lag-1 canonical correlation per component, descending.
    pub autocorrs: Vec<f64>,
    /// channels × components
    pub mixing: DMatrix<f64>,
    /// components × channels
    pub unmixing: DMatrix<f64>,
}

pub fn cca_bss(x: &DMatrix<f64>) -> Result<CcaSources> {
    let (c, t) = x.shape();
    if c == 0 || t < 2 * c || t < 3 {
        return Err(Error::InvalidArgument(format!(
            "CCA needs at least 2 × channels samples, got {c} channels × {t} samples"
        )));
    }
    let means: Vec<f64> = x.row_iter().map(|r| r.sum() / t as f64).collect();
    let xc = DMatrix::from_fn(c, t, |i, j| x[(i, j)] - means[i]);
    let cxx = (&xc * xc.transpose()) / t as f64;
    let eig = SymmetricEigen::new(cxx);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    if !(lmax > 0.0) {
        return Err(Error::DegenerateInput("all channels have zero variance".into()));
    }
    let full_rank = eig.eigenvalues[order[c - 1]] > RANK_TOL * lmax;
    let k = if full_rank {
        c
    } else {
        let total: f64 = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).sum();
        let mut acc = 0.0;
        let mut k = 0;
        for &i in &order {
            acc += eig.eigenvalues[i].max(0.0);
            k += 1;
            if acc >= KEEP_VARIANCE * total {
                break;
            }
        }
        tracing::debug!(channels = c, kept = k, "rank-deficient covariance, reduced by PCA");
        k
    };
    // whitening: k × c
    let whiten = DMatrix::from_fn(k, c, |r, ch| {
        let i = order[r];
        eig.eigenvectors[(ch, i)] / eig.eigenvalues[i].sqrt()
    });
    let dewhiten = DMatrix::from_fn(c, k, |ch, r| {
        let i = order[r];
        eig.eigenvectors[(ch, i)] * eig.eigenvalues[i].sqrt()
    });
    let z = &whiten * &xc;
    let z0 = z.columns(1, t - 1);
    let z1 = z.columns(0, t - 1);
    let cross = (z0 * z1.transpose()) / (t - 1) as f64;
    let svd = cross.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD of the lag-1 cross-covariance failed".into()))?;
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u_sorted = DMatrix::from_fn(k, k, |r, col| u[(r, idx[col])]);
    let autocorrs: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i].min(1.0)).collect();
    let unmixing = u_sorted.transpose() * whiten;
    let mixing = dewhiten * u_sorted;
    let sources = &unmixing * x;
    Ok(CcaSources {
        sources,
        autocorrs,
        mixing,
        unmixing,
    })
}

/// Welch power spectral density with Hann windows, `segment_s` long and 50%
/// overlap, per-segment mean removal. Returns `(freqs_hz, psd)`. Signals
/// shorter than a segment use one segment of their own length.
pub fn welch_psd(x: &[f64], fs: f64, segment_s: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let seg = ((segment_s * fs).round() as usize).clamp(1, n.max(1));
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let step = (seg / 2).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|i| {
            if seg == 1 {
                1.0
            } else {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos()
            }
        })
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut psd = vec![0.0; n_bins];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= n {
        let s = &x[start..start + seg];
        let mean = s.iter().sum::<f64>() / seg as f64;
        for (b, (&v, &w)) in buf.iter_mut().zip(s.iter().zip(&window)) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            *p += buf[k].norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (fs * wss * count as f64);
    for (k, p) in psd.iter_mut().enumerate() {
        *p *= scale;
        // one-sided: double everything except DC and Nyquist
        if k != 0 && !(seg.is_multiple_of(2) && k == seg / 2) {
            *p *= 2.0;
        }
    }
    let freqs = (0..n_bins).map(|k| k as f64 * fs / seg as f64).collect();
    (freqs, psd)
}

/// Mean PSD over bins in `[lo, hi)`, or `[lo, hi]` when `inclusive_hi`.
fn band_mean(freqs: &[f64], psd: &[f64], lo: f64, hi: f64, inclusive_hi: bool) -> f64 {
    let vals: Vec<f64> = freqs
        .iter()
        .zip(psd)
        .filter(|(&f, _)| f >= lo && (f < hi || (inclusive_hi && f <= hi)))
        .map(|(_, &p)| p)
        .collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// `(P_emg, P_eeg)`: mean PSD in 15–30 Hz (inclusive) and 0–<15 Hz.
pub fn band_powers(x: &[f64], fs: f64) -> (f64, f64) {
    let (freqs, psd) = welch_psd(x, fs, 1.0);
    (
        band_mean(&freqs, &psd, EMG_BAND_HZ.0, EMG_BAND_HZ.1, true),
        band_mean(&freqs, &psd, EEG_BAND_HZ.0, EEG_BAND_HZ.1, false),
    )
}

/// The muscle rule: EMG-band power equals or exceeds `1/n` of EEG-band power.
pub fn is_muscle(p_emg: f64, p_eeg: f64, n: f64) -> bool {
    p_emg >= p_eeg / n
}

pub fn mark_muscle_components(s: &CcaSources, sample_rate: f64, n: f64) -> Result<Vec<usize>> {
    if sample_rate < 60.0 {
        return Err(Error::InvalidArgument(format!(
            "band-power rule needs at least 60 Hz, got {sample_rate}"
        )));
    }
    Ok(s.sources
        .row_iter()
        .enumerate()
        .filter(|(_, row)| {
            let v: Vec<f64> = row.iter().copied().collect();
            let (p_emg, p_eeg) = band_powers(&v, sample_rate);
            is_muscle(p_emg, p_eeg, n)
        })
        .map(|(i, _)| i)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BssCcaResult {
    pub cleaned: DMatrix<f64>,
    pub artifact: DMatrix<f64>,
    pub marked: Vec<usize>,
    pub sources: CcaSources,
}

pub fn bss_cca_clean(x: &DMatrix<f64>, sample_rate: f64, n: f64) -> Result<BssCcaResult> {
    let sources = cca_bss(x)?;
    let marked = mark_muscle_components(&sources, sample_rate, n)?;
    let mut artifact = DMatrix::zeros(x.nrows(), x.ncols());
    for &i in &marked {
        artifact += sources.mixing.column(i) * sources.sources.row(i);
    }
    let cleaned = x - &artifact;
    Ok(BssCcaResult {
        cleaned,
        artifact,
        marked,
        sources,
    })
}

/// Trial averages of the cleaned data and of the removed artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct BssCcaSubject {
    pub cleaned: TimeDomainAverage,
    pub artifact: TimeDomainAverage,
    pub marked: Vec<usize>,
}

/// Runs BSS-CCA on the concatenated accepted trials of the EEG channels.
pub fn bss_cca_subject(ds: &EpochedDataset, n: f64) -> Result<BssCcaSubject> {
    let rows = ds.channel_indices(ChannelRole::Eeg);
    if rows.is_empty() {
        return Err(Error::MissingChannel("EEG".into()));
    }
    let ns = ds.n_samples();
    let trials: Vec<_> = ds.accepted().collect();
    if trials.is_empty() {
        return Err(Error::DegenerateInput("no accepted trials".into()));
    }
    let x = DMatrix::from_fn(rows.len(), ns * trials.len(), |c, j| trials[j / ns].data[(rows[c], j % ns)]);
    let res = bss_cca_clean(&x, ds.sample_rate, n)?;
    let average = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(rows.len(), ns);
        for tr in 0..trials.len() {
            out += m.columns(tr * ns, ns);
        }
        TimeDomainAverage {
            data: out / trials.len() as f64,
            sample_rate: ds.sample_rate,
            pre_stimulus_s: ds.pre_stimulus_s,
        }
    };
    Ok(BssCcaSubject {
        cleaned: average(&res.cleaned),
        artifact: average(&res.artifact),
        marked: res.marked,
    })
}
