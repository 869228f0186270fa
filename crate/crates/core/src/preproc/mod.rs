//! From continuous recordings to epoched, filtered, re-referenced trials and
//! the time × channel × frequency tensor.
//!
//! The stage order is fixed: epoch → reject → baseline → bandpass →
//! rereference → resample → tensor. Each dataset-level operation appends its
//! name to [`EpochedDataset::steps`].

mod filter;
mod onset;
mod resample;
mod spectral;

pub use filter::BandpassFilter;
pub use onset::{estimate_speech_onset, rms_envelope, OnsetOptions};
pub use resample::{resample, resampled_len};
pub use spectral::{MorletTransform, TfMeasure, TfOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

pub const TARGET_SAMPLE_RATE: f64 = 512.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelRole {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "EOG_upper")]
    EogUpper,
    #[serde(rename = "EOG_lower")]
    EogLower,
    #[serde(rename = "EMG_OOS")]
    EmgOos,
    #[serde(rename = "EMG_OOI")]
    EmgOoi,
    #[serde(rename = "REF")]
    Ref,
    #[serde(rename = "MASTOID_L")]
    MastoidL,
    #[serde(rename = "MASTOID_R")]
    MastoidR,
    /// Bipolar EOG (upper − lower), produced by [`rereference`].
    #[serde(rename = "EOG")]
    Eog,
    /// Bipolar lip EMG (OOS − OOI), produced by [`rereference`].
    #[serde(rename = "EMG")]
    Emg,
}

impl ChannelRole {
    pub fn label(self) -> &'static str {
        match self {
            ChannelRole::Eeg => "EEG",
            ChannelRole::EogUpper => "EOG_upper",
            ChannelRole::EogLower => "EOG_lower",
            ChannelRole::EmgOos => "EMG_OOS",
            ChannelRole::EmgOoi => "EMG_OOI",
            ChannelRole::Ref => "REF",
            ChannelRole::MastoidL => "MASTOID_L",
            ChannelRole::MastoidR => "MASTOID_R",
            ChannelRole::Eog => "EOG",
            ChannelRole::Emg => "EMG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub role: ChannelRole,
    /// 2-D scalp layout coordinates, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<(f64, f64)>,
}

impl Channel {
    pub fn new(name: impl Into<String>, role: ChannelRole) -> Self {
        Self {
            name: name.into(),
            role,
            position: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Fixation,
    Stimulus,
    SpeechOnset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMark {
    pub sample: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Correct,
    Incorrect,
    Missed,
    SelfRepair,
}

impl Behavior {
    pub fn label(self) -> &'static str {
        match self {
            Behavior::Correct => "correct",
            Behavior::Incorrect => "incorrect",
            Behavior::Missed => "missed",
            Behavior::SelfRepair => "self_repair",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecording {
    pub sample_rate: f64,
    pub channels: Vec<Channel>,
    /// channels × time, µV
    pub samples: DMatrix<f64>,
    pub events: Vec<EventMark>,
}

fn count_role(channels: &[Channel], role: ChannelRole) -> usize {
    channels.iter().filter(|c| c.role == role).count()
}

impl ContinuousRecording {
    pub fn new(
        sample_rate: f64,
        channels: Vec<Channel>,
        samples: DMatrix<f64>,
        events: Vec<EventMark>,
    ) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidData(format!("sample rate must be positive, got {sample_rate}")));
        }
        if samples.nrows() != channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} channels but {} sample rows",
                channels.len(),
                samples.nrows()
            )));
        }
        if let Some(e) = events.iter().find(|e| e.sample >= samples.ncols()) {
            return Err(Error::InvalidData(format!(
                "event at sample {} beyond recording length {}",
                e.sample,
                samples.ncols()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("recording contains non-finite samples".into()));
        }
        for (a, b) in [
            (ChannelRole::EogUpper, ChannelRole::EogLower),
            (ChannelRole::EmgOos, ChannelRole::EmgOoi),
        ] {
            let (na, nb) = (count_role(&channels, a), count_role(&channels, b));
            if na + nb > 0 && (na != 1 || nb != 1) {
                return Err(Error::InvalidData(format!(
                    "expected exactly one {} and one {} channel, got {na} and {nb}",
                    a.label(),
                    b.label()
                )));
            }
        }
        Ok(Self {
            sample_rate,
            channels,
            samples,
            events,
        })
    }

    pub fn stimulus_samples(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Stimulus)
            .map(|e| e.sample)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// channels × samples
    pub data: DMatrix<f64>,
    pub speech_onset_ms: Option<f64>,
    pub behavior: Behavior,
    /// Rejection reason; `None` for accepted trials.
    pub rejected: Option<String>,
}

impl Trial {
    pub fn is_accepted(&self) -> bool {
        self.rejected.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochedDataset {
    pub subject_id: String,
    pub sample_rate: f64,
    /// Seconds of data before the stimulus in each trial.
    pub pre_stimulus_s: f64,
    pub channels: Vec<Channel>,
    pub trials: Vec<Trial>,
    pub steps: Vec<String>,
}

impl EpochedDataset {
    pub fn n_samples(&self) -> usize {
        self.trials.first().map_or(0, |t| t.data.ncols())
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.is_accepted())
    }

    pub fn n_accepted(&self) -> usize {
        self.accepted().count()
    }

    pub fn channel_indices(&self, role: ChannelRole) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn channel_index(&self, role: ChannelRole) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.role == role)
            .ok_or_else(|| Error::MissingChannel(role.label().to_string()))
    }

    pub fn eeg_channels(&self) -> Vec<&Channel> {
        self.channels.iter().filter(|c| c.role == ChannelRole::Eeg).collect()
    }

    /// Time of sample `i` relative to the stimulus, ms.
    pub fn sample_time_ms(&self, i: usize) -> f64 {
        (i as f64 / self.sample_rate - self.pre_stimulus_s) * 1000.0
    }

    /// Mean over accepted trials of the given rows, as rows × samples.
    pub fn average_rows(&self, rows: &[usize]) -> Result<DMatrix<f64>> {
        let n = self.n_accepted();
        if n == 0 {
            return Err(Error::DegenerateInput("no accepted trials".into()));
        }
        let mut out = DMatrix::zeros(rows.len(), self.n_samples());
        for t in self.accepted() {
            for (o, &r) in rows.iter().enumerate() {
                let mut dst = out.row_mut(o);
                dst += t.data.row(r);
            }
        }
        Ok(out / n as f64)
    }

    /// Accepted-trial onsets, ms.
    pub fn onsets_ms(&self) -> Vec<f64> {
        self.accepted().filter_map(|t| t.speech_onset_ms).collect()
    }

    pub fn mean_onset_ms(&self) -> Option<f64> {
        let o = self.onsets_ms();
        (!o.is_empty()).then(|| o.iter().sum::<f64>() / o.len() as f64)
    }

    pub fn earliest_onset_ms(&self) -> Option<f64> {
        self.onsets_ms().into_iter().reduce(f64::min)
    }

    /// Checks the shape expected after the full preprocessing chain.
    pub fn validate_final(&self) -> Result<()> {
        let want = ((self.pre_stimulus_s + 3.0) * TARGET_SAMPLE_RATE).round() as usize;
        if self.sample_rate != TARGET_SAMPLE_RATE {
            return Err(Error::InvalidData(format!(
                "expected {TARGET_SAMPLE_RATE} Hz, dataset is at {} Hz",
                self.sample_rate
            )));
        }
        if let Some((i, t)) = self.trials.iter().enumerate().find(|(_, t)| t.data.ncols() != want) {
            return Err(Error::InvalidData(format!(
                "trial {i} has {} samples, expected {want}",
                t.data.ncols()
            )));
        }
        Ok(())
    }

    fn map_rows(&self, step: &str, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let mut out = self.clone();
        for t in &mut out.trials {
            let mut rows = Vec::with_capacity(t.data.nrows());
            for r in 0..t.data.nrows() {
                let row: Vec<f64> = t.data.row(r).iter().copied().collect();
                rows.push(f(&row)?);
            }
            let ncols = rows.first().map_or(0, Vec::len);
            t.data = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
        }
        out.steps.push(step.to_string());
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpochWindow {
    pub pre_s: f64,
    pub post_s: f64,
}

impl Default for EpochWindow {
    fn default() -> Self {
        Self { pre_s: 1.0, post_s: 3.0 }
    }
}

/// Cuts one epoch per stimulus mark. Trials whose window leaves the
/// recording are zero-filled and rejected as "truncated"; nothing else is
/// rejected yet.
pub fn epoch(
    rec: &ContinuousRecording,
    behavior: &[Behavior],
    window: EpochWindow,
    subject_id: &str,
) -> Result<EpochedDataset> {
    let stims = rec.stimulus_samples();
    if stims.is_empty() {
        return Err(Error::InvalidData("recording has no stimulus marks".into()));
    }
    if stims.len() != behavior.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} stimulus marks but {} behavior labels",
            stims.len(),
            behavior.len()
        )));
    }
    let fs = rec.sample_rate;
    let pre = (window.pre_s * fs).round() as usize;
    let post = (window.post_s * fs).round() as usize;
    let n_ch = rec.channels.len();
    let mut trials = Vec::with_capacity(stims.len());
    for (&s, &b) in stims.iter().zip(behavior) {
        let onset = rec
            .events
            .iter()
            .find(|e| e.kind == EventKind::SpeechOnset && e.sample > s && e.sample < s + post)
            .map(|e| (e.sample - s) as f64 / fs * 1000.0);
        let truncated = s < pre || s + post > rec.samples.ncols();
        let mut data = DMatrix::zeros(n_ch, pre + post);
        if !truncated {
            data.copy_from(&rec.samples.columns(s - pre, pre + post));
        }
        trials.push(Trial {
            data,
            speech_onset_ms: onset,
            behavior: b,
            rejected: truncated.then(|| "truncated".to_string()),
        });
    }
    Ok(EpochedDataset {
        subject_id: subject_id.to_string(),
        sample_rate: fs,
        pre_stimulus_s: window.pre_s,
        channels: rec.channels.clone(),
        trials,
        steps: vec!["epoch".into()],
    })
}

/// Rejects trials with a non-correct behavior and subtracts the per-channel
/// mean of the pre-stimulus window from every trial.
pub fn reject_and_baseline(ds: &EpochedDataset) -> EpochedDataset {
    let mut out = ds.clone();
    let pre = (ds.pre_stimulus_s * ds.sample_rate).round() as usize;
    for t in &mut out.trials {
        if t.rejected.is_none() && t.behavior != Behavior::Correct {
            t.rejected = Some(t.behavior.label().to_string());
        }
        if pre > 0 && t.data.ncols() >= pre {
            for mut row in t.data.row_iter_mut() {
                let mean = row.columns(0, pre).sum() / pre as f64;
                row.add_scalar_mut(-mean);
            }
        }
    }
    out.steps.push("reject".into());
    out.steps.push("baseline".into());
    out
}

/// [`epoch`] followed by [`reject_and_baseline`].
pub fn epoch_and_reject(
    rec: &ContinuousRecording,
    behavior: &[Behavior],
    window: EpochWindow,
    subject_id: &str,
) -> Result<EpochedDataset> {
    Ok(reject_and_baseline(&epoch(rec, behavior, window, subject_id)?))
}

/// Zero-phase band-pass of every channel of every trial.
pub fn bandpass(ds: &EpochedDataset, low_hz: f64, high_hz: f64) -> Result<EpochedDataset> {
    let filter = BandpassFilter::new(ds.sample_rate, low_hz, high_hz)?;
    ds.map_rows("bandpass", |x| Ok(filter.apply(x)))
}

/// Mastoid re-reference for EEG and bipolar EOG/EMG derivations.
///
/// Output channels are the EEG channels (in input order), then `EOG` and
/// `EMG`. Mastoid, reference and the raw bipolar-source channels are dropped,
/// so applying this twice fails on the missing mastoids.
pub fn rereference(ds: &EpochedDataset) -> Result<EpochedDataset> {
    let ml = ds.channel_index(ChannelRole::MastoidL)?;
    let mr = ds.channel_index(ChannelRole::MastoidR)?;
    let eu = ds.channel_index(ChannelRole::EogUpper)?;
    let el = ds.channel_index(ChannelRole::EogLower)?;
    let oos = ds.channel_index(ChannelRole::EmgOos)?;
    let ooi = ds.channel_index(ChannelRole::EmgOoi)?;
    let eeg = ds.channel_indices(ChannelRole::Eeg);
    let mut channels: Vec<Channel> = eeg.iter().map(|&i| ds.channels[i].clone()).collect();
    channels.push(Channel::new("EOG", ChannelRole::Eog));
    channels.push(Channel::new("EMG", ChannelRole::Emg));
    let trials = ds
        .trials
        .iter()
        .map(|t| {
            let n = t.data.ncols();
            let mastoid = (t.data.row(ml) + t.data.row(mr)) * 0.5;
            let mut data = DMatrix::zeros(eeg.len() + 2, n);
            for (o, &i) in eeg.iter().enumerate() {
                data.set_row(o, &(t.data.row(i) - &mastoid));
            }
            data.set_row(eeg.len(), &(t.data.row(eu) - t.data.row(el)));
            data.set_row(eeg.len() + 1, &(t.data.row(oos) - t.data.row(ooi)));
            Trial { data, ..t.clone() }
        })
        .collect();
    let mut steps = ds.steps.clone();
    steps.push("rereference".into());
    Ok(EpochedDataset {
        channels,
        trials,
        steps,
        ..ds.clone()
    })
}

/// Resamples every trial to `target_hz`.
pub fn resample_dataset(ds: &EpochedDataset, target_hz: f64) -> Result<EpochedDataset> {
    if ds.sample_rate < 60.0 {
        return Err(Error::InvalidData(format!(
            "source rate {} Hz is below 60 Hz",
            ds.sample_rate
        )));
    }
    let from = ds.sample_rate;
    let mut out = ds.map_rows("resample", |x| resample(x, from, target_hz))?;
    out.sample_rate = target_hz;
    Ok(out)
}

/// Fills missing speech onsets of accepted trials from the bipolar EMG.
/// Returns how many trials got an onset.
pub fn fill_speech_onsets(ds: &mut EpochedDataset, opts: &OnsetOptions) -> Result<usize> {
    let emg = ds.channel_index(ChannelRole::Emg)?;
    let (fs, pre) = (ds.sample_rate, ds.pre_stimulus_s);
    let mut filled = 0;
    for t in ds.trials.iter_mut().filter(|t| t.is_accepted() && t.speech_onset_ms.is_none()) {
        let row: Vec<f64> = t.data.row(emg).iter().copied().collect();
        t.speech_onset_ms = estimate_speech_onset(&row, fs, pre, opts);
        filled += usize::from(t.speech_onset_ms.is_some());
    }
    Ok(filled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTensor {
    /// (time frames, channels, frequency bins), trial-averaged magnitude or power.
    pub tensor: DenseTensor3,
    pub frame_times_ms: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    pub channel_names: Vec<String>,
}

impl SpectralTensor {
    /// Mean over frequency: one value per (frame, channel), frames × channels.
    pub fn time_course(&self) -> DMatrix<f64> {
        let (i, j, k) = self.tensor.dims();
        DMatrix::from_fn(i, j, |a, b| (0..k).map(|c| self.tensor.get(a, b, c)).sum::<f64>() / k as f64)
    }

    /// Mean over time: one value per (channel, bin), channels × bins.
    pub fn spectrum(&self) -> DMatrix<f64> {
        let (i, j, k) = self.tensor.dims();
        DMatrix::from_fn(j, k, |b, c| (0..i).map(|a| self.tensor.get(a, b, c)).sum::<f64>() / i as f64)
    }
}

fn spectral_tensor_for(ds: &EpochedDataset, rows: &[usize], opts: &TfOptions) -> Result<SpectralTensor> {
    let n_acc = ds.n_accepted();
    if n_acc == 0 {
        return Err(Error::DegenerateInput("no accepted trials".into()));
    }
    let tf = MorletTransform::new(ds.n_samples(), ds.sample_rate, ds.pre_stimulus_s, opts)?;
    let (nt, nf, nc) = (tf.n_frames(), tf.n_freqs(), rows.len());
    let mut acc = vec![vec![0.0; nt * nf]; nc];
    let mut row = vec![0.0; ds.n_samples()];
    for t in ds.accepted() {
        for (c, &r) in rows.iter().enumerate() {
            for (dst, v) in row.iter_mut().zip(t.data.row(r).iter()) {
                *dst = *v;
            }
            tf.accumulate(&row, &mut acc[c])?;
        }
    }
    let scale = 1.0 / n_acc as f64;
    let tensor = DenseTensor3::from_fn((nt, nc, nf), |m, c, k| acc[c][m * nf + k] * scale);
    Ok(SpectralTensor {
        tensor,
        frame_times_ms: opts.frame_times_ms(),
        freqs_hz: opts.freqs_hz.clone(),
        channel_names: rows.iter().map(|&r| ds.channels[r].name.clone()).collect(),
    })
}

/// Trial-averaged Morlet magnitude tensors for the EEG channels and for the
/// bipolar EMG channel.
pub fn build_spectral_tensor(ds: &EpochedDataset, opts: &TfOptions) -> Result<(SpectralTensor, SpectralTensor)> {
    let eeg = ds.channel_indices(ChannelRole::Eeg);
    if eeg.is_empty() {
        return Err(Error::MissingChannel("EEG".into()));
    }
    let emg = ds.channel_index(ChannelRole::Emg)?;
    Ok((spectral_tensor_for(ds, &eeg, opts)?, spectral_tensor_for(ds, &[emg], opts)?))
}
