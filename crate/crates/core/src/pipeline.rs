//! End-to-end orchestration: raw epochs → preprocessing → spectral tensor →
//! rank selection → artifact labeling → clusters, plus the BSS-CCA baseline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{
    control_cycle, make_clusters_from, ArtifactLabeling, ClusterSet, EmgReference, EmgSummary, GuardOptions, Thresholds,
    TimeDomainAverage,
};
use crate::bsscca::{bss_cca_subject, DEFAULT_N};
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, SubjectResult};
use crate::model_selection::{diffit_ratios, diffit_select, fit_curve_models, FitCurve, DEFAULT_RANK_BOUNDS};
use crate::preproc::{
    bandpass, build_spectral_tensor, epoch, fill_speech_onsets, reject_and_baseline, rereference, resample_dataset,
    Channel, ChannelRole, EpochWindow, EpochedDataset, OnsetOptions, TfOptions, TARGET_SAMPLE_RATE,
};
use crate::synth::{SynthSession, TruthAverages, TruthSidecar};
use crate::tensor::{CpOptions, FitReport, KruskalModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub epoch: EpochWindow,
    pub bandpass_hz: (f64, f64),
    pub resample_hz: f64,
    pub onset: OnsetOptions,
    pub tf: TfOptions,
    pub rank_bounds: (usize, usize),
    pub cp: CpOptions,
    pub thresholds: Thresholds,
    pub emg_summary: EmgSummary,
    pub guard: GuardOptions,
    pub bss_cca_n: f64,
    pub eval: EvalOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            epoch: EpochWindow::default(),
            bandpass_hz: (0.1, 30.0),
            resample_hz: TARGET_SAMPLE_RATE,
            onset: OnsetOptions::default(),
            tf: TfOptions::default(),
            rank_bounds: DEFAULT_RANK_BOUNDS,
            cp: CpOptions::default(),
            thresholds: Thresholds::default(),
            emg_summary: EmgSummary::default(),
            guard: GuardOptions::default(),
            bss_cca_n: DEFAULT_N,
            eval: EvalOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.rank_bounds.0 < 1 || self.rank_bounds.0 + 2 > self.rank_bounds.1 {
            return bad("rank bounds must satisfy 1 <= lower and lower + 2 <= upper");
        }
        if !(self.bandpass_hz.0 > 0.0 && self.bandpass_hz.0 < self.bandpass_hz.1) {
            return bad("band-pass edges must satisfy 0 < low < high");
        }
        if self.resample_hz <= 0.0 {
            return bad("resample rate must be positive");
        }
        if self.eval.emg_windows_ms.is_empty() || self.eval.validation_windows_ms.is_empty() {
            return bad("evaluation windows must be non-empty");
        }
        let windows = self.eval.emg_windows_ms.iter().chain(&self.eval.validation_windows_ms);
        if windows.clone().any(|w| !(w.0 < w.1)) {
            return bad("evaluation windows must have start < end");
        }
        if self.bss_cca_n <= 0.0 {
            return bad("BSS-CCA n must be positive");
        }
        self.tf.validate()
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Rejection, baseline, band-pass, re-reference, resample, and onset
/// estimation for trials without a marked onset.
pub fn preprocess(raw: &EpochedDataset, cfg: &PipelineConfig) -> Result<EpochedDataset> {
    let mut ds = preprocess_linear(raw, cfg)?;
    let filled = fill_speech_onsets(&mut ds, &cfg.onset)?;
    tracing::debug!(subject = %ds.subject_id, filled, "estimated speech onsets");
    Ok(ds)
}

/// The linear part of [`preprocess`], shared with the ground-truth path.
fn preprocess_linear(raw: &EpochedDataset, cfg: &PipelineConfig) -> Result<EpochedDataset> {
    let ds = reject_and_baseline(raw);
    let ds = bandpass(&ds, cfg.bandpass_hz.0, cfg.bandpass_hz.1)?;
    let ds = rereference(&ds)?;
    resample_dataset(&ds, cfg.resample_hz)
}

/// Rank selection and the selected model for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub subject_id: String,
    pub selected_rank: usize,
    pub curve: Vec<(usize, f64)>,
    pub ratios: Vec<(usize, f64)>,
    pub model: KruskalModel,
    pub fit: FitReport,
    pub frame_times_ms: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    /// EEG channels in channel-mode order.
    pub channels: Vec<Channel>,
    pub emg_reference: EmgReference,
}

pub fn decompose(ds: &EpochedDataset, cfg: &PipelineConfig) -> Result<Decomposition> {
    let onset = ds
        .mean_onset_ms()
        .ok_or_else(|| Error::DegenerateInput(format!("subject {} has no speech onsets", ds.subject_id)))?;
    let (eeg, emg) = build_spectral_tensor(ds, &cfg.tf)?;
    let (lo, hi) = cfg.rank_bounds;
    let mut models = fit_curve_models(&eeg.tensor, lo, hi, &cfg.cp)?;
    let curve = FitCurve::new(
        models
            .iter()
            .enumerate()
            .map(|(i, (_, rep))| (lo + i, rep.fit))
            .collect(),
    )?;
    let rank = diffit_select(&curve)?;
    let ratios = diffit_ratios(&curve)?;
    let (model, fit) = models.swap_remove(rank - lo);
    tracing::info!(subject = %ds.subject_id, rank, fit = fit.fit, "selected rank");
    Ok(Decomposition {
        subject_id: ds.subject_id.clone(),
        selected_rank: rank,
        curve: curve.entries().to_vec(),
        ratios,
        model,
        fit,
        frame_times_ms: eeg.frame_times_ms.clone(),
        freqs_hz: eeg.freqs_hz.clone(),
        channels: ds.eeg_channels().into_iter().cloned().collect(),
        emg_reference: EmgReference::from_tensor(&emg, onset, cfg.emg_summary)?,
    })
}

/// Earliest onset of the subject: the end of the guard's pre-onset segment.
pub fn pre_onset_ms(ds: &EpochedDataset) -> Result<f64> {
    ds.earliest_onset_ms()
        .ok_or_else(|| Error::DegenerateInput(format!("subject {} has no speech onsets", ds.subject_id)))
}

/// Automatic labeling followed by the control cycle.
pub fn detect(cluster1: &TimeDomainAverage, pre_onset_ms: f64, dec: &Decomposition, cfg: &PipelineConfig) -> Result<ArtifactLabeling> {
    let labeling = ArtifactLabeling::new(dec.model.clone(), dec.emg_reference.clone(), cfg.thresholds)?;
    control_cycle(cluster1, &labeling, pre_onset_ms, &cfg.guard)
}

/// What the cleaning stage keeps per subject: the clusters plus the inputs
/// the evaluation and re-clustering need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectClusters {
    pub subject_id: String,
    pub clusters: ClusterSet,
    /// Trial-averaged bipolar lip EMG.
    pub emg: Vec<f64>,
    pub onsets_ms: Vec<f64>,
    pub pre_onset_ms: f64,
}

impl SubjectClusters {
    pub fn cluster1(&self) -> TimeDomainAverage {
        TimeDomainAverage {
            data: self.clusters.cluster1.clone(),
            sample_rate: self.clusters.sample_rate,
            pre_stimulus_s: self.clusters.pre_stimulus_s,
        }
    }

    /// Recomputes the clusters for a (possibly relabeled) labeling.
    pub fn recluster(&self, labeling: &ArtifactLabeling) -> Result<Self> {
        Ok(Self {
            clusters: make_clusters_from(&self.cluster1(), labeling)?,
            ..self.clone()
        })
    }
}

pub fn clean(ds: &EpochedDataset, labeling: &ArtifactLabeling) -> Result<SubjectClusters> {
    let c1 = TimeDomainAverage::eeg(ds)?;
    if c1.data.nrows() != labeling.model.dims().1 {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} EEG channels, model has {}",
            c1.data.nrows(),
            labeling.model.dims().1
        )));
    }
    let emg = ds.channel_index(ChannelRole::Emg)?;
    Ok(SubjectClusters {
        subject_id: ds.subject_id.clone(),
        clusters: make_clusters_from(&c1, labeling)?,
        emg: ds.average_rows(&[emg])?.row(0).iter().copied().collect(),
        onsets_ms: ds.onsets_ms(),
        pre_onset_ms: pre_onset_ms(ds)?,
    })
}

/// BSS-CCA trial averages for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub subject_id: String,
    pub cleaned: DMatrix<f64>,
    pub artifact: DMatrix<f64>,
    pub marked: Vec<usize>,
}

pub fn baseline(ds: &EpochedDataset, cfg: &PipelineConfig) -> Result<BaselineResult> {
    let r = bss_cca_subject(ds, cfg.bss_cca_n)?;
    Ok(BaselineResult {
        subject_id: ds.subject_id.clone(),
        cleaned: r.cleaned.data,
        artifact: r.artifact.data,
        marked: r.marked,
    })
}

pub fn subject_result(clusters: &SubjectClusters, bss: Option<&BaselineResult>) -> SubjectResult {
    SubjectResult {
        cpd: clusters.clusters.clone(),
        bss: bss.map(|b| (b.cleaned.clone(), b.artifact.clone())),
        emg: clusters.emg.clone(),
        onsets_ms: clusters.onsets_ms.clone(),
    }
}

/// Every stage's output for one subject.
#[derive(Debug, Clone)]
pub struct SubjectRun {
    pub decomposition: Decomposition,
    pub labeling: ArtifactLabeling,
    pub clusters: SubjectClusters,
    pub baseline: BaselineResult,
}

pub fn run_subject(raw: &EpochedDataset, cfg: &PipelineConfig) -> Result<SubjectRun> {
    let ds = preprocess(raw, cfg)?;
    let decomposition = decompose(&ds, cfg)?;
    let c1 = TimeDomainAverage::eeg(&ds)?;
    let labeling = detect(&c1, pre_onset_ms(&ds)?, &decomposition, cfg)?;
    let clusters = clean(&ds, &labeling)?;
    let baseline = baseline(&ds, cfg)?;
    Ok(SubjectRun {
        decomposition,
        labeling,
        clusters,
        baseline,
    })
}

/// Raw epochs of a synthetic session (no onsets marked, nothing rejected
/// beyond truncation).
pub fn synth_epochs(session: &SynthSession, cfg: &PipelineConfig) -> Result<EpochedDataset> {
    epoch(&session.recording, &session.behavior, cfg.epoch, &session.subject_id)
}

/// Ground-truth brain and artifact signals pushed through the same linear
/// preprocessing as the recording and averaged over the accepted trials.
pub fn truth_averages(session: &SynthSession, cfg: &PipelineConfig) -> Result<TruthAverages> {
    let average = |m: &DMatrix<f64>| -> Result<TimeDomainAverage> {
        let rec = session.with_samples(m.clone())?;
        let raw = epoch(&rec, &session.behavior, cfg.epoch, &session.subject_id)?;
        TimeDomainAverage::eeg(&preprocess_linear(&raw, cfg)?)
    };
    let artifact = average(&session.truth.artifact)?;
    let clean = average(&session.truth.clean_brain)?;
    let accepted: Vec<f64> = session
        .behavior
        .iter()
        .zip(&session.truth.onsets_ms)
        .filter(|(b, _)| **b == crate::preproc::Behavior::Correct)
        .map(|(_, &o)| o)
        .collect();
    Ok(TruthAverages {
        artifact: artifact.data,
        clean_brain: clean.data,
        sample_rate: artifact.sample_rate,
        pre_stimulus_s: artifact.pre_stimulus_s,
        onsets_ms: accepted,
    })
}

pub fn truth_sidecar(session: &SynthSession, cfg: &PipelineConfig) -> Result<TruthSidecar> {
    Ok(TruthSidecar {
        subject_id: session.subject_id.clone(),
        onsets_ms: session.truth.onsets_ms.clone(),
        topographies: session.truth.topographies.clone(),
        averages: truth_averages(session, cfg)?,
    })
}
