//! Marking speech-artifact components and splitting the data into clusters.
//!
//! A component is an artifact when its time-mode factor follows the lip-EMG
//! envelope after speech onset and its frequency-mode factor follows the EMG
//! spectrum. The artifact part of the time-domain data (cluster 2) is the
//! projection of the trial average (cluster 1) onto the span of the artifact
//! components' channel loadings; cluster 3 is what is left.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pinv, PINV_RCOND};
use crate::preproc::{ChannelRole, EpochedDataset, SpectralTensor};
use crate::tensor::KruskalModel;

/// Centered product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "pearson inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs at least 3 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson r, with constant inputs mapped to 0 instead of an error.
fn pearson_or_zero(x: &[f64], y: &[f64]) -> Result<f64> {
    match pearson(x, y) {
        Err(Error::ZeroVariance) => Ok(0.0),
        r => r,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Artifact,
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CombineRule {
    /// Both correlations must reach their thresholds.
    #[default]
    And,
    /// Either correlation suffices.
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub temporal: f64,
    pub spectral: f64,
    pub rule: CombineRule,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            temporal: 0.7,
            spectral: 0.7,
            rule: CombineRule::And,
        }
    }
}

impl Thresholds {
    pub fn verdict(&self, temporal_corr: f64, spectral_corr: f64) -> Verdict {
        let t = temporal_corr.abs() >= self.temporal;
        let s = spectral_corr.abs() >= self.spectral;
        let hit = match self.rule {
            CombineRule::And => t && s,
            CombineRule::Or => t || s,
        };
        if hit {
            Verdict::Artifact
        } else {
            Verdict::Clean
        }
    }

    fn tightened(&self, step: f64) -> Self {
        Self {
            temporal: self.temporal + step,
            spectral: self.spectral + step,
            ..*self
        }
    }
}

/// The EMG reference the components are compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgReference {
    /// Envelope on the tensor's frame grid.
    pub time_course: Vec<f64>,
    /// Spectrum on the tensor's frequency bins.
    pub spectrum: Vec<f64>,
    pub frame_times_ms: Vec<f64>,
    /// Start of the temporal correlation window (the subject's mean onset).
    pub onset_ms: f64,
}

/// How the EMG time course and spectrum are taken from its tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmgSummary {
    /// Leading temporal and spectral factors of a rank-1 decomposition.
    #[default]
    Rank1,
    /// Mean over frequency and mean over time.
    Mean,
}

impl EmgReference {
    /// Time course and spectrum of a single-channel EMG tensor.
    pub fn from_tensor(emg: &SpectralTensor, onset_ms: f64, summary: EmgSummary) -> Result<Self> {
        let (_, nc, _) = emg.tensor.dims();
        if nc != 1 {
            return Err(Error::DimensionMismatch(format!(
                "EMG tensor must have one channel, has {nc}"
            )));
        }
        let (time_course, spectrum) = match summary {
            EmgSummary::Mean => (
                emg.time_course().column(0).iter().copied().collect(),
                emg.spectrum().row(0).iter().copied().collect(),
            ),
            EmgSummary::Rank1 => rank1_factors(&emg.tensor.unfold(0))?,
        };
        Ok(Self {
            time_course,
            spectrum,
            frame_times_ms: emg.frame_times_ms.clone(),
            onset_ms,
        })
    }

    /// Frame indices in `[onset, min(onset + 1000 ms, last frame)]`.
    pub fn window_frames(&self) -> Result<Vec<usize>> {
        let (start, end) = match (self.frame_times_ms.first(), self.frame_times_ms.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::DegenerateInput("empty frame grid".into())),
        };
        if !(self.onset_ms >= start && self.onset_ms <= end) {
            return Err(Error::OnsetOutsideTensor {
                onset_ms: self.onset_ms,
                start_ms: start,
                end_ms: end,
            });
        }
        let stop = (self.onset_ms + 1000.0).min(end);
        Ok(self
            .frame_times_ms
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= self.onset_ms && t <= stop)
            .map(|(i, _)| i)
            .collect())
    }
}

/// Leading left and right singular vectors of a frames × bins matrix,
/// signed so that both have a positive sum.
fn rank1_factors(m: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let svd = m.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("EMG SVD failed".into())),
    };
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::DegenerateInput("empty EMG tensor".into()))?;
    let mut time: Vec<f64> = u.column(k).iter().copied().collect();
    let mut spec: Vec<f64> = vt.row(k).iter().copied().collect();
    if spec.iter().sum::<f64>() < 0.0 {
        time.iter_mut().for_each(|v| *v = -*v);
        spec.iter_mut().for_each(|v| *v = -*v);
    }
    Ok((time, spec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    pub component_index: usize,
    pub temporal_corr: f64,
    pub spectral_corr: f64,
    pub spatial_topography: Vec<f64>,
    pub auto_verdict: Verdict,
    pub human_verdict: Option<Verdict>,
}

impl ComponentDiagnostics {
    pub fn effective_verdict(&self) -> Verdict {
        self.human_verdict.unwrap_or(self.auto_verdict)
    }
}

pub fn diagnose_components(
    m: &KruskalModel,
    emg: &EmgReference,
    thresholds: &Thresholds,
) -> Result<Vec<ComponentDiagnostics>> {
    let (ni, _, nk) = m.dims();
    if emg.time_course.len() != ni || emg.frame_times_ms.len() != ni {
        return Err(Error::DimensionMismatch(format!(
            "EMG time course has {} frames, model has {ni}",
            emg.time_course.len()
        )));
    }
    if emg.spectrum.len() != nk {
        return Err(Error::DimensionMismatch(format!(
            "EMG spectrum has {} bins, model has {nk}",
            emg.spectrum.len()
        )));
    }
    let frames = emg.window_frames()?;
    if frames.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "onset window holds {} frames, need at least 3",
            frames.len()
        )));
    }
    let emg_win: Vec<f64> = frames.iter().map(|&i| emg.time_course[i]).collect();
    (0..m.rank())
        .map(|r| {
            let time = m.column(0, r);
            let win: Vec<f64> = frames.iter().map(|&i| time[i]).collect();
            let temporal_corr = pearson_or_zero(&win, &emg_win)?;
            let spectral_corr = pearson_or_zero(&m.column(2, r), &emg.spectrum)?;
            Ok(ComponentDiagnostics {
                component_index: r,
                temporal_corr,
                spectral_corr,
                spatial_topography: m.column(1, r),
                auto_verdict: thresholds.verdict(temporal_corr, spectral_corr),
                human_verdict: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelStatus {
    #[default]
    Ok,
    /// The guard never passed; all automatic artifact verdicts were dropped.
    GuardFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactLabeling {
    pub model: KruskalModel,
    pub diagnostics: Vec<ComponentDiagnostics>,
    pub thresholds: Thresholds,
    pub control_cycle_rounds: usize,
    pub status: LabelStatus,
    pub reference: EmgReference,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ArtifactLabeling {
    pub fn new(model: KruskalModel, reference: EmgReference, thresholds: Thresholds) -> Result<Self> {
        let diagnostics = diagnose_components(&model, &reference, &thresholds)?;
        Ok(Self {
            model,
            diagnostics,
            thresholds,
            control_cycle_rounds: 0,
            status: LabelStatus::Ok,
            reference,
            warnings: Vec::new(),
        })
    }

    /// Components whose effective verdict is artifact, ascending.
    pub fn artifact_components(&self) -> Vec<usize> {
        self.diagnostics
            .iter()
            .filter(|d| d.effective_verdict() == Verdict::Artifact)
            .map(|d| d.component_index)
            .collect()
    }

    pub fn set_human_verdict(&mut self, component: usize, verdict: Option<Verdict>) -> Result<()> {
        let d = self.diagnostics.get_mut(component).ok_or_else(|| {
            Error::IndexOutOfRange(format!(
                "component {component} out of range for rank {}",
                self.model.rank()
            ))
        })?;
        d.human_verdict = verdict;
        Ok(())
    }

    fn rediagnose(&mut self, thresholds: Thresholds) -> Result<()> {
        let human: Vec<Option<Verdict>> = self.diagnostics.iter().map(|d| d.human_verdict).collect();
        self.diagnostics = diagnose_components(&self.model, &self.reference, &thresholds)?;
        for (d, h) in self.diagnostics.iter_mut().zip(human) {
            d.human_verdict = h;
        }
        self.thresholds = thresholds;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardOptions {
    pub rho: f64,
    pub step: f64,
    pub max_rounds: usize,
}

impl Default for GuardOptions {
    fn default() -> Self {
        Self {
            rho: 0.3,
            step: 0.05,
            max_rounds: 5,
        }
    }
}

/// Trial-averaged channel × time data with its time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDomainAverage {
    pub data: DMatrix<f64>,
    pub sample_rate: f64,
    pub pre_stimulus_s: f64,
}

impl TimeDomainAverage {
    /// Trial average of the EEG channels of `ds` (cluster 1).
    pub fn eeg(ds: &EpochedDataset) -> Result<Self> {
        let rows = ds.channel_indices(ChannelRole::Eeg);
        if rows.is_empty() {
            return Err(Error::MissingChannel("EEG".into()));
        }
        Ok(Self {
            data: ds.average_rows(&rows)?,
            sample_rate: ds.sample_rate,
            pre_stimulus_s: ds.pre_stimulus_s,
        })
    }

    /// Sample range covering `[start_ms, end_ms)` relative to the stimulus.
    pub fn sample_range(&self, start_ms: f64, end_ms: f64) -> std::ops::Range<usize> {
        let to = |ms: f64| ((self.pre_stimulus_s + ms / 1000.0) * self.sample_rate).round().max(0.0) as usize;
        let n = self.data.ncols();
        to(start_ms).min(n)..to(end_ms).min(n)
    }
}

/// Projection of `data` onto the column span of `loadings` (channels × k).
pub fn artifact_projection(data: &DMatrix<f64>, loadings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if loadings.ncols() == 0 {
        return Ok(DMatrix::zeros(data.nrows(), data.ncols()));
    }
    if loadings.nrows() != data.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} loading rows for {} channels",
            loadings.nrows(),
            data.nrows()
        )));
    }
    let p = pinv(loadings, PINV_RCOND)?;
    Ok(loadings * (p * data))
}

fn artifact_loadings(labeling: &ArtifactLabeling) -> DMatrix<f64> {
    let cols = labeling.artifact_components();
    let u = labeling.model.factor(1);
    DMatrix::from_fn(u.nrows(), cols.len(), |i, c| u[(i, cols[c])])
}

/// Leakage statistic of the removed signal: the fraction of the pre-onset
/// (stimulus..`pre_onset_ms`) energy of cluster 1 that ends up in cluster 2,
/// after removing each channel's mean over that segment.
///
/// Summed over channels this is the pooled regression slope of the removed
/// signal on the data, `Σ cov(c2, c1) / Σ var(c1)`, whenever cluster 2 is an
/// orthogonal projection of cluster 1. Speech artifact is absent before
/// onset, so a large fraction means brain activity is being removed.
pub fn guard_statistic(cluster1: &TimeDomainAverage, cluster2: &DMatrix<f64>, pre_onset_ms: f64) -> Result<f64> {
    if cluster2.shape() != cluster1.data.shape() {
        return Err(Error::DimensionMismatch(format!(
            "removed signal {:?} vs data {:?}",
            cluster2.shape(),
            cluster1.data.shape()
        )));
    }
    let pre = cluster1.sample_range(0.0, pre_onset_ms);
    if pre.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "pre-onset segment 0..{pre_onset_ms} ms is too short for the guard"
        )));
    }
    let centered_energy = |m: &DMatrix<f64>| -> f64 {
        m.row_iter()
            .map(|row| {
                let seg = row.columns(pre.start, pre.len());
                let mean = seg.mean();
                seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            })
            .sum()
    };
    let total = centered_energy(&cluster1.data);
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(centered_energy(cluster2) / total)
}

/// Post-removal check: while the removed signal leaks brain activity before
/// speech onset, tighten both thresholds by `guard.step` and re-diagnose.
///
/// If the guard still fails after `guard.max_rounds` rounds, or thresholds
/// would exceed 1, every automatic artifact verdict is dropped and the status
/// becomes [`LabelStatus::GuardFailed`].
pub fn control_cycle(
    cluster1: &TimeDomainAverage,
    labeling: &ArtifactLabeling,
    pre_onset_ms: f64,
    guard: &GuardOptions,
) -> Result<ArtifactLabeling> {
    let mut out = labeling.clone();
    for round in 0..=guard.max_rounds {
        let removed = artifact_projection(&cluster1.data, &artifact_loadings(&out))?;
        if removed.iter().all(|&v| v == 0.0) || guard_statistic(cluster1, &removed, pre_onset_ms)? <= guard.rho {
            out.control_cycle_rounds = round;
            return Ok(out);
        }
        if round == guard.max_rounds {
            break;
        }
        let next = out.thresholds.tightened(guard.step);
        if next.temporal > 1.0 || next.spectral > 1.0 {
            break;
        }
        out.rediagnose(next)?;
        tracing::debug!(round = round + 1, threshold = next.temporal, "guard tightened thresholds");
    }
    for d in &mut out.diagnostics {
        d.auto_verdict = Verdict::Clean;
    }
    out.control_cycle_rounds = guard.max_rounds;
    out.status = LabelStatus::GuardFailed;
    let msg = "control cycle never passed the leakage guard; no components flagged automatically".to_string();
    tracing::warn!("{msg}");
    out.warnings.push(msg);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Trial-averaged EEG (channels × time).
    pub cluster1: DMatrix<f64>,
    /// Speech artifact.
    pub cluster2: DMatrix<f64>,
    /// Cleaned data.
    pub cluster3: DMatrix<f64>,
    pub sample_rate: f64,
    pub pre_stimulus_s: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ClusterSet {
    /// ‖c2 + c3 − c1‖ / ‖c1‖.
    pub fn additivity_error(&self) -> f64 {
        let n = self.cluster1.norm();
        let e = (&self.cluster2 + &self.cluster3 - &self.cluster1).norm();
        if n == 0.0 {
            e
        } else {
            e / n
        }
    }
}

pub fn make_clusters_from(cluster1: &TimeDomainAverage, labeling: &ArtifactLabeling) -> Result<ClusterSet> {
    let loadings = artifact_loadings(labeling);
    let mut warnings = Vec::new();
    if loadings.ncols() == labeling.model.rank() {
        let msg = "every component is marked artifact; cluster 3 is the residual only".to_string();
        tracing::warn!("{msg}");
        warnings.push(msg);
    }
    let cluster2 = artifact_projection(&cluster1.data, &loadings)?;
    let cluster3 = &cluster1.data - &cluster2;
    Ok(ClusterSet {
        cluster1: cluster1.data.clone(),
        cluster2,
        cluster3,
        sample_rate: cluster1.sample_rate,
        pre_stimulus_s: cluster1.pre_stimulus_s,
        warnings,
    })
}

pub fn make_clusters(ds: &EpochedDataset, labeling: &ArtifactLabeling) -> Result<ClusterSet> {
    let c1 = TimeDomainAverage::eeg(ds)?;
    if c1.data.nrows() != labeling.model.dims().1 {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} EEG channels, model has {}",
            c1.data.nrows(),
            labeling.model.dims().1
        )));
    }
    make_clusters_from(&c1, labeling)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank1_reference_recovers_separable_emg() {
        let time: Vec<f64> = (0..40).map(|i| 1.0 + (i as f64 / 6.0).sin().max(0.0) * 3.0).collect();
        let spec: Vec<f64> = (1..=30).map(|f| (-(f as f64 - 20.0).powi(2) / 40.0).exp() + 0.05).collect();
        let emg = SpectralTensor {
            tensor: crate::tensor::DenseTensor3::outer(&time, &[2.0], &spec),
            frame_times_ms: (0..40).map(|i| i as f64 * 50.0).collect(),
            freqs_hz: (1..=30).map(f64::from).collect(),
            channel_names: vec!["EMG".into()],
        };
        let r = EmgReference::from_tensor(&emg, 500.0, EmgSummary::Rank1).unwrap();
        assert!((pearson(&r.time_course, &time).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&r.spectrum, &spec).unwrap() - 1.0).abs() < 1e-12);
        assert!(r.spectrum.iter().all(|&v| v > 0.0));
        let m = EmgReference::from_tensor(&emg, 500.0, EmgSummary::Mean).unwrap();
        assert!((pearson(&m.spectrum, &spec).unwrap() - 1.0).abs() < 1e-12);
    }

    fn model_from(time: Vec<Vec<f64>>, chan: Vec<Vec<f64>>, freq: Vec<Vec<f64>>) -> KruskalModel {
        let r = time.len();
        let mk = |cols: &Vec<Vec<f64>>| {
            let n = cols[0].len();
            DMatrix::from_fn(n, r, |i, c| {
                let norm = cols[c].iter().map(|v| v * v).sum::<f64>().sqrt();
                cols[c][i] / norm
            })
        };
        KruskalModel::new(vec![1.0; r], [mk(&time), mk(&chan), mk(&freq)]).unwrap()
    }

    fn reference() -> EmgReference {
        let frames: Vec<f64> = (0..64).map(|m| m as f64 * 31.25).collect();
        let time_course = frames
            .iter()
            .map(|&t| if t >= 900.0 { 1.0 + ((t - 900.0) / 200.0).sin().abs() } else { 0.1 })
            .collect();
        let spectrum = (1..=30).map(|f| if f >= 15 { 1.0 + f as f64 / 30.0 } else { 0.2 }).collect();
        EmgReference {
            time_course,
            spectrum,
            frame_times_ms: frames,
            onset_ms: 900.0,
        }
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[1.0, 2.0, 4.0, 3.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(pearson(&x, &[2.0; 4]), Err(Error::ZeroVariance)));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn emg_shaped_component_is_artifact() {
        let emg = reference();
        let brain_time: Vec<f64> = (0..64).map(|m| (m as f64 * 0.3).sin() + 1.5).collect();
        let brain_freq: Vec<f64> = (1..=30).map(|f| (-(f as f64 - 10.0).powi(2) / 8.0).exp()).collect();
        let m = model_from(
            vec![emg.time_course.clone(), brain_time],
            vec![vec![1.0, 0.5, 0.1], vec![0.1, 0.5, 1.0]],
            vec![emg.spectrum.clone(), brain_freq],
        );
        let d = diagnose_components(&m, &emg, &Thresholds::default()).unwrap();
        assert!((d[0].temporal_corr - 1.0).abs() < 1e-12);
        assert_eq!(d[0].auto_verdict, Verdict::Artifact);
        assert_eq!(d[1].auto_verdict, Verdict::Clean);
    }

    #[test]
    fn orthogonalized_time_factor_is_clean() {
        let emg = reference();
        let frames = emg.window_frames().unwrap();
        let center = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect::<Vec<f64>>()
        };
        let e: Vec<f64> = center(&frames.iter().map(|&i| emg.time_course[i]).collect::<Vec<_>>());
        let mut t: Vec<f64> = (0..64).map(|m| ((m * m) % 7) as f64 + 2.0).collect();
        let w = center(&frames.iter().map(|&i| t[i]).collect::<Vec<_>>());
        let proj = w.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / e.iter().map(|b| b * b).sum::<f64>();
        for (k, &i) in frames.iter().enumerate() {
            t[i] -= proj * e[k];
        }
        let m = model_from(vec![t], vec![vec![1.0, 2.0]], vec![emg.spectrum.clone()]);
        let d = diagnose_components(&m, &emg, &Thresholds::default()).unwrap();
        assert!(d[0].temporal_corr.abs() <= 0.05);
        assert_eq!(d[0].auto_verdict, Verdict::Clean);
    }

    #[test]
    fn onset_outside_span_errors() {
        let mut emg = reference();
        emg.onset_ms = 2500.0;
        let m = model_from(vec![emg.time_course.clone()], vec![vec![1.0, 2.0]], vec![emg.spectrum.clone()]);
        assert!(matches!(
            diagnose_components(&m, &emg, &Thresholds::default()),
            Err(Error::OnsetOutsideTensor { .. })
        ));
    }

    #[test]
    fn window_shortens_at_span_end() {
        let mut emg = reference();
        emg.onset_ms = 1500.0;
        let frames = emg.window_frames().unwrap();
        assert_eq!(frames.first(), Some(&48));
        assert_eq!(frames.last(), Some(&63));
    }

    #[test]
    fn or_rule_and_monotonicity() {
        let t = Thresholds::default();
        assert_eq!(t.verdict(0.9, 0.5), Verdict::Clean);
        let or = Thresholds { rule: CombineRule::Or, ..t };
        assert_eq!(or.verdict(0.9, 0.5), Verdict::Artifact);
        assert_eq!(t.verdict(-0.75, 0.71), Verdict::Artifact);
        assert_eq!(t.tightened(0.05).verdict(-0.75, 0.71), Verdict::Clean);
    }

    #[test]
    fn projection_properties() {
        let data = DMatrix::from_fn(4, 50, |i, t| ((i + 1) as f64 * t as f64 * 0.1).sin());
        let a = DMatrix::from_column_slice(4, 1, &[1.0, 0.5, 0.0, 0.0]);
        let c2 = artifact_projection(&data, &a).unwrap();
        // idempotent
        let again = artifact_projection(&c2, &a).unwrap();
        assert!((&again - &c2).norm() < 1e-12);
        let none = artifact_projection(&data, &DMatrix::zeros(4, 0)).unwrap();
        assert_eq!(none.norm(), 0.0);
    }
}
