//! Evaluation: grand averages and windowed correlations against the lip EMG
//! and against the pre-onset raw data.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::artifact::{pearson, ClusterSet};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "method,cluster,window_start_ms,window_end_ms,r,n_samples,p_value";

/// Time axis of trial-locked data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub sample_rate: f64,
    pub pre_stimulus_s: f64,
}

impl TimeGrid {
    /// Samples of `[start, end)` ms: first index `ceil(start·fs)` after the
    /// stimulus, `floor((end − start)·fs)` samples.
    pub fn window(&self, window_ms: (f64, f64), len: usize) -> Result<std::ops::Range<usize>> {
        let (start, end) = window_ms;
        if !(end > start) {
            return Err(Error::InvalidArgument(format!("empty window {window_ms:?} ms")));
        }
        let pre = (self.pre_stimulus_s * self.sample_rate).round() as i64;
        let first = pre + (start * self.sample_rate / 1000.0 - 1e-9).ceil() as i64;
        let count = ((end - start) * self.sample_rate / 1000.0 + 1e-9).floor() as i64;
        if first < 0 || first + count > len as i64 {
            return Err(Error::InvalidArgument(format!(
                "window {window_ms:?} ms falls outside the trial"
            )));
        }
        Ok(first as usize..(first + count) as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelCollapse {
    /// Correlate the channel mean.
    #[default]
    Mean,
    /// Correlate every channel, then average the r values.
    PerChannel,
}

pub fn grand_average(per_subject: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = per_subject
        .first()
        .ok_or_else(|| Error::InvalidArgument("grand average of zero subjects".into()))?;
    let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
    for (i, m) in per_subject.iter().enumerate() {
        if m.shape() != first.shape() {
            return Err(Error::DimensionMismatch(format!(
                "subject {i} has shape {:?}, expected {:?}",
                m.shape(),
                first.shape()
            )));
        }
        acc += m;
    }
    Ok(acc / per_subject.len() as f64)
}

pub fn channel_mean(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows() as f64;
    a.column_iter().map(|c| c.sum() / n).collect()
}

/// Pearson r between `a` (channels × time) and `b` over a window.
/// Returns `(r, n_samples)`.
pub fn windowed_corr(
    a: &DMatrix<f64>,
    b: &[f64],
    grid: TimeGrid,
    window_ms: (f64, f64),
    collapse: ChannelCollapse,
) -> Result<(f64, usize)> {
    if a.ncols() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} samples vs reference of {}",
            a.ncols(),
            b.len()
        )));
    }
    let w = grid.window(window_ms, b.len())?;
    let n = w.len();
    let r = match collapse {
        ChannelCollapse::Mean => pearson(&channel_mean(a)[w.clone()], &b[w])?,
        ChannelCollapse::PerChannel => {
            let mut sum = 0.0;
            for row in a.row_iter() {
                let v: Vec<f64> = row.iter().copied().collect();
                sum += pearson(&v[w.clone()], &b[w.clone()])?;
            }
            sum / a.nrows() as f64
        }
    };
    Ok((r, n))
}

/// Channel-collapsed r between cluster 1 and cluster 3 per window.
pub fn validation_corr(
    cluster1: &DMatrix<f64>,
    cluster3: &DMatrix<f64>,
    grid: TimeGrid,
    windows: &[(f64, f64)],
    collapse: ChannelCollapse,
) -> Result<Vec<(f64, usize)>> {
    if cluster1.shape() != cluster3.shape() {
        return Err(Error::DimensionMismatch("cluster shapes differ".into()));
    }
    windows
        .iter()
        .map(|&w| match collapse {
            ChannelCollapse::Mean => windowed_corr(cluster3, &channel_mean(cluster1), grid, w, collapse),
            ChannelCollapse::PerChannel => {
                let range = grid.window(w, cluster1.ncols())?;
                let mut sum = 0.0;
                for (r1, r3) in cluster1.row_iter().zip(cluster3.row_iter()) {
                    let a: Vec<f64> = r1.iter().copied().collect();
                    let b: Vec<f64> = r3.iter().copied().collect();
                    sum += pearson(&a[range.clone()], &b[range.clone()])?;
                }
                Ok((sum / cluster1.nrows() as f64, range.len()))
            }
        })
        .collect()
}

/// Two-sided p-value of r under the t approximation with n − 2 dof.
pub fn p_value(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some(2.0 * (1.0 - dist.cdf(t.abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CPD")]
    Cpd,
    #[serde(rename = "BSS-CCA")]
    BssCca,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Cpd => "CPD",
            Method::BssCca => "BSS-CCA",
        }
    }
}

/// Which cluster a row describes. `SpeechArtifact` and `Cleaned` rows are
/// correlations with the lip EMG; `RawNoEog` rows correlate the cleaned data
/// with the raw data without EOG (cluster 1) before speech onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    SpeechArtifact,
    Cleaned,
    RawNoEog,
}

impl ClusterKind {
    pub fn label(self) -> &'static str {
        match self {
            ClusterKind::SpeechArtifact => "speech_artifact",
            ClusterKind::Cleaned => "cleaned",
            ClusterKind::RawNoEog => "raw_no_eog",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub method: Method,
    pub cluster: ClusterKind,
    pub window_ms: (f64, f64),
    /// `None` when one side has zero variance (e.g. an empty artifact set).
    pub r: Option<f64>,
    pub n_samples: usize,
    pub p_value: Option<f64>,
    pub p_note: String,
}

impl ReportEntry {
    pub fn new(method: Method, cluster: ClusterKind, window_ms: (f64, f64), r: Option<f64>, n_samples: usize) -> Self {
        let p = r.and_then(|r| p_value(r, n_samples));
        let p_note = match (r, p) {
            (None, _) => "undefined (zero variance)".to_string(),
            (_, Some(p)) if p < 0.01 => "p < 0.01".to_string(),
            (_, Some(p)) => format!("p = {p:.3}"),
            (_, None) => "n/a".to_string(),
        };
        Self {
            method,
            cluster,
            window_ms,
            r,
            n_samples,
            p_value: p,
            p_note,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OnsetStats {
    pub earliest_ms: Option<f64>,
    pub mean_ms: Option<f64>,
}

impl OnsetStats {
    pub fn from_onsets(onsets: &[f64]) -> Self {
        Self {
            earliest_ms: onsets.iter().copied().reduce(f64::min),
            mean_ms: (!onsets.is_empty()).then(|| onsets.iter().sum::<f64>() / onsets.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub entries: Vec<ReportEntry>,
    pub subject_count: usize,
    pub sample_rate_hz: f64,
    pub onsets: OnsetStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Windows for the correlation with the lip EMG, ms.
    pub emg_windows_ms: Vec<(f64, f64)>,
    /// Pre-onset windows for cleaned vs raw, ms.
    pub validation_windows_ms: Vec<(f64, f64)>,
    pub collapse: ChannelCollapse,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            emg_windows_ms: vec![(0.0, 1350.0)],
            validation_windows_ms: vec![(0.0, 700.0), (0.0, 900.0)],
            collapse: ChannelCollapse::Mean,
        }
    }
}

/// Per-subject inputs to [`evaluate`].
#[derive(Debug, Clone)]
pub struct SubjectResult {
    pub cpd: ClusterSet,
    /// BSS-CCA `(cleaned, artifact)` trial averages, if computed.
    pub bss: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// Trial-averaged bipolar lip EMG.
    pub emg: Vec<f64>,
    pub onsets_ms: Vec<f64>,
}

/// Maps a zero-variance failure to an undefined r.
fn defined(res: Result<(f64, usize)>, grid: TimeGrid, w: (f64, f64), len: usize) -> Result<(Option<f64>, usize)> {
    match res {
        Ok((r, n)) => Ok((Some(r), n)),
        Err(Error::ZeroVariance) => Ok((None, grid.window(w, len)?.len())),
        Err(e) => Err(e),
    }
}

pub fn evaluate(subjects: &[SubjectResult], opts: &EvalOptions) -> Result<EvaluationReport> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::InvalidArgument("no subjects to evaluate".into()))?;
    let grid = TimeGrid {
        sample_rate: first.cpd.sample_rate,
        pre_stimulus_s: first.cpd.pre_stimulus_s,
    };
    let collect = |f: &dyn Fn(&SubjectResult) -> DMatrix<f64>| -> Result<DMatrix<f64>> {
        grand_average(&subjects.iter().map(f).collect::<Vec<_>>())
    };
    let emg = channel_mean(&collect(&|s| DMatrix::from_row_slice(1, s.emg.len(), &s.emg))?);
    let c1 = collect(&|s| s.cpd.cluster1.clone())?;
    let mut methods = vec![(Method::Cpd, collect(&|s| s.cpd.cluster2.clone())?, collect(&|s| s.cpd.cluster3.clone())?)];
    if subjects.iter().all(|s| s.bss.is_some()) {
        let bss = |s: &SubjectResult, artifact: bool| {
            let (c, a) = s.bss.as_ref().expect("checked above");
            if artifact {
                a.clone()
            } else {
                c.clone()
            }
        };
        methods.push((
            Method::BssCca,
            collect(&|s| bss(s, true))?,
            collect(&|s| bss(s, false))?,
        ));
    }
    let mut entries = Vec::new();
    for (method, artifact, cleaned) in &methods {
        for &w in &opts.emg_windows_ms {
            for (kind, m) in [(ClusterKind::SpeechArtifact, artifact), (ClusterKind::Cleaned, cleaned)] {
                let (r, n) = defined(windowed_corr(m, &emg, grid, w, opts.collapse), grid, w, emg.len())?;
                entries.push(ReportEntry::new(*method, kind, w, r, n));
            }
        }
        for &w in &opts.validation_windows_ms {
            let v = validation_corr(&c1, cleaned, grid, &[w], opts.collapse).map(|v| v[0]);
            let (r, n) = defined(v, grid, w, c1.ncols())?;
            entries.push(ReportEntry::new(*method, ClusterKind::RawNoEog, w, r, n));
        }
    }
    let onsets: Vec<f64> = subjects.iter().flat_map(|s| s.onsets_ms.iter().copied()).collect();
    Ok(EvaluationReport {
        entries,
        subject_count: subjects.len(),
        sample_rate_hz: grid.sample_rate,
        onsets: OnsetStats::from_onsets(&onsets),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    TableText,
    Json,
    Csv,
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(String::new, |p| format!("{p:.6e}"))
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map(|s| s + "\n")
            .map_err(|e| Error::InvalidData(e.to_string())),
        ReportFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for e in &report.entries {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    e.method.label(),
                    e.cluster.label(),
                    e.window_ms.0,
                    e.window_ms.1,
                    e.r.map_or_else(String::new, |r| format!("{r:.6}")),
                    e.n_samples,
                    fmt_p(e.p_value)
                );
            }
            Ok(out)
        }
        ReportFormat::TableText => {
            let mut out = String::new();
            let sections = [
                ("Grand-average correlation to lip EMG", false),
                ("Grand-average correlation to raw data without EOG before speech onset", true),
            ];
            for (title, validation) in sections {
                let _ = writeln!(out, "{title}");
                let _ = writeln!(out, "{:<9} {:<16} {:>12} {:>8} {:>6}  {}", "method", "cluster", "window_ms", "r", "n", "p");
                for e in report
                    .entries
                    .iter()
                    .filter(|e| (e.cluster == ClusterKind::RawNoEog) == validation)
                {
                    let window = format!("{}-{}", e.window_ms.0, e.window_ms.1);
                    let _ = writeln!(
                        out,
                        "{:<9} {:<16} {:>12} {:>8} {:>6}  {}",
                        e.method.label(),
                        e.cluster.label(),
                        window,
                        e.r.map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}")),
                        e.n_samples,
                        e.p_note
                    );
                }
                out.push('\n');
            }
            let _ = writeln!(out, "subjects: {}", report.subject_count);
            if let (Some(a), Some(m)) = (report.onsets.earliest_ms, report.onsets.mean_ms) {
                let _ = writeln!(out, "speech onset: earliest {a:.1} ms, mean {m:.1} ms");
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: TimeGrid = TimeGrid {
        sample_rate: 512.0,
        pre_stimulus_s: 1.0,
    };

    #[test]
    fn window_sample_count() {
        let w = GRID.window((0.0, 1350.0), 2048).unwrap();
        assert_eq!(w.start, 512);
        assert_eq!(w.len(), 691);
        assert_eq!(GRID.window((0.0, 700.0), 2048).unwrap().len(), 358);
        assert!(GRID.window((0.0, 3500.0), 2048).is_err());
    }

    #[test]
    fn sub_window_uses_its_own_samples() {
        let outer = GRID.window((0.0, 900.0), 2048).unwrap();
        let inner = GRID.window((0.0, 700.0), 2048).unwrap();
        assert_eq!(outer.start, inner.start);
        assert!(inner.end <= outer.end);
    }

    #[test]
    fn grand_average_cases() {
        let m = DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        assert_eq!(grand_average(std::slice::from_ref(&m)).unwrap(), m);
        assert_eq!(grand_average(&[m.clone(), -m.clone()]).unwrap(), DMatrix::zeros(2, 3));
        assert!(grand_average(&[m, DMatrix::zeros(3, 3)]).is_err());
        assert!(grand_average(&[]).is_err());
    }

    #[test]
    fn identical_channel_mean_correlates_perfectly() {
        let b: Vec<f64> = (0..2048).map(|i| (i as f64 * 0.01).sin()).collect();
        let a = DMatrix::from_fn(3, 2048, |c, t| b[t] + [0.5, -0.5, 0.0][c]);
        let (r, n) = windowed_corr(&a, &b, GRID, (0.0, 1350.0), ChannelCollapse::Mean).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(n, 691);
        // affine invariance
        let b2: Vec<f64> = b.iter().map(|v| 3.0 * v + 7.0).collect();
        let (r2, _) = windowed_corr(&(a * 2.0), &b2, GRID, (0.0, 1350.0), ChannelCollapse::Mean).unwrap();
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_identity_and_orthogonal() {
        let c1 = DMatrix::from_fn(2, 2048, |c, t| ((t as f64) * 0.02 + c as f64).sin());
        let v = validation_corr(&c1, &c1, GRID, &[(0.0, 700.0), (0.0, 900.0)], ChannelCollapse::Mean).unwrap();
        assert!(v.iter().all(|(r, _)| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn p_values() {
        assert_eq!(p_value(0.5, 2), None);
        assert!(p_value(0.9, 100).unwrap() < 1e-10);
        let p0 = p_value(0.0, 50).unwrap();
        assert!((p0 - 1.0).abs() < 1e-12);
    }

    fn sample_report(n: usize) -> EvaluationReport {
        let combos = [
            (Method::Cpd, ClusterKind::SpeechArtifact),
            (Method::Cpd, ClusterKind::Cleaned),
            (Method::BssCca, ClusterKind::SpeechArtifact),
            (Method::BssCca, ClusterKind::Cleaned),
        ];
        EvaluationReport {
            entries: combos
                .iter()
                .take(n)
                .enumerate()
                .map(|(i, &(m, c))| ReportEntry::new(m, c, (0.0, 1350.0), Some(0.1 + 0.2 * i as f64), 691))
                .collect(),
            subject_count: 8,
            sample_rate_hz: 512.0,
            onsets: OnsetStats::from_onsets(&[700.0, 900.0]),
        }
    }

    #[test]
    fn render_formats() {
        let empty = sample_report(0);
        let csv = render_report(&empty, ReportFormat::Csv).unwrap();
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
        let text = render_report(&empty, ReportFormat::TableText).unwrap();
        assert!(text.contains("method"));
        let full = sample_report(4);
        let csv = render_report(&full, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(3).unwrap().starts_with("BSS-CCA,speech_artifact,0,1350,0.500000,691,"));
        let json = render_report(&full, ReportFormat::Json).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, full);
        assert_eq!(render_report(&full, ReportFormat::Csv).unwrap(), csv);
    }

    #[test]
    fn empty_artifact_set_gives_undefined_r() {
        let n = 2048;
        let c1 = DMatrix::from_fn(3, n, |c, t| ((t as f64) * 0.01 * (c + 1) as f64).sin());
        let cpd = ClusterSet {
            cluster2: DMatrix::zeros(3, n),
            cluster3: c1.clone(),
            cluster1: c1,
            sample_rate: 512.0,
            pre_stimulus_s: 1.0,
            warnings: vec![],
        };
        let s = SubjectResult {
            cpd,
            bss: None,
            emg: (0..n).map(|t| (t as f64 * 0.03).cos()).collect(),
            onsets_ms: vec![900.0],
        };
        let rep = evaluate(&[s], &EvalOptions::default()).unwrap();
        let art = &rep.entries[0];
        assert_eq!(art.cluster, ClusterKind::SpeechArtifact);
        assert_eq!((art.r, art.p_value, art.n_samples), (None, None, 691));
        assert!(rep.entries[1].r.is_some());
        let csv = render_report(&rep, ReportFormat::Csv).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("CPD,speech_artifact,0,1350,,691,"));
        let back: EvaluationReport =
            serde_json::from_str(&render_report(&rep, ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
