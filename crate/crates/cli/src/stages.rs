//! File-backed pipeline stages. Each stage reads the artifacts of the stage
//! before it from a results directory and writes its own.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tensorsar_core::artifact::TimeDomainAverage;
use tensorsar_core::eval::{evaluate, render_report, EvaluationReport, ReportFormat};
use tensorsar_core::io::{
    dataset_subjects, read_dataset, read_json, write_bytes, write_dataset, write_json, HumanLabels, ResultsLayout,
    TRUTH_FILE,
};
use tensorsar_core::pipeline::{
    self, pre_onset_ms, subject_result, truth_sidecar, BaselineResult, Decomposition, PipelineConfig, SubjectClusters,
};
use tensorsar_core::preproc::EpochedDataset;
use tensorsar_core::synth::{generate_session, SynthConfig};
use tensorsar_core::{artifact::ArtifactLabeling, Error};

pub const CONFIG_ENV: &str = "TENSORSAR_CONFIG";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit code 1.
    Usage(String),
    /// Missing or invalid data: exit code 2.
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e)
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `config.json` in a results directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredConfig {
    pub hash: String,
    pub config: PipelineConfig,
}

/// Resolves the configuration: explicit path, then `TENSORSAR_CONFIG`, then
/// the config stored in `results` by an earlier stage, then defaults.
pub fn load_config(explicit: Option<&Path>, results: Option<&Path>) -> CliResult<PipelineConfig> {
    let from_file = |p: &Path| -> CliResult<PipelineConfig> {
        let v: serde_json::Value = read_json(p).map_err(|e| match e {
            Error::MissingArtifact(p) => CliError::Usage(format!("config file {} not found", p.display())),
            other => CliError::Usage(other.to_string()),
        })?;
        // Accept both a bare config and the stored {hash, config} form.
        let inner = v.get("config").filter(|_| v.get("hash").is_some()).cloned().unwrap_or(v);
        serde_json::from_value(inner).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
    };
    let cfg = if let Some(p) = explicit {
        from_file(p)?
    } else if let Some(p) = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()) {
        from_file(Path::new(&p))?
    } else if let Some(stored) = results.map(|r| ResultsLayout::new(r).config()).filter(|p| p.is_file()) {
        let s: StoredConfig = read_json(&stored)?;
        s.config
    } else {
        PipelineConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn log_stage(stage: &str, cfg: &PipelineConfig) {
    tracing::info!(stage, config_hash = %cfg.hash(), "starting stage");
}

fn store_config(layout: &ResultsLayout, cfg: &PipelineConfig) -> CliResult<()> {
    let stored = StoredConfig {
        hash: cfg.hash(),
        config: cfg.clone(),
    };
    Ok(write_json(&layout.config(), &stored)?)
}

/// Writes one epoched dataset plus ground-truth sidecar per synthetic subject.
pub fn synth(synth_cfg: &SynthConfig, out: &Path, cfg: &PipelineConfig) -> CliResult<Vec<String>> {
    log_stage("synth", cfg);
    synth_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut ids = Vec::new();
    for s in 0..synth_cfg.n_subjects {
        let session = generate_session(synth_cfg, s)?;
        let raw = pipeline::synth_epochs(&session, cfg)?;
        let dir = out.join(&session.subject_id);
        write_dataset(&dir, &raw)?;
        write_json(&dir.join(TRUTH_FILE), &truth_sidecar(&session, cfg)?)?;
        tracing::info!(subject = %session.subject_id, trials = raw.trials.len(), "wrote synthetic subject");
        ids.push(session.subject_id);
    }
    write_json(&out.join("synth_config.json"), synth_cfg)?;
    Ok(ids)
}

pub fn preprocess(input: &Path, results: &Path, cfg: &PipelineConfig) -> CliResult<Vec<String>> {
    log_stage("preprocess", cfg);
    let layout = ResultsLayout::new(results);
    store_config(&layout, cfg)?;
    let mut ids = Vec::new();
    for dir in dataset_subjects(input)? {
        let raw = read_dataset(&dir)?;
        let ds = pipeline::preprocess(&raw, cfg)?;
        write_dataset(&layout.preprocessed().join(&ds.subject_id), &ds)?;
        let sub = layout.subject(&ds.subject_id);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        tracing::info!(subject = %ds.subject_id, accepted = ds.n_accepted(), "preprocessed");
        ids.push(ds.subject_id);
    }
    Ok(ids)
}

fn preprocessed(layout: &ResultsLayout) -> CliResult<Vec<EpochedDataset>> {
    dataset_subjects(&layout.preprocessed())?
        .iter()
        .map(|d| read_dataset(d).map_err(CliError::from))
        .collect()
}

pub fn decompose(results: &Path, cfg: &PipelineConfig) -> CliResult<BTreeMap<String, usize>> {
    log_stage("decompose", cfg);
    let layout = ResultsLayout::new(results);
    let mut ranks = BTreeMap::new();
    for ds in preprocessed(&layout)? {
        let dec = pipeline::decompose(&ds, cfg)?;
        write_json(&layout.decomposition(&ds.subject_id), &dec)?;
        ranks.insert(ds.subject_id.clone(), dec.selected_rank);
    }
    write_json(&layout.ranks(), &ranks)?;
    Ok(ranks)
}

/// Automatic labeling; existing human labels are re-applied when they
/// belong to the same decomposition and marked stale otherwise.
pub fn detect(results: &Path, cfg: &PipelineConfig) -> CliResult<()> {
    log_stage("detect", cfg);
    let layout = ResultsLayout::new(results);
    for ds in preprocessed(&layout)? {
        let id = ds.subject_id.clone();
        let dec: Decomposition = read_json(&layout.decomposition(&id))?;
        let c1 = TimeDomainAverage::eeg(&ds)?;
        let mut labeling = pipeline::detect(&c1, pre_onset_ms(&ds)?, &dec, cfg)?;
        let labels_path = layout.labels(&id);
        let labels = match read_json::<HumanLabels>(&labels_path) {
            Ok(mut l) => {
                if !l.apply(&mut labeling)? {
                    tracing::warn!(subject = %id, "human labels belong to an earlier decomposition; marked stale");
                }
                l
            }
            Err(Error::MissingArtifact(_)) => HumanLabels::from_labeling(&labeling),
            Err(e) => return Err(e.into()),
        };
        write_json(&labels_path, &labels)?;
        write_json(&layout.labeling(&id), &labeling)?;
        tracing::info!(
            subject = %id,
            artifacts = ?labeling.artifact_components(),
            rounds = labeling.control_cycle_rounds,
            status = ?labeling.status,
            "labeled components"
        );
    }
    Ok(())
}

pub fn clean(results: &Path, cfg: &PipelineConfig) -> CliResult<()> {
    log_stage("clean", cfg);
    let layout = ResultsLayout::new(results);
    for ds in preprocessed(&layout)? {
        let labeling: ArtifactLabeling = read_json(&layout.labeling(&ds.subject_id))?;
        let clusters = pipeline::clean(&ds, &labeling)?;
        write_json(&layout.clusters(&ds.subject_id), &clusters)?;
    }
    Ok(())
}

pub fn baseline(results: &Path, cfg: &PipelineConfig) -> CliResult<()> {
    log_stage("baseline", cfg);
    let layout = ResultsLayout::new(results);
    for ds in preprocessed(&layout)? {
        let b = pipeline::baseline(&ds, cfg)?;
        tracing::info!(subject = %ds.subject_id, marked = ?b.marked, "BSS-CCA");
        write_json(&layout.baseline(&ds.subject_id), &b)?;
    }
    Ok(())
}

/// Loads per-subject clusters (required) and BSS-CCA results (used only if
/// every subject has them).
pub fn load_results(layout: &ResultsLayout) -> CliResult<Vec<(SubjectClusters, Option<BaselineResult>)>> {
    let ids = layout.subject_ids()?;
    if ids.is_empty() {
        return Err(Error::MissingArtifact(layout.subjects_dir()).into());
    }
    let mut out = Vec::new();
    for id in ids {
        let clusters: SubjectClusters = read_json(&layout.clusters(&id))?;
        let bss = match read_json::<BaselineResult>(&layout.baseline(&id)) {
            Ok(b) => Some(b),
            Err(Error::MissingArtifact(_)) => None,
            Err(e) => return Err(e.into()),
        };
        out.push((clusters, bss));
    }
    Ok(out)
}

pub fn evaluate_loaded(loaded: &[(SubjectClusters, Option<BaselineResult>)], cfg: &PipelineConfig) -> CliResult<EvaluationReport> {
    let with_bss = loaded.iter().all(|(_, b)| b.is_some());
    let subjects: Vec<_> = loaded
        .iter()
        .map(|(c, b)| subject_result(c, b.as_ref().filter(|_| with_bss)))
        .collect();
    Ok(evaluate(&subjects, &cfg.eval)?)
}

pub fn write_report(layout: &ResultsLayout, report: &EvaluationReport) -> CliResult<()> {
    for (ext, format) in [("csv", ReportFormat::Csv), ("json", ReportFormat::Json), ("txt", ReportFormat::TableText)] {
        write_bytes(&layout.report(ext), render_report(report, format)?.as_bytes())?;
    }
    Ok(())
}

pub fn evaluate_stage(results: &Path, cfg: &PipelineConfig) -> CliResult<EvaluationReport> {
    log_stage("evaluate", cfg);
    let layout = ResultsLayout::new(results);
    let report = evaluate_loaded(&load_results(&layout)?, cfg)?;
    write_report(&layout, &report)?;
    Ok(report)
}

/// Every stage in order.
pub fn run(input: &Path, results: &Path, cfg: &PipelineConfig) -> CliResult<EvaluationReport> {
    preprocess(input, results, cfg)?;
    decompose(results, cfg)?;
    detect(results, cfg)?;
    clean(results, cfg)?;
    baseline(results, cfg)?;
    evaluate_stage(results, cfg)
}
