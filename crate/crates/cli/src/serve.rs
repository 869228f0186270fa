//! HTTP API for reviewing components and re-clustering with human verdicts.
//!
//! Writes to one subject are serialized by a per-subject mutex. Readers
//! always see a complete snapshot: updates build a new snapshot and swap it
//! in under a short write lock.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tensorsar_core::artifact::{ArtifactLabeling, LabelStatus, Verdict};
use tensorsar_core::eval::{channel_mean, evaluate, EvaluationReport};
use tensorsar_core::io::{read_dataset, read_json, write_json, HumanLabels, ResultsLayout};
use tensorsar_core::pipeline::{self, subject_result, BaselineResult, Decomposition, PipelineConfig, SubjectClusters};
use tensorsar_core::Error;
use tower_http::services::ServeDir;

use crate::stages::{write_report, CliError, CliResult};

const INDEX_HTML: &str = include_str!("../assets/index.html");

#[derive(Debug, Clone)]
struct Snapshot {
    labeling: ArtifactLabeling,
    clusters: SubjectClusters,
    baseline: Option<BaselineResult>,
    labels_stale: bool,
    /// Verdicts changed since the clusters were computed.
    clusters_stale: bool,
}

#[derive(Debug)]
struct SubjectEntry {
    decomposition: Decomposition,
    writer: tokio::sync::Mutex<()>,
    current: RwLock<Arc<Snapshot>>,
}

impl SubjectEntry {
    fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock poisoned").clone()
    }

    fn publish(&self, s: Snapshot) {
        *self.current.write().expect("snapshot lock poisoned") = Arc::new(s);
    }
}

#[derive(Debug)]
pub struct AppState {
    layout: ResultsLayout,
    cfg: PipelineConfig,
    subjects: BTreeMap<String, SubjectEntry>,
    report_writer: tokio::sync::Mutex<()>,
}

impl AppState {
    /// Loads every subject with a completed detection stage.
    pub fn load(layout: ResultsLayout, cfg: PipelineConfig) -> CliResult<Self> {
        let mut subjects = BTreeMap::new();
        for id in layout.subject_ids()? {
            let decomposition: Decomposition = read_json(&layout.decomposition(&id))?;
            let mut labeling: ArtifactLabeling = read_json(&layout.labeling(&id))?;
            let labels_stale = match read_json::<HumanLabels>(&layout.labels(&id)) {
                Ok(mut l) => !l.apply(&mut labeling)?,
                Err(Error::MissingArtifact(_)) => false,
                Err(e) => return Err(e.into()),
            };
            let clusters = match read_json::<SubjectClusters>(&layout.clusters(&id)) {
                Ok(c) => c.recluster(&labeling)?,
                Err(Error::MissingArtifact(_)) => {
                    let ds = read_dataset(&layout.preprocessed().join(&id))?;
                    pipeline::clean(&ds, &labeling)?
                }
                Err(e) => return Err(e.into()),
            };
            let baseline = match read_json::<BaselineResult>(&layout.baseline(&id)) {
                Ok(b) => Some(b),
                Err(Error::MissingArtifact(_)) => None,
                Err(e) => return Err(e.into()),
            };
            let snap = Snapshot {
                labeling,
                clusters,
                baseline,
                labels_stale,
                clusters_stale: false,
            };
            subjects.insert(
                id,
                SubjectEntry {
                    decomposition,
                    writer: tokio::sync::Mutex::new(()),
                    current: RwLock::new(Arc::new(snap)),
                },
            );
        }
        if subjects.is_empty() {
            return Err(Error::MissingArtifact(layout.subjects_dir()).into());
        }
        Ok(Self {
            layout,
            cfg,
            subjects,
            report_writer: tokio::sync::Mutex::new(()),
        })
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.keys().cloned().collect()
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn entry<'a>(state: &'a AppState, id: &str) -> ApiResult<&'a SubjectEntry> {
    state
        .subjects
        .get(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown subject {id:?}")))
}

#[derive(Serialize)]
struct SubjectSummary<'a> {
    subject_id: &'a str,
    rank: usize,
    artifact_components: Vec<usize>,
    status: LabelStatus,
    labels_stale: bool,
    clusters_stale: bool,
}

async fn list_subjects(State(state): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<Value> = state
        .subjects
        .iter()
        .map(|(id, e)| {
            let s = e.snapshot();
            json!(SubjectSummary {
                subject_id: id,
                rank: s.labeling.model.rank(),
                artifact_components: s.labeling.artifact_components(),
                status: s.labeling.status,
                labels_stale: s.labels_stale,
                clusters_stale: s.clusters_stale,
            })
        })
        .collect();
    Json(Value::Array(list))
}

fn components_payload(id: &str, e: &SubjectEntry, s: &Snapshot) -> Value {
    let dec = &e.decomposition;
    let m = &s.labeling.model;
    let components: Vec<Value> = s
        .labeling
        .diagnostics
        .iter()
        .map(|d| {
            let r = d.component_index;
            json!({
                "component_index": r,
                "weight": m.weights()[r],
                "time_factor": m.column(0, r),
                "freq_factor": m.column(2, r),
                "topography": d.spatial_topography,
                "auto_verdict": d.auto_verdict,
                "human_verdict": d.human_verdict,
                "effective_verdict": d.effective_verdict(),
                "temporal_corr": d.temporal_corr,
                "spectral_corr": d.spectral_corr,
            })
        })
        .collect();
    let channels: Vec<Value> = dec
        .channels
        .iter()
        .map(|c| json!({ "name": c.name, "x": c.position.map(|p| p.0), "y": c.position.map(|p| p.1) }))
        .collect();
    json!({
        "subject_id": id,
        "rank": m.rank(),
        "mean_onset_ms": dec.emg_reference.onset_ms,
        "frame_times_ms": dec.frame_times_ms,
        "freqs_hz": dec.freqs_hz,
        "channels": channels,
        "status": s.labeling.status,
        "labels_stale": s.labels_stale,
        "clusters_stale": s.clusters_stale,
        "components": components,
    })
}

async fn get_components(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let e = entry(&state, &id)?;
    Ok(Json(components_payload(&id, e, &e.snapshot())))
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

/// `{component_index: n, verdict: "artifact" | "clean" | null}`; null clears
/// the human verdict.
fn parse_label(body: &[u8], rank: usize) -> ApiResult<(usize, Option<Verdict>)> {
    let v: Value = serde_json::from_slice(body).map_err(|e| bad_request(format!("malformed JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| bad_request("expected a JSON object"))?;
    let index = obj
        .get("component_index")
        .and_then(Value::as_u64)
        .ok_or_else(|| bad_request("component_index must be a non-negative integer"))? as usize;
    if index >= rank {
        return Err(bad_request(format!("component_index {index} out of range for rank {rank}")));
    }
    let verdict = match obj.get("verdict") {
        Some(Value::Null) => None,
        Some(Value::String(s)) if s == "artifact" => Some(Verdict::Artifact),
        Some(Value::String(s)) if s == "clean" => Some(Verdict::Clean),
        _ => return Err(bad_request("verdict must be \"artifact\", \"clean\" or null")),
    };
    Ok((index, verdict))
}

async fn post_label(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let e = entry(&state, &id)?;
    let _w = e.writer.lock().await;
    let cur = e.snapshot();
    let (index, verdict) = parse_label(&body, cur.labeling.model.rank())?;
    let mut next = (*cur).clone();
    next.labeling.set_human_verdict(index, verdict)?;
    if next.labels_stale {
        // The stale labels were never applied; start a fresh record.
        next.labels_stale = false;
    }
    let labels = HumanLabels::from_labeling(&next.labeling);
    write_json(&state.layout.labels(&id), &labels)?;
    write_json(&state.layout.labeling(&id), &next.labeling)?;
    next.clusters_stale = true;
    e.publish(next);
    Ok(Json(components_payload(&id, e, &e.snapshot())))
}

fn evaluate_one(s: &Snapshot, cfg: &PipelineConfig) -> Result<EvaluationReport, Error> {
    evaluate(&[subject_result(&s.clusters, s.baseline.as_ref())], &cfg.eval)
}

async fn post_recluster(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let e = entry(&state, &id)?;
    let _w = e.writer.lock().await;
    let cur = e.snapshot();
    let mut next = (*cur).clone();
    next.clusters = cur.clusters.recluster(&cur.labeling)?;
    next.clusters_stale = false;
    write_json(&state.layout.clusters(&id), &next.clusters)?;
    let subject_report = evaluate_one(&next, &state.cfg)?;
    let c2 = channel_mean(&next.clusters.clusters.cluster2);
    let n = c2.len();
    let fs = next.clusters.clusters.sample_rate;
    let pre = next.clusters.clusters.pre_stimulus_s;
    let time_ms: Vec<f64> = (0..n).map(|i| (i as f64 / fs - pre) * 1000.0).collect();
    let payload = json!({
        "subject_id": id,
        "artifact_components": next.labeling.artifact_components(),
        "time_ms": time_ms,
        "cluster2_mean": c2,
        "emg": next.clusters.emg,
        "report": subject_report,
    });
    e.publish(next);
    drop(_w);

    // Refresh the study-level report from the current snapshots.
    let _r = state.report_writer.lock().await;
    let all: Vec<_> = state
        .subjects
        .values()
        .map(|e| {
            let s = e.snapshot();
            (s.clusters.clone(), s.baseline.clone())
        })
        .collect();
    let report = crate::stages::evaluate_loaded(&all, &state.cfg)?;
    write_report(&state.layout, &report)?;
    let mut payload = payload;
    payload["study_report"] = json!(report);
    Ok(Json(payload))
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/subjects", get(list_subjects))
        .route("/api/subjects/{id}/components", get(get_components))
        .route("/api/subjects/{id}/labels", post(post_label))
        .route("/api/subjects/{id}/recluster", post(post_recluster))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    }
}

pub async fn serve(state: AppState, addr: SocketAddr, ui_dir: Option<PathBuf>) -> CliResult<()> {
    let app = router(Arc::new(state), ui_dir);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Usage(format!("cannot bind {addr}: {e}")))?;
    tracing::info!(%addr, "serving review API");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Data(Error::io("<socket>", e)))
}
