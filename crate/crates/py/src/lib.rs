//! Python bindings: tensors and CP-ALS, rank selection, the BSS-CCA
//! baseline, and the per-subject artifact pipeline.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use tensorsar_core::bsscca::{cca_bss, mark_muscle_components};
use tensorsar_core::eval::{evaluate, render_report, ReportFormat};
use tensorsar_core::io::{read_dataset, write_dataset, write_json, TRUTH_FILE};
use tensorsar_core::model_selection::{self, FitCurve};
use tensorsar_core::pipeline::{self, subject_result, PipelineConfig, SubjectRun};
use tensorsar_core::synth::{generate_session, SynthConfig};
use tensorsar_core::tensor::{self, CpOptions, DenseTensor3, KruskalModel};
use tensorsar_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::MissingArtifact(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Rows = Vec<Vec<f64>>;

fn matrix_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn parse_config(json: Option<&str>) -> PyResult<PipelineConfig> {
    let cfg: PipelineConfig = match json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Dense third-order tensor; `data` is row-major with the last mode fastest.
#[pyclass(name = "Tensor3", frozen)]
struct PyTensor3(DenseTensor3);

#[pymethods]
impl PyTensor3 {
    #[new]
    fn new(dims: (usize, usize, usize), data: Vec<f64>) -> PyResult<Self> {
        DenseTensor3::new(dims, data).map(Self).map_err(py_err)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.0.dims()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn get(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let (a, b, c) = self.0.dims();
        if i >= a || j >= b || k >= c {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.get(i, j, k))
    }

    fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    fn __repr__(&self) -> String {
        format!("Tensor3(dims={:?})", self.0.dims())
    }
}

#[pyclass(name = "KruskalModel", frozen)]
struct PyKruskalModel(KruskalModel);

#[pymethods]
impl PyKruskalModel {
    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    /// Factor matrix of `mode` (0, 1 or 2) as rows.
    fn factor(&self, mode: usize) -> PyResult<Vec<Vec<f64>>> {
        if mode > 2 {
            return Err(PyValueError::new_err("mode must be 0, 1 or 2"));
        }
        Ok(matrix_rows(self.0.factor(mode)))
    }

    fn reconstruct(&self) -> PyTensor3 {
        PyTensor3(tensor::reconstruct(&self.0))
    }

    fn fit(&self, x: &PyTensor3) -> PyResult<f64> {
        tensor::fit(&x.0, &self.0).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("KruskalModel(rank={}, dims={:?})", self.0.rank(), self.0.dims())
    }
}

#[pyclass(name = "FitReport", frozen, get_all)]
struct PyFitReport {
    fit: f64,
    iterations: usize,
    converged: bool,
    final_delta: f64,
    trace: Vec<f64>,
}

fn options(seed: u64, max_iters: usize, tolerance: f64) -> CpOptions {
    CpOptions {
        seed,
        max_iters,
        tolerance,
        ..CpOptions::default()
    }
}

#[pyfunction]
#[pyo3(signature = (x, rank, seed = 0, max_iters = 500, tolerance = 1e-8))]
fn cp_als(x: &PyTensor3, rank: usize, seed: u64, max_iters: usize, tolerance: f64) -> PyResult<(PyKruskalModel, PyFitReport)> {
    let (m, r) = tensor::cp_als(&x.0, rank, &options(seed, max_iters, tolerance)).map_err(py_err)?;
    Ok((
        PyKruskalModel(m),
        PyFitReport {
            fit: r.fit,
            iterations: r.iterations,
            converged: r.converged,
            final_delta: r.final_delta,
            trace: r.trace,
        },
    ))
}

/// `[(rank, fit)]` for every rank in `rmin..=rmax`.
#[pyfunction]
#[pyo3(signature = (x, rmin, rmax, seed = 0))]
fn fit_curve(x: &PyTensor3, rmin: usize, rmax: usize, seed: u64) -> PyResult<Vec<(usize, f64)>> {
    let curve = model_selection::fit_curve(&x.0, rmin, rmax, &options(seed, 500, 1e-8)).map_err(py_err)?;
    Ok(curve.entries().to_vec())
}

#[pyfunction]
fn diffit_select(curve: Vec<(usize, f64)>) -> PyResult<usize> {
    let curve = FitCurve::new(curve).map_err(py_err)?;
    model_selection::diffit_select(&curve).map_err(py_err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    tensorsar_core::artifact::pearson(&x, &y).map_err(py_err)
}

/// Indices of the CCA sources of `x` (channels × samples) classified as muscle.
#[pyfunction]
#[pyo3(signature = (x, sample_rate, n = 7.0))]
fn bss_cca_muscle_sources(x: Vec<Vec<f64>>, sample_rate: f64, n: f64) -> PyResult<Vec<usize>> {
    let sources = cca_bss(&rows_matrix(&x)?).map_err(py_err)?;
    mark_muscle_components(&sources, sample_rate, n).map_err(py_err)
}

/// Writes synthetic subjects with ground truth under `out`; returns their ids.
#[pyfunction]
#[pyo3(signature = (out, n_subjects = 8, seed = 0, n_trials = None, config_json = None))]
fn synth_dataset(
    out: PathBuf,
    n_subjects: usize,
    seed: u64,
    n_trials: Option<usize>,
    config_json: Option<&str>,
) -> PyResult<Vec<String>> {
    let cfg = parse_config(config_json)?;
    let mut synth = SynthConfig {
        n_subjects,
        seed,
        ..SynthConfig::default()
    };
    if let Some(n) = n_trials {
        synth.n_trials = n;
    }
    synth.validate().map_err(py_err)?;
    let mut ids = Vec::new();
    for s in 0..n_subjects {
        let session = generate_session(&synth, s).map_err(py_err)?;
        let dir = out.join(&session.subject_id);
        write_dataset(&dir, &pipeline::synth_epochs(&session, &cfg).map_err(py_err)?).map_err(py_err)?;
        let truth = pipeline::truth_sidecar(&session, &cfg).map_err(py_err)?;
        write_json(&dir.join(TRUTH_FILE), &truth).map_err(py_err)?;
        ids.push(session.subject_id);
    }
    Ok(ids)
}

/// Every pipeline stage for one subject.
#[pyclass(name = "SubjectRun", frozen)]
struct PySubjectRun(SubjectRun);

#[pymethods]
impl PySubjectRun {
    #[getter]
    fn subject_id(&self) -> String {
        self.0.clusters.subject_id.clone()
    }

    #[getter]
    fn selected_rank(&self) -> usize {
        self.0.decomposition.selected_rank
    }

    #[getter]
    fn fit_curve(&self) -> Vec<(usize, f64)> {
        self.0.decomposition.curve.clone()
    }

    #[getter]
    fn artifact_components(&self) -> Vec<usize> {
        self.0.labeling.artifact_components()
    }

    #[getter]
    fn bss_cca_marked(&self) -> Vec<usize> {
        self.0.baseline.marked.clone()
    }

    #[getter]
    fn model(&self) -> PyKruskalModel {
        PyKruskalModel(self.0.decomposition.model.clone())
    }

    /// Trial-averaged EEG, speech artifact and cleaned data (channels × samples).
    fn clusters(&self) -> (Rows, Rows, Rows) {
        let c = &self.0.clusters.clusters;
        (matrix_rows(&c.cluster1), matrix_rows(&c.cluster2), matrix_rows(&c.cluster3))
    }

    fn additivity_error(&self) -> f64 {
        self.0.clusters.clusters.additivity_error()
    }

    fn __repr__(&self) -> String {
        format!(
            "SubjectRun({}, rank={}, artifacts={:?})",
            self.subject_id(),
            self.selected_rank(),
            self.artifact_components()
        )
    }
}

/// Runs preprocessing through BSS-CCA on the dataset stored in `dir`.
#[pyfunction]
#[pyo3(signature = (dir, config_json = None))]
fn process_subject(py: Python<'_>, dir: PathBuf, config_json: Option<&str>) -> PyResult<PySubjectRun> {
    let cfg = parse_config(config_json)?;
    let raw = read_dataset(&dir).map_err(py_err)?;
    py.detach(|| pipeline::run_subject(&raw, &cfg)).map(PySubjectRun).map_err(py_err)
}

/// Group-level correlation report; `format` is "csv", "json" or "table".
#[pyfunction]
#[pyo3(signature = (runs, format = "csv", config_json = None))]
fn evaluate_runs(runs: Vec<PyRef<'_, PySubjectRun>>, format: &str, config_json: Option<&str>) -> PyResult<String> {
    let cfg = parse_config(config_json)?;
    let format = match format {
        "csv" => ReportFormat::Csv,
        "json" => ReportFormat::Json,
        "table" => ReportFormat::TableText,
        other => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    };
    let subjects: Vec<_> = runs
        .iter()
        .map(|r| subject_result(&r.0.clusters, Some(&r.0.baseline)))
        .collect();
    let report = evaluate(&subjects, &cfg.eval).map_err(py_err)?;
    render_report(&report, format).map_err(py_err)
}

#[pymodule]
fn tensorsar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor3>()?;
    m.add_class::<PyKruskalModel>()?;
    m.add_class::<PyFitReport>()?;
    m.add_class::<PySubjectRun>()?;
    m.add_function(wrap_pyfunction!(cp_als, m)?)?;
    m.add_function(wrap_pyfunction!(fit_curve, m)?)?;
    m.add_function(wrap_pyfunction!(diffit_select, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(bss_cca_muscle_sources, m)?)?;
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(process_subject, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_runs, m)?)?;
    Ok(())
}
