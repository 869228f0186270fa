//! On-disk formats: JSON manifest + raw float32 trials per subject, JSON
//! artifacts for every pipeline stage, and the human-label sidecar.
//!
//! A dataset root holds one directory per subject:
//!
//! ```text
//! ds/
//!   sub-01/manifest.json
//!   sub-01/data.f32        trial-major, then channel, then sample; f32 LE
//!   sub-01/truth.json      synthetic sessions only
//! ```
//!
//! A results directory mirrors the stages (see [`ResultsLayout`]).

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{ArtifactLabeling, Verdict};
use crate::error::{Error, Result};
use crate::preproc::{Behavior, Channel, ChannelRole, EpochedDataset, Trial};
use crate::tensor::KruskalModel;

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.f32";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestChannel {
    pub name: String,
    pub role: ChannelRole,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrial {
    /// Byte offset of the trial in the data file.
    pub offset: u64,
    pub onset_ms: Option<f64>,
    pub behavior: Behavior,
    #[serde(default)]
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub subject_id: String,
    pub sample_rate_hz: f64,
    pub pre_stimulus_s: f64,
    pub samples_per_trial: usize,
    pub channels: Vec<ManifestChannel>,
    pub trials: Vec<ManifestTrial>,
    /// Binary file, relative to the manifest.
    pub data_path: String,
    pub endianness: String,
    #[serde(default)]
    pub preprocessing: Vec<String>,
}

impl DatasetManifest {
    pub fn from_dataset(ds: &EpochedDataset) -> Self {
        let ns = ds.n_samples();
        let trial_bytes = (ds.channels.len() * ns * 4) as u64;
        Self {
            format_version: FORMAT_VERSION.into(),
            subject_id: ds.subject_id.clone(),
            sample_rate_hz: ds.sample_rate,
            pre_stimulus_s: ds.pre_stimulus_s,
            samples_per_trial: ns,
            channels: ds
                .channels
                .iter()
                .map(|c| ManifestChannel {
                    name: c.name.clone(),
                    role: c.role,
                    x: c.position.map(|p| p.0),
                    y: c.position.map(|p| p.1),
                })
                .collect(),
            trials: ds
                .trials
                .iter()
                .enumerate()
                .map(|(i, t)| ManifestTrial {
                    offset: i as u64 * trial_bytes,
                    onset_ms: t.speech_onset_ms,
                    behavior: t.behavior,
                    rejected: t.rejected.clone(),
                })
                .collect(),
            data_path: DATA_FILE.into(),
            endianness: "little".into(),
            preprocessing: ds.steps.clone(),
        }
    }

    pub fn trial_bytes(&self) -> u64 {
        (self.channels.len() * self.samples_per_trial * 4) as u64
    }

    /// Size the binary file must have.
    pub fn expected_data_len(&self) -> u64 {
        self.trials.len() as u64 * self.trial_bytes()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidData(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("unsupported format version {:?}", self.format_version));
        }
        if self.endianness != "little" {
            return bad(format!("unsupported endianness {:?}", self.endianness));
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad(format!("sample rate {} Hz", self.sample_rate_hz));
        }
        let has = |r: ChannelRole| self.channels.iter().any(|c| c.role == r);
        if !has(ChannelRole::Eeg) {
            return Err(Error::MissingChannel("EEG".into()));
        }
        if !has(ChannelRole::Emg) && !(has(ChannelRole::EmgOos) && has(ChannelRole::EmgOoi)) {
            return Err(Error::MissingChannel("EMG (bipolar or EMG_OOS + EMG_OOI)".into()));
        }
        let size = self.trial_bytes();
        let total = self.expected_data_len();
        for (i, t) in self.trials.iter().enumerate() {
            if t.offset % 4 != 0 || t.offset + size > total {
                return bad(format!("trial {i} offset {} outside the data file", t.offset));
            }
        }
        Ok(())
    }

    fn into_dataset(self, bytes: &[u8]) -> Result<EpochedDataset> {
        if bytes.len() as u64 != self.expected_data_len() {
            return Err(Error::InvalidData(format!(
                "data file holds {} bytes, manifest expects {}",
                bytes.len(),
                self.expected_data_len()
            )));
        }
        let (nc, ns) = (self.channels.len(), self.samples_per_trial);
        let trials = self
            .trials
            .iter()
            .map(|t| {
                let base = t.offset as usize;
                let data = DMatrix::from_fn(nc, ns, |c, s| {
                    let at = base + (c * ns + s) * 4;
                    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice")) as f64
                });
                Trial {
                    data,
                    speech_onset_ms: t.onset_ms,
                    behavior: t.behavior,
                    rejected: t.rejected.clone(),
                }
            })
            .collect();
        Ok(EpochedDataset {
            subject_id: self.subject_id,
            sample_rate: self.sample_rate_hz,
            pre_stimulus_s: self.pre_stimulus_s,
            channels: self
                .channels
                .into_iter()
                .map(|c| Channel {
                    name: c.name,
                    role: c.role,
                    position: c.x.zip(c.y),
                })
                .collect(),
            trials,
            steps: self.preprocessing,
        })
    }
}

/// Samples as f32 little-endian, trial-major, then channel, then sample.
pub fn encode_samples(ds: &EpochedDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(ds.trials.len() * ds.channels.len() * ds.n_samples() * 4);
    for t in &ds.trials {
        for row in t.data.row_iter() {
            for &v in row.iter() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Writes `manifest.json` and `data.f32` into `dir`.
pub fn write_dataset(dir: &Path, ds: &EpochedDataset) -> Result<DatasetManifest> {
    if ds.trials.iter().any(|t| t.data.shape() != (ds.channels.len(), ds.n_samples())) {
        return Err(Error::DimensionMismatch("trials differ in shape".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest::from_dataset(ds);
    write_bytes(&dir.join(&manifest.data_path), &encode_samples(ds))?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let m: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    m.validate()?;
    Ok(m)
}

pub fn read_dataset(dir: &Path) -> Result<EpochedDataset> {
    let m = read_manifest(dir)?;
    let path = dir.join(&m.data_path);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    m.into_dataset(&bytes)
}

/// Subject directories (those holding a manifest) under a dataset root,
/// sorted by name.
pub fn dataset_subjects(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::MissingArtifact(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingArtifact(root.join("*").join(MANIFEST_FILE)));
    }
    Ok(dirs)
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Reads a JSON artifact; a missing file is [`Error::MissingArtifact`].
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArtifact(path.into())),
        Err(e) => return Err(Error::io(path, e)),
    };
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Where each stage reads and writes inside a results directory.
#[derive(Debug, Clone)]
pub struct ResultsLayout {
    pub root: PathBuf,
}

impl ResultsLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn ranks(&self) -> PathBuf {
        self.root.join("ranks.json")
    }

    /// Root of the preprocessed datasets (same format as the input).
    pub fn preprocessed(&self) -> PathBuf {
        self.root.join("preprocessed")
    }

    pub fn subjects_dir(&self) -> PathBuf {
        self.root.join("subjects")
    }

    pub fn subject(&self, id: &str) -> PathBuf {
        self.subjects_dir().join(id)
    }

    pub fn decomposition(&self, id: &str) -> PathBuf {
        self.subject(id).join("decomposition.json")
    }

    pub fn labeling(&self, id: &str) -> PathBuf {
        self.subject(id).join("labeling.json")
    }

    pub fn labels(&self, id: &str) -> PathBuf {
        self.subject(id).join("labels.json")
    }

    pub fn clusters(&self, id: &str) -> PathBuf {
        self.subject(id).join("clusters.json")
    }

    pub fn baseline(&self, id: &str) -> PathBuf {
        self.subject(id).join("bsscca.json")
    }

    pub fn report(&self, ext: &str) -> PathBuf {
        self.root.join(format!("report.{ext}"))
    }

    /// Subject ids with a directory under `subjects/`, sorted.
    pub fn subject_ids(&self) -> Result<Vec<String>> {
        let dir = self.subjects_dir();
        if !dir.is_dir() {
            return Err(Error::MissingArtifact(dir));
        }
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// SHA-256 of a model's JSON encoding: identifies which decomposition a set
/// of human labels was made against.
pub fn model_fingerprint(model: &KruskalModel) -> String {
    let json = serde_json::to_vec(model).expect("model serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanLabel {
    pub component_index: usize,
    pub verdict: Verdict,
}

/// Review decisions kept beside the labeling so re-running detection never
/// silently drops them. Labels made against a different model are marked
/// stale and not applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanLabels {
    pub model_fingerprint: String,
    pub stale: bool,
    pub labels: Vec<HumanLabel>,
}

impl HumanLabels {
    pub fn from_labeling(labeling: &ArtifactLabeling) -> Self {
        Self {
            model_fingerprint: model_fingerprint(&labeling.model),
            stale: false,
            labels: labeling
                .diagnostics
                .iter()
                .filter_map(|d| {
                    d.human_verdict.map(|verdict| HumanLabel {
                        component_index: d.component_index,
                        verdict,
                    })
                })
                .collect(),
        }
    }

    /// Applies the labels if they were made against `labeling`'s model;
    /// otherwise marks them stale. Returns whether they were applied.
    pub fn apply(&mut self, labeling: &mut ArtifactLabeling) -> Result<bool> {
        if self.stale || self.model_fingerprint != model_fingerprint(&labeling.model) {
            self.stale = true;
            return Ok(false);
        }
        for l in &self.labels {
            labeling.set_human_verdict(l.component_index, Some(l.verdict))?;
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EpochedDataset {
        let mut eeg = Channel::new("Cz", ChannelRole::Eeg);
        eeg.position = Some((0.0, 0.0));
        EpochedDataset {
            subject_id: "sub-01".into(),
            sample_rate: 4.0,
            pre_stimulus_s: 0.5,
            channels: vec![eeg, Channel::new("EMG", ChannelRole::Emg)],
            trials: vec![
                Trial {
                    data: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -0.5, 0.25, 1e3]),
                    speech_onset_ms: Some(900.0),
                    behavior: Behavior::Correct,
                    rejected: None,
                },
                Trial {
                    data: DMatrix::from_row_slice(2, 3, &[0.0, -1.0, 0.5, 8.0, 9.0, 10.0]),
                    speech_onset_ms: None,
                    behavior: Behavior::Missed,
                    rejected: Some("missed".into()),
                },
            ],
            steps: vec!["epoch".into()],
        }
    }

    #[test]
    fn binary_layout_is_trial_channel_sample() {
        let b = encode_samples(&tiny());
        assert_eq!(b.len(), 2 * 2 * 3 * 4);
        let at = |i: usize| f32::from_le_bytes(b[i * 4..i * 4 + 4].try_into().unwrap());
        assert_eq!(at(0), 1.0);
        assert_eq!(at(3), -0.5);
        assert_eq!(at(5), 1e3);
        assert_eq!(at(6), 0.0);
        assert_eq!(at(11), 10.0);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &tiny()).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
        assert_eq!(read_dataset(dir.path()).unwrap(), tiny());
    }

    #[test]
    fn truncated_data_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &tiny()).unwrap();
        let p = dir.path().join(DATA_FILE);
        let mut b = fs::read(&p).unwrap();
        b.truncate(b.len() - 4);
        fs::write(&p, b).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::InvalidData(_))));
    }

    #[test]
    fn manifest_requires_roles() {
        let mut m = DatasetManifest::from_dataset(&tiny());
        assert!(m.validate().is_ok());
        m.channels.retain(|c| c.role != ChannelRole::Emg);
        assert!(matches!(m.validate(), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn missing_json_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clusters.json");
        match read_json::<serde_json::Value>(&p) {
            Err(Error::MissingArtifact(q)) => assert_eq!(q, p),
            other => panic!("{other:?}"),
        }
    }
}
