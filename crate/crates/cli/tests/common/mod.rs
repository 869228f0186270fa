#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use tensorsar_cli::stages;
use tensorsar_core::pipeline::PipelineConfig;
use tensorsar_core::synth::SynthConfig;

/// A small synthetic dataset and a completed run over it, built once per
/// test binary. Tests that modify results work on a copy.
pub struct Fixture {
    _dir: tempfile::TempDir,
    pub dataset: PathBuf,
    pub results: PathBuf,
}

pub fn synth_config() -> SynthConfig {
    SynthConfig {
        n_subjects: 2,
        n_trials: 60,
        seed: 11,
        ..SynthConfig::default()
    }
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let dataset = dir.path().join("ds");
        let results = dir.path().join("results");
        let cfg = PipelineConfig::default();
        stages::synth(&synth_config(), &dataset, &cfg).unwrap();
        stages::run(&dataset, &results, &cfg).unwrap();
        Fixture {
            _dir: dir,
            dataset,
            results,
        }
    })
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &dst);
        } else {
            std::fs::copy(e.path(), dst).unwrap();
        }
    }
}

/// A private copy of the fixture's results.
pub fn results_copy() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let to = dir.path().join("results");
    copy_dir(&fixture().results, &to);
    (dir, to)
}
