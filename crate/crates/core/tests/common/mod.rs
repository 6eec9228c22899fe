#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use driforge::pipeline::RunConfig;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.path().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// A private copy of the fixture directory and its loaded run config.
pub fn fixture_run() -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures(), dir.path());
    let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
    (dir, cfg)
}
