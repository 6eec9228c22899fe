use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance record written into every stage output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    /// Input label (config key or upstream artifact) → sha256.
    pub input_hashes: BTreeMap<String, String>,
    /// Path relative to the stage directory → sha256.
    pub output_hashes: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        crate::io::read_json(&dir.join(MANIFEST_FILE))
    }

    /// Re-hashes the directory and reports files whose hash differs from
    /// the record, plus files added or removed since.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let now = hash_tree(dir)?;
        let mut bad: Vec<String> = self
            .output_hashes
            .iter()
            .filter(|(k, v)| now.get(*k) != Some(*v))
            .map(|(k, _)| k.clone())
            .collect();
        bad.extend(now.keys().filter(|k| !self.output_hashes.contains_key(*k)).cloned());
        Ok(bad)
    }
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

/// Hashes a file, or every file below a directory (by relative path, then
/// content) so inputs like template directories get one stable hash.
pub fn hash_input(path: &Path) -> Result<String> {
    if path.is_dir() {
        let tree = hash_tree(path)?;
        let joined: String = tree.iter().map(|(k, v)| format!("{k}\0{v}\n")).collect();
        Ok(sha256_hex(joined))
    } else {
        hash_file(path)
    }
}

/// sha256 of every file below `dir` except the manifest, keyed by `/`
/// separated relative path.
pub fn hash_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(dir, e))?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("walk stays below root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST_FILE {
                continue;
            }
            out.insert(rel, hash_file(&path)?);
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub const FILE: &'static str = ".driforge.lock";

    pub fn acquire(output_dir: &Path) -> Result<Self> {
        fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
        let path = output_dir.join(Self::FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A stage's work-in-progress directory. Files are written here and the
/// whole directory replaces the final one in [`StagingDir::commit`]; a
/// dropped, uncommitted staging dir is deleted.
#[derive(Debug)]
pub struct StagingDir {
    tmp: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl StagingDir {
    pub fn new(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "stage".into());
        let parent = target.parent().unwrap_or(Path::new("."));
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(StagingDir {
            tmp,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.tmp
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.tmp.join(rel)
    }

    /// Hashes the outputs, writes the manifest and swaps the directory in.
    pub fn commit(mut self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.output_hashes = hash_tree(&self.tmp)?;
        manifest.finished_at = timestamp(Utc::now());
        crate::io::write_json(&self.tmp.join(MANIFEST_FILE), &manifest)?;
        if self.target.exists() {
            let old = self.target.with_extension(format!("old-{}", std::process::id()));
            fs::rename(&self.target, &old).map_err(|e| Error::io(&self.target, e))?;
            fs::rename(&self.tmp, &self.target).map_err(|e| Error::io(&self.target, e))?;
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        } else {
            fs::rename(&self.tmp, &self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for StagingDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest {
            stage: "ingest".into(),
            tool_version: TOOL_VERSION.into(),
            config_hash: "c".into(),
            input_hashes: BTreeMap::new(),
            output_hashes: BTreeMap::new(),
            started_at: timestamp(Utc::now()),
            finished_at: String::new(),
        }
    }

    #[test]
    fn commit_replaces_target_and_records_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("ingest");
        fs::create_dir_all(&target).unwrap();
        fs::write(target.join("stale.txt"), "old").unwrap();

        let staging = StagingDir::new(&target).unwrap();
        fs::create_dir_all(staging.file("sub")).unwrap();
        fs::write(staging.file("sub/a.txt"), "hello").unwrap();
        let m = staging.commit(manifest()).unwrap();

        assert!(!target.join("stale.txt").exists());
        assert_eq!(m.output_hashes["sub/a.txt"], sha256_hex("hello"));
        let back = RunManifest::read(&target).unwrap();
        assert_eq!(back, m);
        assert!(back.verify(&target).unwrap().is_empty());
        fs::write(target.join("sub/a.txt"), "changed").unwrap();
        assert_eq!(back.verify(&target).unwrap(), vec!["sub/a.txt"]);
    }

    #[test]
    fn abandoned_staging_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("embed");
        {
            let s = StagingDir::new(&target).unwrap();
            fs::write(s.file("x"), "1").unwrap();
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(lock);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }
}
