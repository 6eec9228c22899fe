//! Durable embedding cache.
//!
//! File layout (little-endian throughout):
//!
//! ```text
//! magic   8 bytes   b"DRIFEMB1"
//! record* key       32 bytes  sha256(provider_id \0 model_id \0 text)
//!         dim       u32
//!         values    dim x f32
//! ```
//!
//! Records are only ever appended. Because the key mixes in the provider and
//! model ids, vectors from a different model are never returned. A torn final
//! record (interrupted append) is truncated away on open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_parts;

const MAGIC: &[u8; 8] = b"DRIFEMB1";

type Key = [u8; 32];

pub struct EmbeddingCache {
    provider_id: String,
    model_id: String,
    dim: usize,
    path: Option<PathBuf>,
    entries: RwLock<HashMap<Key, Arc<Vec<f32>>>>,
    writer: Mutex<Option<BufWriter<File>>>,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    hash: String,
    vec: Vec<f32>,
}

impl EmbeddingCache {
    pub fn in_memory(provider_id: &str, model_id: &str, dim: usize) -> Self {
        EmbeddingCache {
            provider_id: provider_id.to_string(),
            model_id: model_id.to_string(),
            dim,
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (or creates) a cache file.
    pub fn open(path: &Path, provider_id: &str, model_id: &str, dim: usize) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let mut bytes = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|e| Error::io(path, e))?;
            let valid_len = parse_records(&bytes, &mut entries, path)?;
            if valid_len < bytes.len() {
                warn!(
                    "embedding cache {} has a torn trailing record; truncating {} bytes",
                    path.display(),
                    bytes.len() - valid_len
                );
                let f = OpenOptions::new()
                    .write(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                f.set_len(valid_len as u64).map_err(|e| Error::io(path, e))?;
            }
        } else {
            std::fs::write(path, MAGIC).map_err(|e| Error::io(path, e))?;
        }
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(EmbeddingCache {
            provider_id: provider_id.to_string(),
            model_id: model_id.to_string(),
            dim,
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(&self, text: &str) -> Key {
        sha256_parts(&[&self.provider_id, &self.model_id, text])
    }

    /// Cached vector for `text`. A hit with the wrong dimension is a hard
    /// error.
    pub fn get(&self, text: &str) -> Result<Option<Arc<Vec<f32>>>> {
        let key = self.key(text);
        let entries = self.entries.read().unwrap();
        match entries.get(&key) {
            Some(v) if v.len() != self.dim => Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            }),
            Some(v) => Ok(Some(Arc::clone(v))),
            None => Ok(None),
        }
    }

    /// Stores vectors and flushes them to disk before returning.
    pub fn insert_many(&self, items: &[(String, Vec<f32>)]) -> Result<()> {
        for (_, v) in items {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: v.len(),
                });
            }
        }
        let mut writer = self.writer.lock().unwrap();
        let mut entries = self.entries.write().unwrap();
        for (text, v) in items {
            let key = self.key(text);
            if entries.contains_key(&key) {
                continue;
            }
            if let Some(w) = writer.as_mut() {
                write_record(w, &key, v).map_err(|e| self.io_err(e))?;
            }
            entries.insert(key, Arc::new(v.clone()));
        }
        if let Some(w) = writer.as_mut() {
            w.flush().map_err(|e| self.io_err(e))?;
            w.get_ref().sync_data().map_err(|e| self.io_err(e))?;
        }
        Ok(())
    }

    fn io_err(&self, e: std::io::Error) -> Error {
        Error::io(self.path.clone().unwrap_or_default(), e)
    }

    /// Writes every cached record as `{"hash": hex, "vec": [...]}` lines,
    /// sorted by hash.
    pub fn export_jsonl(&self, path: &Path) -> Result<()> {
        let entries = self.entries.read().unwrap();
        let mut records: Vec<JsonRecord> = entries
            .iter()
            .map(|(k, v)| JsonRecord {
                hash: hex::encode(k),
                vec: v.as_ref().clone(),
            })
            .collect();
        records.sort_by(|a, b| a.hash.cmp(&b.hash));
        crate::io::write_jsonl(path, &records)
    }

    /// Merges records from a JSONL export. Returns how many were new.
    pub fn import_jsonl(&self, path: &Path) -> Result<usize> {
        let records: Vec<JsonRecord> = crate::io::read_jsonl(path)?;
        let mut writer = self.writer.lock().unwrap();
        let mut entries = self.entries.write().unwrap();
        let mut added = 0;
        for (i, r) in records.into_iter().enumerate() {
            let bytes = hex::decode(&r.hash).map_err(|e| Error::Record {
                line: i + 1,
                message: format!("bad hash: {e}"),
            })?;
            let key: Key = bytes.try_into().map_err(|_| Error::Record {
                line: i + 1,
                message: "hash must be 32 bytes".into(),
            })?;
            if entries.contains_key(&key) {
                continue;
            }
            if let Some(w) = writer.as_mut() {
                write_record(w, &key, &r.vec).map_err(|e| self.io_err(e))?;
            }
            entries.insert(key, Arc::new(r.vec));
            added += 1;
        }
        if let Some(w) = writer.as_mut() {
            w.flush().map_err(|e| self.io_err(e))?;
        }
        Ok(added)
    }
}

fn write_record(w: &mut impl Write, key: &Key, values: &[f32]) -> std::io::Result<()> {
    w.write_all(key)?;
    w.write_all(&(values.len() as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Parses records into `entries`, returning the length of the valid prefix.
fn parse_records(bytes: &[u8], entries: &mut HashMap<Key, Arc<Vec<f32>>>, path: &Path) -> Result<usize> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::InvalidInput(format!(
            "{} is not an embedding cache file",
            path.display()
        )));
    }
    let mut pos = MAGIC.len();
    loop {
        if pos + 36 > bytes.len() {
            return Ok(pos);
        }
        let key: Key = bytes[pos..pos + 32].try_into().unwrap();
        let dim = u32::from_le_bytes(bytes[pos + 32..pos + 36].try_into().unwrap()) as usize;
        let end = pos + 36 + dim * 4;
        if end > bytes.len() {
            return Ok(pos);
        }
        let values = bytes[pos + 36..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.insert(key, Arc::new(values));
        pos = end;
    }
}
