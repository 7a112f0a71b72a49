//! Durable control-plane state.
//!
//! Layout under the store directory:
//! - `metadata.json`: OS definitions and users, replaced atomically
//!   (staged to a temporary file, synced, renamed);
//! - `auth_log.jsonl`: append-only authentication log, one entry per line;
//! - `files/<os_id>/<filename>`: artifact bytes, also staged and renamed.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::model::{AuthLogEntry, OsDefinition, UserRecord};

pub const SCHEMA_VERSION: u32 = 1;
const METADATA: &str = "metadata.json";
const AUTH_LOG: &str = "auth_log.jsonl";
const FILES: &str = "files";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("store is corrupt: {0}")]
    Corruption(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: u32,
    pub next_os_seq: u64,
    pub oses: Vec<OsDefinition>,
    pub users: Vec<UserRecord>,
}

impl Metadata {
    fn check(&self) -> Result<(), StoreError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(StoreError::Corruption(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        for u in &self.users {
            if !self.oses.iter().any(|o| o.os_id == u.assigned_os) {
                return Err(StoreError::Corruption(format!(
                    "user `{}` references missing OS `{}`",
                    u.username, u.assigned_os
                )));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    meta: Metadata,
    log: Vec<AuthLogEntry>,
    log_file: File,
}

fn write_atomically(path: &Path, data: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("staged");
    let staged = dir.join(format!(".{name}.tmp"));
    {
        let mut f = File::create(&staged).map_err(io_err(&staged))?;
        f.write_all(data).map_err(io_err(&staged))?;
        f.sync_all().map_err(io_err(&staged))?;
    }
    fs::rename(&staged, path).map_err(io_err(path))?;
    sync_dir(dir);
    Ok(())
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

impl Store {
    /// Opens the store at `root`, creating an empty one on first start.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(root.join(FILES)).map_err(io_err(root))?;
        let meta_path = root.join(METADATA);
        let meta = match fs::read(&meta_path) {
            Ok(bytes) => serde_json::from_slice::<Metadata>(&bytes)
                .map_err(|e| StoreError::Corruption(format!("{METADATA}: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let fresh = Metadata {
                    schema_version: SCHEMA_VERSION,
                    next_os_seq: 1,
                    ..Metadata::default()
                };
                let text = serde_json::to_vec_pretty(&fresh).expect("metadata serializes");
                write_atomically(&meta_path, &text)?;
                fresh
            }
            Err(e) => return Err(io_err(&meta_path)(e)),
        };
        meta.check()?;

        let log_path = root.join(AUTH_LOG);
        let mut log = Vec::new();
        if log_path.exists() {
            let reader = BufReader::new(File::open(&log_path).map_err(io_err(&log_path))?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err(&log_path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: AuthLogEntry = serde_json::from_str(&line).map_err(|e| {
                    StoreError::Corruption(format!("{AUTH_LOG} line {}: {e}", idx + 1))
                })?;
                log.push(entry);
            }
        }
        let log_file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;

        let store = Self {
            root: root.to_path_buf(),
            meta,
            log,
            log_file,
        };
        for os in &store.meta.oses {
            for f in &os.files {
                let path = store.file_path(&os.os_id, &f.filename);
                let len = fs::metadata(&path).map(|m| m.len()).map_err(|_| {
                    StoreError::Corruption(format!("missing artifact {}", path.display()))
                })?;
                if len != f.size {
                    return Err(StoreError::Corruption(format!(
                        "artifact {} is {len} bytes, expected {}",
                        path.display(),
                        f.size
                    )));
                }
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &Metadata {
        &self.meta
    }

    pub fn log(&self) -> &[AuthLogEntry] {
        &self.log
    }

    /// Applies `change` to a copy of the metadata and persists it; memory is
    /// updated only once the new state is on disk.
    pub fn commit<T>(
        &mut self,
        change: impl FnOnce(&mut Metadata) -> T,
    ) -> Result<T, StoreError> {
        let mut next = self.meta.clone();
        let out = change(&mut next);
        let text = serde_json::to_vec_pretty(&next).expect("metadata serializes");
        write_atomically(&self.root.join(METADATA), &text)?;
        self.meta = next;
        Ok(out)
    }

    /// Appends one entry to the log, assigning its sequence number.
    pub fn append_log(&mut self, mut entry: AuthLogEntry) -> Result<AuthLogEntry, StoreError> {
        entry.seq = self.log.len() as u64 + 1;
        let mut line = serde_json::to_vec(&entry).expect("log entry serializes");
        line.push(b'\n');
        let path = self.root.join(AUTH_LOG);
        self.log_file.write_all(&line).map_err(io_err(&path))?;
        self.log_file.sync_data().map_err(io_err(&path))?;
        self.log.push(entry.clone());
        Ok(entry)
    }

    pub fn file_path(&self, os_id: &str, filename: &str) -> PathBuf {
        self.root.join(FILES).join(os_id).join(filename)
    }

    pub fn write_file(&self, os_id: &str, filename: &str, data: &[u8]) -> Result<(), StoreError> {
        let dir = self.root.join(FILES).join(os_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomically(&dir.join(filename), data)
    }

    pub fn read_file(&self, os_id: &str, filename: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.file_path(os_id, filename);
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn remove_file(&self, os_id: &str, filename: &str) -> Result<(), StoreError> {
        let path = self.file_path(os_id, filename);
        match fs::remove_file(&path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(io_err(&path)(e)),
            _ => Ok(()),
        }
    }

    pub fn remove_os_files(&self, os_id: &str) -> Result<(), StoreError> {
        let dir = self.root.join(FILES).join(os_id);
        match fs::remove_dir_all(&dir) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(io_err(&dir)(e)),
            _ => Ok(()),
        }
    }

    /// Recomputes every artifact digest, returning `(os_id, filename)` pairs
    /// that no longer match.
    pub fn verify_files(&self) -> Vec<(String, String)> {
        let mut bad = Vec::new();
        for os in &self.meta.oses {
            for f in &os.files {
                let ok = self
                    .read_file(&os.os_id, &f.filename)
                    .map(|d| sha256_hex(&d) == f.digest)
                    .unwrap_or(false);
                if !ok {
                    bad.push((os.os_id.clone(), f.filename.clone()));
                }
            }
        }
        bad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_open_creates_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.meta().oses.is_empty());
        assert!(dir.path().join(METADATA).exists());
        drop(store);
        assert!(Store::open(dir.path()).is_ok());
    }

    #[test]
    fn garbage_metadata_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(METADATA), b"{not json").unwrap();
        assert!(matches!(
            Store::open(dir.path()),
            Err(StoreError::Corruption(_))
        ));
    }

    #[test]
    fn garbage_log_line_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        drop(Store::open(dir.path()).unwrap());
        fs::write(dir.path().join(AUTH_LOG), b"{\"seq\":1}\n").unwrap();
        assert!(matches!(
            Store::open(dir.path()),
            Err(StoreError::Corruption(_))
        ));
    }

    #[test]
    fn truncated_artifact_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        store.write_file("os-1", "k", b"kernel").unwrap();
        store
            .commit(|m| {
                m.oses.push(OsDefinition {
                    os_id: "os-1".into(),
                    name: "x".into(),
                    files: vec![super::super::model::OsFile {
                        filename: "k".into(),
                        size: 6,
                        digest: sha256_hex(b"kernel"),
                    }],
                    boot_template: String::new(),
                    kernel_params: String::new(),
                    created_at: 0,
                })
            })
            .unwrap();
        drop(store);
        fs::write(dir.path().join(FILES).join("os-1").join("k"), b"ker").unwrap();
        assert!(matches!(
            Store::open(dir.path()),
            Err(StoreError::Corruption(_))
        ));
    }

    #[test]
    fn digest_is_lowercase_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
