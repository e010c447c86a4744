//! Crash-safe file helpers: every write lands in a sibling temp file that is
//! synced and renamed over the destination.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

fn tmp_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    path.with_file_name(format!(".{name}.{}.tmp", uuid::Uuid::new_v4().simple()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let tmp = tmp_path(path);
    let mut f = File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    f.sync_all().map_err(|e| PipelineError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))?;
    if let Some(parent) = path.parent() {
        if let Ok(d) = File::open(parent) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Lets `write` fill a temp file, then renames it over `path`. Used for
/// writers that only accept a path.
pub fn atomic_write_with(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let tmp = tmp_path(path);
    if let Err(e) = write(&tmp) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    File::open(&tmp).and_then(|f| f.sync_all()).map_err(|e| PipelineError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// Copies `from` to `to` through a temp file.
pub fn atomic_copy(from: &Path, to: &Path) -> Result<()> {
    let bytes = read(from)?;
    atomic_write(to, &bytes)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| PipelineError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read(path)?))
}

/// Stable digest of any serializable configuration.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> String {
    let v = serde_json::to_value(config).expect("configuration serializes");
    sha256_hex(v.to_string().as_bytes())
}

/// Provenance written next to every text artifact as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub sha256: String,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    path.with_file_name(format!("{name}.meta.json"))
}

/// Writes an artifact and its provenance sidecar.
pub fn write_artifact(path: &Path, bytes: &[u8], config_hash: &str) -> Result<()> {
    atomic_write(path, bytes)?;
    write_meta_for(path, bytes, config_hash)
}

/// Writes the sidecar for an artifact already on disk.
pub fn write_meta(path: &Path, config_hash: &str) -> Result<()> {
    let bytes = read(path)?;
    write_meta_for(path, &bytes, config_hash)
}

fn write_meta_for(path: &Path, bytes: &[u8], config_hash: &str) -> Result<()> {
    let meta = ArtifactMeta {
        tool_version: hscls_core::TOOL_VERSION.to_string(),
        config_hash: config_hash.to_string(),
        sha256: sha256_hex(bytes),
    };
    write_json(&meta_path(path), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn artifact_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_artifact(&p, b"a,b\n", "cfg").unwrap();
        let meta: ArtifactMeta = read_json(&meta_path(&p)).unwrap();
        assert_eq!(meta.config_hash, "cfg");
        assert_eq!(meta.sha256, sha256_hex(b"a,b\n"));
        assert_eq!(meta.tool_version, hscls_core::TOOL_VERSION);
    }

    #[test]
    fn config_hash_is_stable() {
        #[derive(Serialize)]
        struct C {
            a: u32,
            b: &'static str,
        }
        assert_eq!(config_hash(&C { a: 1, b: "x" }), config_hash(&C { a: 1, b: "x" }));
        assert_ne!(config_hash(&C { a: 1, b: "x" }), config_hash(&C { a: 2, b: "x" }));
    }
}
