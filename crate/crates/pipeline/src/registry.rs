//! Versioned model store.
//!
//! ```text
//! registry/
//!   ACTIVE            single line: active version number
//!   PROMOTIONS        one line per promotion, oldest first
//!   .lock             exclusive lock serializing mutations
//!   v<N>/manifest.json, weights.bin, vocab.txt, reference.json, reports/
//! ```
//!
//! Entries are staged in a hidden directory and renamed into place, and the
//! active pointer is replaced by rename, so readers never need the lock.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use hscls_core::corpus::Vocabulary;
use hscls_core::models::{load_weights, Architecture};
use serde::{Deserialize, Serialize};

use crate::drift::Profile;
use crate::error::{PipelineError, Result};
use crate::event::now_rfc3339;
use crate::fsutil;

pub const ACTIVE_FILE: &str = "ACTIVE";
pub const PROMOTIONS_FILE: &str = "PROMOTIONS";
const LOCK_FILE: &str = ".lock";
const STAGING_PREFIX: &str = ".staging-";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const REFERENCE_FILE: &str = "reference.json";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Candidate,
    Active,
    Archived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: Option<String>,
    /// SHA-256 of the data snapshot the model was trained on.
    pub data_sha256: Option<String>,
    /// Where that snapshot lives; drift alerts retrain from it.
    pub data_path: Option<String>,
    pub seed: u64,
    pub config_hash: String,
}

/// Immutable description of a registered version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryManifest {
    pub version: u32,
    pub architecture: Architecture,
    pub weights_sha256: String,
    pub vocab_hash: String,
    pub class_list: Vec<String>,
    pub reports: Vec<String>,
    pub holdout_accuracy: Option<f64>,
    pub provenance: Provenance,
    pub created: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    #[serde(flatten)]
    pub manifest: EntryManifest,
    /// Derived from the active pointer and the promotion log.
    pub status: EntryStatus,
}

impl RegistryEntry {
    pub fn version(&self) -> u32 {
        self.manifest.version
    }
}

#[derive(Debug, Clone)]
pub struct RegisterRequest {
    pub weights: PathBuf,
    pub vocab: PathBuf,
    pub reference: Option<Profile>,
    pub reports: Vec<PathBuf>,
    pub holdout_accuracy: Option<f64>,
    pub provenance: Provenance,
}

/// Held for the duration of a registry mutation; released on drop.
struct RegistryLock(File);

impl Drop for RegistryLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    root: PathBuf,
}

fn parse_version_dir(name: &str) -> Option<u32> {
    name.strip_prefix('v').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())).and_then(|d| d.parse().ok())
}

impl Registry {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fsutil::ensure_dir(&root)?;
        Ok(Registry { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn version_dir(&self, version: u32) -> PathBuf {
        self.root.join(format!("v{version}"))
    }

    pub fn weights_path(&self, version: u32) -> PathBuf {
        self.version_dir(version).join(WEIGHTS_FILE)
    }

    pub fn vocab_path(&self, version: u32) -> PathBuf {
        self.version_dir(version).join(VOCAB_FILE)
    }

    pub fn reference_path(&self, version: u32) -> PathBuf {
        self.version_dir(version).join(REFERENCE_FILE)
    }

    fn lock(&self) -> Result<RegistryLock> {
        let path = self.root.join(LOCK_FILE);
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(&path).map_err(|e| PipelineError::io(&path, e))?;
        f.lock().map_err(|e| PipelineError::io(&path, e))?;
        Ok(RegistryLock(f))
    }

    /// Registered versions in increasing order.
    pub fn versions(&self) -> Result<Vec<u32>> {
        let entries = fs::read_dir(&self.root).map_err(|e| PipelineError::io(&self.root, e))?;
        let mut v: Vec<u32> = entries
            .flatten()
            .filter_map(|e| parse_version_dir(e.file_name().to_str()?))
            .filter(|v| self.version_dir(*v).join(MANIFEST_FILE).is_file())
            .collect();
        v.sort_unstable();
        Ok(v)
    }

    fn promoted(&self) -> Result<BTreeSet<u32>> {
        let path = self.root.join(PROMOTIONS_FILE);
        if !path.is_file() {
            return Ok(BTreeSet::new());
        }
        let text = String::from_utf8_lossy(&fsutil::read(&path)?).into_owned();
        Ok(text.lines().filter_map(|l| l.split_whitespace().next()?.parse().ok()).collect())
    }

    /// The version named by the active pointer, if any.
    pub fn active_version(&self) -> Result<Option<u32>> {
        let path = self.root.join(ACTIVE_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => text
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| PipelineError::Registry(format!("active pointer holds {:?}, not a version", text))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }

    fn entry(&self, version: u32, active: Option<u32>, promoted: &BTreeSet<u32>) -> Result<RegistryEntry> {
        let path = self.version_dir(version).join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(PipelineError::NotFound(format!("registry version {version}")));
        }
        let manifest: EntryManifest = fsutil::read_json(&path)?;
        let status = if active == Some(version) {
            EntryStatus::Active
        } else if promoted.contains(&version) {
            EntryStatus::Archived
        } else {
            EntryStatus::Candidate
        };
        Ok(RegistryEntry { manifest, status })
    }

    pub fn get(&self, version: u32) -> Result<RegistryEntry> {
        self.entry(version, self.active_version()?, &self.promoted()?)
    }

    pub fn active(&self) -> Result<Option<RegistryEntry>> {
        match self.active_version()? {
            Some(v) => Ok(Some(self.entry(v, Some(v), &BTreeSet::new())?)),
            None => Ok(None),
        }
    }

    pub fn list(&self) -> Result<Vec<RegistryEntry>> {
        let active = self.active_version()?;
        let promoted = self.promoted()?;
        self.versions()?.into_iter().map(|v| self.entry(v, active, &promoted)).collect()
    }

    /// Adds a candidate version. Re-registering from the same run returns the
    /// existing entry.
    pub fn register(&self, req: &RegisterRequest) -> Result<RegistryEntry> {
        let _lock = self.lock()?;
        if let Some(run_id) = &req.provenance.run_id {
            if let Some(e) = self.list()?.into_iter().find(|e| e.manifest.provenance.run_id.as_ref() == Some(run_id)) {
                return Ok(e);
            }
        }
        let weights_bytes = fsutil::read(&req.weights)?;
        let weights = load_weights(&req.weights)?;
        let vocab = Vocabulary::load(&req.vocab)?;
        if vocab.hash() != weights.vocab_hash {
            return Err(PipelineError::Registry(format!(
                "vocabulary {} has hash {} but the weights were trained with {}",
                req.vocab.display(),
                vocab.hash(),
                weights.vocab_hash
            )));
        }
        self.clear_staging()?;
        let version = self.versions()?.last().copied().unwrap_or(0) + 1;
        let stage = self.root.join(format!("{STAGING_PREFIX}{}", uuid::Uuid::new_v4().simple()));
        fsutil::ensure_dir(&stage.join(REPORTS_DIR))?;
        fsutil::atomic_write(&stage.join(WEIGHTS_FILE), &weights_bytes)?;
        fsutil::atomic_write(&stage.join(VOCAB_FILE), vocab.to_text().as_bytes())?;
        if let Some(r) = &req.reference {
            fsutil::write_json(&stage.join(REFERENCE_FILE), r)?;
        }
        let mut reports = Vec::new();
        for p in &req.reports {
            let name = p
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| PipelineError::Registry(format!("report path {} has no file name", p.display())))?;
            fsutil::atomic_copy(p, &stage.join(REPORTS_DIR).join(name))?;
            reports.push(format!("{REPORTS_DIR}/{name}"));
        }
        let manifest = EntryManifest {
            version,
            architecture: weights.config.architecture(),
            weights_sha256: fsutil::sha256_hex(&weights_bytes),
            vocab_hash: weights.vocab_hash.clone(),
            class_list: weights.class_list.clone(),
            reports,
            holdout_accuracy: req.holdout_accuracy,
            provenance: req.provenance.clone(),
            created: now_rfc3339(),
            tool_version: hscls_core::TOOL_VERSION.into(),
        };
        fsutil::write_json(&stage.join(MANIFEST_FILE), &manifest)?;
        let dest = self.version_dir(version);
        fs::rename(&stage, &dest).map_err(|e| PipelineError::io(&dest, e))?;
        if let Ok(d) = File::open(&self.root) {
            let _ = d.sync_all();
        }
        log::info!("registered version {version} ({})", manifest.architecture);
        Ok(RegistryEntry { manifest, status: EntryStatus::Candidate })
    }

    fn clear_staging(&self) -> Result<()> {
        let entries = fs::read_dir(&self.root).map_err(|e| PipelineError::io(&self.root, e))?;
        for e in entries.flatten() {
            if e.file_name().to_str().is_some_and(|n| n.starts_with(STAGING_PREFIX)) {
                let _ = fs::remove_dir_all(e.path());
            }
        }
        Ok(())
    }

    /// Makes `version` the active entry. Promoting the active version is a
    /// no-op.
    pub fn promote(&self, version: u32) -> Result<RegistryEntry> {
        let _lock = self.lock()?;
        if !self.version_dir(version).join(MANIFEST_FILE).is_file() {
            return Err(PipelineError::NotFound(format!("registry version {version}")));
        }
        if self.active_version()? != Some(version) {
            let log = self.root.join(PROMOTIONS_FILE);
            let mut f = OpenOptions::new().create(true).append(true).open(&log).map_err(|e| PipelineError::io(&log, e))?;
            writeln!(f, "{version} {}", now_rfc3339()).and_then(|_| f.sync_all()).map_err(|e| PipelineError::io(&log, e))?;
            fsutil::atomic_write(&self.root.join(ACTIVE_FILE), format!("{version}\n").as_bytes())?;
            log::info!("promoted version {version}");
        }
        self.get(version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hscls_core::corpus::build_vocabulary;
    use hscls_core::models::{build_model, save_weights, ArchitectureConfig, DnnConfig, ModelContext, ModelWeights, TrainingMetadata};
    use hscls_core::nn::OptimizerSpec;

    fn fixture(dir: &Path) -> RegisterRequest {
        let vocab = build_vocabulary(&["pump valve seal"], 10).unwrap();
        let cfg = ArchitectureConfig::Dnn(DnnConfig { embedding_dim: 4, initial_neurons: 4, ..DnnConfig::paper_base() });
        let model = build_model::<f64>(&cfg, vocab.len(), 2, 4, 1).unwrap();
        let ctx = ModelContext { vocab_hash: vocab.hash(), class_list: vec!["111111".into(), "222222".into()] };
        let meta = TrainingMetadata {
            seed: 1,
            epochs_run: 0,
            best_epoch: 0,
            final_loss: 0.0,
            optimizer: OptimizerSpec::adam(1e-3),
            batch_size: 1,
            initialization: "glorot_uniform".into(),
        };
        let w = ModelWeights::from_model(&model, &ctx, meta);
        let wp = dir.join("w.bin");
        save_weights(&w, &wp).unwrap();
        let vp = dir.join("vocab.txt");
        vocab.save(&vp).unwrap();
        let rp = dir.join("eval.json");
        fs::write(&rp, "{}").unwrap();
        RegisterRequest {
            weights: wp,
            vocab: vp,
            reference: Some(Profile::new("ref")),
            reports: vec![rp],
            holdout_accuracy: Some(0.5),
            provenance: Provenance { run_id: None, data_sha256: None, data_path: None, seed: 1, config_hash: "h".into() },
        }
    }

    #[test]
    fn register_promote_lifecycle() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("registry")).unwrap();
        let req = fixture(dir.path());
        assert!(reg.active().unwrap().is_none());
        let e1 = reg.register(&req).unwrap();
        assert_eq!((e1.version(), e1.status), (1, EntryStatus::Candidate));
        assert!(reg.version_dir(1).join("reports/eval.json").is_file());
        assert_eq!(reg.promote(1).unwrap().status, EntryStatus::Active);
        assert_eq!(reg.active().unwrap().unwrap().version(), 1);
        assert_eq!(fs::read_to_string(reg.root().join(ACTIVE_FILE)).unwrap(), "1\n");

        let e2 = reg.register(&req).unwrap();
        assert_eq!(e2.version(), 2);
        reg.promote(2).unwrap();
        let statuses: Vec<_> = reg.list().unwrap().iter().map(|e| e.status).collect();
        assert_eq!(statuses, [EntryStatus::Archived, EntryStatus::Active]);
        assert_eq!(reg.list().unwrap().iter().filter(|e| e.status == EntryStatus::Active).count(), 1);
        reg.promote(2).unwrap();
        reg.promote(1).unwrap();
        assert_eq!(reg.active().unwrap().unwrap().version(), 1);
        assert!(matches!(reg.promote(9), Err(PipelineError::NotFound(_))));
    }

    #[test]
    fn register_is_idempotent_per_run() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("registry")).unwrap();
        let mut req = fixture(dir.path());
        req.provenance.run_id = Some("run-a".into());
        assert_eq!(reg.register(&req).unwrap().version(), 1);
        assert_eq!(reg.register(&req).unwrap().version(), 1);
        req.provenance.run_id = Some("run-b".into());
        assert_eq!(reg.register(&req).unwrap().version(), 2);
    }

    #[test]
    fn vocabulary_mismatch_rejected_and_staging_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("registry")).unwrap();
        let mut req = fixture(dir.path());
        let other = dir.path().join("other.txt");
        build_vocabulary(&["lamp"], 10).unwrap().save(&other).unwrap();
        req.vocab = other;
        assert!(matches!(reg.register(&req), Err(PipelineError::Registry(_))));
        fs::create_dir_all(reg.root().join(".staging-x")).unwrap();
        assert!(reg.versions().unwrap().is_empty());
    }

    #[test]
    fn corrupt_weights_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("registry")).unwrap();
        let req = fixture(dir.path());
        let mut bytes = fs::read(&req.weights).unwrap();
        let n = bytes.len();
        bytes[n / 2] ^= 0xff;
        fs::write(&req.weights, bytes).unwrap();
        assert!(reg.register(&req).is_err());
        assert!(reg.versions().unwrap().is_empty());
    }
}
