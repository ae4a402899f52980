//! Run directories: manifests, artifacts layout and human verdicts.
//!
//! Each run lives in `<run_root>/<run_id>/`. The manifest is rewritten
//! atomically; verdicts are appended to a JSON-lines file and the last record
//! per dimension is the active one.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::DatasetInfo;
use crate::error::{Error, Result};
use crate::fsutil::write_json_atomic;
use crate::vae::TrainConfig;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Training,
    Analyzed,
    Judged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Shortcut,
    Valid,
    Unclear,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Shortcut => "shortcut",
            Verdict::Valid => "valid",
            Verdict::Unclear => "unclear",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shortcut" => Ok(Verdict::Shortcut),
            "valid" => Ok(Verdict::Valid),
            "unclear" => Ok(Verdict::Unclear),
            other => Err(Error::contract(format!("unknown verdict `{other}` (expected shortcut, valid or unclear)"))),
        }
    }
}

/// One judgment of one latent dimension. `dim` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub run_id: String,
    pub dim: usize,
    pub verdict: Verdict,
    pub notes: String,
    pub judge: String,
    pub timestamp: String,
}

/// Completion record of a pipeline stage: the hash of its inputs, used to
/// skip re-running a stage whose inputs have not changed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    pub completed_at: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    pub created_at: String,
    pub status: RunStatus,
    /// Where the dataset came from (generator config or folder path).
    pub dataset_ref: serde_json::Value,
    pub dataset: DatasetInfo,
    pub train_config: TrainConfig,
    /// Full merged pipeline configuration.
    pub config: serde_json::Value,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
    /// Artifact file name → sha256.
    #[serde(default)]
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn latent_dim(&self) -> usize {
        self.train_config.latent_dim
    }

    pub fn stage_done(&self, stage: &str) -> bool {
        self.stages.contains_key(stage)
    }

    /// Move the status forward; moving backwards is a state error.
    pub fn advance(&mut self, to: RunStatus) -> Result<()> {
        if to < self.status {
            return Err(Error::State(format!("run {} cannot go from {:?} back to {:?}", self.run_id, self.status, to)));
        }
        self.status = to;
        Ok(())
    }
}

pub fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Artifact paths inside a run directory. Dimensions are 0-based arguments
/// and appear 1-based in file names.
pub mod layout {
    pub const MANIFEST: &str = "manifest.json";
    pub const CHECKPOINT: &str = "checkpoint.bin";
    pub const LATENTS: &str = "latents.csv";
    pub const SCORES: &str = "scores.json";
    pub const VERDICTS: &str = "verdicts.jsonl";
    pub const REPORT_HTML: &str = "report.html";
    pub const REPORT_MD: &str = "report.md";
    pub const DATASET: &str = "dataset.lsd";
    pub const SPLITS: &str = "splits.json";
    pub const TRAINING_LOG: &str = "training_log.jsonl";
    pub const PROBE_HEAD: &str = "probe_head.json";
    pub const HYPERPARAMS: &str = "hyperparams.json";
    pub const EVIDENCE: &str = "evidence.json";
    pub const ATTACK_REPORT: &str = "attack_report.json";
    pub const ATTACKED_DATASET: &str = "attacked_test.lsd";
    pub const REFERENCE_CNN: &str = "reference_cnn.bin";
    pub(super) const LOCK: &str = ".lock";

    pub fn kde(j: usize) -> String {
        format!("kde/dim_{}.json", j + 1)
    }

    pub fn traversal(j: usize) -> String {
        format!("grids/dim_{}_traversal.png", j + 1)
    }

    pub fn extremes_min(j: usize) -> String {
        format!("extremes/dim_{}_min.png", j + 1)
    }

    pub fn extremes_max(j: usize) -> String {
        format!("extremes/dim_{}_max.png", j + 1)
    }
}

/// Exclusive advisory lock on a run directory, released on drop.
pub struct RunLock {
    file: File,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(run_dir.join(layout::LOCK))?;
        file.lock()?;
        Ok(RunLock { file })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

/// Filesystem-backed collection of runs.
#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl RunStore {
    /// Open (creating if needed) a run root.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(RunStore { root })
    }

    /// Open an existing run root without creating it.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::NotFound(format!("run root {}", root.display())));
        }
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    pub fn path(&self, run_id: &str, artifact: &str) -> PathBuf {
        self.run_dir(run_id).join(artifact)
    }

    /// Create a new run in status `training` with a fresh UUID.
    pub fn create_run(
        &self,
        dataset_ref: serde_json::Value,
        dataset: DatasetInfo,
        train_config: TrainConfig,
        config: serde_json::Value,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            run_id: uuid::Uuid::new_v4().to_string(),
            created_at: now_rfc3339(),
            status: RunStatus::Training,
            dataset_ref,
            dataset,
            train_config,
            config,
            stages: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        };
        fs::create_dir_all(self.run_dir(&manifest.run_id))?;
        self.save_manifest(&manifest)?;
        Ok(manifest)
    }

    pub fn save_manifest(&self, m: &RunManifest) -> Result<()> {
        write_json_atomic(&self.path(&m.run_id, layout::MANIFEST), m)
    }

    pub fn get_run(&self, run_id: &str) -> Result<RunManifest> {
        if !valid_run_id(run_id) {
            return Err(Error::NotFound(format!("run `{run_id}`")));
        }
        let p = self.path(run_id, layout::MANIFEST);
        let text = fs::read_to_string(&p).map_err(|_| Error::NotFound(format!("run `{run_id}`")))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Schema { expected: MANIFEST_SCHEMA_VERSION, found: m.schema_version });
        }
        Ok(m)
    }

    /// All readable runs, newest first (ties by id).
    pub fn list_runs(&self) -> Result<Vec<RunManifest>> {
        let mut runs = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            if !entry.path().join(layout::MANIFEST).exists() {
                continue;
            }
            match self.get_run(&id) {
                Ok(m) => runs.push(m),
                Err(e) => warn!("skipping run {id}: {e}"),
            }
        }
        let key = |m: &RunManifest| DateTime::parse_from_rfc3339(&m.created_at).ok();
        runs.sort_by(|a, b| key(b).cmp(&key(a)).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(runs)
    }

    /// Read-modify-write of a manifest under the run lock.
    pub fn update_run<F>(&self, run_id: &str, f: F) -> Result<RunManifest>
    where
        F: FnOnce(&mut RunManifest) -> Result<()>,
    {
        self.get_run(run_id)?;
        let _lock = RunLock::acquire(&self.run_dir(run_id))?;
        let mut m = self.get_run(run_id)?;
        f(&mut m)?;
        self.save_manifest(&m)?;
        Ok(m)
    }

    /// Append a verdict for 0-based dimension `dim` and mark the run judged.
    pub fn record_verdict(
        &self,
        run_id: &str,
        dim: usize,
        verdict: Verdict,
        notes: &str,
        judge: &str,
    ) -> Result<VerdictRecord> {
        self.get_run(run_id)?;
        let _lock = RunLock::acquire(&self.run_dir(run_id))?;
        let mut m = self.get_run(run_id)?;
        if m.status < RunStatus::Analyzed {
            return Err(Error::State(format!("run {run_id} is not analyzed yet; run `analyze` first")));
        }
        if dim >= m.latent_dim() {
            return Err(Error::contract(format!("dimension {} out of range 1..={}", dim + 1, m.latent_dim())));
        }
        let rec = VerdictRecord {
            run_id: run_id.to_string(),
            dim: dim + 1,
            verdict,
            notes: notes.to_string(),
            judge: judge.to_string(),
            timestamp: now_rfc3339(),
        };
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(run_id, layout::VERDICTS))?;
        f.write_all(format!("{}\n", serde_json::to_string(&rec)?).as_bytes())?;
        f.sync_data()?;
        if m.status < RunStatus::Judged {
            m.advance(RunStatus::Judged)?;
            self.save_manifest(&m)?;
        }
        Ok(rec)
    }

    /// Every verdict ever recorded for the run, oldest first.
    pub fn verdict_history(&self, run_id: &str) -> Result<Vec<VerdictRecord>> {
        self.get_run(run_id)?;
        let p = self.path(run_id, layout::VERDICTS);
        if !p.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for (i, line) in BufReader::new(File::open(&p)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => out.push(r),
                // a torn final line from a crashed writer is ignored
                Err(e) => warn!("ignoring malformed verdict line {} in run {run_id}: {e}", i + 1),
            }
        }
        Ok(out)
    }

    /// Active verdict per 0-based dimension (last record wins).
    pub fn active_verdicts(&self, run_id: &str) -> Result<BTreeMap<usize, VerdictRecord>> {
        Ok(self.verdict_history(run_id)?.into_iter().map(|r| (r.dim - 1, r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> DatasetInfo {
        DatasetInfo {
            n_samples: 1,
            height: 8,
            width: 8,
            channels: 3,
            class_names: vec!["a".into(), "b".into()],
            class_counts: vec![1, 0],
            content_hash: "x".into(),
        }
    }

    fn new_run(store: &RunStore) -> RunManifest {
        let cfg = TrainConfig { latent_dim: 4, ..TrainConfig::default() };
        store.create_run(serde_json::json!({"kind": "test"}), info(), cfg, serde_json::json!({})).unwrap()
    }

    #[test]
    fn create_get_list() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        assert!(store.list_runs().unwrap().is_empty());
        let ids: Vec<String> = (0..3)
            .map(|_| {
                let m = new_run(&store);
                std::thread::sleep(std::time::Duration::from_millis(2));
                m.run_id
            })
            .collect();
        let m = store.get_run(&ids[0]).unwrap();
        assert_eq!(m.status, RunStatus::Training);
        let listed: Vec<String> = store.list_runs().unwrap().into_iter().map(|m| m.run_id).collect();
        assert_eq!(listed, ids.iter().rev().cloned().collect::<Vec<_>>());
        assert!(matches!(store.get_run("missing"), Err(Error::NotFound(_))));
        assert!(matches!(store.get_run("../etc"), Err(Error::NotFound(_))));
    }

    #[test]
    fn status_only_moves_forward() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let id = new_run(&store).run_id;
        store.update_run(&id, |m| m.advance(RunStatus::Analyzed)).unwrap();
        assert!(matches!(store.update_run(&id, |m| m.advance(RunStatus::Training)), Err(Error::State(_))));
        assert_eq!(store.get_run(&id).unwrap().status, RunStatus::Analyzed);
    }

    #[test]
    fn verdict_replace_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let id = new_run(&store).run_id;
        assert!(matches!(store.record_verdict(&id, 0, Verdict::Shortcut, "", "j"), Err(Error::State(_))));
        store.update_run(&id, |m| m.advance(RunStatus::Analyzed)).unwrap();
        store.record_verdict(&id, 1, Verdict::Shortcut, "colour", "j").unwrap();
        store.record_verdict(&id, 1, Verdict::Valid, "shape after all", "j").unwrap();
        assert_eq!(store.verdict_history(&id).unwrap().len(), 2);
        let active = store.active_verdicts(&id).unwrap();
        assert_eq!(active.len(), 1);
        assert_eq!(active[&1].verdict, Verdict::Valid);
        assert_eq!(active[&1].dim, 2);
        assert_eq!(store.get_run(&id).unwrap().status, RunStatus::Judged);
        assert!(matches!(store.record_verdict(&id, 4, Verdict::Valid, "", "j"), Err(Error::Contract(_))));
    }

    #[test]
    fn concurrent_verdicts_on_different_dims_all_persist() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let id = new_run(&store).run_id;
        store.update_run(&id, |m| m.advance(RunStatus::Analyzed)).unwrap();
        std::thread::scope(|s| {
            for t in 0..4 {
                let (store, id) = (&store, &id);
                s.spawn(move || {
                    for k in 0..10 {
                        store.record_verdict(id, t, Verdict::Unclear, &format!("w{t} n{k}"), "j").unwrap();
                    }
                });
            }
        });
        assert_eq!(store.verdict_history(&id).unwrap().len(), 40);
        assert_eq!(store.active_verdicts(&id).unwrap().len(), 4);
    }
}
