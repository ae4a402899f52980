//! Pipeline stages over a run directory.
//!
//! A run is created by the dataset stage and then advanced by
//! train → analyze → probe → evidence → report (attack is a side branch that
//! only needs the dataset). Every stage records a hash of its inputs in the
//! manifest and is skipped when re-run with unchanged inputs unless forced.
//! Running a stage clears the records of the stages that depend on it.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::advgen::{attack_dataset, evaluate_attack, train_reference_cnn, AttackConfig, CnnConfig};
use crate::analysis::{encode_dataset, kde_plot_data, mean_variance, mpwd_all, DimensionScoreboard, LatentTable};
use crate::data::idx::parse_idx;
use crate::data::{
    colorize_digits, generate_colored_shortcut, generate_zoom_shortcut, load_archive, load_image_folder, save_archive,
    split, LabeledImageSet, Splits, SyntheticConfig, SyntheticKind,
};
use crate::error::{Error, Result};
use crate::fsutil::{sha256_file, sha256_hex, write_atomic, write_json_atomic};
use crate::probe::{predictiveness_all, probe_accuracy, train_probe, ProbeConfig, ProbeHead};
use crate::runstore::{layout, now_rfc3339, RunLock, RunManifest, RunStatus, RunStore, StageRecord};
use crate::vae::{suggest_hyperparams, train_vae, BetaVae, EpochRecord, TrainConfig};
use crate::visual::{
    assemble_report, bbox_area_ratio, color_shift, extreme_images, grid_columns, grid_png, report_candidates,
    strip_png, to_f32, traverse, ReportInput, TraversalMode, TraversalSpec, DEFAULT_EXTREMES, DEFAULT_STEPS,
};

/// Number of top dimensions per score that become report candidates.
pub const DEFAULT_K: usize = 3;
/// Multiple of the median MPWD above which a dimension is called out.
pub const DEFAULT_OUTLIER_FACTOR: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FolderSource {
    pub path: PathBuf,
    pub image_size: usize,
}

/// Grayscale digits in IDX files, tinted by the colored-shortcut recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub colorize: SyntheticConfig,
}

/// Exactly one source must be set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub split: [f64; 3],
    pub synthetic: Option<SyntheticConfig>,
    pub folder: Option<FolderSource>,
    pub archive: Option<PathBuf>,
    pub idx: Option<IdxSource>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec { split: [0.8, 0.1, 0.1], synthetic: None, folder: None, archive: None, idx: None }
    }
}

impl DatasetSpec {
    fn source_count(&self) -> usize {
        [self.synthetic.is_some(), self.folder.is_some(), self.archive.is_some(), self.idx.is_some()]
            .iter()
            .filter(|b| **b)
            .count()
    }

    /// Materialize the dataset described by this spec.
    pub fn load(&self) -> Result<LabeledImageSet> {
        if let Some(s) = &self.synthetic {
            return match s.kind {
                SyntheticKind::Color => generate_colored_shortcut(s),
                SyntheticKind::Zoom => generate_zoom_shortcut(s),
            };
        }
        if let Some(f) = &self.folder {
            return load_image_folder(&f.path, f.image_size);
        }
        if let Some(p) = &self.archive {
            return load_archive(p);
        }
        if let Some(i) = &self.idx {
            return colorize_digits(&parse_idx(&i.images)?, &parse_idx(&i.labels)?, &i.colorize);
        }
        Err(Error::Config("dataset has no source; set one of synthetic, folder, archive or idx".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub k: usize,
    pub outlier_factor: f64,
    pub kde_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            k: DEFAULT_K,
            outlier_factor: DEFAULT_OUTLIER_FACTOR,
            kde_points: crate::analysis::KDE_GRID_POINTS,
        }
    }
}

/// Which dimensions get visual evidence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DimSelection {
    /// Union of the top-k dimensions by MPWD and by predictiveness.
    #[default]
    Top,
    All,
    /// Explicit 1-based dimensions.
    List(Vec<usize>),
}

impl std::str::FromStr for DimSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "top" => Ok(DimSelection::Top),
            "all" => Ok(DimSelection::All),
            list => {
                let dims = list
                    .split(',')
                    .map(|t| t.trim().parse::<usize>().ok().filter(|d| *d >= 1))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| {
                        Error::Config(format!("dims `{s}`: expected top, all or 1-based numbers like 1,4"))
                    })?;
                Ok(DimSelection::List(dims))
            }
        }
    }
}

impl TryFrom<String> for DimSelection {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DimSelection> for String {
    fn from(d: DimSelection) -> String {
        match d {
            DimSelection::Top => "top".into(),
            DimSelection::All => "all".into(),
            DimSelection::List(v) => v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceConfig {
    pub steps: usize,
    /// Extreme instances per side.
    pub extremes: usize,
    pub mode: TraversalMode,
    pub dims: DimSelection,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        EvidenceConfig {
            steps: DEFAULT_STEPS,
            extremes: DEFAULT_EXTREMES,
            mode: TraversalMode::Set,
            dims: DimSelection::Top,
        }
    }
}

/// Merged experiment configuration. The top-level `seed` is copied into every
/// stage (dataset generation, split, VAE, probe, classifier).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub analysis: AnalysisConfig,
    pub evidence: EvidenceConfig,
    pub attack: AttackConfig,
    pub classifier: CnnConfig,
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub latent_dim: Option<usize>,
}

impl PipelineConfig {
    /// Parse TOML, or JSON when the file ends in `.json`. Unknown keys are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
        }
    }

    /// Apply overrides, propagate the seed and fill synthetic defaults.
    pub fn resolve(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.k {
            self.analysis.k = k;
        }
        if let Some(b) = o.beta {
            self.train.beta = b;
        }
        if let Some(d) = o.latent_dim {
            self.train.latent_dim = d;
        }
        self.train.seed = self.seed;
        self.probe.seed = self.seed;
        self.classifier.seed = self.seed;
        if let Some(s) = self.dataset.synthetic.take() {
            let mut s = s.with_defaults();
            s.seed = self.seed;
            self.dataset.synthetic = Some(s);
            self.train.image_size = self.dataset.synthetic.as_ref().map_or(self.train.image_size, |s| s.image_size);
            self.train.channels = 3;
        }
        if let Some(f) = &self.dataset.folder {
            self.train.image_size = f.image_size;
            self.train.channels = 3;
        }
        if let Some(i) = &mut self.dataset.idx {
            i.colorize = i.colorize.clone().with_defaults();
            i.colorize.seed = self.seed;
            self.train.image_size = i.colorize.image_size;
            self.train.channels = 3;
        }
        self
    }

    /// Check every section. Image geometry of an archive source is checked
    /// once the archive is read.
    pub fn validate(&self) -> Result<()> {
        if self.dataset.source_count() != 1 {
            return Err(Error::Config("dataset needs exactly one of synthetic, folder, archive or idx".into()));
        }
        let s = self.dataset.split;
        if s.iter().any(|r| !(0.0..=1.0).contains(r)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {s:?} must be in [0,1] and sum to 1")));
        }
        if let Some(c) = &self.dataset.synthetic {
            c.validate()?;
        }
        if let Some(i) = &self.dataset.idx {
            i.colorize.validate()?;
        }
        if self.dataset.archive.is_none() {
            self.train.validate()?;
        }
        let p = &self.probe;
        if p.batch_size == 0 || p.patience == 0 || p.max_epochs == 0 || !(p.learning_rate > 0.0) {
            return Err(Error::Config(
                "probe batch_size, patience, max_epochs and learning_rate must be positive".into(),
            ));
        }
        if self.analysis.k == 0 {
            return Err(Error::Config("analysis.k must be at least 1".into()));
        }
        if !(self.analysis.outlier_factor > 0.0) || self.analysis.kde_points < 2 {
            return Err(Error::Config("analysis.outlier_factor must be positive and kde_points at least 2".into()));
        }
        if self.evidence.steps < 2 || self.evidence.extremes == 0 {
            return Err(Error::Config("evidence.steps must be at least 2 and evidence.extremes at least 1".into()));
        }
        if let DimSelection::List(dims) = &self.evidence.dims {
            if let Some(d) = dims.iter().find(|d| **d > self.train.latent_dim) {
                return Err(Error::Config(format!(
                    "evidence dimension {d} exceeds latent_dim {}",
                    self.train.latent_dim
                )));
            }
        }
        self.attack.validate()?;
        let c = &self.classifier;
        if c.batch_size == 0 || c.patience == 0 || c.max_epochs == 0 || !(c.learning_rate > 0.0) {
            return Err(Error::Config(
                "classifier batch_size, patience, max_epochs and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `from_file` + `resolve` + `validate`.
    pub fn load(path: &Path, o: &Overrides) -> Result<Self> {
        let cfg = Self::from_file(path)?.resolve(o);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Dataset,
    Train,
    Analyze,
    Probe,
    Evidence,
    Attack,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Analyze => "analyze",
            Stage::Probe => "probe",
            Stage::Evidence => "evidence",
            Stage::Attack => "attack",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs are stale once this one re-runs.
    fn dependents(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Dataset => &[Train, Analyze, Probe, Evidence, Attack, Report],
            Train => &[Analyze, Probe, Evidence, Report],
            Analyze => &[Probe, Evidence, Report],
            Probe => &[Evidence, Report],
            Evidence | Attack => &[Report],
            Report => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Inputs unchanged since the last completed run of the stage.
    Skipped,
}

/// Per-dimension summary written to `evidence.json` (dims 1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimEvidence {
    pub dim: usize,
    pub instance_id: String,
    pub values: Vec<f64>,
    /// Chromaticity swing across traversal frames.
    pub color_shift: f64,
    /// Foreground bounding-box area ratio between first and last frame.
    pub bbox_area_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub k: usize,
    pub steps: usize,
    pub extremes: usize,
    pub mode: TraversalMode,
    pub dims: Vec<DimEvidence>,
}

/// Per-invocation settings for the evidence stage; `None` falls back to the run config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvidenceOptions {
    pub dims: Option<DimSelection>,
    pub k: Option<usize>,
    pub steps: Option<usize>,
    pub extremes: Option<usize>,
}

fn input_hash(parts: serde_json::Value) -> String {
    sha256_hex(parts.to_string().as_bytes())
}

fn file_hash(path: &Path) -> Result<String> {
    if path.exists() {
        sha256_file(path)
    } else {
        Ok(String::new())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn run_config(m: &RunManifest) -> Result<PipelineConfig> {
    Ok(serde_json::from_value(m.config.clone())?)
}

/// Stage runner bound to a run store.
#[derive(Clone, Debug)]
pub struct Pipeline {
    store: RunStore,
}

/// Manifest held under the run lock for the duration of a stage.
struct Locked {
    _lock: RunLock,
    m: RunManifest,
}

impl Pipeline {
    pub fn new(store: RunStore) -> Self {
        Pipeline { store }
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    fn path(&self, id: &str, artifact: &str) -> PathBuf {
        self.store.path(id, artifact)
    }

    fn begin(&self, id: &str, stage: Stage, needs: Stage) -> Result<Locked> {
        self.store.get_run(id)?;
        let lock = RunLock::acquire(&self.store.run_dir(id))?;
        let m = self.store.get_run(id)?;
        if !m.stage_done(needs.name()) {
            return Err(Error::State(format!(
                "run {id}: stage `{}` needs stage `{}`, which has not completed; run `latentscout {} --run {id}` first",
                stage.name(),
                needs.name(),
                needs.name()
            )));
        }
        Ok(Locked { _lock: lock, m })
    }

    fn up_to_date(&self, l: &Locked, stage: Stage, hash: &str, outputs: &[&str]) -> bool {
        l.m.stages.get(stage.name()).is_some_and(|r| r.input_hash == hash)
            && outputs.iter().all(|o| self.path(&l.m.run_id, o).exists())
    }

    fn finish(&self, l: &mut Locked, stage: Stage, hash: String, artifacts: &[&str]) -> Result<()> {
        for a in artifacts {
            let h = sha256_file(&self.path(&l.m.run_id, a))?;
            l.m.artifacts.insert((*a).to_string(), h);
        }
        for d in stage.dependents() {
            l.m.stages.remove(d.name());
        }
        l.m.stages.insert(stage.name().to_string(), StageRecord { input_hash: hash, completed_at: now_rfc3339() });
        self.store.save_manifest(&l.m)
    }

    /// Dataset plus its splits, as stored in the run.
    pub fn load_data(&self, id: &str) -> Result<(LabeledImageSet, Splits)> {
        let set = load_archive(&self.path(id, layout::DATASET))?;
        let splits: Splits = read_json(&self.path(id, layout::SPLITS))?;
        Ok((set, splits))
    }

    pub fn load_model(&self, id: &str) -> Result<BetaVae<f32>> {
        let p = self.path(id, layout::CHECKPOINT);
        if !p.exists() {
            return Err(Error::State(format!("run {id} has no checkpoint; run `latentscout train --run {id}` first")));
        }
        BetaVae::load_checkpoint(&p)
    }

    pub fn load_latents(&self, m: &RunManifest) -> Result<LatentTable<f32>> {
        let p = self.path(&m.run_id, layout::LATENTS);
        if !p.exists() {
            return Err(Error::State(format!(
                "run {} has no latents; run `latentscout analyze --run {}` first",
                m.run_id, m.run_id
            )));
        }
        LatentTable::load_csv(&p, Some(m.dataset.class_names.len()))
    }

    pub fn load_scoreboard(&self, id: &str) -> Result<DimensionScoreboard> {
        let p = self.path(id, layout::SCORES);
        if !p.exists() {
            return Err(Error::State(format!(
                "run {id} has no scoreboard; run `latentscout analyze --run {id}` first"
            )));
        }
        read_json(&p)
    }

    /// Dataset stage: materialize and split the dataset and create the run.
    pub fn create_run(&self, cfg: &PipelineConfig) -> Result<RunManifest> {
        cfg.validate()?;
        let set = cfg.dataset.load()?;
        set.validate()?;
        let mut cfg = cfg.clone();
        if set.height != set.width {
            return Err(Error::Config(format!("images must be square, got {}×{}", set.height, set.width)));
        }
        cfg.train.image_size = set.height;
        cfg.train.channels = set.channels;
        cfg.train.validate()?;
        let splits = split(&set, cfg.dataset.split, cfg.seed)?;
        let m = self.store.create_run(
            serde_json::to_value(&cfg.dataset)?,
            set.info(),
            cfg.train.clone(),
            serde_json::to_value(&cfg)?,
        )?;
        let id = m.run_id.clone();
        let mut l = Locked { _lock: RunLock::acquire(&self.store.run_dir(&id))?, m };
        save_archive(&set, &self.path(&id, layout::DATASET))?;
        write_json_atomic(&self.path(&id, layout::SPLITS), &splits)?;
        let hash = input_hash(json!([cfg.dataset, cfg.seed]));
        self.finish(&mut l, Stage::Dataset, hash, &[layout::DATASET])?;
        info!("run {id}: dataset of {} samples ({} train)", set.len(), splits.train.len());
        Ok(l.m)
    }

    /// Train the Beta-VAE on the training split with early stopping on validation.
    pub fn train(&self, id: &str, force: bool, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<StageOutcome> {
        let mut l = self.begin(id, Stage::Train, Stage::Dataset)?;
        let hash = input_hash(json!([l.m.dataset.content_hash, l.m.train_config]));
        if !force && self.up_to_date(&l, Stage::Train, &hash, &[layout::CHECKPOINT]) {
            return Ok(StageOutcome::Skipped);
        }
        let (set, splits) = self.load_data(id)?;
        let (train, val) = (set.subset(&splits.train), set.subset(&splits.val));
        let log_path = self.path(id, layout::TRAINING_LOG);
        let mut log = String::new();
        write_atomic(&log_path, b"")?;
        let vae = train_vae::<f32>(&train, &val, &l.m.train_config, |r| {
            log.push_str(&serde_json::to_string(r).expect("epoch record serializes"));
            log.push('\n');
            let _ = write_atomic(&log_path, log.as_bytes());
            on_epoch(r);
        })?;
        vae.save_checkpoint(&self.path(id, layout::CHECKPOINT))?;
        self.finish(&mut l, Stage::Train, hash, &[layout::CHECKPOINT])?;
        Ok(StageOutcome::Ran)
    }

    /// Encode the training split and score every latent dimension.
    pub fn analyze(&self, id: &str, force: bool) -> Result<StageOutcome> {
        let mut l = self.begin(id, Stage::Analyze, Stage::Train)?;
        let cfg = run_config(&l.m)?;
        let hash = input_hash(json!([l.m.artifacts.get(layout::CHECKPOINT), l.m.dataset.content_hash, cfg.analysis]));
        if !force && self.up_to_date(&l, Stage::Analyze, &hash, &[layout::LATENTS, layout::SCORES]) {
            return Ok(StageOutcome::Skipped);
        }
        let vae = self.load_model(id)?;
        let (set, splits) = self.load_data(id)?;
        let latents = encode_dataset(&vae, &set.subset(&splits.train))?;
        latents.save_csv(&self.path(id, layout::LATENTS))?;
        let mpwd: Vec<f64> = mpwd_all(&latents)?.iter().map(|v| *v as f64).collect();
        let variance: Vec<f64> = (0..latents.dim()).map(|j| mean_variance(&latents.mu_column(j)).1 as f64).collect();
        let board = DimensionScoreboard::new(&mpwd, &variance, None)?;
        write_json_atomic(&self.path(id, layout::SCORES), &board)?;
        for j in 0..latents.dim() {
            let curves: Vec<_> = kde_plot_data(&latents, j, cfg.analysis.kde_points)?
                .into_iter()
                .map(|mut c| {
                    c.dim += 1;
                    c.class += 1;
                    c
                })
                .collect();
            write_json_atomic(&self.path(id, &layout::kde(j)), &curves)?;
        }
        write_json_atomic(&self.path(id, layout::HYPERPARAMS), &suggest_hyperparams(vae.beta(), &latents))?;
        if l.m.status < RunStatus::Analyzed {
            l.m.advance(RunStatus::Analyzed)?;
        }
        self.finish(&mut l, Stage::Analyze, hash, &[layout::LATENTS, layout::SCORES])?;
        Ok(StageOutcome::Ran)
    }

    /// Fit the linear probe on training latents and add predictiveness to the scoreboard.
    pub fn probe(&self, id: &str, force: bool) -> Result<StageOutcome> {
        let mut l = self.begin(id, Stage::Probe, Stage::Analyze)?;
        let cfg = run_config(&l.m)?;
        let hash =
            input_hash(json!([l.m.artifacts.get(layout::LATENTS), l.m.artifacts.get(layout::CHECKPOINT), cfg.probe]));
        if !force && self.up_to_date(&l, Stage::Probe, &hash, &[layout::PROBE_HEAD]) {
            return Ok(StageOutcome::Skipped);
        }
        let latents = self.load_latents(&l.m)?;
        let vae = self.load_model(id)?;
        let (set, splits) = self.load_data(id)?;
        let val = encode_dataset(&vae, &set.subset(&splits.val))?;
        let head: ProbeHead<f32> = train_probe(&latents, &val, &cfg.probe)?;
        head.save(&self.path(id, layout::PROBE_HEAD))?;
        let test = encode_dataset(&vae, &set.subset(&splits.test))?;
        info!("run {id}: probe accuracy {:.3} on the test split", probe_accuracy(&head, &test));
        let pred: Vec<f64> = predictiveness_all(&head).iter().map(|v| *v as f64).collect();
        let board = self.load_scoreboard(id)?.with_predictiveness(&pred)?;
        write_json_atomic(&self.path(id, layout::SCORES), &board)?;
        self.finish(&mut l, Stage::Probe, hash, &[layout::PROBE_HEAD, layout::SCORES])?;
        Ok(StageOutcome::Ran)
    }

    /// Traversal strips and extreme-instance grids for the selected dimensions.
    pub fn evidence(&self, id: &str, opts: &EvidenceOptions, force: bool) -> Result<StageOutcome> {
        let mut l = self.begin(id, Stage::Evidence, Stage::Analyze)?;
        let cfg = run_config(&l.m)?;
        let k = opts.k.unwrap_or(cfg.analysis.k);
        let steps = opts.steps.unwrap_or(cfg.evidence.steps);
        let sel = opts.dims.clone().unwrap_or(cfg.evidence.dims.clone());
        let board = self.load_scoreboard(id)?;
        let d = board.dim();
        if k == 0 || k > d {
            return Err(Error::contract(format!("k = {k} must be in 1..={d}")));
        }
        if steps < 2 {
            return Err(Error::contract("a traversal needs at least 2 steps"));
        }
        let dims: Vec<usize> = match &sel {
            DimSelection::Top => report_candidates(&board, k),
            DimSelection::All => (0..d).collect(),
            DimSelection::List(v) => {
                if let Some(bad) = v.iter().find(|j| **j > d) {
                    return Err(Error::contract(format!("dimension {bad} out of range 1..={d}")));
                }
                v.iter().map(|j| j - 1).collect()
            }
        };
        let latents = self.load_latents(&l.m)?;
        let extremes = opts.extremes.unwrap_or(cfg.evidence.extremes).min(latents.len() / 2);
        let hash = input_hash(json!([
            l.m.artifacts.get(layout::CHECKPOINT),
            l.m.artifacts.get(layout::SCORES),
            k,
            steps,
            extremes,
            cfg.evidence.mode,
            String::from(sel)
        ]));
        if !force && self.up_to_date(&l, Stage::Evidence, &hash, &[layout::EVIDENCE]) {
            return Ok(StageOutcome::Skipped);
        }
        let vae = self.load_model(id)?;
        let (set, splits) = self.load_data(id)?;
        let train = set.subset(&splits.train);
        let (h, w, c) = (train.height, train.width, train.channels);
        let mut summary = EvidenceSummary { k, steps, extremes, mode: cfg.evidence.mode, dims: Vec::new() };
        for &j in &dims {
            let spec = TraversalSpec { steps, mode: cfg.evidence.mode, ..TraversalSpec::new(j) };
            let t = traverse(&vae, &latents, &spec)?;
            let frames: Vec<Vec<f32>> = t.frames.iter().map(|f| to_f32(f)).collect();
            write_atomic(&self.path(id, &layout::traversal(j)), &strip_png(&frames, h, w, c)?)?;
            let (lo, hi) = extreme_images(&latents, &train, j, extremes.max(1))?;
            let cols = grid_columns(extremes);
            write_atomic(&self.path(id, &layout::extremes_min(j)), &grid_png(&lo, h, w, c, cols)?)?;
            write_atomic(&self.path(id, &layout::extremes_max(j)), &grid_png(&hi, h, w, c, cols)?)?;
            summary.dims.push(DimEvidence {
                dim: j + 1,
                instance_id: t.instance_id,
                values: t.values,
                color_shift: color_shift(&frames, c),
                bbox_area_ratio: bbox_area_ratio(&frames[0], &frames[frames.len() - 1], h, w, c),
            });
        }
        write_json_atomic(&self.path(id, layout::EVIDENCE), &summary)?;
        self.finish(&mut l, Stage::Evidence, hash, &[layout::EVIDENCE])?;
        Ok(StageOutcome::Ran)
    }

    /// Train the reference classifier and measure it on the attacked test split.
    pub fn attack(&self, id: &str, force: bool) -> Result<StageOutcome> {
        let mut l = self.begin(id, Stage::Attack, Stage::Dataset)?;
        let cfg = run_config(&l.m)?;
        let hash = input_hash(json!([l.m.dataset.content_hash, cfg.attack, cfg.classifier]));
        if !force && self.up_to_date(&l, Stage::Attack, &hash, &[layout::ATTACK_REPORT]) {
            return Ok(StageOutcome::Skipped);
        }
        let (set, splits) = self.load_data(id)?;
        let (train, val, test) = (set.subset(&splits.train), set.subset(&splits.val), set.subset(&splits.test));
        let cnn = train_reference_cnn::<f32>(&train, &val, &cfg.classifier)?;
        cnn.save(&self.path(id, layout::REFERENCE_CNN))?;
        let attacked = attack_dataset(&test, &cfg.attack)?;
        save_archive(&attacked, &self.path(id, layout::ATTACKED_DATASET))?;
        let report = evaluate_attack(&cnn, &test, &attacked, &cfg.attack)?;
        write_json_atomic(&self.path(id, layout::ATTACK_REPORT), &report)?;
        self.finish(&mut l, Stage::Attack, hash, &[layout::ATTACK_REPORT, layout::REFERENCE_CNN])?;
        Ok(StageOutcome::Ran)
    }

    /// Write `report.html` and `report.md` from the evidence and the active verdicts.
    pub fn report(&self, id: &str, force: bool) -> Result<StageOutcome> {
        let mut l = self.begin(id, Stage::Report, Stage::Evidence)?;
        let cfg = run_config(&l.m)?;
        let evidence: EvidenceSummary = read_json(&self.path(id, layout::EVIDENCE))?;
        let attack_path = self.path(id, layout::ATTACK_REPORT);
        let hash = input_hash(json!([
            l.m.artifacts.get(layout::SCORES),
            l.m.artifacts.get(layout::EVIDENCE),
            file_hash(&self.path(id, layout::VERDICTS))?,
            file_hash(&attack_path)?,
            cfg.analysis.outlier_factor
        ]));
        if !force && self.up_to_date(&l, Stage::Report, &hash, &[layout::REPORT_HTML, layout::REPORT_MD]) {
            return Ok(StageOutcome::Skipped);
        }
        let board = self.load_scoreboard(id)?;
        let verdicts = self.store.active_verdicts(id)?;
        let attack: Option<serde_json::Value> =
            if attack_path.exists() { Some(read_json(&attack_path)?) } else { None };
        let run_dir = self.store.run_dir(id);
        let report = assemble_report(&ReportInput {
            run_dir: &run_dir,
            manifest: &l.m,
            scoreboard: &board,
            verdicts: &verdicts,
            k: evidence.k,
            outlier_factor: cfg.analysis.outlier_factor,
            attack: attack.as_ref(),
        })?;
        write_atomic(&self.path(id, layout::REPORT_HTML), report.html.as_bytes())?;
        write_atomic(&self.path(id, layout::REPORT_MD), report.markdown.as_bytes())?;
        self.finish(&mut l, Stage::Report, hash, &[])?;
        Ok(StageOutcome::Ran)
    }

    /// dataset → train → analyze → probe → evidence → report on a new run.
    pub fn run_all(&self, cfg: &PipelineConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<RunManifest> {
        let m = self.create_run(cfg)?;
        let id = m.run_id.as_str();
        self.train(id, false, on_epoch)?;
        self.analyze(id, false)?;
        self.probe(id, false)?;
        self.evidence(id, &EvidenceOptions::default(), false)?;
        self.report(id, false)?;
        self.store.get_run(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dim_selection_parses_and_round_trips() {
        assert_eq!("top".parse::<DimSelection>().unwrap(), DimSelection::Top);
        assert_eq!("2, 5".parse::<DimSelection>().unwrap(), DimSelection::List(vec![2, 5]));
        assert!("0".parse::<DimSelection>().is_err());
        assert!("x".parse::<DimSelection>().is_err());
        assert_eq!(String::from(DimSelection::List(vec![1, 3])), "1,3");
    }

    #[test]
    fn config_requires_exactly_one_source_and_rejects_unknown_keys() {
        assert!(PipelineConfig::default().resolve(&Overrides::default()).validate().is_err());
        let text = "seed = 3\n[dataset.synthetic]\nkind = \"zoom\"\nn_samples = 40\nimage_size = 32\nn_classes = 2\np_corr = 0.9\n";
        let cfg: PipelineConfig = toml::from_str(text).unwrap();
        let cfg = cfg.resolve(&Overrides { beta: Some(4.0), ..Default::default() });
        cfg.validate().unwrap();
        let s = cfg.dataset.synthetic.as_ref().unwrap();
        assert_eq!((s.seed, cfg.train.seed, cfg.probe.seed), (3, 3, 3));
        assert_eq!(s.zoom_levels.len(), 2);
        assert_eq!(cfg.train.beta, 4.0);
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<PipelineConfig>("[train]\nlatent = 3").is_err());
    }
}
