//! File-based pipeline stages with digest manifests.
//!
//! Every stage reads its inputs from the output directory, checks them
//! against the manifests of the stages that produced them, and writes its
//! artifacts plus `<stage>.manifest.json`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, Confusion, ScoreMap, Scored, SegReport, VqaReport};
use crate::ingest::{self, IngestError, ParseOptions, PatchObjects, PatchTemplate};
use crate::nnet::checkpoint::{Checkpoint, CheckpointError};
use crate::nnet::features::{seg_features, stub_text_features, stub_visual_features, MaskVisualProvider, VisualSource};
use crate::nnet::train::{self, EpochLog, Sample, TrainConfig, TrainError};
use crate::nnet::{FeatureBundle, ModelDims, ModelError, Tensor};
use crate::oracle::QuestionType;
use crate::qagen::{self, AnswerVocabulary, BalanceConfig, QaError, QaRecord, Split};
use crate::raster::{self, MaskError, MultiChannelMask};
use crate::seeding::sha256_hex;
use crate::taxonomy::{load_taxonomy, ClassTaxonomy, TaxonomyError};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const PATCHES: &str = "patches.json";
pub const TAXONOMY: &str = "taxonomy.toml";
pub const MASK_DIR: &str = "masks";
pub const QA: &str = "qa.jsonl";
pub const SPLITS: &str = "splits.json";
pub const QA_SPLIT: &str = "qa_split.jsonl";
pub const MODEL: &str = "model.sga";
pub const TRAIN_LOG: &str = "train_log.json";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_TXT: &str = "eval.txt";
pub const STATS_JSON: &str = "stats.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing input {0} (run the upstream stage first)")]
    Missing(PathBuf),
    #[error("stale input {path}: manifest digest {expected}, found {found}")]
    Stale {
        path: String,
        expected: String,
        found: String,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{count} generated records fail re-verification, first: {first}")]
    Verification { count: usize, first: String },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub vectors: PathBuf,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub line_buffer_m: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            line_buffer_m: raster::DEFAULT_LINE_BUFFER_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    pub questions_per_type: usize,
    pub passes: u32,
    pub caps: BTreeMap<QuestionType, usize>,
}

impl Default for BalanceSection {
    fn default() -> Self {
        let d = BalanceConfig::default();
        BalanceSection {
            questions_per_type: d.questions_per_type,
            passes: d.passes,
            caps: d.caps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.6, 0.2, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub visual: VisualSource,
    /// Noise standard deviation of the mask-derived visual features.
    pub noise: f32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            visual: VisualSource::Mask,
            noise: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub max_steps: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            lr: d.lr,
            batch_size: d.batch_size,
            max_steps: d.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_thresholds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_thresholds: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub tiling: PatchTemplate,
    #[serde(default)]
    pub raster: RasterConfig,
    #[serde(default)]
    pub balance: BalanceSection,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelDims,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::Missing(path.to_path_buf()),
        _ => PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| PipelineError::Format {
        path: path.to_path_buf(),
        message: "not UTF-8".into(),
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<String> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(sha256_hex(bytes))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| PipelineError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

impl PipelineConfig {
    /// Parses a config; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.paths.vectors);
        fix(&mut cfg.paths.out);
        if let Some(t) = &mut cfg.paths.taxonomy {
            fix(t);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        qagen::split_sizes(1, self.split.ratios).map_err(|e| PipelineError::Config(e.to_string()))?;
        self.balance_config().validate()?;
        let m = &self.model;
        if [m.c_v, m.d_q, m.h, m.w, m.att_dim, m.mlp_hidden].contains(&0) {
            return bad("model dimensions must be positive".into());
        }
        if !self.tiling.px.is_multiple_of(m.h as u32) || !self.tiling.px.is_multiple_of(m.w as u32) {
            return bad(format!(
                "patch size {} px is not divisible by the {}x{} grid",
                self.tiling.px, m.h, m.w
            ));
        }
        if !(0.0..1.0).contains(&m.dropout) {
            return bad(format!("dropout {} outside [0, 1)", m.dropout));
        }
        if self.train.lr.is_nan() || self.train.lr <= 0.0 || self.train.batch_size == 0 {
            return bad("learning rate and batch size must be positive".into());
        }
        if self.eval.n_thresholds == 0 {
            return bad("at least one threshold is needed".into());
        }
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.paths.out.join(name)
    }

    pub fn balance_config(&self) -> BalanceConfig {
        BalanceConfig {
            caps: self.balance.caps.clone(),
            questions_per_type: self.balance.questions_per_type,
            passes: self.balance.passes,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            lr: self.train.lr,
            batch_size: self.train.batch_size,
            seed: self.seed,
            max_steps: self.train.max_steps,
        }
    }

    fn digest(&self) -> String {
        sha256_hex(toml::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_digest: String,
    /// Input path (relative to the output dir when inside it) → sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub summary: BTreeMap<String, serde_json::Value>,
}

pub fn manifest_name(stage: &str) -> String {
    format!("{stage}.manifest.json")
}

struct Stage<'a> {
    cfg: &'a PipelineConfig,
    manifest: Manifest,
}

impl<'a> Stage<'a> {
    fn new(cfg: &'a PipelineConfig, stage: &str) -> Self {
        Stage {
            cfg,
            manifest: Manifest {
                stage: stage.into(),
                tool_version: TOOL_VERSION.into(),
                seed: cfg.seed,
                config_digest: cfg.digest(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                summary: BTreeMap::new(),
            },
        }
    }

    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.cfg.paths.out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// Reads an external input and records its digest.
    fn input_external(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = read(path)?;
        self.manifest.inputs.insert(self.key(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Reads an artifact of `producer`, checking the producer's manifest:
    /// the file must match the digest recorded there, and the producer's own
    /// inputs must still match what is on disk.
    fn input(&mut self, producer: &str, name: &str) -> Result<Vec<u8>> {
        let upstream = load_manifest(self.cfg, producer)?;
        check_upstream_inputs(self.cfg, &upstream)?;
        let path = self.cfg.out(name);
        let bytes = read(&path)?;
        let found = sha256_hex(&bytes);
        match upstream.outputs.get(name) {
            Some(expected) if *expected == found => {}
            Some(expected) => {
                return Err(PipelineError::Stale {
                    path: name.into(),
                    expected: expected.clone(),
                    found,
                })
            }
            None => {
                return Err(PipelineError::Stale {
                    path: name.into(),
                    expected: format!("<not produced by {producer}>"),
                    found,
                })
            }
        }
        self.manifest.inputs.insert(name.into(), found);
        Ok(bytes)
    }

    fn output(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let digest = write(&self.cfg.out(name), bytes)?;
        self.manifest.outputs.insert(name.into(), digest);
        Ok(())
    }

    fn summary(&mut self, key: &str, v: impl Serialize) {
        self.manifest
            .summary
            .insert(key.into(), serde_json::to_value(v).expect("serializable"));
    }

    fn finish(self) -> Result<Manifest> {
        let name = manifest_name(&self.manifest.stage);
        write(&self.cfg.out(&name), &pretty(&self.manifest))?;
        log::info!("{} done: {} outputs", self.manifest.stage, self.manifest.outputs.len());
        Ok(self.manifest)
    }
}

pub fn load_manifest(cfg: &PipelineConfig, stage: &str) -> Result<Manifest> {
    let path = cfg.out(&manifest_name(stage));
    let bytes = read(&path)?;
    parse_json(&path, &bytes)
}

fn check_upstream_inputs(cfg: &PipelineConfig, m: &Manifest) -> Result<()> {
    for (key, expected) in &m.inputs {
        let p = Path::new(key);
        let path = if p.is_absolute() { p.to_path_buf() } else { cfg.out(key) };
        if let Ok(bytes) = fs::read(&path) {
            let found = sha256_hex(&bytes);
            if &found != expected {
                return Err(PipelineError::Stale {
                    path: key.clone(),
                    expected: expected.clone(),
                    found,
                });
            }
        }
    }
    Ok(())
}

fn taxonomy_of(bytes: &[u8]) -> Result<ClassTaxonomy> {
    Ok(ClassTaxonomy::from_toml(std::str::from_utf8(bytes).unwrap_or(""))?)
}

fn mask_name(patch_id: &str) -> String {
    format!("{MASK_DIR}/{patch_id}.mcm")
}

/// Parses and tiles the vectors; writes the clipped patches and the
/// taxonomy they were labelled with.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut st = Stage::new(cfg, "ingest");
    let taxonomy = match &cfg.paths.taxonomy {
        Some(p) => {
            let bytes = st.input_external(p)?;
            load_taxonomy(Some(std::str::from_utf8(&bytes).unwrap_or("")))?
        }
        None => load_taxonomy(None)?,
    };
    let vectors = st.input_external(&cfg.paths.vectors)?;
    let doc = std::str::from_utf8(&vectors).map_err(|_| PipelineError::Format {
        path: cfg.paths.vectors.clone(),
        message: "not UTF-8".into(),
    })?;
    let objects = ingest::parse_vectors(doc, &taxonomy, ParseOptions::default())?;
    let extent = ingest::objects_extent(&objects).ok_or_else(|| PipelineError::Format {
        path: cfg.paths.vectors.clone(),
        message: "no features".into(),
    })?;
    let specs = ingest::tile_extent(extent, cfg.tiling)?;
    let patches = ingest::assign_objects(&objects, &specs);
    st.summary("objects", objects.len());
    st.summary("patches", patches.len());
    st.output(TAXONOMY, taxonomy.to_toml().as_bytes())?;
    st.output(PATCHES, &serde_json::to_vec(&patches).expect("patches serialize"))?;
    st.finish()
}

fn load_patches(st: &mut Stage) -> Result<(ClassTaxonomy, Vec<PatchObjects>)> {
    let taxonomy = taxonomy_of(&st.input("ingest", TAXONOMY)?)?;
    let bytes = st.input("ingest", PATCHES)?;
    let patches = parse_json(&st.cfg.out(PATCHES), &bytes)?;
    Ok((taxonomy, patches))
}

/// One MCM1 mask per patch.
pub fn cmd_rasterize(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut st = Stage::new(cfg, "rasterize");
    let (taxonomy, patches) = load_patches(&mut st)?;
    let channels = taxonomy.len() as u32;
    let encoded: Vec<(String, Vec<u8>)> = patches
        .par_iter()
        .map(|p| {
            let mask = raster::rasterize(p, channels, cfg.raster.line_buffer_m);
            (mask_name(&p.spec.patch_id), raster::write_mask(&mask))
        })
        .collect();
    for (name, bytes) in &encoded {
        st.output(name, bytes)?;
    }
    st.summary("masks", encoded.len());
    st.finish()
}

/// Balanced question generation, re-verified against the oracle.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut st = Stage::new(cfg, "generate");
    let (taxonomy, patches) = load_patches(&mut st)?;
    let records = qagen::generate(&patches, &taxonomy, &cfg.balance_config());
    let bad = qagen::verify_records(&records, &patches, &taxonomy);
    if let Some(first) = bad.first() {
        return Err(PipelineError::Verification {
            count: bad.len(),
            first: format!("{}: {}", first.qid, first.reason),
        });
    }
    st.summary("records", records.len());
    st.summary("histogram", histogram(&records));
    st.output(QA, qagen::write_jsonl(&records).as_bytes())?;
    st.finish()
}

fn load_records(path: &Path, bytes: &[u8]) -> Result<Vec<QaRecord>> {
    let text = std::str::from_utf8(bytes).unwrap_or("");
    qagen::read_jsonl(text).map_err(|e| PipelineError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Patch-level train/val/test split inherited by every record.
pub fn cmd_split(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut st = Stage::new(cfg, "split");
    let patches: Vec<PatchObjects> = {
        let bytes = st.input("ingest", PATCHES)?;
        parse_json(&cfg.out(PATCHES), &bytes)?
    };
    let mut records = load_records(&cfg.out(QA), &st.input("generate", QA)?)?;
    let ids: Vec<String> = patches.iter().map(|p| p.spec.patch_id.clone()).collect();
    let splits = qagen::split_patches(&ids, cfg.split.ratios, cfg.seed)?;
    qagen::assign_splits(&mut records, &splits);
    let count = |s: Split| splits.values().filter(|&&v| v == s).count();
    st.summary(
        "patches",
        Split::ALL
            .map(|s| (s.as_str(), count(s)))
            .into_iter()
            .collect::<BTreeMap<_, _>>(),
    );
    st.summary(
        "records",
        Split::ALL
            .map(|s| (s.as_str(), records.iter().filter(|r| r.split == Some(s)).count()))
            .into_iter()
            .collect::<BTreeMap<_, _>>(),
    );
    let mut counts: BTreeMap<&str, BTreeMap<QuestionType, BTreeMap<&str, usize>>> = BTreeMap::new();
    for r in &records {
        let split = r.split.map(Split::as_str).unwrap_or("none");
        *counts
            .entry(split)
            .or_default()
            .entry(r.qtype)
            .or_default()
            .entry(r.answer_bucket.as_str())
            .or_default() += 1;
    }
    st.summary("counts", counts);
    st.output(SPLITS, &pretty(&splits))?;
    st.output(QA_SPLIT, qagen::write_jsonl(&records).as_bytes())?;
    st.finish()
}

/// Builds model inputs for records from their patches' masks.
struct FeatureFactory<'a> {
    cfg: &'a PipelineConfig,
    dims: ModelDims,
    guides: HashMap<String, Tensor>,
    visual: MaskVisualProvider,
}

impl<'a> FeatureFactory<'a> {
    fn new(cfg: &'a PipelineConfig, dims: ModelDims, guides: HashMap<String, Tensor>) -> Self {
        FeatureFactory {
            cfg,
            dims,
            guides,
            visual: MaskVisualProvider::new(dims.c_v, dims.c_s, cfg.features.noise, cfg.seed),
        }
    }

    fn bundle(&self, record: &QaRecord) -> FeatureBundle {
        let d = &self.dims;
        let guide = self.guides[&record.patch_id].clone();
        let f_vhr = match self.cfg.features.visual {
            VisualSource::Mask => self.visual.features(&guide, &record.patch_id),
            VisualSource::Stub => stub_visual_features(&record.patch_id, d.c_v, d.h, d.w, self.cfg.seed),
        };
        FeatureBundle {
            f_vhr,
            f_q: stub_text_features(&record.question, d.d_q, self.cfg.seed),
            f_seg: guide,
        }
    }
}

fn load_masks(st: &mut Stage, patch_ids: &[String]) -> Result<Vec<(String, MultiChannelMask)>> {
    let mut out = Vec::with_capacity(patch_ids.len());
    for id in patch_ids {
        let bytes = st.input("rasterize", &mask_name(id))?;
        out.push((id.clone(), raster::read_mask(&bytes)?));
    }
    Ok(out)
}

fn guides_for(st: &mut Stage, patch_ids: &[String], h: usize, w: usize) -> Result<HashMap<String, Tensor>> {
    let mut out = HashMap::new();
    for id in patch_ids {
        let bytes = st.input("rasterize", &mask_name(id))?;
        out.insert(id.clone(), seg_features(&raster::read_mask(&bytes)?, h, w)?);
    }
    Ok(out)
}

fn patch_ids_of(records: &[QaRecord]) -> Vec<String> {
    let mut ids: Vec<String> = records.iter().map(|r| r.patch_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

fn samples(records: &[&QaRecord], vocab: &AnswerVocabulary, features: &FeatureFactory) -> Vec<Sample> {
    records
        .par_iter()
        .filter_map(|r| {
            vocab.index_of(&r.answer).map(|target| Sample {
                bundle: features.bundle(r),
                target,
            })
        })
        .collect()
}

/// Trains on the train split; out-of-vocabulary answers are skipped.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut st = Stage::new(cfg, "train");
    let taxonomy = taxonomy_of(&st.input("ingest", TAXONOMY)?)?;
    let records = load_records(&cfg.out(QA_SPLIT), &st.input("split", QA_SPLIT)?)?;
    let vocab = qagen::build_vocabulary(&records, qagen::MAX_VOCABULARY);
    if vocab.is_empty() {
        return Err(TrainError::EmptyDataset.into());
    }
    let dims = ModelDims {
        c_s: taxonomy.len(),
        k: vocab.len(),
        ..cfg.model
    };
    let used: Vec<&QaRecord> = records
        .iter()
        .filter(|r| matches!(r.split, Some(Split::Train | Split::Val)))
        .collect();
    let ids = patch_ids_of(&used.iter().map(|r| (*r).clone()).collect::<Vec<_>>());
    let guides = guides_for(&mut st, &ids, dims.h, dims.w)?;
    let features = FeatureFactory::new(cfg, dims, guides);
    let of = |s: Split| -> Vec<&QaRecord> { used.iter().copied().filter(|r| r.split == Some(s)).collect() };
    let train_set = samples(&of(Split::Train), &vocab, &features);
    let val_set = samples(&of(Split::Val), &vocab, &features);
    log::info!(
        "training on {} samples, validating on {}",
        train_set.len(),
        val_set.len()
    );
    let (ckpt, history): (Checkpoint, Vec<EpochLog>) =
        train::train(&train_set, &val_set, dims, vocab, &cfg.train_config())?;
    st.summary("train_samples", train_set.len());
    st.summary("val_samples", val_set.len());
    st.summary("vocabulary", ckpt.vocabulary.len());
    st.output(MODEL, &ckpt.to_bytes())?;
    st.output(TRAIN_LOG, &pretty(&history))?;
    st.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub qtype: QuestionType,
    pub answer: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub vqa: VqaReport,
    /// Test frequency of the most frequent training answer.
    pub majority_baseline: f64,
    /// Thresholds picked on validation patches for the coarse guide scores.
    pub seg_val: Option<SegReport>,
    pub seg_test: Option<SegReport>,
}

fn seg_reports(
    masks_val: &[(String, MultiChannelMask)],
    masks_test: &[(String, MultiChannelMask)],
    dims: &ModelDims,
    n_thresholds: usize,
) -> Result<(Option<SegReport>, Option<SegReport>)> {
    if masks_val.is_empty() {
        return Ok((None, None));
    }
    let score = |m: &MultiChannelMask| -> Result<ScoreMap> {
        let grid = raster::downsample_mask(m, dims.h as u32, dims.w as u32)?;
        Ok(ScoreMap::upsample(&grid, m.height() as usize, m.width() as usize))
    };
    let grid = eval::threshold_grid(n_thresholds);
    let mut curves = Vec::new();
    for (_, m) in masks_val {
        let s = score(m)?;
        eval::add_curves(&mut curves, &eval::confusion_curves(&[(&s, m)], &grid)?);
    }
    let val = eval::select_thresholds(&curves, &grid);
    if masks_test.is_empty() {
        return Ok((Some(val), None));
    }
    let thresholds = val.thresholds();
    let mut totals = vec![Confusion::default(); thresholds.len()];
    for (_, m) in masks_test {
        let s = score(m)?;
        for (t, c) in totals.iter_mut().zip(eval::counts_at(&[(&s, m)], &thresholds)?) {
            t.add(&c);
        }
    }
    let test = eval::report_at(&totals, &thresholds);
    Ok((Some(val), Some(test)))
}

/// VQA metrics on the test split and segmentation metrics of the coarse
/// guide with thresholds selected on validation.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut st = Stage::new(cfg, "eval");
    let taxonomy = taxonomy_of(&st.input("ingest", TAXONOMY)?)?;
    let ckpt = Checkpoint::from_bytes(&st.input("train", MODEL)?)?;
    let records = load_records(&cfg.out(QA_SPLIT), &st.input("split", QA_SPLIT)?)?;
    let test: Vec<QaRecord> = records
        .iter()
        .filter(|r| r.split == Some(Split::Test))
        .cloned()
        .collect();
    let val_ids = patch_ids_of(
        &records
            .iter()
            .filter(|r| r.split == Some(Split::Val))
            .cloned()
            .collect::<Vec<_>>(),
    );
    let test_ids = patch_ids_of(&test);

    let masks_test = load_masks(&mut st, &test_ids)?;
    let dims = ckpt.dims;
    let mut guides = HashMap::new();
    for (id, m) in &masks_test {
        guides.insert(id.clone(), seg_features(m, dims.h, dims.w)?);
    }
    let features = FeatureFactory::new(cfg, dims, guides);
    let predicted: Vec<String> = test
        .par_iter()
        .map(|r| train::infer(&ckpt, &features.bundle(r)).map(str::to_string))
        .collect::<std::result::Result<_, _>>()?;
    let vqa = eval::vqa_metrics(test.iter().zip(&predicted).map(|(r, p)| Scored {
        qtype: r.qtype,
        truth: &r.answer,
        predicted: p,
    }));
    let majority = ckpt.vocabulary.entries().first().map(|(a, _)| a.as_str()).unwrap_or("");
    let majority_baseline = if test.is_empty() {
        0.0
    } else {
        test.iter().filter(|r| r.answer == majority).count() as f64 / test.len() as f64
    };
    let masks_val = load_masks(&mut st, &val_ids)?;
    let (seg_val, seg_test) = seg_reports(&masks_val, &masks_test, &dims, cfg.eval.n_thresholds)?;

    let out = EvalOutput {
        vqa,
        majority_baseline,
        seg_val,
        seg_test,
    };
    let mut text = out.vqa.table("model");
    writeln!(text, "majority baseline {:.2}", 100.0 * majority_baseline).unwrap();
    let names: Vec<String> = taxonomy.classes().iter().map(|c| c.name.clone()).collect();
    if let Some(s) = &out.seg_test {
        text.push('\n');
        text.push_str(&s.table(&names));
    }
    let preds: String = test
        .iter()
        .zip(&predicted)
        .map(|(r, p)| {
            let line = serde_json::to_string(&Prediction {
                qid: r.qid.clone(),
                qtype: r.qtype,
                answer: r.answer.clone(),
                predicted: p.clone(),
            })
            .expect("serializable");
            line + "\n"
        })
        .collect();
    st.summary("overall_accuracy", out.vqa.overall_accuracy);
    st.summary("average_accuracy", out.vqa.average_accuracy);
    st.summary("majority_baseline", majority_baseline);
    st.output(PREDICTIONS, preds.as_bytes())?;
    st.output(EVAL_JSON, &pretty(&out))?;
    st.output(EVAL_TXT, text.as_bytes())?;
    st.finish()
}

/// Question counts per type and answer bucket.
pub fn histogram(records: &[QaRecord]) -> BTreeMap<QuestionType, BTreeMap<String, usize>> {
    let mut h: BTreeMap<QuestionType, BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        *h.entry(r.qtype)
            .or_default()
            .entry(r.answer_bucket.clone())
            .or_default() += 1;
    }
    h
}

/// Numeric buckets sort by their lower bound, categorical ones by name.
pub fn bucket_order(bucket: &str) -> (f64, &str) {
    let lead = bucket.split('-').next().unwrap_or("");
    (lead.parse().unwrap_or(f64::INFINITY), bucket)
}

/// Text rendering of `histogram` with proportional bars.
pub fn histogram_text(h: &BTreeMap<QuestionType, BTreeMap<String, usize>>) -> String {
    let max = h.values().flat_map(|b| b.values()).copied().max().unwrap_or(1).max(1);
    let mut s = String::new();
    for (q, buckets) in h {
        let total: usize = buckets.values().sum();
        writeln!(s, "{} {} ({total})", q.label(), q.name()).unwrap();
        let mut sorted: Vec<(&String, &usize)> = buckets.iter().collect();
        sorted.sort_by(|a, b| bucket_order(a.0).partial_cmp(&bucket_order(b.0)).unwrap());
        for (b, &n) in sorted {
            let bar = "#".repeat((40 * n).div_ceil(max));
            writeln!(s, "  {b:<16}{n:>7} {bar}").unwrap();
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub qtype: QuestionType,
    pub split: Option<Split>,
    pub bucket: String,
    pub count: usize,
}

/// Per-type and per-bucket histograms of the split QA file (or of the
/// unsplit one when splitting has not run yet).
pub fn cmd_stats(cfg: &PipelineConfig) -> Result<(Manifest, String)> {
    let mut st = Stage::new(cfg, "stats");
    let records = if cfg.out(&manifest_name("split")).exists() {
        load_records(&cfg.out(QA_SPLIT), &st.input("split", QA_SPLIT)?)?
    } else {
        load_records(&cfg.out(QA), &st.input("generate", QA)?)?
    };
    let mut rows: BTreeMap<(QuestionType, Option<Split>, String), usize> = BTreeMap::new();
    for r in &records {
        *rows.entry((r.qtype, r.split, r.answer_bucket.clone())).or_default() += 1;
    }
    let rows: Vec<StatsRow> = rows
        .into_iter()
        .map(|((qtype, split, bucket), count)| StatsRow {
            qtype,
            split,
            bucket,
            count,
        })
        .collect();
    let h = histogram(&records);
    let text = histogram_text(&h);
    st.summary("records", records.len());
    st.output(
        STATS_JSON,
        &pretty(&serde_json::json!({ "histogram": h, "rows": rows })),
    )?;
    Ok((st.finish()?, text))
}
