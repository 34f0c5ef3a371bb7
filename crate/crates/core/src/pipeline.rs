//! End-to-end runs: ingest, metrics, split, analyze, train and evaluate.
//!
//! Every stage writes into a run directory laid out as
//!
//! ```text
//! <output_dir>/
//!   node_mapping.csv                  only with dataset.lcc
//!   metrics/<shift>.csv, <shift>.json
//!   splits/<shift>/seed-<s>.json, seed-<s>.csv
//!   analysis/<shift>/seed-<s>.json, seed-<s>.degrees.csv, seed-<s>.distances.csv
//!   eval/<shift>/seed-<s>.json, seed-<s>.model.json
//!   runs.csv, summary.csv
//! ```
//!
//! Every artifact carries the hash of the run configuration (output
//! directory excluded). A stage reuses an upstream artifact when its hash
//! matches and recomputes it otherwise, so staged and fused runs produce the
//! same bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analyze, ShiftReport, DEFAULT_MAX_PAIRS};
use crate::error::{Error, Result};
use crate::eval::{build_report, runs_csv, summary_csv, EvalReport};
use crate::graph::{
    largest_connected_component, load_edge_list, load_features, load_labels, ComponentMapping,
    Graph, NodeFeatures, NodeLabels,
};
use crate::metrics::{
    read_sigma_csv, sigma_scores, PageRankConfig, Personalization, ShiftType, SigmaProvenance,
    SigmaScores,
};
use crate::model::{predict_proba, propagate_features, train, PropagationConfig, TrainConfig};
use crate::split::{generate_split, read_split, write_split, SplitAssignment, SplitConfig};

pub const FEATURE_NORMALIZATION: &str = "l2-rows";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_dataset_name")]
    pub name: String,
    pub edges: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Treat each edge-list line as an arc.
    #[serde(default)]
    pub directed: bool,
    /// Restrict everything to the largest connected component.
    #[serde(default)]
    pub lcc: bool,
}

fn default_dataset_name() -> String {
    "dataset".into()
}

/// Subset fractions. Unset fractions follow `id_fraction` with
/// Train:ValidIn:TestIn = 3:1:1 and ValidOut:TestOut = 1:4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSettings {
    pub id_fraction: f64,
    pub train: Option<f64>,
    pub valid_in: Option<f64>,
    pub test_in: Option<f64>,
    pub valid_out: Option<f64>,
    pub test_out: Option<f64>,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            id_fraction: 0.5,
            train: None,
            valid_in: None,
            test_in: None,
            valid_out: None,
            test_out: None,
        }
    }
}

impl SplitSettings {
    pub fn config(&self, seed: u64) -> SplitConfig {
        let base = SplitConfig::with_id_fraction(self.id_fraction, seed);
        SplitConfig {
            train: self.train.unwrap_or(base.train),
            valid_in: self.valid_in.unwrap_or(base.valid_in),
            test_in: self.test_in.unwrap_or(base.test_in),
            valid_out: self.valid_out.unwrap_or(base.valid_out),
            test_out: self.test_out.unwrap_or(base.test_out),
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PageRankSettings {
    pub alpha: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankSettings {
    fn default() -> Self {
        let d = PageRankConfig::default();
        PageRankSettings {
            alpha: d.alpha,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

impl PageRankSettings {
    pub fn config(&self) -> PageRankConfig {
        PageRankConfig {
            alpha: self.alpha,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            personalization: Personalization::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

impl TrainSettings {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    pub max_pairs: u64,
    pub seed: u64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            max_pairs: DEFAULT_MAX_PAIRS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "all_shifts")]
    pub shifts: Vec<ShiftType>,
    #[serde(default)]
    pub split: SplitSettings,
    #[serde(default)]
    pub pagerank: PageRankSettings,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn all_shifts() -> Vec<ShiftType> {
    ShiftType::ALL.to_vec()
}

pub fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Which inputs a stage needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Metrics,
    Split,
    Analyze,
    TrainEval,
    Report,
}

impl RunConfig {
    pub fn new(dataset: DatasetConfig) -> Self {
        RunConfig {
            dataset,
            shifts: all_shifts(),
            split: SplitSettings::default(),
            pagerank: PageRankSettings::default(),
            propagation: PropagationConfig::default(),
            train: TrainSettings::default(),
            analysis: AnalysisSettings::default(),
            seeds: default_seeds(),
            output_dir: default_output_dir(),
        }
    }

    /// Checks the whole configuration and the existence of every input the
    /// stage reads, before anything is loaded.
    pub fn validate(&self, stage: Stage) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidConfig(m));
        if self.shifts.is_empty() {
            return invalid("no shift types selected".into());
        }
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        let mut unique = self.seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != self.seeds.len() {
            return invalid("seeds contain duplicates".into());
        }
        self.pagerank.config().validate()?;
        self.split.config(0).validate()?;
        self.train.config(0).validate()?;
        if self.analysis.max_pairs == 0 {
            return invalid("analysis.max_pairs must be positive".into());
        }
        if self.dataset.name.is_empty() || self.dataset.name.contains([',', '\n']) {
            return invalid(format!(
                "dataset name {:?} is not usable in CSV output",
                self.dataset.name
            ));
        }
        if stage == Stage::Report {
            return Ok(());
        }

        let require = |what: &str, path: Option<&PathBuf>| -> Result<()> {
            match path {
                None => invalid(format!("{what} file is required for this command")),
                Some(p) if !p.is_file() => {
                    invalid(format!("{what} file {} does not exist", p.display()))
                }
                Some(_) => Ok(()),
            }
        };
        require("edge list", Some(&self.dataset.edges))?;
        match stage {
            Stage::TrainEval => {
                require("features", self.dataset.features.as_ref())?;
                require("labels", self.dataset.labels.as_ref())?;
            }
            Stage::Analyze if self.dataset.labels.is_some() => {
                require("labels", self.dataset.labels.as_ref())?;
            }
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 over the JSON form of the configuration. Dataset files enter
    /// by content digest rather than path and the output directory is left
    /// out, so moving inputs or outputs keeps the hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let by_content = |p: &mut PathBuf| {
            if let Ok(bytes) = std::fs::read(&*p) {
                *p = PathBuf::from(format!("sha256:{}", hex(&Sha256::digest(&bytes))));
            }
        };
        by_content(&mut canonical.dataset.edges);
        for p in [
            &mut canonical.dataset.features,
            &mut canonical.dataset.labels,
        ]
        .into_iter()
        .flatten()
        {
            by_content(p);
        }
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loaded inputs, already restricted to the largest component if asked.
pub struct Dataset {
    pub graph: Graph,
    pub features: Option<NodeFeatures>,
    pub labels: Option<NodeLabels>,
    pub mapping: Option<ComponentMapping>,
}

impl Dataset {
    pub fn load(config: &DatasetConfig, with_features: bool, with_labels: bool) -> Result<Self> {
        let graph = load_edge_list(&config.edges, config.directed)?;
        if graph.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let features = match (&config.features, with_features) {
            (Some(p), true) => Some(load_features(p, &graph)?),
            _ => None,
        };
        let labels = match (&config.labels, with_labels) {
            (Some(p), true) => Some(load_labels(p, &graph)?),
            _ => None,
        };
        if !config.lcc {
            return Ok(Dataset {
                graph,
                features,
                labels,
                mapping: None,
            });
        }
        let (graph, mapping) = largest_connected_component(&graph)?;
        Ok(Dataset {
            graph,
            features: features.map(|f| f.restrict(&mapping)),
            labels: labels.map(|l| l.restrict(&mapping)),
            mapping: Some(mapping),
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

#[derive(Serialize, Deserialize)]
struct SigmaSidecar {
    config_hash: String,
    dataset: String,
    num_nodes: usize,
    provenance: SigmaProvenance,
}

#[derive(Serialize, Deserialize)]
struct AnalysisArtifact {
    config_hash: String,
    dataset: String,
    seed: u64,
    report: ShiftReport,
}

/// A run configuration bound to its loaded dataset.
pub struct Pipeline {
    pub config: RunConfig,
    pub config_hash: String,
    pub data: Dataset,
}

impl Pipeline {
    /// Validates the configuration for `stage`, then loads the inputs it needs.
    pub fn open(config: RunConfig, stage: Stage) -> Result<Self> {
        config.validate(stage)?;
        let data = Dataset::load(
            &config.dataset,
            stage == Stage::TrainEval,
            matches!(stage, Stage::Analyze | Stage::TrainEval),
        )?;
        let pipeline = Pipeline {
            config_hash: config.hash(),
            config,
            data,
        };
        pipeline.write_mapping()?;
        Ok(pipeline)
    }

    fn out(&self, relative: impl AsRef<Path>) -> PathBuf {
        self.config.output_dir.join(relative)
    }

    fn preamble(&self) -> Vec<String> {
        vec![format!("config_hash={}", self.config_hash)]
    }

    fn csv(&self, body: &str) -> String {
        format!("# config_hash={}\n{body}", self.config_hash)
    }

    fn write_mapping(&self) -> Result<()> {
        let Some(mapping) = &self.data.mapping else {
            return Ok(());
        };
        let mut body = String::from("node_id,original_id\n");
        for (new, old) in mapping.new_to_old.iter().enumerate() {
            body.push_str(&format!("{new},{old}\n"));
        }
        write_file(&self.out("node_mapping.csv"), &self.csv(&body))
    }

    fn sigma_paths(&self, shift: ShiftType) -> (PathBuf, PathBuf) {
        (
            self.out(format!("metrics/{shift}.csv")),
            self.out(format!("metrics/{shift}.json")),
        )
    }

    fn split_path(&self, shift: ShiftType, seed: u64) -> PathBuf {
        self.out(format!("splits/{shift}/seed-{seed}.json"))
    }

    /// Computes sigma and writes it with its provenance sidecar.
    pub fn compute_sigma(&self, shift: ShiftType) -> Result<SigmaScores> {
        let sigma = sigma_scores(&self.data.graph, shift, &self.config.pagerank.config())?;
        let (csv, json) = self.sigma_paths(shift);
        if let Some(parent) = csv.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        sigma.write_csv(&csv, &self.preamble())?;
        let sidecar = SigmaSidecar {
            config_hash: self.config_hash.clone(),
            dataset: self.config.dataset.name.clone(),
            num_nodes: sigma.len(),
            provenance: sigma.provenance.clone(),
        };
        write_file(&json, &to_json(&sidecar))?;
        Ok(sigma)
    }

    fn load_sigma(&self, shift: ShiftType) -> Option<SigmaScores> {
        let (csv, json) = self.sigma_paths(shift);
        let sidecar: SigmaSidecar =
            serde_json::from_str(&std::fs::read_to_string(json).ok()?).ok()?;
        if sidecar.config_hash != self.config_hash
            || sidecar.num_nodes != self.data.graph.num_nodes()
        {
            return None;
        }
        read_sigma_csv(csv, sidecar.provenance).ok()
    }

    /// Sigma from a matching metrics artifact, else freshly computed.
    pub fn sigma(&self, shift: ShiftType) -> Result<SigmaScores> {
        match self.load_sigma(shift) {
            Some(sigma) => Ok(sigma),
            None => self.compute_sigma(shift),
        }
    }

    pub fn compute_split(&self, sigma: &SigmaScores, seed: u64) -> Result<SplitAssignment> {
        let mut split = generate_split(sigma, &self.config.split.config(seed))?;
        split
            .metadata
            .annotations
            .insert("config_hash".into(), self.config_hash.clone().into());
        split
            .metadata
            .annotations
            .insert("dataset".into(), self.config.dataset.name.clone().into());
        split
            .metadata
            .annotations
            .insert("lcc".into(), self.config.dataset.lcc.into());
        let path = self.split_path(sigma.shift_type, seed);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_split(&split, &path)?;
        write_file(&path.with_extension("csv"), &split.to_csv(&self.preamble()))?;
        Ok(split)
    }

    fn load_split(&self, shift: ShiftType, seed: u64) -> Option<SplitAssignment> {
        let split = read_split(
            self.split_path(shift, seed),
            Some(self.data.graph.num_nodes()),
        )
        .ok()?;
        let hash = split.metadata.annotations.get("config_hash")?.as_str()?;
        (hash == self.config_hash && split.metadata.shift_type == shift).then_some(split)
    }

    /// Split from a matching split artifact, else generated (computing sigma
    /// as needed).
    pub fn split(&self, shift: ShiftType, seed: u64) -> Result<SplitAssignment> {
        if let Some(split) = self.load_split(shift, seed) {
            return Ok(split);
        }
        let sigma = self.sigma(shift)?;
        self.compute_split(&sigma, seed)
    }

    fn jobs(&self) -> Vec<(ShiftType, u64)> {
        self.config
            .shifts
            .iter()
            .flat_map(|&s| self.config.seeds.iter().map(move |&seed| (s, seed)))
            .collect()
    }

    pub fn run_metrics(&self) -> Result<Vec<SigmaScores>> {
        self.config
            .shifts
            .iter()
            .map(|&s| self.compute_sigma(s))
            .collect()
    }

    pub fn run_split(&self) -> Result<Vec<SplitAssignment>> {
        let mut out = Vec::new();
        for &shift in &self.config.shifts {
            let sigma = self.sigma(shift)?;
            for &seed in &self.config.seeds {
                out.push(self.compute_split(&sigma, seed)?);
            }
        }
        Ok(out)
    }

    fn prepare_splits(&self) -> Result<()> {
        for &shift in &self.config.shifts {
            if self
                .config
                .seeds
                .iter()
                .all(|&s| self.load_split(shift, s).is_some())
            {
                continue;
            }
            let sigma = self.sigma(shift)?;
            for &seed in &self.config.seeds {
                if self.load_split(shift, seed).is_none() {
                    self.compute_split(&sigma, seed)?;
                }
            }
        }
        Ok(())
    }

    pub fn run_analyze(&self) -> Result<Vec<ShiftReport>> {
        self.prepare_splits()?;
        let settings = self.config.analysis;
        self.jobs()
            .into_par_iter()
            .map(|(shift, seed)| {
                let split = self.split(shift, seed)?;
                let report = analyze(
                    &self.data.graph,
                    self.data.labels.as_ref(),
                    &split,
                    settings.max_pairs,
                    settings.seed,
                )?;
                let base = self.out(format!("analysis/{shift}/seed-{seed}"));
                let artifact = AnalysisArtifact {
                    config_hash: self.config_hash.clone(),
                    dataset: self.config.dataset.name.clone(),
                    seed,
                    report,
                };
                write_file(&base.with_extension("json"), &to_json(&artifact))?;
                write_file(
                    &base.with_extension("degrees.csv"),
                    &self.csv(&artifact.report.degree.to_csv()),
                )?;
                write_file(
                    &base.with_extension("distances.csv"),
                    &self.csv(&artifact.report.distance_csv()),
                )?;
                Ok(artifact.report)
            })
            .collect()
    }

    /// L2-normalized, propagated features.
    pub fn model_inputs(&self) -> Result<NodeFeatures> {
        let mut features = self
            .data
            .features
            .clone()
            .ok_or_else(|| Error::InvalidConfig("features are required".into()))?;
        features.l2_normalize_rows();
        propagate_features(&self.data.graph, &features, &self.config.propagation)
    }

    pub fn run_train_eval(&self) -> Result<Vec<EvalReport>> {
        self.prepare_splits()?;
        let inputs = self.model_inputs()?;
        let labels = self
            .data
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("labels are required".into()))?;
        let reports = self
            .jobs()
            .into_par_iter()
            .map(|(shift, seed)| {
                let split = self.split(shift, seed)?;
                let mut model = train(&inputs, labels, &split, &self.config.train.config(seed))?;
                model.propagation = Some(self.config.propagation);
                model.feature_normalization = Some(FEATURE_NORMALIZATION.into());
                let proba = predict_proba(&model, &inputs)?;
                let mut report = build_report(&split, labels, &proba)?;
                let meta: BTreeMap<String, serde_json::Value> = [
                    ("config_hash", self.config_hash.clone().into()),
                    ("dataset", self.config.dataset.name.clone().into()),
                    ("best_epoch", model.best_epoch.into()),
                    ("epochs_run", model.training_log.len().into()),
                    ("propagation_k", self.config.propagation.k.into()),
                    ("feature_normalization", FEATURE_NORMALIZATION.into()),
                    ("lcc", self.config.dataset.lcc.into()),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
                report.metadata = meta;
                let base = self.out(format!("eval/{shift}/seed-{seed}"));
                write_file(&base.with_extension("json"), &to_json(&report))?;
                write_file(&base.with_extension("model.json"), &model.to_json())?;
                Ok(report)
            })
            .collect::<Result<Vec<_>>>()?;
        self.write_aggregates(&reports)?;
        Ok(reports)
    }

    fn write_aggregates(&self, reports: &[EvalReport]) -> Result<()> {
        let name = &self.config.dataset.name;
        write_file(&self.out("runs.csv"), &self.csv(&runs_csv(name, reports)))?;
        write_file(
            &self.out("summary.csv"),
            &self.csv(&summary_csv(name, reports)),
        )
    }
}

/// Rebuilds `runs.csv` and `summary.csv` from the evaluation reports of
/// `config` found in its output directory.
pub fn run_report(config: &RunConfig) -> Result<Vec<EvalReport>> {
    config.validate(Stage::Report)?;
    let hash = config.hash();
    let mut reports = Vec::new();
    for &shift in &config.shifts {
        for &seed in &config.seeds {
            let path = config
                .output_dir
                .join(format!("eval/{shift}/seed-{seed}.json"));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let report: EvalReport =
                serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
            let found = report.metadata.get("config_hash").and_then(|v| v.as_str());
            if found != Some(hash.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "{} was produced by a different configuration",
                    path.display()
                )));
            }
            reports.push(report);
        }
    }
    let csv = |body: String| format!("# config_hash={hash}\n{body}");
    let name = &config.dataset.name;
    write_file(
        &config.output_dir.join("runs.csv"),
        &csv(runs_csv(name, &reports)),
    )?;
    write_file(
        &config.output_dir.join("summary.csv"),
        &csv(summary_csv(name, &reports)),
    )?;
    Ok(reports)
}
