//! Experiment configuration (TOML).
//!
//! ```toml
//! rng_seed = 13
//! batch_size = 25
//! strategies = ["relevance", "uncertainty"]
//! output_dir = "out"
//!
//! [dataset]
//! name = "clef2017"
//! corpus = "corpus.jsonl"
//! qrels = "qrels.txt"
//! pool = "per-topic"
//!
//! [[classifiers]]
//! kind = "builtin-lr"
//!
//! [[classifiers]]
//! kind = "plugin"
//! name = "bert"
//! command = ["python3", "plugin.py"]
//! pretrain_epochs = [0, 1, 2, 5, 10]
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active_learning::{Strategy, DEFAULT_BATCH_SIZE, DEFAULT_ITERATIONS, PER_TOPIC_BATCH_SIZE};
use crate::classifier::{ClassifierHandle, LrParams, DEFAULT_LAMBDA, DEFAULT_TOLERANCE};
use crate::corpus::{PoolMode, SeedPolicy};
use crate::evaluation::{NamedCost, DEFAULT_TARGET_RECALL};
use crate::plugin_bridge::PluginSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: RawDataset,
    #[serde(default)]
    topics: Option<Vec<String>>,
    strategies: Vec<Strategy>,
    classifiers: Vec<RawClassifier>,
    /// Defaults by pool mode.
    #[serde(default)]
    batch_size: Option<usize>,
    #[serde(default = "default_iterations")]
    iterations: usize,
    #[serde(default = "default_rho")]
    rho: Vec<f64>,
    #[serde(default)]
    cost_structures: Vec<NamedCost>,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default)]
    summary_wall_clock: bool,
}

fn default_batch_size(pool: PoolMode) -> usize {
    match pool {
        PoolMode::WholeCorpus => DEFAULT_BATCH_SIZE,
        PoolMode::PerTopic => PER_TOPIC_BATCH_SIZE,
    }
}
fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}
fn default_rho() -> Vec<f64> {
    vec![DEFAULT_TARGET_RECALL]
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_dataset_name() -> String {
    "dataset".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    #[serde(default = "default_dataset_name")]
    name: String,
    corpus: PathBuf,
    qrels: PathBuf,
    #[serde(default)]
    pool: PoolMode,
    #[serde(default)]
    dedup: bool,
    #[serde(default)]
    downsample_rate: Option<f64>,
    #[serde(default)]
    downsample_seed: u64,
    #[serde(default)]
    seed_policy: SeedPolicy,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum RawClassifier {
    #[serde(rename = "builtin-lr")]
    BuiltinLr {
        #[serde(default = "default_lr_name")]
        name: String,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_max_iter")]
        max_iterations: usize,
        #[serde(default)]
        baseline: bool,
    },
    #[serde(rename = "plugin")]
    Plugin {
        name: String,
        command: Vec<String>,
        #[serde(default = "default_epochs")]
        pretrain_epochs: Vec<u32>,
        #[serde(default)]
        extra: BTreeMap<String, String>,
        #[serde(default = "default_timeout")]
        handshake_timeout_secs: f64,
        #[serde(default = "default_timeout")]
        request_timeout_secs: f64,
        #[serde(default)]
        baseline: bool,
    },
}

fn default_lr_name() -> String {
    "lr".into()
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_max_iter() -> usize {
    LrParams::default().max_iterations
}
fn default_epochs() -> Vec<u32> {
    vec![0]
}
fn default_timeout() -> f64 {
    600.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSpec {
    pub name: String,
    pub corpus: PathBuf,
    pub qrels: PathBuf,
    pub pool: PoolMode,
    pub dedup: bool,
    /// `(rate, seed)`; applied after dedup.
    pub downsample: Option<(f64, u64)>,
    pub seed_policy: SeedPolicy,
}

/// One classifier entry; plugins expand to one variant per epoch count.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum ClassifierConfig {
    #[serde(rename = "builtin-lr")]
    BuiltinLr { name: String, params: LrParams },
    #[serde(rename = "plugin")]
    Plugin {
        name: String,
        command: Vec<String>,
        pretrain_epochs: Vec<u32>,
        extra: BTreeMap<String, String>,
        handshake_timeout_secs: f64,
        request_timeout_secs: f64,
    },
}

impl ClassifierConfig {
    pub fn name(&self) -> &str {
        match self {
            ClassifierConfig::BuiltinLr { name, .. } | ClassifierConfig::Plugin { name, .. } => name,
        }
    }

    pub fn handles(&self) -> Vec<ClassifierHandle> {
        match self {
            ClassifierConfig::BuiltinLr { name, params } => vec![ClassifierHandle::BuiltinLr {
                name: name.clone(),
                params: *params,
            }],
            ClassifierConfig::Plugin {
                name,
                command,
                pretrain_epochs,
                extra,
                handshake_timeout_secs,
                request_timeout_secs,
            } => pretrain_epochs
                .iter()
                .map(|&e| ClassifierHandle::Plugin {
                    name: name.clone(),
                    spec: PluginSpec {
                        command: command.clone(),
                        pretrain_epochs: e,
                        extra: extra.clone(),
                        handshake_timeout: Duration::from_secs_f64(*handshake_timeout_secs),
                        request_timeout: Duration::from_secs_f64(*request_timeout_secs),
                    },
                })
                .collect(),
        }
    }
}

/// A validated experiment configuration with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub topics: Option<Vec<String>>,
    pub strategies: Vec<Strategy>,
    pub classifiers: Vec<ClassifierConfig>,
    /// Index into `classifiers` of the comparison baseline.
    pub baseline: Option<usize>,
    pub batch_size: usize,
    pub iterations: usize,
    /// Target recalls; always starts with 0.8.
    pub target_recalls: Vec<f64>,
    /// Uniform and expensive first, then any configured extras.
    pub cost_structures: Vec<NamedCost>,
    pub rng_seed: u64,
    /// Not echoed into metadata, so identical runs written to different
    /// directories produce identical files.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub summary_wall_clock: bool,
}

impl RunConfig {
    /// A config with every default applied, for programmatic use.
    pub fn new(
        dataset: DatasetSpec,
        strategies: Vec<Strategy>,
        classifiers: Vec<ClassifierConfig>,
        output_dir: PathBuf,
    ) -> Self {
        let baseline = classifiers
            .iter()
            .position(|c| matches!(c, ClassifierConfig::BuiltinLr { .. }));
        let batch_size = default_batch_size(dataset.pool);
        Self {
            dataset,
            topics: None,
            strategies,
            classifiers,
            baseline,
            batch_size,
            iterations: DEFAULT_ITERATIONS,
            target_recalls: vec![DEFAULT_TARGET_RECALL],
            cost_structures: vec![NamedCost::uniform(), NamedCost::expensive()],
            rng_seed: 0,
            output_dir,
            summary_wall_clock: false,
        }
    }

    pub fn baseline_name(&self) -> Option<&str> {
        self.baseline.map(|i| self.classifiers[i].name())
    }

    /// Checks invariants that do not depend on the filesystem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "must list at least one strategy"));
        }
        let distinct: BTreeSet<_> = self.strategies.iter().collect();
        if distinct.len() != self.strategies.len() {
            return Err(invalid("strategies", "duplicate strategy"));
        }
        if self.classifiers.is_empty() {
            return Err(invalid("classifiers", "must list at least one classifier"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be positive"));
        }
        check_component("dataset.name", &self.dataset.name)?;
        if let Some((rate, _)) = self.dataset.downsample {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(invalid("dataset.downsample_rate", format!("{rate} outside (0, 1]")));
            }
        }
        for (i, rho) in self.target_recalls.iter().enumerate() {
            if !(*rho > 0.0 && *rho <= 1.0) {
                return Err(invalid(format!("rho[{i}]"), format!("{rho} outside (0, 1]")));
            }
        }
        let mut names = BTreeSet::new();
        for (i, c) in self.cost_structures.iter().enumerate() {
            let key = format!("cost_structures[{i}]");
            c.structure.validate().map_err(|e| invalid(&key, e.to_string()))?;
            if !names.insert(c.name.as_str()) {
                return Err(invalid(format!("{key}.name"), format!("duplicate name {:?}", c.name)));
            }
            if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_') {
                return Err(invalid(format!("{key}.name"), "use letters, digits and underscores"));
            }
        }
        let mut names = BTreeSet::new();
        for (i, c) in self.classifiers.iter().enumerate() {
            let key = format!("classifiers[{i}]");
            check_component(&format!("{key}.name"), c.name())?;
            if !names.insert(c.name()) {
                return Err(invalid(format!("{key}.name"), format!("duplicate name {:?}", c.name())));
            }
            match c {
                ClassifierConfig::BuiltinLr { params, .. } => {
                    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
                        return Err(invalid(format!("{key}.lambda"), "must be positive"));
                    }
                    if params.tolerance.is_nan() || params.tolerance <= 0.0 {
                        return Err(invalid(format!("{key}.tolerance"), "must be positive"));
                    }
                }
                ClassifierConfig::Plugin {
                    command,
                    pretrain_epochs,
                    handshake_timeout_secs,
                    request_timeout_secs,
                    ..
                } => {
                    if command.is_empty() {
                        return Err(invalid(format!("{key}.command"), "must not be empty"));
                    }
                    if pretrain_epochs.is_empty() {
                        return Err(invalid(format!("{key}.pretrain_epochs"), "must not be empty"));
                    }
                    let distinct: BTreeSet<_> = pretrain_epochs.iter().collect();
                    if distinct.len() != pretrain_epochs.len() {
                        return Err(invalid(format!("{key}.pretrain_epochs"), "duplicate epoch count"));
                    }
                    for (field, v) in [
                        ("handshake_timeout_secs", handshake_timeout_secs),
                        ("request_timeout_secs", request_timeout_secs),
                    ] {
                        if !(*v > 0.0 && v.is_finite()) {
                            return Err(invalid(format!("{key}.{field}"), "must be positive"));
                        }
                    }
                    if Some(i) == self.baseline && pretrain_epochs.len() != 1 {
                        return Err(invalid(
                            format!("{key}.baseline"),
                            "a baseline plugin must have exactly one pretrain_epochs value",
                        ));
                    }
                }
            }
        }
        if let Some(topics) = &self.topics {
            for (i, t) in topics.iter().enumerate() {
                check_component(&format!("topics[{i}]"), t)?;
            }
        }
        Ok(())
    }

    /// Checks that the input files exist.
    pub fn validate_paths(&self) -> Result<(), ConfigError> {
        for (key, path) in [
            ("dataset.corpus", &self.dataset.corpus),
            ("dataset.qrels", &self.dataset.qrels),
        ] {
            if !path.is_file() {
                return Err(invalid(key, format!("file not found: {}", path.display())));
            }
        }
        Ok(())
    }
}

/// Run-id components become directory names.
pub(crate) fn check_component(key: &str, value: &str) -> Result<(), ConfigError> {
    if value.is_empty()
        || value == "."
        || value == ".."
        || value.contains(['/', '\\'])
        || value.chars().any(char::is_control)
    {
        return Err(invalid(key, format!("{value:?} cannot be used in a run id")));
    }
    Ok(())
}

/// Reads, validates and resolves a TOML config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let config = parse_config(&text, base)?;
    config.validate_paths()?;
    Ok(config)
}

/// Parses and validates config text; relative paths resolve against `base`.
/// Does not touch the filesystem.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| invalid("<document>", e.to_string()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { "<root>".to_string() } else { key };
        invalid(key, e.into_inner().message().trim().to_string())
    })?;

    let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

    let mut baseline = None;
    let mut classifiers = Vec::with_capacity(raw.classifiers.len());
    for (i, c) in raw.classifiers.into_iter().enumerate() {
        let (cfg, is_baseline) = match c {
            RawClassifier::BuiltinLr {
                name,
                lambda,
                tolerance,
                max_iterations,
                baseline,
            } => (
                ClassifierConfig::BuiltinLr {
                    name,
                    params: LrParams {
                        lambda,
                        tolerance,
                        max_iterations,
                    },
                },
                baseline,
            ),
            RawClassifier::Plugin {
                name,
                command,
                pretrain_epochs,
                extra,
                handshake_timeout_secs,
                request_timeout_secs,
                baseline,
            } => (
                ClassifierConfig::Plugin {
                    name,
                    command,
                    pretrain_epochs,
                    extra,
                    handshake_timeout_secs,
                    request_timeout_secs,
                },
                baseline,
            ),
        };
        if is_baseline {
            if baseline.is_some() {
                return Err(invalid(
                    format!("classifiers[{i}].baseline"),
                    "only one baseline allowed",
                ));
            }
            baseline = Some(i);
        }
        classifiers.push(cfg);
    }
    let baseline = baseline.or_else(|| {
        classifiers
            .iter()
            .position(|c| matches!(c, ClassifierConfig::BuiltinLr { .. }))
    });

    let mut target_recalls = vec![DEFAULT_TARGET_RECALL];
    for rho in raw.rho {
        if !target_recalls.contains(&rho) {
            target_recalls.push(rho);
        }
    }
    let mut cost_structures = vec![NamedCost::uniform(), NamedCost::expensive()];
    cost_structures.extend(raw.cost_structures);

    let config = RunConfig {
        dataset: DatasetSpec {
            name: raw.dataset.name,
            corpus: resolve(raw.dataset.corpus),
            qrels: resolve(raw.dataset.qrels),
            pool: raw.dataset.pool,
            dedup: raw.dataset.dedup,
            downsample: raw.dataset.downsample_rate.map(|r| (r, raw.dataset.downsample_seed)),
            seed_policy: raw.dataset.seed_policy,
        },
        topics: raw.topics,
        strategies: raw.strategies,
        classifiers,
        baseline,
        batch_size: raw.batch_size.unwrap_or(default_batch_size(raw.dataset.pool)),
        iterations: raw.iterations,
        target_recalls,
        cost_structures,
        rng_seed: raw.rng_seed,
        output_dir: resolve(raw.output_dir),
        summary_wall_clock: raw.summary_wall_clock,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
strategies = ["relevance"]

[dataset]
corpus = "c.jsonl"
qrels = "q.txt"

[[classifiers]]
kind = "builtin-lr"
"#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_config(text, Path::new("/base"))
    }

    fn key_of(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { key, .. } => key,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.batch_size, 200);
        assert_eq!(c.iterations, 20);
        assert_eq!(c.target_recalls, [0.8]);
        assert_eq!(c.dataset.corpus, Path::new("/base/c.jsonl"));
        assert_eq!(c.output_dir, Path::new("/base/out"));
        assert_eq!(c.baseline, Some(0));
        assert_eq!(c.cost_structures.len(), 2);
        match &c.classifiers[0] {
            ClassifierConfig::BuiltinLr { name, params } => {
                assert_eq!(name, "lr");
                assert_eq!(params.lambda, 1e-4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn batch_size_defaults_by_pool_mode() {
        let per_topic = MINIMAL.replace("qrels = \"q.txt\"", "qrels = \"q.txt\"\npool = \"per-topic\"");
        assert_eq!(parse(&per_topic).unwrap().batch_size, 25);
        let c = parse(&format!("batch_size = 40\n{per_topic}")).unwrap();
        assert_eq!(c.batch_size, 40);
    }

    #[test]
    fn empty_strategies_rejected() {
        let text = MINIMAL.replace(r#"["relevance"]"#, "[]");
        assert_eq!(key_of(parse(&text).unwrap_err()), "strategies");
    }

    #[test]
    fn unknown_keys_are_located() {
        let text = format!("{MINIMAL}lamda = 0.1\n");
        assert_eq!(key_of(parse(&text).unwrap_err()), "classifiers[0]");
        let text = MINIMAL.replace("qrels = \"q.txt\"", "qrels = \"q.txt\"\nshuffle = true");
        assert_eq!(key_of(parse(&text).unwrap_err()), "dataset.shuffle");
        let text = format!("colour = 1\n{MINIMAL}");
        assert_eq!(key_of(parse(&text).unwrap_err()), "colour");
        let text = MINIMAL.replace("strategies = [\"relevance\"]", "");
        assert_eq!(key_of(parse(&text).unwrap_err()), "<root>");
    }

    #[test]
    fn missing_and_invalid_values() {
        let text = MINIMAL.replace("corpus = \"c.jsonl\"\n", "");
        assert_eq!(key_of(parse(&text).unwrap_err()), "dataset");
        let text = MINIMAL.replace(r#"["relevance"]"#, r#"["random"]"#);
        assert_eq!(key_of(parse(&text).unwrap_err()), "strategies[0]");
        let text = format!("rho = [0.8, 1.5]\n{MINIMAL}");
        assert_eq!(key_of(parse(&text).unwrap_err()), "rho[1]");
        let text = format!("batch_size = 0\n{MINIMAL}");
        assert_eq!(key_of(parse(&text).unwrap_err()), "batch_size");
    }

    #[test]
    fn plugin_entries_expand_per_epoch() {
        let text = format!(
            "{MINIMAL}\n[[classifiers]]\nkind = \"plugin\"\nname = \"bert\"\ncommand = [\"run\"]\npretrain_epochs = [0, 1, 2, 5, 10]\nextra = {{ backbone = \"tiny\" }}\n"
        );
        let c = parse(&text).unwrap();
        let handles = c.classifiers[1].handles();
        assert_eq!(handles.len(), 5);
        assert_eq!(handles[3].pretrain_epochs(), Some(5));
        let dup = text.replace("[0, 1, 2, 5, 10]", "[1, 1]");
        assert_eq!(key_of(parse(&dup).unwrap_err()), "classifiers[1].pretrain_epochs");
    }

    #[test]
    fn seed_policy_and_pool_forms() {
        let text = MINIMAL.replace(
            "qrels = \"q.txt\"",
            "qrels = \"q.txt\"\npool = \"per-topic\"\nseed_policy = { random = 9 }",
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.dataset.pool, PoolMode::PerTopic);
        assert_eq!(c.dataset.seed_policy, SeedPolicy::Random(9));
    }

    #[test]
    fn extra_rho_and_costs() {
        let text = format!(
            "rho = [0.95]\n{MINIMAL}\n[[cost_structures]]\nname = \"custom\"\nalpha_p = 2.0\nalpha_n = 2.0\nbeta_p = 1.0\nbeta_n = 1.0\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.target_recalls, [0.8, 0.95]);
        assert_eq!(c.cost_structures[2].name, "custom");
    }

    #[test]
    fn missing_files_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        assert_eq!(key_of(load_config(&path).unwrap_err()), "dataset.corpus");
    }
}
