//! Run matrices: configuration, task preparation, execution and output.
//!
//! A run is one (topic, strategy, classifier variant) combination, named by
//! a [`RunSpec::run_id`] of the form `dataset/topic/strategy/classifier/E`
//! (`E` is `na` for the built-in classifier). Runs execute on a bounded
//! worker pool; aggregation happens after all of them finish.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! <run_id>/run.json, <run_id>/trace.csv
//! summary.csv  significance.csv  relative_costs.csv
//! bins.csv  bin_summary.csv  timings.csv  meta.json
//! pools/         plugin pool files
//! ```
//!
//! Everything except `timings.csv` is a deterministic function of the
//! config and inputs.

pub mod config;
pub mod output;

use std::collections::{BTreeMap, BTreeSet};
use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

pub use config::{load_config, parse_config, ClassifierConfig, ConfigError, DatasetSpec, RunConfig};
pub use output::{ReportSettings, RunMeta, RunRecord, RunStatus, TableSummary, TraceRow};

use crate::active_learning::{run_topic, ClassifierInfo, LoopConfig, Strategy};
use crate::classifier::{ClassifierHandle, PoolLr, TaskClassifier};
use crate::corpus::{write_jsonl, Corpus, CorpusError, PoolMode, Qrels, TopicTask};
use crate::features::{FeatureError, FeatureSpace, SparseVector};
use crate::parallel::{self, Execution};
use crate::plugin_bridge::{PluginClassifier, TaskManifest};
use crate::rng::{derive_seed, RNG_ALGORITHM};

/// Handshake `extra` key carrying the per-run seed, unless already set.
pub const PLUGIN_SEED_KEY: &str = "run_seed";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("topic {0:?} has no judgments in the qrels")]
    UnknownTopic(String),
    #[error("the run matrix is empty")]
    EmptyMatrix,
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
}

/// One fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub topic_id: String,
    pub strategy: Strategy,
    pub classifier: ClassifierHandle,
    /// `derive_seed(rng_seed, run_id)`.
    pub seed: u64,
}

pub fn run_id(dataset: &str, topic: &str, strategy: Strategy, classifier: &ClassifierHandle) -> String {
    let epochs = classifier
        .pretrain_epochs()
        .map_or_else(|| "na".to_string(), |e| e.to_string());
    format!("{dataset}/{topic}/{strategy}/{}/{epochs}", classifier.name())
}

/// Topics × strategies × classifier variants, in that nesting order.
pub fn expand_matrix(config: &RunConfig, topics: &[String]) -> Result<Vec<RunSpec>, ExperimentError> {
    let mut seen = BTreeSet::new();
    let mut matrix = Vec::new();
    for (i, topic) in topics.iter().enumerate() {
        config::check_component(&format!("topics[{i}]"), topic)?;
        if !seen.insert(topic) {
            return Err(ConfigError::Invalid {
                key: format!("topics[{i}]"),
                message: format!("duplicate topic {topic:?}"),
            }
            .into());
        }
        for &strategy in &config.strategies {
            for classifier in config.classifiers.iter().flat_map(ClassifierConfig::handles) {
                let run_id = run_id(&config.dataset.name, topic, strategy, &classifier);
                matrix.push(RunSpec {
                    seed: derive_seed(config.rng_seed, &run_id),
                    run_id,
                    topic_id: topic.clone(),
                    strategy,
                    classifier,
                });
            }
        }
    }
    if matrix.is_empty() {
        return Err(ExperimentError::EmptyMatrix);
    }
    Ok(matrix)
}

/// TF-IDF vectors for one pool, aligned with the task's `doc_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolFeatures {
    pub dimension: usize,
    pub vectors: Vec<SparseVector>,
}

impl PoolFeatures {
    pub fn fit(texts: &[&str], exec: Execution) -> Result<Self, FeatureError> {
        let space = FeatureSpace::fit(texts.iter().copied())?;
        let vectors = parallel::map(exec, texts, |t| space.vectorize(t));
        Ok(Self {
            dimension: space.dimension(),
            vectors,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Features {
    None,
    Shared(PoolFeatures),
    PerTopic(BTreeMap<String, PoolFeatures>),
}

/// A topic left out of the matrix and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedTopic {
    pub topic: String,
    pub reason: String,
}

/// Loaded inputs: the filtered corpus, one task per runnable topic and
/// features for the built-in classifier.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub pool: PoolMode,
    pub tasks: BTreeMap<String, TopicTask>,
    pub skipped: Vec<SkippedTopic>,
    features: Features,
}

impl Prepared {
    /// Runnable topics in sorted order.
    pub fn topics(&self) -> Vec<String> {
        self.tasks.keys().cloned().collect()
    }

    pub fn features_for(&self, topic: &str) -> Option<&PoolFeatures> {
        match &self.features {
            Features::None => None,
            Features::Shared(f) => Some(f),
            Features::PerTopic(m) => m.get(topic),
        }
    }
}

/// Loads the corpus and qrels, applies dedup and downsampling, and builds
/// one task per selected topic. `topics` overrides the config's filter.
pub fn prepare(config: &RunConfig, topics: Option<&[String]>) -> Result<Prepared, ExperimentError> {
    let ds = &config.dataset;
    let mut corpus = Corpus::load(&ds.corpus)?;
    let loaded = corpus.len();
    if ds.dedup {
        corpus = corpus.dedup();
    }
    if let Some((rate, seed)) = ds.downsample {
        corpus = corpus.downsample(rate, seed)?;
    }
    log::info!("corpus: {loaded} documents loaded, {} after filtering", corpus.len());

    let all_qrels = Qrels::load(&ds.qrels)?;
    let qrels = all_qrels.restrict_to(&corpus);
    let selected: Vec<String> = match topics.or(config.topics.as_deref()) {
        Some(filter) => {
            for t in filter {
                if all_qrels.judgments(t).is_none() {
                    return Err(ExperimentError::UnknownTopic(t.clone()));
                }
            }
            let set: BTreeSet<&String> = filter.iter().collect();
            set.into_iter().cloned().collect()
        }
        None => all_qrels.topic_ids().map(str::to_string).collect(),
    };

    let mut tasks = BTreeMap::new();
    let mut skipped = Vec::new();
    for topic in selected {
        if qrels.judgments(&topic).is_none() {
            skipped.push(SkippedTopic {
                topic,
                reason: "no judged documents remain after filtering".into(),
            });
            continue;
        }
        match TopicTask::new(&corpus, &topic, &qrels, ds.pool, ds.seed_policy) {
            Ok(task) => {
                tasks.insert(topic, task);
            }
            Err(e @ CorpusError::NoRelevant { .. }) => skipped.push(SkippedTopic {
                topic,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    for s in &skipped {
        log::warn!("skipping topic {}: {}", s.topic, s.reason);
    }

    let needs_features = config
        .classifiers
        .iter()
        .any(|c| matches!(c, ClassifierConfig::BuiltinLr { .. }));
    let exec = Execution::default();
    let features = if !needs_features || tasks.is_empty() {
        Features::None
    } else {
        match ds.pool {
            PoolMode::WholeCorpus => {
                let texts: Vec<&str> = corpus.documents().iter().map(|d| d.text.as_str()).collect();
                Features::Shared(PoolFeatures::fit(&texts, exec)?)
            }
            PoolMode::PerTopic => {
                let list: Vec<&TopicTask> = tasks.values().collect();
                let fitted = parallel::map(exec, &list, |task| {
                    let texts: Vec<&str> = task
                        .doc_ids
                        .iter()
                        .map(|d| corpus.get(d).expect("pool documents are in the corpus").text.as_str())
                        .collect();
                    PoolFeatures::fit(&texts, Execution::Sequential)
                });
                let mut map = BTreeMap::new();
                for (task, f) in list.iter().zip(fitted) {
                    map.insert(task.topic_id.clone(), f?);
                }
                Features::PerTopic(map)
            }
        }
    };

    Ok(Prepared {
        corpus,
        pool: ds.pool,
        tasks,
        skipped,
        features,
    })
}

/// Contents of `meta.json`.
#[derive(Debug, Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    rng: &'static str,
    settings: &'a ReportSettings,
    config: &'a RunConfig,
    topics: Vec<String>,
    skipped_topics: &'a [SkippedTopic],
    n_runs: usize,
    n_failed: usize,
    assumptions: &'static [&'static str],
}

/// Declared stand-ins for details the method leaves open.
pub const ASSUMPTIONS: &[&str] = &[
    "bonferroni family: non-baseline variants compared against the baseline within one (dataset, strategy, metric) table",
    "prevalence bins: tertiles of R within each difficulty class, ties to the lower bin",
    "difficulty boundaries: R = 2000 and R = 8000 are Medium",
    "relative cost: mean over topics of candidate/baseline minimal cost; ratio of sums also reported",
    "features: raw term frequency times smoothed idf, L2-normalized, vocabulary fitted on the task pool",
    "baseline classifier: L2-regularized logistic regression, lambda = 1e-4, refit from scratch each iteration",
    "single-class fits penalize the bias with the same lambda so a minimizer exists",
    "seed document: smallest relevant doc_id unless a random seed policy is configured",
    "iteration records are taken after fitting and before the iteration's batch is labeled",
    "plugin fine-tuning schedule is owned by the plugin and reported in its handshake extra map",
];

impl ReportSettings {
    pub fn from_config(config: &RunConfig) -> Self {
        Self {
            dataset: config.dataset.name.clone(),
            target_recalls: config.target_recalls.clone(),
            cost_structures: config.cost_structures.clone(),
            baseline: config.baseline_name().map(str::to_string),
            summary_wall_clock: config.summary_wall_clock,
        }
    }
}

fn error_chain(e: &dyn StdError) -> String {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg
}

fn pool_path(out: &Path, prepared: &Prepared, topic: &str) -> PathBuf {
    let name = match prepared.pool {
        PoolMode::WholeCorpus => "corpus.jsonl".to_string(),
        PoolMode::PerTopic => format!("{topic}.jsonl"),
    };
    out.join(output::POOLS_DIR).join(name)
}

fn write_pools(out: &Path, prepared: &Prepared, matrix: &[RunSpec]) -> Result<(), ExperimentError> {
    let topics: BTreeSet<&str> = matrix
        .iter()
        .filter(|s| matches!(s.classifier, ClassifierHandle::Plugin { .. }))
        .map(|s| s.topic_id.as_str())
        .collect();
    if topics.is_empty() {
        return Ok(());
    }
    let dir = out.join(output::POOLS_DIR);
    std::fs::create_dir_all(&dir).map_err(|source| ExperimentError::Io {
        path: dir.clone(),
        source,
    })?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    match prepared.pool {
        PoolMode::WholeCorpus => {
            let path = pool_path(out, prepared, "");
            write_jsonl(&path, prepared.corpus.documents().iter()).map_err(io(&path))?;
        }
        PoolMode::PerTopic => {
            for topic in topics {
                let path = pool_path(out, prepared, topic);
                let docs = prepared.tasks[topic]
                    .doc_ids
                    .iter()
                    .map(|d| prepared.corpus.get(d).expect("pool documents are in the corpus"));
                write_jsonl(&path, docs).map_err(io(&path))?;
            }
        }
    }
    Ok(())
}

fn execute_one(config: &RunConfig, prepared: &Prepared, out: &Path, spec: &RunSpec, exec: Execution) -> RunRecord {
    let task = &prepared.tasks[&spec.topic_id];
    let start = Instant::now();
    let result = (|| {
        let mut classifier: Box<dyn TaskClassifier> = match &spec.classifier {
            ClassifierHandle::BuiltinLr { params, .. } => {
                let f = prepared
                    .features_for(&spec.topic_id)
                    .expect("features are prepared when a built-in classifier is configured");
                Box::new(
                    PoolLr::new(task.doc_ids.clone(), f.vectors.clone(), f.dimension, *params).with_execution(exec),
                )
            }
            ClassifierHandle::Plugin { spec: plugin, .. } => {
                let mut plugin = plugin.clone();
                plugin
                    .extra
                    .entry(PLUGIN_SEED_KEY.to_string())
                    .or_insert_with(|| spec.seed.to_string());
                let path = pool_path(out, prepared, &spec.topic_id);
                let pool_path = std::fs::canonicalize(&path).unwrap_or(path);
                let session = PluginClassifier::open(&plugin, &TaskManifest { pool_path }, task.doc_ids.clone())
                    .map_err(|e| error_chain(&e))?;
                Box::new(session)
            }
        };
        let info = ClassifierInfo {
            name: spec.classifier.name().to_string(),
            pretrain_epochs: spec.classifier.pretrain_epochs(),
        };
        let loop_config = LoopConfig {
            strategy: spec.strategy,
            batch_size: config.batch_size,
            iterations: config.iterations,
            target_recalls: config.target_recalls.clone(),
            retain_scores: false,
        };
        run_topic(task, classifier.as_mut(), &info, &loop_config).map_err(|e| error_chain(&e))
    })();
    let secs = start.elapsed().as_secs_f64();

    let mut meta = RunMeta {
        run_id: spec.run_id.clone(),
        dataset: config.dataset.name.clone(),
        topic: spec.topic_id.clone(),
        strategy: spec.strategy,
        classifier: spec.classifier.name().to_string(),
        pretrain_epochs: spec.classifier.pretrain_epochs(),
        r: task.r(),
        pool_size: task.pool_size(),
        seed_doc: task.seed_doc.clone(),
        run_seed: spec.seed,
        status: RunStatus::Ok,
        error: None,
    };
    match result {
        Ok(run) => {
            log::info!(
                "{}: final R-Precision {:.4} in {secs:.2}s",
                spec.run_id,
                run.final_r_precision().unwrap_or(f64::NAN)
            );
            RunRecord::from_result(meta, &run, Some(secs))
        }
        Err(message) => {
            log::error!("{}: failed after {secs:.2}s: {message}", spec.run_id);
            meta.status = RunStatus::Failed;
            meta.error = Some(message);
            RunRecord {
                meta,
                trace: Vec::new(),
                wall_clock_seconds: Some(secs),
            }
        }
    }
}

/// Runs the matrix on at most `parallelism` workers and writes all outputs
/// to `config.output_dir`. Individual run failures are recorded in the
/// outputs and returned in [`TableSummary::failed`], not raised.
pub fn execute(
    config: &RunConfig,
    prepared: &Prepared,
    matrix: &[RunSpec],
    parallelism: usize,
) -> Result<TableSummary, ExperimentError> {
    if parallelism == 0 {
        return Err(ExperimentError::ZeroParallelism);
    }
    if matrix.is_empty() {
        return Err(ExperimentError::EmptyMatrix);
    }
    if let Some(spec) = matrix.iter().find(|s| !prepared.tasks.contains_key(&s.topic_id)) {
        return Err(ExperimentError::UnknownTopic(spec.topic_id.clone()));
    }
    let out = config.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|source| ExperimentError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_pools(out, prepared, matrix)?;

    let settings = ReportSettings::from_config(config);
    // Runs already occupy the workers; keep each run's scoring sequential.
    let exec = if parallelism > 1 {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let records = parallel::map_bounded(parallelism, matrix, |spec| {
        let record = execute_one(config, prepared, out, spec, exec);
        output::write_run(out, &settings, &record).map(|()| record)
    });
    let mut records = records.into_iter().collect::<Result<Vec<_>, _>>()?;
    records.sort_by(|a, b| a.meta.run_id.cmp(&b.meta.run_id));

    output::write_timings(&out.join(output::TIMINGS_FILE), &records)?;
    let summary = output::write_tables(out, &settings, &records)?;
    let topics: BTreeSet<String> = matrix.iter().map(|s| s.topic_id.clone()).collect();
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        rng: RNG_ALGORITHM,
        settings: &settings,
        config,
        topics: topics.into_iter().collect(),
        skipped_topics: &prepared.skipped,
        n_runs: summary.n_runs,
        n_failed: summary.failed.len(),
        assumptions: ASSUMPTIONS,
    };
    output::write_json(&out.join(output::META_FILE), &meta)?;
    if !summary.failed.is_empty() {
        log::warn!(
            "{} of {} runs failed; aggregates exclude them",
            summary.failed.len(),
            summary.n_runs
        );
    }
    Ok(summary)
}

/// Regenerates the aggregate tables in `out` from persisted runs.
pub fn report(out: &Path) -> Result<TableSummary, ExperimentError> {
    let meta_path = out.join(output::META_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(|source| ExperimentError::Io {
        path: meta_path.clone(),
        source,
    })?;
    #[derive(serde::Deserialize)]
    struct MetaSettings {
        settings: ReportSettings,
    }
    let meta: MetaSettings = serde_json::from_str(&text).map_err(|e| ExperimentError::Format {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    let records = output::read_runs(out, &meta.settings)?;
    if records.is_empty() {
        return Err(ExperimentError::EmptyMatrix);
    }
    output::write_tables(out, &meta.settings, &records)
}
