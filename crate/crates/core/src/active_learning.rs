//! The iterative review loop.
//!
//! Starting from the seed document, every iteration trains the classifier on
//! all reviewed documents, scores the rest of the pool, evaluates that state,
//! and has the simulated reviewer label the next batch chosen by the
//! sampling strategy.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, Label, TaskClassifier};
use crate::corpus::TopicTask;
use crate::evaluation::{self, EvalError, IterationEval, ReviewState, RunResult, DEFAULT_TARGET_RECALL};

pub const DEFAULT_ITERATIONS: usize = 20;
/// Batch size for whole-collection tasks.
pub const DEFAULT_BATCH_SIZE: usize = 200;
/// Batch size for per-topic screening pools.
pub const PER_TOPIC_BATCH_SIZE: usize = 25;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("scored document {0:?} is already reviewed")]
    ScoredReviewed(String),
    #[error("document {0:?} is not in the task pool")]
    UnknownDocument(String),
    #[error("pool holds only the seed document; nothing to review")]
    PoolExhausted,
    #[error("classifier failed at iteration {iteration}: {source}")]
    Classifier {
        iteration: usize,
        #[source]
        source: ClassifierError,
    },
    #[error("iteration {iteration}: classifier returned {got} scores for {expected} documents")]
    ScoreCount {
        iteration: usize,
        expected: usize,
        got: usize,
    },
    #[error("iteration {iteration}: {source}")]
    Evaluation {
        iteration: usize,
        #[source]
        source: EvalError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Highest scores first.
    #[serde(rename = "relevance")]
    RelevanceFeedback,
    /// Scores closest to 0.5 first.
    #[serde(rename = "uncertainty")]
    UncertaintySampling,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::RelevanceFeedback => "relevance",
            Strategy::UncertaintySampling => "uncertainty",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevance" => Ok(Strategy::RelevanceFeedback),
            "uncertainty" => Ok(Strategy::UncertaintySampling),
            other => Err(format!(
                "unknown strategy {other:?} (expected relevance or uncertainty)"
            )),
        }
    }
}

/// Orders candidates by the strategy's preference; ties by ascending doc_id.
pub(crate) fn order_candidates<S: AsRef<str>>(strategy: Strategy, items: &mut [(S, f64)]) {
    match strategy {
        Strategy::RelevanceFeedback => evaluation::sort_by_score_desc(items),
        Strategy::UncertaintySampling => items.sort_by(|a, b| {
            (a.1 - 0.5)
                .abs()
                .total_cmp(&(b.1 - 0.5).abs())
                .then_with(|| a.0.as_ref().cmp(b.0.as_ref()))
        }),
    }
}

/// Picks the next `batch` documents to review. Returns all candidates if
/// fewer than `batch` remain.
pub fn select_batch(
    strategy: Strategy,
    scores: &HashMap<String, f64>,
    reviewed: &HashSet<String>,
    batch: usize,
) -> Result<Vec<String>, EngineError> {
    if batch == 0 {
        return Err(EngineError::ZeroBatch);
    }
    if let Some(d) = scores.keys().find(|d| reviewed.contains(*d)) {
        return Err(EngineError::ScoredReviewed(d.clone()));
    }
    let mut items: Vec<(&str, f64)> = scores.iter().map(|(d, s)| (d.as_str(), *s)).collect();
    order_candidates(strategy, &mut items);
    Ok(items.into_iter().take(batch).map(|(d, _)| d.to_string()).collect())
}

/// The simulated reviewer: perfect judgments from the task's qrels.
pub fn oracle_label(task: &TopicTask, doc_id: &str) -> Result<Label, EngineError> {
    if !task.doc_ids.iter().any(|d| d == doc_id) {
        return Err(EngineError::UnknownDocument(doc_id.to_string()));
    }
    Ok(Label::from_relevance(task.is_relevant(doc_id)))
}

/// Snapshot of one iteration, taken after fitting and scoring and before the
/// new batch is labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Size of the training set this iteration.
    pub n_reviewed: usize,
    pub t_p: usize,
    pub t_n: usize,
    /// Scores of the unreviewed documents, kept when
    /// [`LoopConfig::retain_scores`] is set.
    pub scores: Option<HashMap<String, f64>>,
    /// Documents chosen for review this iteration, in selection order.
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub iterations: usize,
    /// Target recalls to evaluate; the first is the primary one.
    pub target_recalls: Vec<f64>,
    pub retain_scores: bool,
}

impl LoopConfig {
    pub fn new(strategy: Strategy, batch_size: usize) -> Self {
        Self {
            strategy,
            batch_size,
            iterations: DEFAULT_ITERATIONS,
            target_recalls: vec![DEFAULT_TARGET_RECALL],
            retain_scores: false,
        }
    }
}

/// Names the classifier in the run's result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierInfo {
    pub name: String,
    pub pretrain_epochs: Option<u32>,
}

/// Runs the review loop for one topic.
///
/// Once the pool is exhausted the remaining iterations are recorded with
/// the final state and no selection.
pub fn run_topic(
    task: &TopicTask,
    classifier: &mut dyn TaskClassifier,
    info: &ClassifierInfo,
    config: &LoopConfig,
) -> Result<RunResult, EngineError> {
    if config.batch_size == 0 {
        return Err(EngineError::ZeroBatch);
    }
    for &rho in &config.target_recalls {
        evaluation::target_count(rho, task.r()).map_err(|source| EngineError::Evaluation { iteration: 0, source })?;
    }
    if task.pool_size() <= 1 {
        return Err(EngineError::PoolExhausted);
    }
    let position: HashMap<&str, usize> = task.doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let seed_pos = *position
        .get(task.seed_doc.as_str())
        .ok_or_else(|| EngineError::UnknownDocument(task.seed_doc.clone()))?;

    let mut state = ReviewState::default();
    state.reviewed.insert(task.seed_doc.clone(), Label::Relevant);
    let mut reviewed_mask = vec![false; task.pool_size()];
    reviewed_mask[seed_pos] = true;
    let mut training: Vec<(usize, Label)> = vec![(seed_pos, Label::Relevant)];

    let mut iterations = Vec::with_capacity(config.iterations);
    for iteration in 1..=config.iterations {
        let unreviewed: Vec<usize> = (0..task.pool_size()).filter(|&i| !reviewed_mask[i]).collect();
        let scores: HashMap<String, f64> = if unreviewed.is_empty() {
            HashMap::new()
        } else {
            classifier
                .fit(&training)
                .map_err(|source| EngineError::Classifier { iteration, source })?;
            let raw = classifier
                .score(&unreviewed)
                .map_err(|source| EngineError::Classifier { iteration, source })?;
            if raw.len() != unreviewed.len() {
                return Err(EngineError::ScoreCount {
                    iteration,
                    expected: unreviewed.len(),
                    got: raw.len(),
                });
            }
            unreviewed
                .iter()
                .zip(raw)
                .map(|(&i, s)| (task.doc_ids[i].clone(), s))
                .collect()
        };

        let eval_err = |source| EngineError::Evaluation { iteration, source };
        let ranking = evaluation::build_recorded_ranking(&state, &scores, task).map_err(eval_err)?;
        let r_precision = evaluation::r_precision(&ranking, task).map_err(eval_err)?;
        let second_phase = config
            .target_recalls
            .iter()
            .map(|&rho| evaluation::second_phase_counts(&state, &scores, task, rho))
            .collect::<Result<Vec<_>, _>>()
            .map_err(eval_err)?;

        let selected = if scores.is_empty() {
            Vec::new()
        } else {
            let reviewed: HashSet<String> = state.reviewed.keys().cloned().collect();
            select_batch(config.strategy, &scores, &reviewed, config.batch_size)?
        };
        let (t_p, t_n) = state.counts();
        let record = IterationRecord {
            iteration,
            n_reviewed: state.reviewed.len(),
            t_p,
            t_n,
            scores: config.retain_scores.then_some(scores),
            selected: selected.clone(),
        };

        for doc_id in selected {
            let pos = position[doc_id.as_str()];
            let label = Label::from_relevance(task.is_relevant(&doc_id));
            reviewed_mask[pos] = true;
            training.push((pos, label));
            state.reviewed.insert(doc_id, label);
        }
        state.iteration = iteration;

        iterations.push((
            record,
            IterationEval {
                r_precision,
                second_phase,
            },
        ));
    }
    classifier.close().map_err(|source| EngineError::Classifier {
        iteration: config.iterations,
        source,
    })?;

    Ok(RunResult {
        topic_id: task.topic_id.clone(),
        strategy: config.strategy,
        classifier: info.name.clone(),
        pretrain_epochs: info.pretrain_epochs,
        r: task.r(),
        pool_size: task.pool_size(),
        target_recalls: config.target_recalls.clone(),
        iterations,
    })
}
