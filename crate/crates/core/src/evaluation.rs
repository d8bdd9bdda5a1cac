//! Effectiveness and review-cost measures for a review state.
//!
//! A review is costed in two phases. Phase one is the documents reviewed to
//! train the classifier (`t_p` relevant, `t_n` irrelevant). Phase two is the
//! documents a reviewer still reads, walking the classifier's ranking of the
//! unreviewed pool, until the recall target is met (`m_p`, `m_n`). The total
//! is `alpha_p*t_p + alpha_n*t_n + beta_p*m_p + beta_n*m_n`.

use std::collections::{BTreeMap, HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::active_learning::{IterationRecord, Strategy};
use crate::classifier::Label;
use crate::corpus::TopicTask;

pub const DEFAULT_TARGET_RECALL: f64 = 0.8;
/// Common target in systematic-review screening.
pub const SYSTEMATIC_REVIEW_TARGET_RECALL: f64 = 0.95;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("scores do not cover exactly the unreviewed pool: {0}")]
    ScoreMismatch(String),
    #[error("score {value} for {doc_id:?} is not a probability")]
    InvalidScore { doc_id: String, value: f64 },
    #[error("ranking is not a permutation of the task pool: {0}")]
    NotPermutation(String),
    #[error("target recall {0} outside (0, 1]")]
    InvalidTargetRecall(f64),
    #[error("invalid cost structure: {0}")]
    InvalidCostStructure(String),
    #[error("run has no iterations")]
    EmptyTrace,
    #[error("target recall {0} was not evaluated in this run")]
    UnknownTargetRecall(f64),
    #[error("topic sets differ: {0}")]
    TopicMismatch(String),
    #[error("baseline cost for topic {0:?} is not positive")]
    ZeroBaseline(String),
    #[error("no topics to compare")]
    NoTopics,
}

/// Unit costs `(alpha_p, alpha_n, beta_p, beta_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostStructure {
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub beta_p: f64,
    pub beta_n: f64,
}

impl CostStructure {
    pub const UNIFORM: CostStructure = CostStructure {
        alpha_p: 1.0,
        alpha_n: 1.0,
        beta_p: 1.0,
        beta_n: 1.0,
    };

    /// Training reviews cost ten times as much as second-phase reviews.
    pub const EXPENSIVE: CostStructure = CostStructure {
        alpha_p: 10.0,
        alpha_n: 10.0,
        beta_p: 1.0,
        beta_n: 1.0,
    };

    pub fn new(alpha_p: f64, alpha_n: f64, beta_p: f64, beta_n: f64) -> Result<Self, EvalError> {
        let cs = Self {
            alpha_p,
            alpha_n,
            beta_p,
            beta_n,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let coeffs = [self.alpha_p, self.alpha_n, self.beta_p, self.beta_n];
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(EvalError::InvalidCostStructure(format!(
                "coefficients must be finite and non-negative: {coeffs:?}"
            )));
        }
        if coeffs.iter().all(|c| *c == 0.0) {
            return Err(EvalError::InvalidCostStructure("all coefficients are zero".into()));
        }
        Ok(())
    }
}

/// Document counts of both review phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub t_p: usize,
    pub t_n: usize,
    pub m_p: usize,
    pub m_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub t_p: usize,
    pub t_n: usize,
    pub m_p: usize,
    pub m_n: usize,
    pub total: f64,
}

pub fn review_cost(counts: PhaseCounts, cs: &CostStructure) -> CostBreakdown {
    let PhaseCounts { t_p, t_n, m_p, m_n } = counts;
    CostBreakdown {
        t_p,
        t_n,
        m_p,
        m_n,
        total: cs.alpha_p * t_p as f64 + cs.alpha_n * t_n as f64 + cs.beta_p * m_p as f64 + cs.beta_n * m_n as f64,
    }
}

/// Documents reviewed so far, in review order, with their oracle labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReviewState {
    pub reviewed: IndexMap<String, Label>,
    pub iteration: usize,
}

impl ReviewState {
    pub fn counts(&self) -> (usize, usize) {
        let t_p = self.reviewed.values().filter(|l| **l == Label::Relevant).count();
        (t_p, self.reviewed.len() - t_p)
    }

    pub fn is_reviewed(&self, doc_id: &str) -> bool {
        self.reviewed.contains_key(doc_id)
    }
}

/// Sorts by descending score, ties by ascending doc_id.
pub(crate) fn sort_by_score_desc<S: AsRef<str>>(items: &mut [(S, f64)]) {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.as_ref().cmp(b.0.as_ref())));
}

/// Unreviewed pool documents in descending score order after checking that
/// `scores` covers exactly them.
fn ranked_unreviewed<'a>(
    state: &ReviewState,
    scores: &'a HashMap<String, f64>,
    task: &TopicTask,
) -> Result<Vec<(&'a str, f64)>, EvalError> {
    let mut missing = 0;
    for d in &task.doc_ids {
        if !state.is_reviewed(d) && !scores.contains_key(d) {
            missing += 1;
        }
    }
    if missing > 0 {
        return Err(EvalError::ScoreMismatch(format!(
            "{missing} unreviewed documents unscored"
        )));
    }
    let pool: HashSet<&str> = task.doc_ids.iter().map(String::as_str).collect();
    if let Some(d) = state.reviewed.keys().find(|d| !pool.contains(d.as_str())) {
        return Err(EvalError::ScoreMismatch(format!("reviewed document {d:?} not in pool")));
    }
    let mut ranked = Vec::with_capacity(scores.len());
    for (d, &s) in scores {
        if state.is_reviewed(d) {
            return Err(EvalError::ScoreMismatch(format!("reviewed document {d:?} was scored")));
        }
        if !pool.contains(d.as_str()) {
            return Err(EvalError::ScoreMismatch(format!("{d:?} is not in the pool")));
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(EvalError::InvalidScore {
                doc_id: d.clone(),
                value: s,
            });
        }
        ranked.push((d.as_str(), s));
    }
    sort_by_score_desc(&mut ranked);
    Ok(ranked)
}

/// Reviewed relevant documents first (ascending doc_id), then unreviewed by
/// descending score, then reviewed irrelevant (ascending doc_id).
pub fn build_recorded_ranking(
    state: &ReviewState,
    scores: &HashMap<String, f64>,
    task: &TopicTask,
) -> Result<Vec<String>, EvalError> {
    let ranked = ranked_unreviewed(state, scores, task)?;
    let mut rel: Vec<&str> = Vec::new();
    let mut irr: Vec<&str> = Vec::new();
    for (d, l) in &state.reviewed {
        match l {
            Label::Relevant => rel.push(d),
            Label::Irrelevant => irr.push(d),
        }
    }
    rel.sort_unstable();
    irr.sort_unstable();
    Ok(rel
        .into_iter()
        .chain(ranked.into_iter().map(|(d, _)| d))
        .chain(irr)
        .map(str::to_string)
        .collect())
}

/// Fraction of relevant documents among the top `R` of `ranking`.
pub fn r_precision(ranking: &[String], task: &TopicTask) -> Result<f64, EvalError> {
    if ranking.len() != task.doc_ids.len() {
        return Err(EvalError::NotPermutation(format!(
            "{} entries for a pool of {}",
            ranking.len(),
            task.doc_ids.len()
        )));
    }
    let pool: HashSet<&str> = task.doc_ids.iter().map(String::as_str).collect();
    let mut seen = HashSet::with_capacity(ranking.len());
    for d in ranking {
        if !pool.contains(d.as_str()) || !seen.insert(d.as_str()) {
            return Err(EvalError::NotPermutation(format!("unexpected or repeated {d:?}")));
        }
    }
    let r = task.r();
    let hits = ranking[..r].iter().filter(|d| task.is_relevant(d)).count();
    Ok(hits as f64 / r as f64)
}

/// Number of relevant documents needed to reach recall `rho`: `ceil(rho * R)`.
pub fn target_count(rho: f64, r: usize) -> Result<usize, EvalError> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(EvalError::InvalidTargetRecall(rho));
    }
    // The slack absorbs representation error, e.g. 0.8 * 5 = 4.000000000000001.
    Ok(((rho * r as f64) - 1e-9).ceil().max(0.0) as usize)
}

/// Second-phase `(m_p, m_n)`: walk the unreviewed documents by descending
/// score until enough relevant ones are found to reach the target.
pub fn second_phase_counts(
    state: &ReviewState,
    scores: &HashMap<String, f64>,
    task: &TopicTask,
    rho: f64,
) -> Result<(usize, usize), EvalError> {
    let target = target_count(rho, task.r())?;
    let ranked = ranked_unreviewed(state, scores, task)?;
    let (t_p, _) = state.counts();
    Ok(walk_second_phase(
        target.saturating_sub(t_p),
        ranked.iter().map(|(d, _)| task.is_relevant(d)),
    ))
}

/// Walks `relevance` (in review order) until `needed` relevant documents
/// have been passed; returns `(needed, irrelevant passed before the last)`.
pub(crate) fn walk_second_phase(needed: usize, relevance: impl Iterator<Item = bool>) -> (usize, usize) {
    if needed == 0 {
        return (0, 0);
    }
    let mut found = 0;
    let mut irrelevant = 0;
    for rel in relevance {
        if rel {
            found += 1;
            if found == needed {
                break;
            }
        } else {
            irrelevant += 1;
        }
    }
    (found, irrelevant)
}

/// A cost structure with the name it is reported under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCost {
    pub name: String,
    #[serde(flatten)]
    pub structure: CostStructure,
}

impl NamedCost {
    pub fn uniform() -> Self {
        Self {
            name: "uniform".into(),
            structure: CostStructure::UNIFORM,
        }
    }

    pub fn expensive() -> Self {
        Self {
            name: "expensive".into(),
            structure: CostStructure::EXPENSIVE,
        }
    }
}

/// Evaluation of one iteration's state.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationEval {
    pub r_precision: f64,
    /// `(m_p, m_n)` per target recall, aligned with [`RunResult::target_recalls`].
    pub second_phase: Vec<(usize, usize)>,
}

/// Full trace of one (topic, strategy, classifier) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub topic_id: String,
    pub strategy: Strategy,
    pub classifier: String,
    pub pretrain_epochs: Option<u32>,
    pub r: usize,
    pub pool_size: usize,
    pub target_recalls: Vec<f64>,
    pub iterations: Vec<(IterationRecord, IterationEval)>,
}

impl RunResult {
    fn rho_index(&self, rho: f64) -> Result<usize, EvalError> {
        self.target_recalls
            .iter()
            .position(|r| *r == rho)
            .ok_or(EvalError::UnknownTargetRecall(rho))
    }

    /// Per-iteration cost breakdowns at target recall `rho`.
    pub fn costs(&self, cs: &CostStructure, rho: f64) -> Result<Vec<CostBreakdown>, EvalError> {
        let k = self.rho_index(rho)?;
        Ok(self
            .iterations
            .iter()
            .map(|(rec, ev)| {
                let (m_p, m_n) = ev.second_phase[k];
                review_cost(
                    PhaseCounts {
                        t_p: rec.t_p,
                        t_n: rec.t_n,
                        m_p,
                        m_n,
                    },
                    cs,
                )
            })
            .collect())
    }

    pub fn final_r_precision(&self) -> Option<f64> {
        self.iterations.last().map(|(_, ev)| ev.r_precision)
    }
}

/// Minimum total cost over the run's iterations.
pub fn min_cost(run: &RunResult, cs: &CostStructure, rho: f64) -> Result<f64, EvalError> {
    if run.iterations.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    Ok(run
        .costs(cs, rho)?
        .iter()
        .map(|c| c.total)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeCost {
    /// Mean over topics of `candidate / baseline`. The headline figure.
    pub mean_of_ratios: f64,
    /// `sum(candidate) / sum(baseline)`.
    pub ratio_of_sums: f64,
    pub n_topics: usize,
}

/// Compares per-topic minimal costs of a candidate against a baseline.
pub fn relative_cost(
    candidate: &BTreeMap<String, f64>,
    baseline: &BTreeMap<String, f64>,
) -> Result<RelativeCost, EvalError> {
    if candidate.len() != baseline.len() || candidate.keys().ne(baseline.keys()) {
        let only_c: Vec<_> = candidate.keys().filter(|k| !baseline.contains_key(*k)).collect();
        let only_b: Vec<_> = baseline.keys().filter(|k| !candidate.contains_key(*k)).collect();
        return Err(EvalError::TopicMismatch(format!(
            "candidate-only {only_c:?}, baseline-only {only_b:?}"
        )));
    }
    if candidate.is_empty() {
        return Err(EvalError::NoTopics);
    }
    let mut ratio_sum = 0.0;
    let mut c_sum = 0.0;
    let mut b_sum = 0.0;
    for (topic, &b) in baseline {
        if b.is_nan() || b <= 0.0 {
            return Err(EvalError::ZeroBaseline(topic.clone()));
        }
        let c = candidate[topic];
        ratio_sum += c / b;
        c_sum += c;
        b_sum += b;
    }
    let n = candidate.len();
    Ok(RelativeCost {
        mean_of_ratios: ratio_sum / n as f64,
        ratio_of_sums: c_sum / b_sum,
        n_topics: n,
    })
}
