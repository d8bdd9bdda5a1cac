//! Classifier contract for the review loop and the logistic-regression
//! baseline.
//!
//! The baseline minimizes
//!
//! ```text
//! J(w, b) = (1/n) * sum_i ln(1 + exp(-y_i (w.x_i + b))) + lambda * |w|^2
//! ```
//!
//! with a truncated Newton (Newton-CG) solver and Armijo backtracking, and
//! stops once the gradient's infinity norm is at most the tolerance.
//!
//! The bias is unpenalized when both classes are present. When every example
//! carries the same label (the seed-only fit that opens every run) the loss
//! can be driven to zero by the bias alone, so the bias then receives the
//! same `lambda * b^2` penalty as the weights and the fit stays finite.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SparseVector;
use crate::parallel::{self, Execution};
use crate::plugin_bridge::{PluginError, PluginSpec};

pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("cannot fit on an empty example list")]
    NoExamples,
    #[error("non-finite feature value in example {0:?}")]
    NonFinite(String),
    #[error("feature index {index} outside model dimension {dimension}")]
    DimensionMismatch { index: usize, dimension: usize },
    #[error("solver stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("invalid regularization strength {0}")]
    InvalidLambda(f64),
    #[error("score requested before any fit")]
    NotFitted,
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error(transparent)]
    Plugin(#[from] PluginError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Relevant,
    Irrelevant,
}

impl Label {
    pub fn from_relevance(relevant: bool) -> Self {
        if relevant {
            Label::Relevant
        } else {
            Label::Irrelevant
        }
    }

    /// `+1` for relevant, `-1` for irrelevant.
    pub fn sign(self) -> f64 {
        match self {
            Label::Relevant => 1.0,
            Label::Irrelevant => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        self.sign() as i8
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Relevant => Label::Irrelevant,
            Label::Irrelevant => Label::Relevant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub doc_id: String,
    pub features: SparseVector,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(doc_id: impl Into<String>, features: SparseVector, label: Label) -> Self {
        Self {
            doc_id: doc_id.into(),
            features,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: 200,
        }
    }
}

impl LrParams {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Smallest and largest probabilities a score may take, keeping scores in
/// the open interval (0, 1).
const SCORE_FLOOR: f64 = f64::MIN_POSITIVE;
const SCORE_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

impl LrModel {
    pub fn zeros(dimension: usize, lambda: f64) -> Self {
        Self {
            weights: vec![0.0; dimension],
            bias: 0.0,
            lambda,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// `sigmoid(w.x + b)` per document, in input order.
    pub fn score(&self, docs: &[SparseVector]) -> Result<Vec<f64>, ClassifierError> {
        self.score_with(Execution::default(), docs)
    }

    pub fn score_with(&self, exec: Execution, docs: &[SparseVector]) -> Result<Vec<f64>, ClassifierError> {
        for x in docs {
            self.check_dimension(x)?;
        }
        Ok(parallel::map(exec, docs, |x| {
            sigmoid(self.margin(x)).clamp(SCORE_FLOOR, SCORE_CEIL)
        }))
    }

    fn check_dimension(&self, x: &SparseVector) -> Result<(), ClassifierError> {
        if x.min_dimension() > self.dimension() {
            return Err(ClassifierError::DimensionMismatch {
                index: x.min_dimension() - 1,
                dimension: self.dimension(),
            });
        }
        Ok(())
    }
}

/// The regularized logistic loss over a fixed example set.
pub struct LrObjective<'a> {
    examples: &'a [LabeledExample],
    dimension: usize,
    lambda: f64,
    bias_lambda: f64,
}

impl<'a> LrObjective<'a> {
    pub fn new(examples: &'a [LabeledExample], dimension: usize, lambda: f64) -> Result<Self, ClassifierError> {
        if examples.is_empty() {
            return Err(ClassifierError::NoExamples);
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ClassifierError::InvalidLambda(lambda));
        }
        for ex in examples {
            if !ex.features.is_finite() {
                return Err(ClassifierError::NonFinite(ex.doc_id.clone()));
            }
            if ex.features.min_dimension() > dimension {
                return Err(ClassifierError::DimensionMismatch {
                    index: ex.features.min_dimension() - 1,
                    dimension,
                });
            }
        }
        let single_class = examples.iter().all(|e| e.label == examples[0].label);
        Ok(Self {
            examples,
            dimension,
            lambda,
            bias_lambda: if single_class { lambda } else { 0.0 },
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Penalty coefficient applied to the bias (zero unless single-class).
    pub fn bias_lambda(&self) -> f64 {
        self.bias_lambda
    }

    fn n(&self) -> f64 {
        self.examples.len() as f64
    }

    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.examples.iter().map(|e| e.features.dot(w) + b).collect()
    }

    pub fn value(&self, w: &[f64], b: f64) -> f64 {
        let loss: f64 = self
            .examples
            .iter()
            .zip(self.margins(w, b))
            .map(|(e, m)| softplus(-e.label.sign() * m))
            .sum();
        let w2: f64 = w.iter().map(|v| v * v).sum();
        loss / self.n() + self.lambda * w2 + self.bias_lambda * b * b
    }

    /// Exact gradient `(dJ/dw, dJ/db)`.
    pub fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.n();
        let mut gw: Vec<f64> = w.iter().map(|v| 2.0 * self.lambda * v).collect();
        let mut gb = 2.0 * self.bias_lambda * b;
        for (e, m) in self.examples.iter().zip(self.margins(w, b)) {
            let y = e.label.sign();
            let c = -y * sigmoid(-y * m) / n;
            for (i, v) in e.features.iter() {
                gw[i] += c * v;
            }
            gb += c;
        }
        (gw, gb)
    }

    /// Hessian-vector product at the point whose margins are given.
    fn hessian_vec(&self, curvature: &[f64], vw: &[f64], vb: f64) -> (Vec<f64>, f64) {
        let n = self.n();
        let mut hw: Vec<f64> = vw.iter().map(|v| 2.0 * self.lambda * v).collect();
        let mut hb = 2.0 * self.bias_lambda * vb;
        for (e, &d) in self.examples.iter().zip(curvature) {
            let s = d * (e.features.dot(vw) + vb) / n;
            for (i, v) in e.features.iter() {
                hw[i] += s * v;
            }
            hb += s;
        }
        (hw, hb)
    }

    /// Minimizes the objective from `w = 0, b = 0`.
    pub fn minimize(&self, params: &LrParams) -> Result<LrModel, ClassifierError> {
        let dim = self.dimension;
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut f = self.value(&w, b);
        for iter in 0..params.max_iterations {
            let (gw, gb) = self.gradient(&w, b);
            let gnorm = inf_norm(&gw, gb);
            if gnorm <= params.tolerance {
                return Ok(LrModel {
                    weights: w,
                    bias: b,
                    lambda: self.lambda,
                });
            }
            let curvature: Vec<f64> = self
                .margins(&w, b)
                .into_iter()
                .map(|m| {
                    let p = sigmoid(m);
                    p * (1.0 - p)
                })
                .collect();
            let (dw, db) = self.newton_direction(&curvature, &gw, gb);
            let slope = dot(&gw, &dw) + gb * db;
            let (dw, db, slope) = if slope < 0.0 {
                (dw, db, slope)
            } else {
                // Not a descent direction (CG breakdown); use steepest descent.
                let sw: Vec<f64> = gw.iter().map(|g| -g).collect();
                let s = -(dot(&gw, &gw) + gb * gb);
                (sw, -gb, s)
            };

            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let tw: Vec<f64> = w.iter().zip(&dw).map(|(a, d)| a + step * d).collect();
                let tb = b + step * db;
                let tf = self.value(&tw, tb);
                let armijo = tf <= f + 1e-4 * step * slope;
                // Near the optimum J changes by less than its rounding error;
                // accept a non-increasing step that shrinks the gradient.
                let flat = !armijo && tf <= f + 4.0 * f64::EPSILON * f.abs() && {
                    let (ngw, ngb) = self.gradient(&tw, tb);
                    inf_norm(&ngw, ngb) < gnorm
                };
                if armijo || flat {
                    w = tw;
                    b = tb;
                    f = tf;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(ClassifierError::NotConverged {
                    iterations: iter + 1,
                    grad_norm: gnorm,
                });
            }
        }
        let (gw, gb) = self.gradient(&w, b);
        let gnorm = inf_norm(&gw, gb);
        if gnorm <= params.tolerance {
            Ok(LrModel {
                weights: w,
                bias: b,
                lambda: self.lambda,
            })
        } else {
            Err(ClassifierError::NotConverged {
                iterations: params.max_iterations,
                grad_norm: gnorm,
            })
        }
    }

    /// Approximately solves `H d = -g` by conjugate gradients with a
    /// forcing term that tightens as the gradient shrinks.
    fn newton_direction(&self, curvature: &[f64], gw: &[f64], gb: f64) -> (Vec<f64>, f64) {
        let gnorm2 = (dot(gw, gw) + gb * gb).sqrt();
        let forcing = gnorm2.sqrt().min(0.5) * gnorm2;
        let mut xw = vec![0.0; gw.len()];
        let mut xb = 0.0;
        let mut rw: Vec<f64> = gw.iter().map(|g| -g).collect();
        let mut rb = -gb;
        let mut pw = rw.clone();
        let mut pb = rb;
        let mut rr = dot(&rw, &rw) + rb * rb;
        let max_cg = (self.dimension + 1).min(250);
        for _ in 0..max_cg {
            if rr.sqrt() <= forcing {
                break;
            }
            let (hw, hb) = self.hessian_vec(curvature, &pw, pb);
            let php = dot(&pw, &hw) + pb * hb;
            if php <= 0.0 {
                break;
            }
            let alpha = rr / php;
            for (x, p) in xw.iter_mut().zip(&pw) {
                *x += alpha * p;
            }
            xb += alpha * pb;
            for (r, h) in rw.iter_mut().zip(&hw) {
                *r -= alpha * h;
            }
            rb -= alpha * hb;
            let rr_new = dot(&rw, &rw) + rb * rb;
            let beta = rr_new / rr;
            for (p, r) in pw.iter_mut().zip(&rw) {
                *p = r + beta * *p;
            }
            pb = rb + beta * pb;
            rr = rr_new;
        }
        if xw.iter().all(|v| *v == 0.0) && xb == 0.0 {
            return (rw, rb);
        }
        (xw, xb)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(gw: &[f64], gb: f64) -> f64 {
    gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()))
}

/// Fits the baseline on `examples` in a feature space of `dimension`.
pub fn fit_lr(examples: &[LabeledExample], dimension: usize, params: &LrParams) -> Result<LrModel, ClassifierError> {
    LrObjective::new(examples, dimension, params.lambda)?.minimize(params)
}

/// Selects which classifier implementation a run uses.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierHandle {
    BuiltinLr { name: String, params: LrParams },
    Plugin { name: String, spec: PluginSpec },
}

impl ClassifierHandle {
    pub fn name(&self) -> &str {
        match self {
            ClassifierHandle::BuiltinLr { name, .. } | ClassifierHandle::Plugin { name, .. } => name,
        }
    }

    pub fn pretrain_epochs(&self) -> Option<u32> {
        match self {
            ClassifierHandle::BuiltinLr { .. } => None,
            ClassifierHandle::Plugin { spec, .. } => Some(spec.pretrain_epochs),
        }
    }
}

/// What the review loop needs from a classifier. Documents are addressed
/// by their position in the task pool.
pub trait TaskClassifier: Send {
    /// Trains on the full reviewed set (cumulative, not the latest batch).
    fn fit(&mut self, examples: &[(usize, Label)]) -> Result<(), ClassifierError>;

    /// Probabilities of relevance, aligned with `docs`.
    fn score(&mut self, docs: &[usize]) -> Result<Vec<f64>, ClassifierError>;

    /// Releases external resources. Called once after the last iteration.
    fn close(&mut self) -> Result<(), ClassifierError> {
        Ok(())
    }
}

/// The baseline over a pre-vectorized pool, refit from scratch on every call.
pub struct PoolLr {
    doc_ids: Vec<String>,
    vectors: Vec<SparseVector>,
    dimension: usize,
    params: LrParams,
    exec: Execution,
    model: Option<LrModel>,
}

impl PoolLr {
    pub fn new(doc_ids: Vec<String>, vectors: Vec<SparseVector>, dimension: usize, params: LrParams) -> Self {
        assert_eq!(doc_ids.len(), vectors.len());
        Self {
            doc_ids,
            vectors,
            dimension,
            params,
            exec: Execution::default(),
            model: None,
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn model(&self) -> Option<&LrModel> {
        self.model.as_ref()
    }
}

impl TaskClassifier for PoolLr {
    fn fit(&mut self, examples: &[(usize, Label)]) -> Result<(), ClassifierError> {
        let labeled: Vec<LabeledExample> = examples
            .iter()
            .map(|&(i, label)| LabeledExample::new(self.doc_ids[i].clone(), self.vectors[i].clone(), label))
            .collect();
        self.model = Some(fit_lr(&labeled, self.dimension, &self.params)?);
        Ok(())
    }

    fn score(&mut self, docs: &[usize]) -> Result<Vec<f64>, ClassifierError> {
        let model = self.model.as_ref().ok_or(ClassifierError::NotFitted)?;
        let vectors = &self.vectors;
        Ok(parallel::map(self.exec, docs, |&i| {
            sigmoid(model.margin(&vectors[i])).clamp(SCORE_FLOOR, SCORE_CEIL)
        }))
    }
}

/// Serves a fixed score per document regardless of training data. Used as
/// the oracle scorer in tests and as the in-process twin of a fixed-score
/// plugin.
pub struct ScoreTable {
    scores: Vec<f64>,
}

impl ScoreTable {
    /// `table` must cover every pool document.
    pub fn new(doc_ids: &[String], table: &HashMap<String, f64>) -> Result<Self, ClassifierError> {
        let scores = doc_ids
            .iter()
            .map(|d| {
                table
                    .get(d)
                    .copied()
                    .ok_or_else(|| ClassifierError::UnknownDocument(d.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { scores })
    }

    pub fn from_scores(scores: Vec<f64>) -> Self {
        Self { scores }
    }
}

impl TaskClassifier for ScoreTable {
    fn fit(&mut self, examples: &[(usize, Label)]) -> Result<(), ClassifierError> {
        if examples.is_empty() {
            return Err(ClassifierError::NoExamples);
        }
        Ok(())
    }

    fn score(&mut self, docs: &[usize]) -> Result<Vec<f64>, ClassifierError> {
        Ok(docs.iter().map(|&i| self.scores[i]).collect())
    }
}
