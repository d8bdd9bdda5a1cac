//! Brute-force oracles and fixtures shared by the integration tests.
//!
//! The oracles deliberately avoid the library's own helpers: rankings are
//! built by sorting composite keys, targets use integer arithmetic.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use tar_bench::active_learning::Strategy;
use tar_bench::classifier::{Label, LabeledExample};
use tar_bench::corpus::{Corpus, Document, TopicTask};
use tar_bench::evaluation::ReviewState;
use tar_bench::features::SparseVector;
use tar_bench::stats::ln_gamma;

pub fn stub_plugin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_tar-stub-plugin"))
}

pub fn cli() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_tar-bench"))
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// A task over `d000..d{n-1}` with the given relevant indices.
pub fn task(n: usize, relevant: &[usize]) -> TopicTask {
    let doc_ids: Vec<String> = (0..n).map(|i| format!("d{i:03}")).collect();
    let relevant: BTreeSet<String> = relevant.iter().map(|i| format!("d{i:03}")).collect();
    TopicTask {
        topic_id: "t".into(),
        seed_doc: relevant.first().expect("at least one relevant").clone(),
        doc_ids,
        relevant,
    }
}

/// Two topics over 240 documents. Topic `a` favours words `alpha*`, topic
/// `b` favours `beta*`; every document is judged for both.
pub fn write_dataset(dir: &Path) {
    let mut docs = Vec::new();
    let mut qrels = String::new();
    for i in 0..240usize {
        let a = i % 8 == 3;
        let b = i % 12 == 5;
        let mut words = vec![format!("w{}", i % 17), format!("w{}", i % 23), format!("x{}", i % 5)];
        if a {
            words.extend([format!("alpha{}", i % 3), "alpha".into()]);
        }
        if b {
            words.extend([format!("beta{}", i % 4), "beta".into()]);
        }
        let id = format!("doc{i:03}");
        qrels.push_str(&format!("a 0 {id} {}\n", u8::from(a)));
        qrels.push_str(&format!("b 0 {id} {}\n", u8::from(b)));
        docs.push(Document::new(id, words.join(" ")));
    }
    Corpus::from_documents(docs)
        .unwrap()
        .save(dir.join("corpus.jsonl"))
        .unwrap();
    std::fs::write(dir.join("qrels.txt"), qrels).unwrap();
}

pub fn review_state(task: &TopicTask, reviewed: &[String]) -> ReviewState {
    let mut s = ReviewState::default();
    for d in reviewed {
        s.reviewed.insert(d.clone(), Label::from_relevance(task.is_relevant(d)));
    }
    s
}

/// Descending score, ascending doc_id.
fn by_score(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0))
}

/// Recorded R-Precision by sorting every pool document on
/// `(group, -score, doc_id)`: reviewed relevant, unreviewed, reviewed irrelevant.
pub fn oracle_r_precision(task: &TopicTask, reviewed: &HashSet<String>, scores: &HashMap<String, f64>) -> f64 {
    let mut keyed: Vec<(u8, f64, &str)> = task
        .doc_ids
        .iter()
        .map(|d| {
            if reviewed.contains(d) {
                (if task.relevant.contains(d) { 0 } else { 2 }, 0.0, d.as_str())
            } else {
                (1, -scores[d], d.as_str())
            }
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(b.2)));
    let r = task.relevant.len();
    let hits = keyed[..r].iter().filter(|k| task.relevant.contains(k.2)).count();
    hits as f64 / r as f64
}

/// `ceil(num * r / den)` in integers.
pub fn oracle_target(num: usize, den: usize, r: usize) -> usize {
    (num * r).div_ceil(den)
}

/// Second-phase counts by scanning the sorted unreviewed list.
pub fn oracle_second_phase(
    task: &TopicTask,
    reviewed: &HashSet<String>,
    scores: &HashMap<String, f64>,
    target: usize,
) -> (usize, usize) {
    let t_p = reviewed.iter().filter(|d| task.relevant.contains(*d)).count();
    let needed = target.saturating_sub(t_p);
    let mut unreviewed: Vec<(String, f64)> = task
        .doc_ids
        .iter()
        .filter(|d| !reviewed.contains(*d))
        .map(|d| (d.clone(), scores[d]))
        .collect();
    unreviewed.sort_by(by_score);
    let mut m_p = 0;
    let mut m_n = 0;
    for (d, _) in &unreviewed {
        if m_p == needed {
            break;
        }
        if task.relevant.contains(d) {
            m_p += 1;
        } else {
            m_n += 1;
        }
    }
    (m_p, m_n)
}

/// One iteration of the reference loop: `(n_reviewed, t_p, t_n, selected)`.
pub type OracleRow = (usize, usize, usize, Vec<String>);

/// Reference review loop with fixed scores per document.
pub fn oracle_loop(
    task: &TopicTask,
    scores: &HashMap<String, f64>,
    strategy: Strategy,
    batch: usize,
    iterations: usize,
) -> Vec<OracleRow> {
    let mut reviewed: Vec<String> = vec![task.seed_doc.clone()];
    let mut rows = Vec::new();
    for _ in 0..iterations {
        let t_p = reviewed.iter().filter(|d| task.relevant.contains(*d)).count();
        let t_n = reviewed.len() - t_p;
        let mut cands: Vec<(String, f64)> = task
            .doc_ids
            .iter()
            .filter(|d| !reviewed.contains(d))
            .map(|d| {
                let s = scores[d];
                let key = match strategy {
                    Strategy::RelevanceFeedback => s,
                    Strategy::UncertaintySampling => -(s - 0.5).abs(),
                };
                (d.clone(), key)
            })
            .collect();
        cands.sort_by(by_score);
        let selected: Vec<String> = cands.into_iter().take(batch).map(|(d, _)| d).collect();
        rows.push((reviewed.len(), t_p, t_n, selected.clone()));
        reviewed.extend(selected);
    }
    rows
}

/// Minimizes a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The regularized loss written out directly. `bias_lambda` is the bias
/// penalty in effect.
pub fn oracle_objective(examples: &[LabeledExample], lambda: f64, bias_lambda: f64, w: &[f64], b: f64) -> f64 {
    let n = examples.len() as f64;
    let loss: f64 = examples
        .iter()
        .map(|e| {
            let m: f64 = e.features.iter().map(|(i, v)| v * w[i]).sum::<f64>() + b;
            softplus(-e.label.sign() * m)
        })
        .sum::<f64>()
        / n;
    loss + lambda * w.iter().map(|x| x * x).sum::<f64>() + bias_lambda * b * b
}

pub fn example(id: usize, pairs: &[(u32, f64)], label: Label) -> LabeledExample {
    LabeledExample::new(format!("e{id}"), SparseVector::from_pairs(pairs.iter().copied()), label)
}

/// Two-sided Student-t tail by composite Simpson integration of the density
/// over `[0, |t|]`.
pub fn simpson_two_sided(t: f64, df: f64) -> f64 {
    let norm = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let density = |x: f64| norm * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut sum = density(0.0) + density(t.abs());
    for i in 1..n {
        sum += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * sum * h / 3.0
}
