//! Rayon paths against the sequential fallback on the same inputs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tar_bench::classifier::{Label, LrParams, PoolLr, TaskClassifier};
use tar_bench::corpus::{Corpus, Qrels};
use tar_bench::experiment::{execute, expand_matrix, load_config, prepare, PoolFeatures};
use tar_bench::parallel::Execution;
use tar_bench::synthetic::{two_cluster, write_dataset, TwoClusterParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn corpus(n_docs: usize) -> (Corpus, Qrels) {
    two_cluster(&TwoClusterParams {
        n_docs,
        n_relevant: n_docs / 20,
        ..TwoClusterParams::default()
    })
}

fn features(c: &mut Criterion) {
    let (corpus, _) = corpus(20_000);
    let texts: Vec<&str> = corpus.documents().iter().map(|d| d.text.as_str()).collect();
    let mut group = c.benchmark_group("tfidf_fit");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| PoolFeatures::fit(black_box(&texts), exec).unwrap()));
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let (corpus, qrels) = corpus(20_000);
    let texts: Vec<&str> = corpus.documents().iter().map(|d| d.text.as_str()).collect();
    let f = PoolFeatures::fit(&texts, Execution::Parallel).unwrap();
    let ids: Vec<String> = corpus.documents().iter().map(|d| d.doc_id.clone()).collect();
    let judged: std::collections::HashMap<&str, bool> = qrels
        .judgments("synthetic")
        .unwrap()
        .iter()
        .map(|(d, r)| (d.as_str(), *r))
        .collect();
    let train: Vec<(usize, Label)> = ids
        .iter()
        .enumerate()
        .take(500)
        .map(|(i, d)| {
            (
                i,
                Label::from_relevance(judged.get(d.as_str()).copied().unwrap_or(false)),
            )
        })
        .collect();
    let all: Vec<usize> = (0..ids.len()).collect();

    let mut group = c.benchmark_group("lr_fit_and_score");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut lr = PoolLr::new(ids.clone(), f.vectors.clone(), f.dimension, LrParams::default()).with_execution(exec);
        group.bench_function(name, |b| {
            b.iter(|| {
                lr.fit(&train).unwrap();
                black_box(lr.score(&all).unwrap())
            })
        });
    }
    group.finish();
}

fn matrix(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, qrels) = corpus(3000);
    write_dataset(dir.path(), &corpus, &qrels).unwrap();
    let config = r#"
strategies = ["relevance", "uncertainty"]
batch_size = 50
iterations = 5

[dataset]
corpus = "corpus.jsonl"
qrels = "qrels.txt"

[[classifiers]]
kind = "builtin-lr"

[[classifiers]]
kind = "builtin-lr"
name = "lr-strong"
lambda = 1.0
"#;
    std::fs::write(dir.path().join("bench.toml"), config).unwrap();
    let mut cfg = load_config(dir.path().join("bench.toml")).unwrap();
    let prepared = prepare(&cfg, None).unwrap();
    let runs = expand_matrix(&cfg, &prepared.topics()).unwrap();

    let mut group = c.benchmark_group("matrix_execution");
    group.sample_size(10);
    for workers in [1, 4] {
        cfg.output_dir = dir.path().join(format!("out{workers}"));
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| execute(&cfg, &prepared, &runs, w).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, features, scoring, matrix);
criterion_main!(benches);
