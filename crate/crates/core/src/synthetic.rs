//! Generated two-cluster corpora for end-to-end checks.
//!
//! Relevant and irrelevant documents draw words from disjoint vocabularies;
//! each token comes from the other cluster's vocabulary with probability
//! `noise`.

use std::path::Path;

use crate::corpus::{Corpus, Document, Qrels};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoClusterParams {
    pub n_docs: usize,
    pub n_relevant: usize,
    pub vocab_per_cluster: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub noise: f64,
    pub seed: u64,
    pub topic_id: String,
}

impl Default for TwoClusterParams {
    fn default() -> Self {
        Self {
            n_docs: 2000,
            n_relevant: 100,
            vocab_per_cluster: 300,
            min_length: 20,
            max_length: 60,
            noise: 0.1,
            seed: 7,
            topic_id: "synthetic".into(),
        }
    }
}

fn word(cluster: char, index: usize) -> String {
    format!("{cluster}w{index:04}")
}

/// Builds the corpus and a qrels set judging every document for
/// `params.topic_id`.
pub fn two_cluster(params: &TwoClusterParams) -> (Corpus, Qrels) {
    assert!(params.n_relevant <= params.n_docs);
    assert!(params.min_length <= params.max_length);
    let mut rng = SplitMix64::new(params.seed);

    let mut order: Vec<usize> = (0..params.n_docs).collect();
    rng.shuffle(&mut order);
    let mut relevant = vec![false; params.n_docs];
    for &i in &order[..params.n_relevant] {
        relevant[i] = true;
    }

    let width = params.n_docs.to_string().len();
    let span = (params.max_length - params.min_length + 1) as u64;
    let mut documents = Vec::with_capacity(params.n_docs);
    let mut qrels = String::new();
    for (i, &rel) in relevant.iter().enumerate() {
        let len = params.min_length + rng.below(span) as usize;
        let (own, other) = if rel { ('r', 'n') } else { ('n', 'r') };
        let words: Vec<String> = (0..len)
            .map(|_| {
                let cluster = if rng.next_f64() < params.noise { other } else { own };
                word(cluster, rng.below(params.vocab_per_cluster as u64) as usize)
            })
            .collect();
        let doc_id = format!("doc{i:0width$}");
        qrels.push_str(&format!("{} 0 {doc_id} {}\n", params.topic_id, u8::from(rel)));
        documents.push(Document::new(doc_id, words.join(" ")));
    }
    let corpus = Corpus::from_documents(documents).expect("generated ids are unique");
    let qrels = Qrels::parse(&qrels).expect("generated qrels are well formed");
    (corpus, qrels)
}

/// Writes `corpus.jsonl` and `qrels.txt` into `dir`.
pub fn write_dataset(dir: &Path, corpus: &Corpus, qrels: &Qrels) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    corpus.save(dir.join("corpus.jsonl"))?;
    std::fs::write(dir.join("qrels.txt"), qrels.to_trec_string())
}
