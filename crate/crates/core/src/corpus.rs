//! Document collections, relevance judgments and per-topic review tasks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate doc_id {doc_id:?} (line {line})")]
    DuplicateDocId { doc_id: String, line: usize },
    #[error("empty doc_id (line {line})")]
    EmptyDocId { line: usize },
    #[error("downsample rate {0} outside (0, 1]")]
    InvalidRate(f64),
    #[error("topic {topic:?} has no relevant documents in the pool (R = 0)")]
    NoRelevant { topic: String },
    #[error("topic {topic:?} has no judgments")]
    UnknownTopic { topic: String },
    #[error("judgments for topic {topic:?} reference unknown doc_ids: {doc_ids:?}")]
    UnknownDocIds { topic: String, doc_ids: Vec<String> },
}

/// 128-bit MD5 digest of a document's raw UTF-8 bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 16]);

impl ContentHash {
    pub fn of(text: &str) -> Self {
        Self(Md5::digest(text.as_bytes()).into())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub content_hash: ContentHash,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let content_hash = ContentHash::of(&text);
        Self {
            doc_id: doc_id.into(),
            text,
            content_hash,
        }
    }
}

/// On-disk record: exactly `doc_id` and `text`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord<'a> {
    #[serde(borrow)]
    doc_id: std::borrow::Cow<'a, str>,
    #[serde(borrow)]
    text: std::borrow::Cow<'a, str>,
}

/// An ordered, immutable document pool with a doc_id index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting empty or duplicate doc_ids. Line numbers in
    /// errors are 1-based positions in `documents`.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(documents.len());
        for (pos, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(CorpusError::EmptyDocId { line: pos + 1 });
            }
            if index.insert(doc.doc_id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateDocId {
                    doc_id: doc.doc_id.clone(),
                    line: pos + 1,
                });
            }
        }
        Ok(Self { documents, index })
    }

    /// Reads the JSONL corpus format. Blank lines are skipped; line numbers
    /// in errors refer to physical lines of the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut documents = Vec::new();
        let mut index = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
            if rec.doc_id.is_empty() {
                return Err(CorpusError::EmptyDocId { line: line_no });
            }
            if index.contains_key(rec.doc_id.as_ref()) {
                return Err(CorpusError::DuplicateDocId {
                    doc_id: rec.doc_id.into_owned(),
                    line: line_no,
                });
            }
            index.insert(rec.doc_id.to_string(), documents.len());
            documents.push(Document::new(rec.doc_id.into_owned(), rec.text.into_owned()));
        }
        Ok(Self { documents, index })
    }

    /// Writes the corpus in the JSONL format accepted by [`Corpus::load`].
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        write_jsonl(path.as_ref(), self.documents.iter())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.position(doc_id).map(|p| &self.documents[p])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.index.contains_key(doc_id)
    }

    /// Keeps the first document of every group sharing a content hash.
    pub fn dedup(&self) -> Corpus {
        let mut seen = HashSet::with_capacity(self.documents.len());
        self.filtered(|d| seen.insert(d.content_hash))
    }

    /// Uniform sample without replacement of `round(rate * N)` documents,
    /// returned in original order.
    pub fn downsample(&self, rate: f64, rng_seed: u64) -> Result<Corpus, CorpusError> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(CorpusError::InvalidRate(rate));
        }
        let n = self.documents.len();
        let keep = ((rate * n as f64).round() as usize).min(n);
        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(rng_seed).shuffle(&mut order);
        let mut survivors = vec![false; n];
        for &i in &order[..keep] {
            survivors[i] = true;
        }
        let mut pos = 0;
        Ok(self.filtered(|_| {
            pos += 1;
            survivors[pos - 1]
        }))
    }

    fn filtered(&self, mut keep: impl FnMut(&Document) -> bool) -> Corpus {
        let documents: Vec<Document> = self.documents.iter().filter(|d| keep(d)).cloned().collect();
        let index = documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        Corpus { documents, index }
    }
}

pub(crate) fn write_jsonl<'a>(path: &Path, docs: impl Iterator<Item = &'a Document>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        let rec = CorpusRecord {
            doc_id: d.doc_id.as_str().into(),
            text: d.text.as_str().into(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Binary relevance judgments, grouped by topic in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    topics: BTreeMap<String, Vec<(String, bool)>>,
}

impl Qrels {
    /// Parses TREC qrels lines `topic_id 0 doc_id label` with label in {0, 1}.
    /// Lines starting with `#` and blank lines are ignored. Repeated
    /// judgments must agree.
    pub fn parse(input: &str) -> Result<Self, CorpusError> {
        Self::parse_named(input, Path::new("<qrels>"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_named(&text, path)
    }

    fn parse_named(input: &str, path: &Path) -> Result<Self, CorpusError> {
        let malformed = |line: usize, message: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut topics: BTreeMap<String, Vec<(String, bool)>> = BTreeMap::new();
        let mut seen: HashMap<(String, String), bool> = HashMap::new();
        for (n, line) in input.lines().enumerate() {
            let line_no = n + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let [topic, _iteration, doc_id, label] = fields[..] else {
                return Err(malformed(line_no, format!("expected 4 fields, found {}", fields.len())));
            };
            let relevant = match label {
                "0" => false,
                "1" => true,
                other => return Err(malformed(line_no, format!("label {other:?} is not 0 or 1"))),
            };
            match seen.insert((topic.to_string(), doc_id.to_string()), relevant) {
                Some(prev) if prev != relevant => {
                    return Err(malformed(line_no, format!("conflicting judgment for {topic}/{doc_id}")))
                }
                Some(_) => continue,
                None => {}
            }
            topics
                .entry(topic.to_string())
                .or_default()
                .push((doc_id.to_string(), relevant));
        }
        Ok(Self { topics })
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    pub fn judgments(&self, topic_id: &str) -> Option<&[(String, bool)]> {
        self.topics.get(topic_id).map(Vec::as_slice)
    }

    /// Drops judgments whose doc_id is not in `corpus` (e.g. after dedup or
    /// downsampling). Topics left without judgments are removed.
    pub fn restrict_to(&self, corpus: &Corpus) -> Qrels {
        let topics = self
            .topics
            .iter()
            .filter_map(|(t, js)| {
                let kept: Vec<_> = js.iter().filter(|(d, _)| corpus.contains(d)).cloned().collect();
                (!kept.is_empty()).then(|| (t.clone(), kept))
            })
            .collect();
        Qrels { topics }
    }

    /// Writes the qrels back in TREC format, topics sorted, judgments in
    /// original order.
    pub fn to_trec_string(&self) -> String {
        let mut out = String::new();
        for (t, js) in &self.topics {
            for (d, rel) in js {
                out.push_str(&format!("{t} 0 {d} {}\n", u8::from(*rel)));
            }
        }
        out
    }
}

/// Which documents make up a topic's review pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    /// Every corpus document is in every topic's pool (RCV1-v2 / Jeb Bush).
    #[default]
    WholeCorpus,
    /// Each topic's pool is its own judged documents (CLEF TAR).
    PerTopic,
}

/// How the single relevant document that starts the loop is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// Lexicographically smallest relevant doc_id.
    #[default]
    Smallest,
    /// Uniform choice among relevant docs, seeded per topic.
    Random(u64),
}

/// One topic's classification task over a fixed pool.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicTask {
    pub topic_id: String,
    /// Pool in corpus order.
    pub doc_ids: Vec<String>,
    pub relevant: BTreeSet<String>,
    pub seed_doc: String,
}

impl TopicTask {
    pub fn new(
        corpus: &Corpus,
        topic_id: &str,
        qrels: &Qrels,
        pool: PoolMode,
        seed_policy: SeedPolicy,
    ) -> Result<Self, CorpusError> {
        let judgments = qrels.judgments(topic_id).ok_or_else(|| CorpusError::UnknownTopic {
            topic: topic_id.to_string(),
        })?;
        let unknown: Vec<String> = judgments
            .iter()
            .filter(|(d, _)| !corpus.contains(d))
            .map(|(d, _)| d.clone())
            .collect();
        if !unknown.is_empty() {
            return Err(CorpusError::UnknownDocIds {
                topic: topic_id.to_string(),
                doc_ids: unknown,
            });
        }
        let relevant: BTreeSet<String> = judgments
            .iter()
            .filter(|(_, rel)| *rel)
            .map(|(d, _)| d.clone())
            .collect();
        if relevant.is_empty() {
            return Err(CorpusError::NoRelevant {
                topic: topic_id.to_string(),
            });
        }
        let doc_ids: Vec<String> = match pool {
            PoolMode::WholeCorpus => corpus.documents.iter().map(|d| d.doc_id.clone()).collect(),
            PoolMode::PerTopic => {
                let judged: HashSet<&str> = judgments.iter().map(|(d, _)| d.as_str()).collect();
                corpus
                    .documents
                    .iter()
                    .filter(|d| judged.contains(d.doc_id.as_str()))
                    .map(|d| d.doc_id.clone())
                    .collect()
            }
        };
        let seed_doc = match seed_policy {
            SeedPolicy::Smallest => relevant.first().cloned(),
            SeedPolicy::Random(seed) => {
                let mut rng = SplitMix64::new(derive_seed(seed, topic_id));
                let k = rng.below(relevant.len() as u64) as usize;
                relevant.iter().nth(k).cloned()
            }
        }
        .expect("relevant set is nonempty");
        Ok(Self {
            topic_id: topic_id.to_string(),
            doc_ids,
            relevant,
            seed_doc,
        })
    }

    /// Total number of relevant documents in the pool.
    pub fn r(&self) -> usize {
        self.relevant.len()
    }

    pub fn pool_size(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_relevant(&self, doc_id: &str) -> bool {
        self.relevant.contains(doc_id)
    }
}
