//! TF-IDF featurization for the built-in classifier.
//!
//! Weights are `tf * (ln((1 + N) / (1 + df)) + 1)` with raw term counts,
//! and every vector is L2-normalized.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a feature space on zero documents")]
    NoDocuments,
}

/// Lowercases, splits on runs of non-alphanumeric characters and drops terms
/// shorter than two characters. Non-ASCII letters count as alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds from unordered `(index, value)` pairs; duplicates are summed
    /// and zeros dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().filter(|&(_, v)| v != 0.0).unzip();
        Self { indices, values }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    /// Largest stored index plus one, or zero for the empty vector.
    pub fn min_dimension(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Dot product with a dense vector. Indices past the end contribute zero.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense.get(i).map_or(0.0, |w| w * v)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
        self
    }
}

/// Vocabulary and document frequencies for one document pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    vocab: HashMap<String, u32>,
    df: Vec<u32>,
    n_docs: usize,
}

impl FeatureSpace {
    /// Fits over the given texts. Terms are indexed in lexicographic order so
    /// the mapping does not depend on document order.
    pub fn fit<'a, I>(texts: I) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut n_docs = 0;
        for text in texts {
            n_docs += 1;
            let mut terms = tokenize(text);
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        if n_docs == 0 {
            return Err(FeatureError::NoDocuments);
        }
        let mut vocab = HashMap::with_capacity(df.len());
        let mut counts = Vec::with_capacity(df.len());
        for (i, (term, count)) in df.into_iter().enumerate() {
            vocab.insert(term, i as u32);
            counts.push(count);
        }
        Ok(Self {
            vocab,
            df: counts,
            n_docs,
        })
    }

    pub fn dimension(&self) -> usize {
        self.df.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.vocab.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.index_of(term).map(|i| self.df[i as usize])
    }

    pub fn idf_at(&self, index: u32) -> f64 {
        let n = self.n_docs as f64;
        ((1.0 + n) / (1.0 + f64::from(self.df[index as usize]))).ln() + 1.0
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf_at(i))
    }

    /// L2-normalized TF-IDF vector; out-of-vocabulary terms are ignored.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut tf: HashMap<u32, u32> = HashMap::new();
        for term in tokenize(text) {
            if let Some(i) = self.index_of(&term) {
                *tf.entry(i).or_insert(0) += 1;
            }
        }
        SparseVector::from_pairs(tf.into_iter().map(|(i, count)| (i, f64::from(count) * self.idf_at(i)))).normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("The cat, the CAT!"), ["the", "cat", "the", "cat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("X-ray 2023 α"), ["ray", "2023"]);
        assert_eq!(tokenize("Ωmega_βeta"), ["ωmega", "βeta"]);
    }

    #[test]
    fn document_frequency_counts_presence() {
        let fs = FeatureSpace::fit(["aa bb", "aa aa"]).unwrap();
        assert_eq!(fs.dimension(), 2);
        assert_eq!(fs.df("aa"), Some(2));
        assert_eq!(fs.df("bb"), Some(1));
        assert_eq!(fs.n_docs(), 2);
        assert_eq!(fs.index_of("aa"), Some(0));
    }

    #[test]
    fn empty_inputs() {
        let fs = FeatureSpace::fit([""]).unwrap();
        assert_eq!(fs.dimension(), 0);
        assert_eq!(fs.n_docs(), 1);
        assert_eq!(
            FeatureSpace::fit(std::iter::empty::<&str>()),
            Err(FeatureError::NoDocuments)
        );
    }

    #[test]
    fn vectorize_worked_example() {
        let fs = FeatureSpace::fit(["aa bb", "aa"]).unwrap();
        assert_eq!(fs.idf("aa"), Some(1.0));
        // Oracle: raw weights (2 * 1, 1 * (ln(3/2) + 1)), then divide by their norm.
        let raw_bb = 1.5f64.ln() + 1.0;
        let norm = (4.0 + raw_bb * raw_bb).sqrt();
        let v = fs.vectorize("aa aa bb");
        assert_eq!(v.indices(), [0, 1]);
        assert_abs_diff_eq!(v.values()[0], 2.0 / norm, epsilon = 1e-15);
        assert_abs_diff_eq!(v.values()[1], raw_bb / norm, epsilon = 1e-15);
        assert_abs_diff_eq!(v.values()[0], 0.818180, epsilon = 1e-6);
        assert_abs_diff_eq!(v.values()[1], 0.574962, epsilon = 1e-6);
    }

    #[test]
    fn out_of_vocabulary_is_zero_vector() {
        let fs = FeatureSpace::fit(["aa bb"]).unwrap();
        let v = fs.vectorize("zz yy");
        assert!(v.is_zero());
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn sparse_vector_construction() {
        let v = SparseVector::from_pairs([(5, 1.0), (2, 0.5), (5, 1.0), (3, 0.0)]);
        assert_eq!(v.indices(), [2, 5]);
        assert_eq!(v.values(), [0.5, 2.0]);
        assert_eq!(v.dot(&[0.0, 0.0, 2.0]), 1.0);
        assert_eq!(v.min_dimension(), 6);
    }
}
