//! Okapi BM25 over branch keyword sequences.
//!
//! score(d, q) = Σ_{t ∈ q} idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//!
//! Query tokens are summed with multiplicity, the way gensim's BM25 scores a
//! bag of query words.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::article_corpus::{ArticleCorpus, UnambiguousArticle};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdfVariant {
    /// ln((N − df + 0.5)/(df + 0.5) + 1); always positive.
    #[default]
    PlusOne,
    /// max(0, ln((N − df + 0.5)/(df + 0.5))); zero for tokens in half the corpus or more.
    FloorZero,
}

impl IdfVariant {
    pub fn idf(self, n_docs: usize, df: usize) -> f64 {
        let n = n_docs as f64;
        let df = df as f64;
        let ratio = (n - df + 0.5) / (df + 0.5);
        match self {
            IdfVariant::PlusOne => (ratio + 1.0).ln(),
            IdfVariant::FloorZero => ratio.ln().max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub idf: IdfVariant,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.5,
            b: 0.75,
            idf: IdfVariant::PlusOne,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("bm25 k1 must be positive, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("bm25 b must lie in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_freq: HashMap<String, usize>,
    term_counts: Vec<HashMap<String, usize>>,
    doc_len: Vec<usize>,
    avg_doc_len: f64,
    /// (article_id, branch_index) → document position, when built from a corpus.
    doc_keys: HashMap<(String, usize), usize>,
}

impl Bm25Index {
    /// Index raw token documents.
    pub fn from_documents(docs: &[Vec<String>], params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut term_counts = Vec::with_capacity(docs.len());
        let mut doc_len = Vec::with_capacity(docs.len());
        for doc in docs {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for tok in doc {
                *counts.entry(tok.clone()).or_default() += 1;
            }
            for tok in counts.keys() {
                *doc_freq.entry(tok.clone()).or_default() += 1;
            }
            term_counts.push(counts);
            doc_len.push(doc.len());
        }
        let total: usize = doc_len.iter().sum();
        let avg_doc_len = total as f64 / docs.len() as f64;
        if avg_doc_len <= 0.0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self {
            params,
            doc_freq,
            term_counts,
            doc_len,
            avg_doc_len,
            doc_keys: HashMap::new(),
        })
    }

    /// Index every branch of the corpus in global branch order.
    pub fn build(corpus: &ArticleCorpus, params: Bm25Params) -> Result<Self> {
        let docs: Vec<Vec<String>> = corpus
            .branches()
            .map(|b| b.keyword_sequence.clone())
            .collect();
        let mut index = Self::from_documents(&docs, params)?;
        index.doc_keys = corpus
            .branches()
            .enumerate()
            .map(|(i, b)| ((b.article_id.clone(), b.branch_index), i))
            .collect();
        Ok(index)
    }

    pub fn params(&self) -> &Bm25Params {
        &self.params
    }

    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.doc_len[doc]
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    pub fn term_freq(&self, doc: usize, token: &str) -> usize {
        self.term_counts[doc].get(token).copied().unwrap_or(0)
    }

    pub fn idf(&self, token: &str) -> f64 {
        self.params.idf.idf(self.num_docs(), self.doc_freq(token))
    }

    /// Score document `doc` against `query`.
    pub fn score_doc(&self, doc: usize, query: &[String]) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        let counts = &self.term_counts[doc];
        let norm = k1 * (1.0 - b + b * self.doc_len[doc] as f64 / self.avg_doc_len);
        query
            .iter()
            .filter_map(|tok| counts.get(tok).map(|&tf| (tok, tf as f64)))
            .map(|(tok, tf)| self.idf(tok) * tf * (k1 + 1.0) / (tf + norm))
            .sum()
    }

    /// BM25 of a branch's keyword sequence against query tokens.
    pub fn score(&self, seq: &UnambiguousArticle, query: &[String]) -> Result<f64> {
        let doc = self
            .doc_keys
            .get(&(seq.article_id.clone(), seq.branch_index))
            .copied()
            .ok_or_else(|| {
                Error::UnknownDocument(format!("{}#{}", seq.article_id, seq.branch_index))
            })?;
        Ok(self.score_doc(doc, query))
    }
}
