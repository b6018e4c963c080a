//! Glue between the lexical side (branches, BM25, weights) and the encoder side.

use serde::{Deserialize, Serialize};

use crate::article_corpus::{ArticleCorpus, ArticleSpec};
use crate::bcl::BclHyperParams;
use crate::cases::CaseDocument;
use crate::encoder::{build_input, EncoderConfig, Vocab};
use crate::error::Result;
use crate::lexical::{similarity_profile, tokenize, Bm25Index, Bm25Params, SimilarityProfile, TokenizerConfig};
use crate::relevance::{pairwise_weights, WeightTable};
use crate::trainer::TrainConfig;

/// Every tunable of the pipeline, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub tokenizer: TokenizerConfig,
    pub bm25: Bm25Params,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

impl PipelineConfig {
    pub fn bcl(&self) -> &BclHyperParams {
        &self.train.bcl
    }

    /// Small-model settings used for synthetic-corpus runs.
    pub fn toy() -> Self {
        let mut cfg = Self::default();
        cfg.encoder.hidden = 32;
        cfg.encoder.layers = 1;
        cfg.encoder.heads = 4;
        cfg.encoder.ffn = 64;
        cfg.encoder.max_len = 64;
        cfg.train.batch_size = 6;
        cfg.train.steps = 300;
        cfg.train.bcl.lambda = 1.0;
        cfg.train.mlm_reduction = crate::encoder::Reduction::Mean;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct LexicalView {
    pub corpus: ArticleCorpus,
    pub index: Bm25Index,
    pub profiles: Vec<SimilarityProfile>,
    pub weights: WeightTable,
}

/// Expand articles, index every branch, profile every case and weight every pair.
pub fn lexical_view(
    specs: &[ArticleSpec],
    cases: &[CaseDocument],
    tok: &TokenizerConfig,
    bm25: Bm25Params,
) -> Result<LexicalView> {
    let corpus = ArticleCorpus::build(specs, tok)?;
    let index = Bm25Index::build(&corpus, bm25)?;
    let profiles = cases
        .iter()
        .map(|c| similarity_profile(c, &corpus, &index, tok))
        .collect::<Result<Vec<_>>>()?;
    let weights = pairwise_weights(cases, &profiles)?;
    Ok(LexicalView {
        corpus,
        index,
        profiles,
        weights,
    })
}

/// Vocabulary over the case texts and article phrases.
pub fn build_vocab(specs: &[ArticleSpec], cases: &[CaseDocument], tok: &TokenizerConfig) -> Vocab {
    let mut tokens = Vec::new();
    for c in cases {
        tokens.extend(tokenize(&c.facts, tok));
        tokens.extend(tokenize(&c.holding, tok));
    }
    for s in specs {
        for act in &s.acts {
            for slot in &act.0 {
                for phrase in &slot.0 {
                    tokens.extend(tokenize(phrase, tok));
                }
            }
        }
    }
    Vocab::from_tokens(tokens)
}

/// `[CLS] facts [SEP]` per case, the training input.
pub fn facts_inputs(cases: &[CaseDocument], vocab: &Vocab, tok: &TokenizerConfig) -> Vec<Vec<u32>> {
    cases.iter().map(|c| build_input(&[&c.facts], vocab, tok)).collect()
}
