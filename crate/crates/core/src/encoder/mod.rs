//! Small transformer encoder with analytic gradients.
//!
//! Architecture: token + learned position embeddings, pre-norm blocks
//! (`x + MHA(LN(x))`, `x + FFN(LN(x))` with tanh-GELU), a final layer norm,
//! and an untied linear MLM head. The case embedding is the final state at
//! position 0 (`[CLS]`). `[PAD]` keys are excluded from attention.

mod checkpoint;
mod config;
mod layout;
mod mlm;
mod model;
mod ops;
pub mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointKind};
pub use config::EncoderConfig;
pub use mlm::{mlm_loss, mlm_loss_and_grad, mlm_mask, MaskingConfig, MlmInstance, Reduction};
pub use model::{Encoder, ForwardCache};
pub use vocab::Vocab;

use crate::error::{Error, Result};
use crate::lexical::{tokenize, TokenizerConfig};

/// Case embeddings, one row per input.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub ids: Vec<String>,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if ids.len() != rows.len() || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged embedding rows".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embeddings".into()));
        }
        Ok(Self { ids, dim, data })
    }
}

/// `[CLS] segment₁ [SEP] segment₂ [SEP] …` as ids.
pub fn build_input(segments: &[&str], vocab: &Vocab, tok: &TokenizerConfig) -> Vec<u32> {
    let mut ids = vec![vocab::CLS];
    for s in segments {
        ids.extend(vocab.ids(&tokenize(s, tok)));
        ids.push(vocab::SEP);
    }
    ids
}

/// Encode labelled id sequences into an [`EmbeddingBatch`].
pub fn encode(encoder: &Encoder, ids: Vec<String>, seqs: &[Vec<u32>]) -> Result<EmbeddingBatch> {
    let rows = encoder.embed_batch(seqs)?;
    EmbeddingBatch::from_rows(ids, rows)
}
