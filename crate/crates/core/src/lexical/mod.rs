//! Tokenization, the BM25 index over branch keyword sequences and per-case
//! similarity profiles.

mod bm25;
mod profile;
mod tokenizer;

pub use bm25::{Bm25Index, Bm25Params, IdfVariant};
pub use profile::{similarity_profile, SimilarityProfile};
pub use tokenizer::{tokenize, TokenizerConfig, TokenizerMode};
