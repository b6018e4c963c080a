//! Legal case encoder pipeline at desk scale.
//!
//! The crate covers the whole loop:
//!
//! * [`article_corpus`]: expand structured statute articles into unambiguous
//!   branches and collect their keyword sequences.
//! * [`lexical`]: tokenization and an Okapi BM25 index over the branch
//!   keyword sequences, producing per-case similarity profiles.
//! * [`relevance`]: the directional legal relevance weight between cases.
//! * [`sampler`]: weighted positive sampling, batch assembly and class
//!   partitioning by transitive closure.
//! * [`encoder`]: a small pre-norm transformer with hand-written backward pass.
//! * [`bcl`]: Biased Circle Loss and its analytic gradient.
//! * [`trainer`]: joint MLM + BCL optimization.
//! * [`retrieval`]: zero-shot dual-encoder ranking, NDCG@k and embedding export.
//! * [`pipeline`]: wiring from articles and cases to weights, vocabulary and encoder inputs.
//! * [`synth`]: a seeded synthetic statute and case corpus with known labels.

pub mod article_corpus;
pub mod bcl;
pub mod cases;
pub mod encoder;
pub mod error;
pub mod lexical;
pub mod pipeline;
pub mod relevance;
pub mod retrieval;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod trainer;
pub mod union_find;

pub use error::{Error, Result};
