use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub seed: u64,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_len: 128,
            seed: 0,
            init_std: 0.02,
            ln_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size < super::vocab::SPECIAL_TOKENS.len() {
            return bad(format!("vocab_size {} is smaller than the special tokens", self.vocab_size));
        }
        if self.hidden == 0 || self.layers == 0 || self.heads == 0 || self.ffn == 0 {
            return bad("encoder sizes must be positive".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2".into());
        }
        if !(self.init_std > 0.0 && self.ln_eps > 0.0) {
            return bad("init_std and ln_eps must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}
