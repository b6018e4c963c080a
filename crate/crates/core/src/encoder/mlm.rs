//! Masked-language-model inputs and loss.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::log_sum_exp;
use super::vocab::{is_special, MASK, SPECIAL_TOKENS};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingConfig {
    pub rate: f64,
    /// BERT-style 80/10/10 replacement instead of always `[MASK]`.
    pub bert_split: bool,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            rate: 0.15,
            bert_split: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmInstance {
    pub input_ids: Vec<u32>,
    /// Sorted masked positions.
    pub positions: Vec<usize>,
    /// Original ids at `positions`.
    pub targets: Vec<u32>,
}

/// Mask `round(rate · maskable)` (at least one) non-special positions.
pub fn mlm_mask(ids: &[u32], cfg: &MaskingConfig, vocab_size: usize, rng: &mut StreamRng) -> Result<MlmInstance> {
    let maskable: Vec<usize> = (0..ids.len()).filter(|&p| !is_special(ids[p])).collect();
    if maskable.is_empty() {
        return Err(Error::Shape("sequence has no maskable tokens".into()));
    }
    let count = ((maskable.len() as f64 * cfg.rate).round() as usize).clamp(1, maskable.len());
    let mut positions: Vec<usize> = sample(rng, maskable.len(), count)
        .into_iter()
        .map(|i| maskable[i])
        .collect();
    positions.sort_unstable();

    let mut input_ids = ids.to_vec();
    let targets = positions.iter().map(|&p| ids[p]).collect();
    let first_regular = SPECIAL_TOKENS.len() as u32;
    for &p in &positions {
        input_ids[p] = if cfg.bert_split {
            let r: f64 = rng.random();
            if r < 0.8 {
                MASK
            } else if r < 0.9 && vocab_size as u32 > first_regular {
                rng.random_range(first_regular..vocab_size as u32)
            } else {
                ids[p]
            }
        } else {
            MASK
        };
    }
    Ok(MlmInstance {
        input_ids,
        positions,
        targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Sum over masked positions.
    #[default]
    Sum,
    Mean,
}

/// `−Σ log softmax(logits_m)[target_m]` and its gradient w.r.t. the logits.
pub fn mlm_loss_and_grad(logits: &[Vec<f64>], targets: &[u32], reduction: Reduction) -> Result<(f64, Vec<Vec<f64>>)> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean if targets.is_empty() => 0.0,
        Reduction::Mean => 1.0 / targets.len() as f64,
    };
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &t) in logits.iter().zip(targets) {
        let t = t as usize;
        if t >= row.len() {
            return Err(Error::Shape(format!("target {t} outside {} logits", row.len())));
        }
        let lse = log_sum_exp(row);
        loss += lse - row[t];
        let mut g: Vec<f64> = row.iter().map(|&z| (z - lse).exp() * scale).collect();
        g[t] -= scale;
        grads.push(g);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("mlm loss".into()));
    }
    Ok((loss, grads))
}

pub fn mlm_loss(logits: &[Vec<f64>], targets: &[u32], reduction: Reduction) -> Result<f64> {
    mlm_loss_and_grad(logits, targets, reduction).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::vocab::CLS;
    use crate::rng::stream;

    fn seq(n: usize) -> Vec<u32> {
        std::iter::once(CLS).chain((0..n as u32).map(|i| 5 + i % 7)).collect()
    }

    #[test]
    fn fifteen_percent_of_twenty() {
        let inst = mlm_mask(&seq(20), &MaskingConfig::default(), 12, &mut stream(1, "m", 0)).unwrap();
        assert_eq!(inst.positions.len(), 3);
        assert!(!inst.positions.contains(&0));
        for (&p, &t) in inst.positions.iter().zip(&inst.targets) {
            assert_eq!(inst.input_ids[p], MASK);
            assert_eq!(seq(20)[p], t);
        }
    }

    #[test]
    fn same_seed_same_mask_and_minimum_one() {
        let a = mlm_mask(&seq(30), &MaskingConfig::default(), 12, &mut stream(5, "m", 2)).unwrap();
        let b = mlm_mask(&seq(30), &MaskingConfig::default(), 12, &mut stream(5, "m", 2)).unwrap();
        assert_eq!(a, b);
        let one = mlm_mask(&seq(2), &MaskingConfig::default(), 12, &mut stream(5, "m", 2)).unwrap();
        assert_eq!(one.positions.len(), 1);
        assert!(mlm_mask(&[CLS], &MaskingConfig::default(), 12, &mut stream(5, "m", 2)).is_err());
    }

    #[test]
    fn bert_split_keeps_targets() {
        let cfg = MaskingConfig { rate: 0.5, bert_split: true };
        let inst = mlm_mask(&seq(200), &cfg, 12, &mut stream(3, "m", 0)).unwrap();
        let masked = inst.positions.iter().filter(|&&p| inst.input_ids[p] == MASK).count();
        let frac = masked as f64 / inst.positions.len() as f64;
        assert!((0.65..0.95).contains(&frac), "{frac}");
    }

    #[test]
    fn loss_cases() {
        // near-certain targets
        let l = mlm_loss(&[vec![0.0, 800.0, 0.0]], &[1], Reduction::Sum).unwrap();
        assert!(l.abs() < 1e-12);
        // uniform logits: M · ln V
        let uni = vec![vec![0.3; 7]; 4];
        let l = mlm_loss(&uni, &[0, 1, 2, 3], Reduction::Sum).unwrap();
        assert!((l - 4.0 * 7f64.ln()).abs() < 1e-12);
        let l = mlm_loss(&uni, &[0, 1, 2, 3], Reduction::Mean).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
        assert!(mlm_loss(&uni, &[0], Reduction::Sum).is_err());
    }

    #[test]
    fn loss_matches_scalar_log_softmax() {
        let mut rng = stream(11, "t", 0);
        let logits: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..9).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let targets = [0u32, 8, 3, 3, 5];
        let mut oracle = 0.0;
        for (row, &t) in logits.iter().zip(&targets) {
            let denom: f64 = row.iter().map(|z| z.exp()).sum();
            oracle -= (row[t as usize].exp() / denom).ln();
        }
        let (l, g) = mlm_loss_and_grad(&logits, &targets, Reduction::Sum).unwrap();
        assert!((l - oracle).abs() < 1e-9);
        // gradient rows sum to zero
        for row in g {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
