//! Biased Circle Loss over a batch of case embeddings.
//!
//! For an anchor with within-class similarities `s_p` (weights `w_p`) and
//! between-class similarities `s_n`:
//!
//! ```text
//! L = log[1 + Σ_j exp(γ α_n^j (s_n^j − Δ_n)) · Σ_i exp(−γ α_p^i (s_p^i − Δ_p))]
//! α_p = |e^(w_p − 1)·O_p − s_p|,  α_n = [s_n − O_n]_+
//! ```
//!
//! evaluated as `softplus(LSE_n + LSE_p)`. The batch loss is the mean over
//! anchors having at least one positive and one negative. With every
//! `w_p = 1` and `s_p ≤ O_p` this is exactly Circle Loss.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::relevance::WeightTable;
use crate::sampler::BatchPartition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BclHyperParams {
    pub gamma: f64,
    pub o_p: f64,
    pub o_n: f64,
    pub delta_p: f64,
    pub delta_n: f64,
    pub w_t: f64,
    /// Weight of the contrastive term in the joint objective.
    pub lambda: f64,
}

impl Default for BclHyperParams {
    fn default() -> Self {
        Self {
            gamma: 16.0,
            o_p: 1.25,
            o_n: 0.25,
            delta_p: 0.75,
            delta_n: 0.25,
            w_t: 0.25,
            lambda: std::f64::consts::E * 1e-6,
        }
    }
}

impl BclHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.delta_n.partial_cmp(&self.delta_p) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config(format!(
                "delta_n ({}) must be below delta_p ({})",
                self.delta_n, self.delta_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSim {
    /// Batch slot of the other case.
    pub other: usize,
    pub s: f64,
    /// Relevance weight; only meaningful for within-class pairs.
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPairs {
    pub anchor: usize,
    pub positives: Vec<PairSim>,
    pub negatives: Vec<PairSim>,
}

impl AnchorPairs {
    pub fn eligible(&self) -> bool {
        !self.positives.is_empty() && !self.negatives.is_empty()
    }
}

pub fn alpha_p(w_p: f64, s_p: f64, hp: &BclHyperParams) -> f64 {
    ((w_p - 1.0).exp() * hp.o_p - s_p).abs()
}

pub fn alpha_n(s_n: f64, hp: &BclHyperParams) -> f64 {
    (s_n - hp.o_n).max(0.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

pub fn collect_pairs(
    emb: &EmbeddingBatch,
    partition: &BatchPartition,
    table: &WeightTable,
) -> Result<Vec<AnchorPairs>> {
    let n = partition.len();
    if emb.len() != n {
        return Err(Error::Shape(format!(
            "{} embeddings for a batch of {n}",
            emb.len()
        )));
    }
    let norms: Vec<f64> = (0..n).map(|i| norm(emb.row(i))).collect();
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for b in 0..n {
            if b == a {
                continue;
            }
            let s = cosine(emb.row(a), emb.row(b), norms[a], norms[b]);
            if partition.same_class(a, b) {
                let (ca, cb) = (partition.cases[a], partition.cases[b]);
                let w = table.get(ca, cb).max(table.get(cb, ca));
                positives.push(PairSim { other: b, s, w });
            } else {
                negatives.push(PairSim { other: b, s, w: 0.0 });
            }
        }
        out.push(AnchorPairs {
            anchor: a,
            positives,
            negatives,
        });
    }
    Ok(out)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn neg_logit(p: &PairSim, hp: &BclHyperParams) -> f64 {
    hp.gamma * alpha_n(p.s, hp) * (p.s - hp.delta_n)
}

fn pos_logit(p: &PairSim, hp: &BclHyperParams) -> f64 {
    -hp.gamma * alpha_p(p.w, p.s, hp) * (p.s - hp.delta_p)
}

/// Loss term of one anchor; `None` unless it has both positives and negatives.
pub fn anchor_loss(pairs: &AnchorPairs, hp: &BclHyperParams) -> Option<f64> {
    if !pairs.eligible() {
        return None;
    }
    let lse_n = log_sum_exp(pairs.negatives.iter().map(|p| neg_logit(p, hp)));
    let lse_p = log_sum_exp(pairs.positives.iter().map(|p| pos_logit(p, hp)));
    Some(softplus(lse_n + lse_p))
}

pub fn bcl_value(pairs: &[AnchorPairs], hp: &BclHyperParams) -> Result<f64> {
    let terms: Vec<f64> = pairs.iter().filter_map(|p| anchor_loss(p, hp)).collect();
    if terms.is_empty() {
        return Ok(0.0);
    }
    let v = terms.iter().sum::<f64>() / terms.len() as f64;
    if !v.is_finite() {
        return Err(Error::NonFinite("biased circle loss".into()));
    }
    Ok(v)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss value and `∂L/∂e` for every embedding row (`[n × dim]`), with
/// relevance weights held constant.
pub fn bcl_gradient(
    emb: &EmbeddingBatch,
    partition: &BatchPartition,
    table: &WeightTable,
    hp: &BclHyperParams,
) -> Result<(f64, Vec<f64>)> {
    let pairs = collect_pairs(emb, partition, table)?;
    let value = bcl_value(&pairs, hp)?;
    let (n, dim) = (emb.len(), emb.dim);
    let mut grad = vec![0.0; n * dim];
    let eligible = pairs.iter().filter(|p| p.eligible()).count();
    if eligible == 0 {
        return Ok((value, grad));
    }
    let norms: Vec<f64> = (0..n).map(|i| norm(emb.row(i))).collect();
    let inv_e = 1.0 / eligible as f64;

    // ∂s(a,b)/∂e_a = e_b/(|a||b|) − s·e_a/|a|², and symmetrically for e_b
    let mut push_cos_grad = |a: usize, b: usize, s: f64, ds: f64| {
        if ds == 0.0 || norms[a] == 0.0 || norms[b] == 0.0 {
            return;
        }
        let (ea, eb) = (emb.row(a), emb.row(b));
        let nab = norms[a] * norms[b];
        let (na2, nb2) = (norms[a] * norms[a], norms[b] * norms[b]);
        for c in 0..dim {
            grad[a * dim + c] += ds * (eb[c] / nab - s * ea[c] / na2);
            grad[b * dim + c] += ds * (ea[c] / nab - s * eb[c] / nb2);
        }
    };

    for ap in pairs.iter().filter(|p| p.eligible()) {
        let neg: Vec<f64> = ap.negatives.iter().map(|p| neg_logit(p, hp)).collect();
        let pos: Vec<f64> = ap.positives.iter().map(|p| pos_logit(p, hp)).collect();
        let lse_n = log_sum_exp(neg.iter().copied());
        let lse_p = log_sum_exp(pos.iter().copied());
        let outer = sigmoid(lse_n + lse_p) * inv_e;

        for (p, &z) in ap.negatives.iter().zip(&neg) {
            let soft = (z - lse_n).exp();
            let active = if p.s > hp.o_n { p.s - hp.delta_n } else { 0.0 };
            let dz_ds = hp.gamma * (alpha_n(p.s, hp) + active);
            push_cos_grad(ap.anchor, p.other, p.s, outer * soft * dz_ds);
        }
        for (p, &z) in ap.positives.iter().zip(&pos) {
            let soft = (z - lse_p).exp();
            let optimum = (p.w - 1.0).exp() * hp.o_p;
            let dalpha = -sign(optimum - p.s);
            let dz_ds = -hp.gamma * (dalpha * (p.s - hp.delta_p) + alpha_p(p.w, p.s, hp));
            push_cos_grad(ap.anchor, p.other, p.s, outer * soft * dz_ds);
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("biased circle loss gradient".into()));
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorDiagnostic {
    pub anchor: usize,
    pub k: usize,
    pub l: usize,
    pub loss: Option<f64>,
}

pub fn diagnostics(pairs: &[AnchorPairs], hp: &BclHyperParams) -> Vec<AnchorDiagnostic> {
    pairs
        .iter()
        .map(|p| AnchorDiagnostic {
            anchor: p.anchor,
            k: p.positives.len(),
            l: p.negatives.len(),
            loss: anchor_loss(p, hp),
        })
        .collect()
}

pub fn write_diagnostics(path: &Path, diags: &[AnchorDiagnostic]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in diags {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partition(labels: &[usize]) -> BatchPartition {
        BatchPartition {
            cases: (0..labels.len()).collect(),
            labels: labels.to_vec(),
            num_classes: labels.iter().max().map_or(0, |m| m + 1),
        }
    }

    fn ones(n: usize) -> WeightTable {
        WeightTable::from_dense((0..n).map(|i| i.to_string()).collect(), vec![1.0; n * n]).unwrap()
    }

    fn emb(rows: &[&[f64]]) -> EmbeddingBatch {
        EmbeddingBatch::from_rows(
            (0..rows.len()).map(|i| i.to_string()).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn pair_counts() {
        let e = emb(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let pairs = collect_pairs(&e, &partition(&[0, 0]), &ones(2)).unwrap();
        assert!(pairs.iter().all(|p| p.positives.len() == 1 && p.negatives.is_empty()));
        assert_eq!(pairs[0].positives[0].s, 1.0);

        let e = emb(&[&[1.0, 0.0], &[0.5, 0.5], &[0.0, 1.0], &[1.0, 1.0]]);
        let pairs = collect_pairs(&e, &partition(&[0, 0, 1, 1]), &ones(4)).unwrap();
        assert!(pairs.iter().all(|p| p.positives.len() == 1 && p.negatives.len() == 2));
    }

    #[test]
    fn alpha_values() {
        let hp = BclHyperParams::default();
        assert!((alpha_p(1.0, 0.5, &hp) - 0.75).abs() < 1e-15);
        assert_eq!(alpha_n(0.25, &hp), 0.0);
        let oracle = ((-0.75f64).exp() * 1.25 - 0.3).abs();
        assert!((alpha_p(0.25, 0.3, &hp) - oracle).abs() < 1e-15);
        assert!((alpha_p(0.25, 0.3, &hp) - 0.290_458_190_926_268_4).abs() < 1e-12);
    }

    #[test]
    fn empty_and_log_two() {
        let hp = BclHyperParams::default();
        assert_eq!(bcl_value(&[], &hp).unwrap(), 0.0);
        let pairs = AnchorPairs {
            anchor: 0,
            positives: vec![PairSim { other: 1, s: hp.delta_p, w: 1.0 }],
            negatives: vec![PairSim { other: 2, s: hp.delta_n, w: 0.0 }],
        };
        assert!((bcl_value(&[pairs], &hp).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identical_single_class_has_zero_gradient() {
        let e = emb(&[&[0.3, 0.4], &[0.3, 0.4], &[0.3, 0.4]]);
        let (v, g) = bcl_gradient(&e, &partition(&[0, 0, 0]), &ones(3), &BclHyperParams::default())
            .unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(BclHyperParams::default().validate().is_ok());
        let bad = BclHyperParams { delta_n: 0.9, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = BclHyperParams { gamma: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
