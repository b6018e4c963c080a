//! Independent reference implementations shared by the integration suites.
#![allow(dead_code, clippy::needless_range_loop)]

use case_encoder::article_corpus::{Act, ArticleSpec, Slot};
use case_encoder::encoder::vocab::{CLS, PAD, SEP};
use case_encoder::bcl::{collect_pairs, BclHyperParams};
use case_encoder::encoder::{mlm_loss_and_grad, EmbeddingBatch, Encoder, EncoderConfig, Reduction};
use case_encoder::relevance::WeightTable;
use case_encoder::sampler::BatchPartition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- BM25

pub const ALPHABET: &[&str] = &["a", "b", "c", "d", "e", "f", "g", "h"];

/// Up to 20 documents of 1..=30 tokens over a small alphabet.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let n_docs = rng.random_range(1..=20);
    let alpha = rng.random_range(2..=ALPHABET.len());
    (0..n_docs)
        .map(|_| {
            let len = rng.random_range(1..=30);
            (0..len)
                .map(|_| ALPHABET[rng.random_range(0..alpha)].to_string())
                .collect()
        })
        .collect()
}

pub fn random_query(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.random_range(1..=12);
    (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())].to_string())
        .collect()
}

/// Okapi BM25 (plus-one IDF) straight from the definition, by rescanning the corpus.
pub fn bm25_brute(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    docs.iter()
        .map(|doc| {
            let dl = doc.len() as f64;
            let mut score = 0.0;
            for q in query {
                let f = doc.iter().filter(|t| *t == q).count() as f64;
                let df = docs.iter().filter(|d| d.contains(q)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * dl / avgdl));
            }
            score
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

// ---------------------------------------------------------------- articles

pub fn random_spec(rng: &mut ChaCha8Rng, id: &str) -> ArticleSpec {
    let n_acts = rng.random_range(1..=4);
    let mut counter = 0;
    let acts = (0..n_acts)
        .map(|_| {
            let n_slots = rng.random_range(1..=4);
            Act((0..n_slots)
                .map(|_| {
                    let n_phr = rng.random_range(1..=3);
                    Slot((0..n_phr)
                        .map(|_| {
                            counter += 1;
                            format!("w{counter}")
                        })
                        .collect())
                })
                .collect())
        })
        .collect();
    ArticleSpec {
        article_id: id.to_string(),
        acts,
    }
}

/// Every branch of `spec`, by plain recursion over slots.
pub fn enumerate_branches(spec: &ArticleSpec) -> Vec<Vec<String>> {
    fn rec(slots: &[Slot], prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        match slots.split_first() {
            None => out.push(prefix.clone()),
            Some((first, rest)) => {
                for p in &first.0 {
                    prefix.push(p.clone());
                    rec(rest, prefix, out);
                    prefix.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    for act in &spec.acts {
        rec(&act.0, &mut Vec::new(), &mut out);
    }
    out
}

// ---------------------------------------------------------------- classes

/// Weight table with values straddling typical thresholds; diagonal 1.
pub fn random_weight_table(rng: &mut ChaCha8Rng, n: usize) -> WeightTable {
    const LEVELS: [f64; 7] = [0.0, 0.0, 0.0, 0.1, 0.25, 0.3, 1.0];
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = if i == j {
                1.0
            } else if rng.random_bool(0.2) {
                LEVELS[rng.random_range(0..LEVELS.len())]
            } else {
                0.0
            };
        }
    }
    WeightTable::from_dense((0..n).map(|i| format!("c{i}")).collect(), values).unwrap()
}

/// Class labels by Warshall transitive closure of `edge`, numbered by first appearance.
pub fn closure_labels(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut reach = vec![vec![false; n]; n];
    for a in 0..n {
        reach[a][a] = true;
        for b in 0..n {
            if a != b && (edge(a, b) || edge(b, a)) {
                reach[a][b] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for a in 0..n {
        if labels[a] == usize::MAX {
            for b in 0..n {
                if reach[a][b] {
                    labels[b] = next;
                }
            }
            next += 1;
        }
    }
    labels
}

pub fn partition_from_labels(labels: &[usize]) -> BatchPartition {
    BatchPartition {
        cases: (0..labels.len()).collect(),
        labels: labels.to_vec(),
        num_classes: labels.iter().max().map_or(0, |m| m + 1),
    }
}

pub fn constant_table(n: usize, w: f64) -> WeightTable {
    let values = (0..n * n).map(|k| if k % (n + 1) == 0 { 1.0 } else { w }).collect();
    WeightTable::from_dense((0..n).map(|i| format!("c{i}")).collect(), values).unwrap()
}

// ---------------------------------------------------------------- circle loss

#[derive(Debug, Clone, Copy)]
pub struct CircleParams {
    pub gamma: f64,
    pub o_p: f64,
    pub o_n: f64,
    pub delta_p: f64,
    pub delta_n: f64,
}

pub const CIRCLE_DEFAULTS: CircleParams = CircleParams {
    gamma: 16.0,
    o_p: 1.25,
    o_n: 0.25,
    delta_p: 0.75,
    delta_n: 0.25,
};

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Standard Circle Loss with `[O_p - s_p]_+` and `[s_n - O_n]_+`, evaluated
/// naively and averaged over anchors that have both pair kinds.
pub fn circle_loss(embs: &[Vec<f64>], labels: &[usize], p: CircleParams) -> f64 {
    let n = embs.len();
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..n {
        let mut sum_p = 0.0;
        let mut sum_n = 0.0;
        let (mut k, mut l) = (0, 0);
        for b in 0..n {
            if a == b {
                continue;
            }
            let s = cos(&embs[a], &embs[b]);
            if labels[a] == labels[b] {
                let alpha = (p.o_p - s).max(0.0);
                sum_p += (-p.gamma * alpha * (s - p.delta_p)).exp();
                k += 1;
            } else {
                let alpha = (s - p.o_n).max(0.0);
                sum_n += (p.gamma * alpha * (s - p.delta_n)).exp();
                l += 1;
            }
        }
        if k > 0 && l > 0 {
            total += (1.0 + sum_n * sum_p).ln();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

pub fn random_embeddings(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Random labels with at least two classes.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    loop {
        let raw: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let labels = closure_labels(n, |a, b| raw[a] == raw[b]);
        if labels.iter().any(|&l| l != labels[0]) {
            return labels;
        }
    }
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_differences(x: &[f64], eps: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + eps;
            let up = f(&buf);
            buf[i] = x[i] - eps;
            let down = f(&buf);
            buf[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Relative error with a floor on the denominator, so entries that are
/// zero on both sides do not divide by zero.
pub fn grad_rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6)
}

// ---------------------------------------------------------------- PCA

/// Top-`k` eigenpairs of a symmetric matrix by power iteration with deflation.
pub fn power_iteration(mut m: Vec<Vec<f64>>, k: usize, iters: usize) -> Vec<(f64, Vec<f64>)> {
    let d = m.len();
    let mut out = Vec::new();
    for r in 0..k {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i + r) % 3) as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| m[i][j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v = w.iter().map(|x| x / norm).collect();
            lambda = norm;
        }
        for i in 0..d {
            for j in 0..d {
                m[i][j] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    out
}

pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    c
}

// ---------------------------------------------------------------- encoder

pub fn tiny_encoder_config() -> EncoderConfig {
    EncoderConfig {
        vocab_size: 12,
        hidden: 8,
        layers: 1,
        heads: 2,
        ffn: 16,
        max_len: 10,
        seed: 17,
        // larger than the production init so every path carries signal
        init_std: 0.5,
        ..Default::default()
    }
}

/// MLM loss at fixed masked positions plus a random linear readout of `[CLS]`.
pub struct Probe {
    pub ids: Vec<u32>,
    pub positions: Vec<usize>,
    pub targets: Vec<u32>,
    pub cls_dir: Vec<f64>,
}

pub fn probe() -> Probe {
    let mut r = rng(99);
    Probe {
        // trailing PADs exercise the key mask
        ids: vec![CLS, 5, 4, 9, 11, 7, SEP, PAD, PAD],
        positions: vec![2, 4],
        targets: vec![6, 10],
        cls_dir: (0..8).map(|_| r.random_range(-1.0..1.0)).collect(),
    }
}

pub fn probe_loss(enc: &Encoder, probe: &Probe) -> f64 {
    let cache = enc.forward(&probe.ids).unwrap();
    let logits: Vec<Vec<f64>> = probe
        .positions
        .iter()
        .map(|&p| enc.mlm_logits(cache.hidden_row(p)))
        .collect();
    let (mlm, _) = mlm_loss_and_grad(&logits, &probe.targets, Reduction::Sum).unwrap();
    let cls: f64 = cache.cls().iter().zip(&probe.cls_dir).map(|(a, b)| a * b).sum();
    mlm + cls
}

pub fn probe_grad(enc: &Encoder, probe: &Probe) -> Vec<f64> {
    let cache = enc.forward(&probe.ids).unwrap();
    let h = enc.config().hidden;
    let mut grads = vec![0.0; enc.num_params()];
    let mut d_hidden = vec![0.0; cache.len() * h];
    let logits: Vec<Vec<f64>> = probe
        .positions
        .iter()
        .map(|&p| enc.mlm_logits(cache.hidden_row(p)))
        .collect();
    let (_, d_logits) = mlm_loss_and_grad(&logits, &probe.targets, Reduction::Sum).unwrap();
    for (&p, dl) in probe.positions.iter().zip(&d_logits) {
        let dh = enc.mlm_head_backward(cache.hidden_row(p), dl, &mut grads);
        for c in 0..h {
            d_hidden[p * h + c] += dh[c];
        }
    }
    for c in 0..h {
        d_hidden[c] += probe.cls_dir[c];
    }
    enc.backward(&cache, &d_hidden, &mut grads).unwrap();
    grads
}

/// Worst relative error of the analytic gradient against central differences over every parameter.
pub fn encoder_gradient_check(eps: f64) -> (f64, String) {
    let enc = Encoder::new(tiny_encoder_config()).unwrap();
    let probe = probe();
    let grads = probe_grad(&enc, &probe);
    let mut worst = (0.0f64, String::from("-"));
    let mut work = enc.clone();
    for (name, range) in enc.param_groups() {
        for i in range {
            let x = enc.params()[i];
            work.params_mut()[i] = x + eps;
            let up = probe_loss(&work, &probe);
            work.params_mut()[i] = x - eps;
            let down = probe_loss(&work, &probe);
            work.params_mut()[i] = x;
            let fd = (up - down) / (2.0 * eps);
            let rel = grad_rel_err(grads[i], fd);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {:e} numeric {fd:e}", grads[i]));
            }
        }
    }
    worst
}

pub fn embedding_batch(rows: &[Vec<f64>]) -> EmbeddingBatch {
    EmbeddingBatch::from_rows((0..rows.len()).map(|i| i.to_string()).collect(), rows.to_vec()).unwrap()
}

/// A batch whose pair similarities all sit well away from the hinge at
/// `O_n` and the absolute-value kink of `α_p`.
pub fn kink_free_instance(r: &mut ChaCha8Rng, hp: &BclHyperParams) -> (Vec<Vec<f64>>, Vec<usize>, WeightTable) {
    loop {
        let n = 6;
        let rows = random_embeddings(r, n, 4);
        let labels = random_labels(r, n);
        let mut values = vec![1.0; n * n];
        for v in values.iter_mut() {
            *v = r.random_range(0.3..1.0);
        }
        let table = WeightTable::from_dense((0..n).map(|i| i.to_string()).collect(), values).unwrap();
        let pairs = collect_pairs(&embedding_batch(&rows), &partition_from_labels(&labels), &table).unwrap();
        let clear = pairs.iter().all(|a| {
            a.negatives.iter().all(|p| (p.s - hp.o_n).abs() > 1e-3)
                && a.positives
                    .iter()
                    .all(|p| ((p.w - 1.0).exp() * hp.o_p - p.s).abs() > 1e-3)
        });
        if clear {
            return (rows, labels, table);
        }
    }
}
