//! Joint MLM + Biased Circle Loss training.
//!
//! One step takes one batch of `2N` cases. Every case's facts are masked and
//! run through the encoder once; the MLM loss is read at the masked
//! positions and the `[CLS]` states feed the contrastive term. The two are
//! combined as `L = L_mlm + λ·L_bcl` before a single backward pass.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcl::{bcl_gradient, BclHyperParams};
use crate::encoder::{
    load_checkpoint, mlm_loss_and_grad, mlm_mask, save_checkpoint, Checkpoint, CheckpointKind,
    EmbeddingBatch, Encoder, MaskingConfig, MlmInstance, Reduction,
};
use crate::error::{Error, Result};
use crate::relevance::{cosine, WeightTable};
use crate::rng::stream;
use crate::sampler::{Batch, BatchPartition, BatchSampler, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Quadruples per batch (`N`); a batch holds `2N` cases.
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub mlm_reduction: Reduction,
    pub masking: MaskingConfig,
    pub seed: u64,
    /// Write a resumable state every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub record_wall_time: bool,
    pub bcl: BclHyperParams,
    pub sampler: SamplerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            steps: 200,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            mlm_reduction: Reduction::Sum,
            masking: MaskingConfig::default(),
            seed: 0,
            checkpoint_every: 0,
            record_wall_time: false,
            bcl: BclHyperParams::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Learning rate used for full-size pre-training from a pre-trained backbone.
    pub const REFERENCE_LEARNING_RATE: f64 = 1e-5;

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.masking.rate) || self.masking.rate <= 0.0 {
            return Err(Error::Config("masking rate must lie in (0,1)".into()));
        }
        if !(self.bcl.lambda >= 0.0 && self.bcl.lambda.is_finite()) {
            return Err(Error::Config("lambda must be a finite non-negative number".into()));
        }
        self.bcl.validate()
    }
}

/// `L_mlm + λ·L_bcl`.
pub fn total_loss(mlm: f64, bcl: f64, lambda: f64) -> Result<f64> {
    if !mlm.is_finite() || !bcl.is_finite() || !lambda.is_finite() {
        return Err(Error::NonFinite("loss components".into()));
    }
    Ok(mlm + lambda * bcl)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub mlm_loss: f64,
    pub bcl_loss: f64,
    pub total_loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
}

impl TrainLog {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Encoder inputs aligned with the weight table positions.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    /// `[CLS] facts [SEP]` per case.
    pub facts: Vec<Vec<u32>>,
    pub table: &'a WeightTable,
}

impl TrainingData<'_> {
    fn validate(&self) -> Result<()> {
        if self.facts.len() != self.table.len() {
            return Err(Error::Shape(format!(
                "{} fact sequences for {} weighted cases",
                self.facts.len(),
                self.table.len()
            )));
        }
        Ok(())
    }
}

/// A batch with its masked inputs, ready for a loss evaluation.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub partition: BatchPartition,
    pub masked: Vec<MlmInstance>,
}

pub fn prepare_batch(
    data: &TrainingData<'_>,
    batch: &Batch,
    config: &TrainConfig,
    vocab_size: usize,
    step: usize,
) -> Result<PreparedBatch> {
    let masked = batch
        .partition
        .cases
        .iter()
        .enumerate()
        .map(|(slot, &case)| {
            let mut rng = stream(config.seed, "mask", ((step as u64) << 20) | slot as u64);
            mlm_mask(&data.facts[case], &config.masking, vocab_size, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedBatch {
        partition: batch.partition.clone(),
        masked,
    })
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub mlm: f64,
    pub bcl: f64,
    pub total: f64,
    pub grads: Vec<f64>,
}

/// Loss components and the parameter gradient of the joint objective.
pub fn loss_and_grad(
    encoder: &Encoder,
    table: &WeightTable,
    batch: &PreparedBatch,
    config: &TrainConfig,
) -> Result<StepOutput> {
    let caches = batch
        .masked
        .par_iter()
        .map(|m| encoder.forward(&m.input_ids))
        .collect::<Result<Vec<_>>>()?;

    let n_masked: usize = batch.masked.iter().map(|m| m.positions.len()).sum();
    let mlm_scale = match config.mlm_reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / n_masked.max(1) as f64,
    };

    let embeddings = EmbeddingBatch::from_rows(
        (0..caches.len()).map(|i| i.to_string()).collect(),
        caches.iter().map(|c| c.cls().to_vec()).collect(),
    )?;
    let lambda = config.bcl.lambda;
    let (bcl, d_emb) = bcl_gradient(&embeddings, &batch.partition, table, &config.bcl)?;
    let h = encoder.config().hidden;

    let per_case = caches
        .par_iter()
        .zip(&batch.masked)
        .enumerate()
        .map(|(slot, (cache, m))| {
            let mut grads = vec![0.0; encoder.num_params()];
            let logits: Vec<Vec<f64>> = m
                .positions
                .iter()
                .map(|&p| encoder.mlm_logits(cache.hidden_row(p)))
                .collect();
            let (loss, d_logits) = mlm_loss_and_grad(&logits, &m.targets, Reduction::Sum)?;
            let mut d_hidden = vec![0.0; cache.len() * h];
            for (&p, dl) in m.positions.iter().zip(&d_logits) {
                let dl: Vec<f64> = dl.iter().map(|g| g * mlm_scale).collect();
                let dh = encoder.mlm_head_backward(cache.hidden_row(p), &dl, &mut grads);
                for (d, g) in d_hidden[p * h..(p + 1) * h].iter_mut().zip(dh) {
                    *d += g;
                }
            }
            if lambda != 0.0 {
                for (d, g) in d_hidden[..h].iter_mut().zip(&d_emb[slot * h..(slot + 1) * h]) {
                    *d += lambda * g;
                }
            }
            encoder.backward(cache, &d_hidden, &mut grads)?;
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;

    // fixed-order reduction keeps results independent of thread scheduling
    let mut grads = vec![0.0; encoder.num_params()];
    let mut mlm = 0.0;
    for (loss, g) in per_case {
        mlm += loss;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let mlm = mlm * mlm_scale;
    let total = total_loss(mlm, bcl, lambda)?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("parameter gradients".into()));
    }
    Ok(StepOutput { mlm, bcl, total, grads })
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: usize,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.t as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Scale `grads` so their global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Resumable training state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub encoder: Encoder,
    pub adam: Adam,
    /// Steps completed.
    pub step: usize,
}

impl TrainState {
    pub fn fresh(encoder: Encoder) -> Self {
        let n = encoder.num_params();
        Self {
            encoder,
            adam: Adam::new(n),
            step: 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            kind: CheckpointKind::TrainState,
            step: self.step,
            config: self.encoder.config().clone(),
            tensors: vec![
                ("params".into(), self.encoder.params().to_vec()),
                ("adam_m".into(), self.adam.m.clone()),
                ("adam_v".into(), self.adam.v.clone()),
            ],
        };
        save_checkpoint(path, &ckpt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        if ckpt.kind != CheckpointKind::TrainState {
            return Err(Error::Checkpoint("not a training-state checkpoint".into()));
        }
        let get = |n: &str| {
            ckpt.tensor(n)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{n}`")))
        };
        let encoder = Encoder::from_params(ckpt.config.clone(), get("params")?)?;
        let (m, v) = (get("adam_m")?, get("adam_v")?);
        if m.len() != encoder.num_params() || v.len() != encoder.num_params() {
            return Err(Error::Checkpoint("optimizer state has the wrong size".into()));
        }
        Ok(Self {
            encoder,
            adam: Adam { m, v, t: ckpt.step },
            step: ckpt.step,
        })
    }
}

pub fn state_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("state-{step:06}.ckpt"))
}

/// Run (or continue) training up to `config.steps` completed steps.
pub fn train(
    config: &TrainConfig,
    data: &TrainingData<'_>,
    mut state: TrainState,
    checkpoint_dir: Option<&Path>,
) -> Result<(TrainState, TrainLog)> {
    config.validate()?;
    data.validate()?;
    let sampler = BatchSampler::new(
        data.table,
        config.sampler,
        config.bcl.w_t,
        config.batch_size,
        config.seed,
    )?;
    let per_epoch = sampler.batches_per_epoch();
    let vocab_size = state.encoder.config().vocab_size;
    let mut log = TrainLog::default();
    let mut last_checkpoint = String::from("<none>");

    while state.step < config.steps {
        let step = state.step;
        let started = Instant::now();
        let batch = sampler.batch(step / per_epoch, step % per_epoch)?;
        let prepared = prepare_batch(data, &batch, config, vocab_size, step)?;
        let out = match loss_and_grad(&state.encoder, data.table, &prepared, config) {
            Ok(out) => out,
            Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged { step, last_checkpoint });
            }
            Err(e) => return Err(e),
        };
        let mut grads = out.grads;
        let grad_norm = clip_grad_norm(&mut grads, config.grad_clip);
        state.adam.step(state.encoder.params_mut(), &grads, config);
        if state.encoder.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step, last_checkpoint });
        }
        state.step += 1;
        log.steps.push(StepLog {
            step,
            mlm_loss: out.mlm,
            bcl_loss: out.bcl,
            total_loss: out.total,
            grad_norm,
            wall_ms: config
                .record_wall_time
                .then(|| started.elapsed().as_secs_f64() * 1e3),
        });
        if let Some(dir) = checkpoint_dir {
            if config.checkpoint_every > 0 && state.step.is_multiple_of(config.checkpoint_every) {
                let p = state_path(dir, state.step);
                state.save(&p)?;
                last_checkpoint = p.display().to_string();
            }
        }
    }
    Ok((state, log))
}

/// Mean within-class cosine minus mean between-class cosine.
pub fn embedding_separation(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s = cosine(&rows[i], &rows[j]);
            if labels[i] == labels[j] {
                within += s;
                nw += 1;
            } else {
                between += s;
                nb += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    mean(within, nw) - mean(between, nb)
}
