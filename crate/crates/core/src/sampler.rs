//! Positive sampling, batch assembly and in-batch class partitioning.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relevance::WeightTable;
use crate::rng::{stream, StreamRng};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Minimum weight for a case to be eligible as a positive.
    pub w_pos: f64,
    /// Draw fresh positives every epoch instead of fixing quadruples once.
    pub resample_each_epoch: bool,
    /// Attempts to redraw a positive that collides with a case already in the batch.
    pub max_resample: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            w_pos: 0.5,
            resample_each_epoch: true,
            max_resample: 16,
        }
    }
}

/// Training unit `(c_i, c_i+, v_i, v_i+)`. Profiles are referenced by the
/// case positions, which index both the weight table and the profile list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    pub anchor: usize,
    pub positive: usize,
    pub weight: f64,
}

/// Draw a positive for `anchor` with probability proportional to `w_anchor,j`
/// among `j ≠ anchor` with `w ≥ w_pos`.
pub fn sample_positive(
    anchor: usize,
    table: &WeightTable,
    w_pos: f64,
    exclude: &HashSet<usize>,
    rng: &mut StreamRng,
) -> Result<usize> {
    let row = table.row(anchor);
    let eligible: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|&(j, &w)| j != anchor && w >= w_pos && w > 0.0 && !exclude.contains(&j))
        .map(|(j, &w)| (j, w))
        .collect();
    let total: f64 = eligible.iter().map(|(_, w)| w).sum();
    if eligible.is_empty() || total <= 0.0 {
        return Err(Error::NoPositive(table.ids()[anchor].clone()));
    }
    let mut dart = rng.random::<f64>() * total;
    for &(j, w) in &eligible {
        dart -= w;
        if dart < 0.0 {
            return Ok(j);
        }
    }
    Ok(eligible[eligible.len() - 1].0)
}

/// Seeded variant of [`sample_positive`] with no exclusions.
pub fn sample_positive_seeded(anchor: usize, table: &WeightTable, w_pos: f64, seed: u64) -> Result<usize> {
    let mut rng = stream(seed, "positive", anchor as u64);
    sample_positive(anchor, table, w_pos, &HashSet::new(), &mut rng)
}

/// Anchors that have at least one eligible positive.
pub fn eligible_anchors(table: &WeightTable, w_pos: f64) -> Vec<usize> {
    (0..table.len())
        .filter(|&i| {
            table
                .row(i)
                .iter()
                .enumerate()
                .any(|(j, &w)| j != i && w >= w_pos && w > 0.0)
        })
        .collect()
}

/// Interleave quadruples into `(c_1, c_1+, c_2, c_2+, …)`.
pub fn build_batch(quads: &[Quadruple]) -> Result<Vec<usize>> {
    if quads.is_empty() {
        return Err(Error::Batch("batch needs at least one quadruple".into()));
    }
    let mut seen = HashSet::new();
    let mut batch = Vec::with_capacity(quads.len() * 2);
    for q in quads {
        for id in [q.anchor, q.positive] {
            if !seen.insert(id) {
                return Err(Error::Batch(format!("case {id} appears twice in the batch")));
            }
            batch.push(id);
        }
    }
    Ok(batch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPartition {
    /// Case positions in batch order.
    pub cases: Vec<usize>,
    /// Class label per batch slot, numbered by smallest member slot.
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl BatchPartition {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn same_class(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }
}

/// Connected components of the graph `{(a, b) : w_ab > w_t or w_ba > w_t}`.
pub fn class_partition(batch: &[usize], table: &WeightTable, w_t: f64) -> Result<BatchPartition> {
    for &c in batch {
        if c >= table.len() {
            return Err(Error::MissingWeight(format!("#{c}"), "batch".into()));
        }
    }
    let n = batch.len();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        for b in a + 1..n {
            let (ca, cb) = (batch[a], batch[b]);
            if table.get(ca, cb) > w_t || table.get(cb, ca) > w_t {
                uf.union(a, b);
            }
        }
    }
    let labels = uf.canonical_labels();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(BatchPartition {
        cases: batch.to_vec(),
        labels,
        num_classes,
    })
}

/// One assembled training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub quadruples: Vec<Quadruple>,
    pub partition: BatchPartition,
}

/// Manifest row for audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub epoch: usize,
    pub batch: usize,
    pub case_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// Sampling weight of each quadruple, in quadruple order.
    pub weights: Vec<f64>,
}

/// Epoch-wise batch schedule over a fixed weight table.
#[derive(Debug, Clone)]
pub struct BatchSampler<'a> {
    table: &'a WeightTable,
    config: SamplerConfig,
    w_t: f64,
    batch_size: usize,
    seed: u64,
    anchors: Vec<usize>,
    fixed: Option<Vec<Quadruple>>,
}

impl<'a> BatchSampler<'a> {
    /// `w_t` is the class threshold used to partition each batch.
    pub fn new(
        table: &'a WeightTable,
        config: SamplerConfig,
        w_t: f64,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let anchors = eligible_anchors(table, config.w_pos);
        if anchors.len() < batch_size {
            return Err(Error::Batch(format!(
                "only {} anchors have a positive; batch size {batch_size} cannot be filled",
                anchors.len()
            )));
        }
        let mut sampler = Self {
            table,
            config,
            w_t,
            batch_size,
            seed,
            anchors,
            fixed: None,
        };
        if !config.resample_each_epoch {
            let mut rng = stream(seed, "fixed-positives", 0);
            let quads = sampler
                .anchors
                .iter()
                .map(|&a| {
                    let p = sample_positive(a, table, config.w_pos, &HashSet::new(), &mut rng)?;
                    Ok(Quadruple { anchor: a, positive: p, weight: table.get(a, p) })
                })
                .collect::<Result<Vec<_>>>()?;
            sampler.fixed = Some(quads);
        }
        Ok(sampler)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.anchors.len() / self.batch_size
    }

    /// Anchor order of an epoch.
    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.anchors.len()).collect();
        order.shuffle(&mut stream(self.seed, "epoch-order", epoch as u64));
        order
    }

    /// Batch `index` of `epoch`. Anchors already used by the batch as a
    /// positive are skipped, and positives colliding with batch members are
    /// redrawn.
    pub fn batch(&self, epoch: usize, index: usize) -> Result<Batch> {
        let per_epoch = self.batches_per_epoch();
        if index >= per_epoch {
            return Err(Error::Batch(format!("epoch has only {per_epoch} batches")));
        }
        let order = self.epoch_order(epoch);
        // anchors for this batch come from its slice of the epoch order, then
        // from the remainder of the epoch when collisions force a skip
        let start = index * self.batch_size;
        let candidates = order[start..].iter().chain(order[..start].iter());
        let mut rng = stream(self.seed, "batch", ((epoch as u64) << 32) | index as u64);
        let mut in_batch: HashSet<usize> = HashSet::new();
        let mut quads = Vec::with_capacity(self.batch_size);
        for &slot in candidates {
            if quads.len() == self.batch_size {
                break;
            }
            let anchor = self.anchors[slot];
            if in_batch.contains(&anchor) {
                continue;
            }
            let positive = match &self.fixed {
                Some(fixed) => {
                    let p = fixed[slot].positive;
                    if in_batch.contains(&p) {
                        continue;
                    }
                    p
                }
                None => {
                    let mut chosen = None;
                    for _ in 0..self.config.max_resample.max(1) {
                        let p = sample_positive(anchor, self.table, self.config.w_pos, &HashSet::new(), &mut rng)?;
                        if !in_batch.contains(&p) {
                            chosen = Some(p);
                            break;
                        }
                    }
                    match chosen {
                        Some(p) => p,
                        // fall back to the exact conditional draw
                        None => match sample_positive(anchor, self.table, self.config.w_pos, &in_batch, &mut rng) {
                            Ok(p) => p,
                            Err(_) => continue,
                        },
                    }
                }
            };
            in_batch.insert(anchor);
            in_batch.insert(positive);
            quads.push(Quadruple {
                anchor,
                positive,
                weight: self.table.get(anchor, positive),
            });
        }
        if quads.len() < self.batch_size {
            return Err(Error::Batch(format!(
                "could not assemble {} collision-free quadruples",
                self.batch_size
            )));
        }
        let cases = build_batch(&quads)?;
        let partition = class_partition(&cases, self.table, self.w_t)?;
        Ok(Batch {
            quadruples: quads,
            partition,
        })
    }

    pub fn manifest(&self, epoch: usize, index: usize, batch: &Batch) -> BatchManifest {
        BatchManifest {
            epoch,
            batch: index,
            case_ids: batch
                .partition
                .cases
                .iter()
                .map(|&c| self.table.ids()[c].clone())
                .collect(),
            labels: batch.partition.labels.clone(),
            weights: batch.quadruples.iter().map(|q| q.weight).collect(),
        }
    }
}

pub fn write_manifests(path: &Path, manifests: &[BatchManifest]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for m in manifests {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
