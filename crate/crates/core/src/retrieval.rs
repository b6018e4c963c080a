//! Dual-encoder retrieval, NDCG@k evaluation and embedding export.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cases::{CaseDocument, QueryCase};
use crate::encoder::{build_input, encode, EmbeddingBatch, Encoder, Vocab};
use crate::error::{Error, Result};
use crate::lexical::TokenizerConfig;
use crate::relevance::cosine;

#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub query_id: String,
    pub candidates: Vec<CaseDocument>,
}

impl CandidatePool {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Config(format!("empty candidate pool for `{}`", self.query_id)));
        }
        let mut seen = BTreeSet::new();
        for c in &self.candidates {
            if !seen.insert(c.case_id.as_str()) {
                return Err(Error::DuplicateId(c.case_id.clone()));
            }
        }
        Ok(())
    }
}

/// Graded relevance judgements, `query → case → grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn insert(&mut self, query_id: &str, case_id: &str, grade: u32) {
        self.grades
            .entry(query_id.to_string())
            .or_default()
            .insert(case_id.to_string(), grade);
    }

    /// Grade of a pair; unjudged pairs count as 0.
    pub fn grade(&self, query_id: &str, case_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(case_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn has_query(&self, query_id: &str) -> bool {
        self.grades.contains_key(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn parse_tsv(text: &str, source_name: &str) -> Result<Self> {
        let mut q = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: n + 1,
                column: 1,
                message,
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(err(format!("expected 3 tab-separated fields, found {}", f.len())));
            }
            let grade = f[2]
                .trim()
                .parse::<u32>()
                .map_err(|e| err(format!("bad grade `{}`: {e}", f[2])))?;
            q.insert(f[0], f[1], grade);
        }
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_tsv(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (q, m) in &self.grades {
            for (c, g) in m {
                writeln!(w, "{q}\t{c}\t{g}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_tsv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    /// `(case_id, score)` in descending score order.
    pub entries: Vec<(String, f64)>,
}

/// Sort candidates by cosine to the query, ties by candidate id.
pub fn rank_embeddings(query_id: &str, query: &[f64], candidates: &EmbeddingBatch) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(Error::Config(format!("empty candidate pool for `{query_id}`")));
    }
    let mut entries: Vec<(String, f64)> = (0..candidates.len())
        .map(|i| (candidates.ids[i].clone(), cosine(query, candidates.row(i))))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries,
    })
}

pub fn query_input(query: &QueryCase, vocab: &Vocab, tok: &TokenizerConfig) -> Vec<u32> {
    build_input(&[&query.facts], vocab, tok)
}

pub fn candidate_input(case: &CaseDocument, vocab: &Vocab, tok: &TokenizerConfig) -> Vec<u32> {
    let (facts, holding) = case.candidate_text();
    build_input(&[facts, holding], vocab, tok)
}

pub fn encode_candidates(
    encoder: &Encoder,
    cases: &[CaseDocument],
    vocab: &Vocab,
    tok: &TokenizerConfig,
) -> Result<EmbeddingBatch> {
    let seqs: Vec<Vec<u32>> = cases.iter().map(|c| candidate_input(c, vocab, tok)).collect();
    encode(encoder, cases.iter().map(|c| c.case_id.clone()).collect(), &seqs)
}

pub fn encode_queries(
    encoder: &Encoder,
    queries: &[QueryCase],
    vocab: &Vocab,
    tok: &TokenizerConfig,
) -> Result<EmbeddingBatch> {
    let seqs: Vec<Vec<u32>> = queries.iter().map(|q| query_input(q, vocab, tok)).collect();
    encode(encoder, queries.iter().map(|q| q.query_id.clone()).collect(), &seqs)
}

pub fn rank(
    query: &QueryCase,
    pool: &CandidatePool,
    encoder: &Encoder,
    vocab: &Vocab,
    tok: &TokenizerConfig,
) -> Result<RankedList> {
    pool.validate()?;
    let q = encoder.embed(&query_input(query, vocab, tok))?;
    let cands = encode_candidates(encoder, &pool.candidates, vocab, tok)?;
    rank_embeddings(&query.query_id, &q, &cands)
}

/// Rank every query against one shared pool, encoding the pool once.
pub fn rank_all(
    queries: &[QueryCase],
    pool: &[CaseDocument],
    encoder: &Encoder,
    vocab: &Vocab,
    tok: &TokenizerConfig,
) -> Result<Vec<RankedList>> {
    let cands = encode_candidates(encoder, pool, vocab, tok)?;
    let qs = encode_queries(encoder, queries, vocab, tok)?;
    (0..qs.len())
        .map(|i| rank_embeddings(&qs.ids[i], qs.row(i), &cands))
        .collect()
}

/// DCG of grades listed in ranked order, truncated at `k`.
pub fn dcg_at_k(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with gain `2^g - 1` and discount `1/log2(rank+1)`; the ideal
/// ordering is taken over the ranked pool. Returns 0 when nothing is relevant.
pub fn ndcg_at_k(ranked: &RankedList, qrels: &QrelSet, k: usize) -> f64 {
    let grades: Vec<u32> = ranked
        .entries
        .iter()
        .map(|(c, _)| qrels.grade(&ranked.query_id, c))
        .collect();
    ndcg_from_grades(&grades, k)
}

/// NDCG@k for grades listed in ranked order.
pub fn ndcg_from_grades(grades: &[u32], k: usize) -> f64 {
    let mut ideal = grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        return 0.0;
    }
    dcg_at_k(grades, k) / idcg
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Leave queries without any relevant candidate out of the means.
    pub skip_unjudged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ks: Vec<usize>,
    pub num_queries: usize,
    /// `ndcg@k → mean`.
    pub mean: BTreeMap<String, f64>,
    /// `query → ndcg@k → value`.
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Metrics {
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.mean.get(&format!("ndcg@{k}")).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub const DEFAULT_KS: [usize; 3] = [10, 20, 30];

pub fn evaluate(runs: &[RankedList], qrels: &QrelSet, ks: &[usize], opts: EvalOptions) -> Result<Metrics> {
    if ks.contains(&0) {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let missing: Vec<String> = runs
        .iter()
        .filter(|r| !qrels.has_query(&r.query_id))
        .map(|r| r.query_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingQrels(missing));
    }
    let mut per_query = BTreeMap::new();
    for run in runs {
        let relevant = run.entries.iter().any(|(c, _)| qrels.grade(&run.query_id, c) > 0);
        if opts.skip_unjudged && !relevant {
            continue;
        }
        let row: BTreeMap<String, f64> = ks
            .iter()
            .map(|&k| (format!("ndcg@{k}"), ndcg_at_k(run, qrels, k)))
            .collect();
        per_query.insert(run.query_id.clone(), row);
    }
    let n = per_query.len();
    let mean = ks
        .iter()
        .map(|&k| {
            let key = format!("ndcg@{k}");
            let s: f64 = per_query.values().map(|r: &BTreeMap<String, f64>| r[&key]).sum();
            (key, if n == 0 { 0.0 } else { s / n as f64 })
        })
        .collect();
    Ok(Metrics {
        ks: ks.to_vec(),
        num_queries: n,
        mean,
        per_query,
    })
}

pub fn write_run<W: Write>(mut w: W, runs: &[RankedList]) -> Result<()> {
    for run in runs {
        for (i, (c, s)) in run.entries.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}\t{}", run.query_id, i + 1, c, s)?;
        }
    }
    Ok(())
}

pub fn save_run(path: &Path, runs: &[RankedList]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_run(&mut w, runs)?;
    w.flush()?;
    Ok(())
}

pub fn parse_run(text: &str, source_name: &str) -> Result<Vec<RankedList>> {
    let mut runs: Vec<RankedList> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: n + 1,
            column: 1,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", f.len())));
        }
        let score: f64 = f[3].trim().parse().map_err(|e| err(format!("bad score: {e}")))?;
        match runs.last_mut() {
            Some(r) if r.query_id == f[0] => r.entries.push((f[2].to_string(), score)),
            _ => runs.push(RankedList {
                query_id: f[0].to_string(),
                entries: vec![(f[2].to_string(), score)],
            }),
        }
    }
    Ok(runs)
}

pub fn load_run(path: &Path) -> Result<Vec<RankedList>> {
    parse_run(&std::fs::read_to_string(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    #[default]
    None,
    Pca2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    /// Unit principal axes, one per output coordinate.
    pub components: [Vec<f64>; 2],
    /// Share of total variance captured by the two components.
    pub explained_variance: f64,
}

/// Exact 2-D PCA through the eigendecomposition of the sample covariance.
/// Each axis is sign-fixed so that its largest-magnitude entry is positive.
pub fn pca2d(rows: &[Vec<f64>]) -> Result<Pca2d> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Shape("pca2d needs at least 2 rows".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged rows".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let axis = |rank: usize| -> Vec<f64> {
        let Some(&col) = order.get(rank) else {
            return vec![0.0; d];
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [axis(0), axis(1)];
    let top: f64 = order.iter().take(2).map(|&c| eig.eigenvalues[c].max(0.0)).sum();
    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let p = |c: &Vec<f64>| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [p(&components[0]), p(&components[1])]
        })
        .collect();
    Ok(Pca2d {
        coords,
        components,
        explained_variance: if total > 0.0 { top / total } else { 0.0 },
    })
}

/// Rows of an embedding export: `(case_id, label, values…)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExport {
    pub columns: Vec<String>,
    pub rows: Vec<(String, String, Vec<f64>)>,
    pub explained_variance: Option<f64>,
}

impl EmbeddingExport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "case_id,label,{}", self.columns.join(","))?;
        for (id, label, vals) in &self.rows {
            let v: Vec<String> = vals.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{id},{label},{}", v.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

pub fn export_embeddings(emb: &EmbeddingBatch, labels: &[String], projection: Projection) -> Result<EmbeddingExport> {
    if labels.len() != emb.len() {
        return Err(Error::Shape(format!("{} labels for {} embeddings", labels.len(), emb.len())));
    }
    let rows: Vec<Vec<f64>> = (0..emb.len()).map(|i| emb.row(i).to_vec()).collect();
    let (columns, values, explained) = match projection {
        Projection::None => ((0..emb.dim).map(|i| format!("e{i}")).collect(), rows, None),
        Projection::Pca2d => {
            let p = pca2d(&rows)?;
            let vals = p.coords.iter().map(|c| c.to_vec()).collect();
            (vec!["x".into(), "y".into()], vals, Some(p.explained_variance))
        }
    };
    Ok(EmbeddingExport {
        columns,
        rows: emb
            .ids
            .iter()
            .zip(labels)
            .zip(values)
            .map(|((id, l), v)| (id.clone(), l.clone(), v))
            .collect(),
        explained_variance: explained,
    })
}
