//! Legal relevance weight between cases.
//!
//! `w_ij = |A_i ∩ A_j| / |A_i| · rel(c_i, c_j)` where `rel` is 1 when some
//! shared article has the same (nonzero) argmax branch in both profiles, and
//! otherwise the largest per-article cosine between the two cases' branch
//! vectors. The weight is directional through the `|A_i|` denominator.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::cases::CaseDocument;
use crate::error::{Error, Result};
use crate::lexical::SimilarityProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceWeight {
    pub source_id: String,
    pub target_id: String,
    pub value: f64,
}

/// Index of the largest component, lowest index on ties. `None` for the zero vector.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if x > 0.0 && best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Cosine similarity, 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn shared_vectors<'a>(
    article: &str,
    pi: &'a SimilarityProfile,
    pj: &'a SimilarityProfile,
) -> Result<(&'a [f64], &'a [f64])> {
    let missing = |p: &SimilarityProfile| Error::MissingProfile {
        case_id: p.case_id.clone(),
        article_id: article.to_string(),
    };
    let vi = pi.vector(article).ok_or_else(|| missing(pi))?;
    let vj = pj.vector(article).ok_or_else(|| missing(pj))?;
    Ok((vi, vj))
}

/// Fine-grained relevance over the shared articles.
pub fn rel<'s, I>(pi: &SimilarityProfile, pj: &SimilarityProfile, shared: I) -> Result<f64>
where
    I: IntoIterator<Item = &'s String>,
{
    let mut best = 0.0f64;
    for article in shared {
        let (vi, vj) = shared_vectors(article, pi, pj)?;
        if let (Some(a), Some(b)) = (argmax(vi), argmax(vj)) {
            if a == b {
                return Ok(1.0);
            }
        }
        best = best.max(cosine(vi, vj));
    }
    Ok(best)
}

pub fn weight(
    ci: &CaseDocument,
    cj: &CaseDocument,
    pi: &SimilarityProfile,
    pj: &SimilarityProfile,
) -> Result<RelevanceWeight> {
    if ci.articles.is_empty() {
        return Err(Error::EmptyArticleSet(ci.case_id.clone()));
    }
    let shared: Vec<&String> = ci.articles.intersection(&cj.articles).collect();
    let value = if shared.is_empty() {
        0.0
    } else {
        let overlap = shared.len() as f64 / ci.articles.len() as f64;
        overlap * rel(pi, pj, shared)?
    };
    Ok(RelevanceWeight {
        source_id: ci.case_id.clone(),
        target_id: cj.case_id.clone(),
        value,
    })
}

/// Dense directional weight table over a list of cases.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    ids: Vec<String>,
    position: HashMap<String, usize>,
    values: Vec<f64>,
}

impl WeightTable {
    pub fn from_dense(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(Error::Shape(format!(
                "weight table for {n} cases needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let mut position = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if position.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, position, values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.position.get(id).copied()
    }

    /// `w_ij` by position.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn get_by_id(&self, source: &str, target: &str) -> Result<f64> {
        match (self.index_of(source), self.index_of(target)) {
            (Some(i), Some(j)) => Ok(self.get(i, j)),
            _ => Err(Error::MissingWeight(source.to_string(), target.to_string())),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// CSV with header `source_id,target_id,value`, rows in table order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["source_id", "target_id", "value"]).map_err(csv_error)?;
        for (i, src) in self.ids.iter().enumerate() {
            for (j, dst) in self.ids.iter().enumerate() {
                out.write_record([src.as_str(), dst.as_str(), &self.get(i, j).to_string()])
                    .map_err(csv_error)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Inverse of [`WeightTable::write_csv`]; the table must be complete.
    pub fn read_csv<R: Read>(r: R, source_name: &str) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        let mut pos: HashMap<String, usize> = HashMap::new();
        let mut entries = Vec::new();
        for (n, rec) in csv::Reader::from_reader(r).into_records().enumerate() {
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: n + 2,
                column: 1,
                message,
            };
            let rec = rec.map_err(|e| err(e.to_string()))?;
            if rec.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", rec.len())));
            }
            let v: f64 = rec[2].parse().map_err(|e| err(format!("bad value `{}`: {e}", &rec[2])))?;
            let mut slot = |id: &str| {
                *pos.entry(id.to_string()).or_insert_with(|| {
                    ids.push(id.to_string());
                    ids.len() - 1
                })
            };
            let (i, j) = (slot(&rec[0]), slot(&rec[1]));
            entries.push((i, j, v));
        }
        let n = ids.len();
        let mut values = vec![f64::NAN; n * n];
        for (i, j, v) in entries {
            values[i * n + j] = v;
        }
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::MissingWeight(ids[k / n].clone(), ids[k % n].clone()));
        }
        Self::from_dense(ids, values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, &path.display().to_string())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Weights for all ordered pairs; the diagonal is fixed at 1.
pub fn pairwise_weights(cases: &[CaseDocument], profiles: &[SimilarityProfile]) -> Result<WeightTable> {
    if cases.len() != profiles.len() {
        return Err(Error::Shape(format!(
            "{} cases but {} profiles",
            cases.len(),
            profiles.len()
        )));
    }
    for (c, p) in cases.iter().zip(profiles) {
        if c.case_id != p.case_id {
            return Err(Error::Shape(format!(
                "profile `{}` does not belong to case `{}`",
                p.case_id, c.case_id
            )));
        }
    }
    let n = cases.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        if cases[i].articles.is_empty() {
                            return Err(Error::EmptyArticleSet(cases[i].case_id.clone()));
                        }
                        Ok(1.0)
                    } else {
                        weight(&cases[i], &cases[j], &profiles[i], &profiles[j]).map(|w| w.value)
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    WeightTable::from_dense(
        cases.iter().map(|c| c.case_id.clone()).collect(),
        rows.into_iter().flatten().collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn profile(id: &str, vs: &[(&str, &[f64])]) -> SimilarityProfile {
        SimilarityProfile {
            case_id: id.into(),
            vectors: vs
                .iter()
                .map(|(a, v)| (a.to_string(), v.to_vec()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    fn case(id: &str, arts: &[&str]) -> CaseDocument {
        CaseDocument {
            case_id: id.into(),
            facts: "f".into(),
            holding: "h".into(),
            decision: String::new(),
            articles: arts.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn shared(a: &[&str]) -> Vec<String> {
        a.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn argmax_ties_and_zero() {
        assert_eq!(argmax(&[0.0, 0.0]), None);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), Some(1));
    }

    #[test]
    fn equal_vectors_rel_one() {
        let p = profile("i", &[("k", &[0.3, 0.7])]);
        assert_eq!(rel(&p, &p, &shared(&["k"])).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_vectors_rel_zero() {
        let pi = profile("i", &[("k", &[1.0, 0.0])]);
        let pj = profile("j", &[("k", &[0.0, 1.0])]);
        assert_eq!(rel(&pi, &pj, &shared(&["k"])).unwrap(), 0.0);
    }

    #[test]
    fn max_over_shared_articles() {
        // k1: cosine 0.6, argmax 1 vs 0
        // k2: unit vectors either side of the diagonal, cosine 0.9, argmax 0 vs 1
        let d = 0.9f64.acos() / 2.0;
        let q = std::f64::consts::FRAC_PI_4;
        let pi = profile("i", &[("k1", &[0.6, 0.8]), ("k2", &[(q - d).cos(), (q - d).sin()])]);
        let pj = profile("j", &[("k1", &[1.0, 0.0]), ("k2", &[(q + d).cos(), (q + d).sin()])]);
        let r = rel(&pi, &pj, &shared(&["k1", "k2"])).unwrap();
        assert!((r - 0.9).abs() < 1e-12, "{r}");
        let r1 = rel(&pi, &pj, &shared(&["k1"])).unwrap();
        assert!((r1 - 0.6).abs() < 1e-12, "{r1}");
    }

    #[test]
    fn rel_is_scale_invariant_and_symmetric() {
        let pi = profile("i", &[("k", &[0.3, 0.1, 0.2])]);
        let pj = profile("j", &[("k", &[0.1, 0.5, 0.2])]);
        let scaled = profile("j", &[("k", &[0.7, 3.5, 1.4])]);
        let k = shared(&["k"]);
        let r = rel(&pi, &pj, &k).unwrap();
        assert!((r - rel(&pi, &scaled, &k).unwrap()).abs() < 1e-12);
        assert_eq!(r, rel(&pj, &pi, &k).unwrap());
    }

    #[test]
    fn missing_profile_article_errors() {
        let pi = profile("i", &[("k", &[1.0])]);
        let pj = profile("j", &[]);
        assert!(matches!(
            rel(&pi, &pj, &shared(&["k"])),
            Err(Error::MissingProfile { .. })
        ));
    }

    #[test]
    fn directional_weight() {
        let ci = case("i", &["k", "m"]);
        let cj = case("j", &["k"]);
        let pi = profile("i", &[("k", &[0.2, 1.0]), ("m", &[1.0])]);
        let pj = profile("j", &[("k", &[0.1, 3.0]), ("m", &[0.0])]);
        assert_eq!(weight(&ci, &cj, &pi, &pj).unwrap().value, 0.5);
        assert_eq!(weight(&cj, &ci, &pj, &pi).unwrap().value, 1.0);
    }

    #[test]
    fn self_weight_and_disjoint() {
        let ci = case("i", &["k"]);
        let pi = profile("i", &[("k", &[0.2, 1.0]), ("m", &[1.0])]);
        assert_eq!(weight(&ci, &ci, &pi, &pi).unwrap().value, 1.0);
        let cj = case("j", &["m"]);
        assert_eq!(weight(&ci, &cj, &pi, &pi).unwrap().value, 0.0);
        let empty = case("e", &[]);
        assert!(matches!(weight(&empty, &ci, &pi, &pi), Err(Error::EmptyArticleSet(_))));
    }

    #[test]
    fn table_matches_individual_calls() {
        let cases = vec![case("a", &["k"]), case("b", &["k", "m"]), case("c", &["m"])];
        let profiles = vec![
            profile("a", &[("k", &[1.0, 0.5]), ("m", &[0.0, 0.0])]),
            profile("b", &[("k", &[0.2, 0.9]), ("m", &[0.4, 0.1])]),
            profile("c", &[("k", &[0.0, 0.0]), ("m", &[0.3, 0.3])]),
        ];
        let table = pairwise_weights(&cases, &profiles).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j {
                    1.0
                } else {
                    weight(&cases[i], &cases[j], &profiles[i], &profiles[j]).unwrap().value
                };
                assert_eq!(table.get(i, j), expected);
                assert!((0.0..=1.0).contains(&table.get(i, j)));
            }
        }
        let single = pairwise_weights(&cases[..1], &profiles[..1]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.get(0, 0), 1.0);

        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("source_id,target_id,value\na,a,1\n"));
        assert_eq!(WeightTable::read_csv(text.as_bytes(), "t").unwrap(), table);
        let truncated: String = text.lines().take(9).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            WeightTable::read_csv(truncated.as_bytes(), "t"),
            Err(Error::MissingWeight(..))
        ));
    }
}
