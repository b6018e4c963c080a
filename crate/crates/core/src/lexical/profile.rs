use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, Bm25Index, TokenizerConfig};
use crate::article_corpus::ArticleCorpus;
use crate::cases::CaseDocument;
use crate::error::{Error, Result};

/// Per-article BM25 vectors of one case's holding against every branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub case_id: String,
    /// article_id → `v_k`, one component per branch in branch order.
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl SimilarityProfile {
    pub fn vector(&self, article_id: &str) -> Option<&[f64]> {
        self.vectors.get(article_id).map(Vec::as_slice)
    }
}

pub fn similarity_profile(
    case: &CaseDocument,
    corpus: &ArticleCorpus,
    index: &Bm25Index,
    cfg: &TokenizerConfig,
) -> Result<SimilarityProfile> {
    let holding = tokenize(&case.holding, cfg);
    if holding.is_empty() {
        return Err(Error::EmptyHolding(case.case_id.clone()));
    }
    let mut vectors = BTreeMap::new();
    for article in corpus.articles() {
        let v = article
            .branches
            .iter()
            .map(|seq| index.score(seq, &holding))
            .collect::<Result<Vec<_>>>()?;
        vectors.insert(article.article_id.clone(), v);
    }
    Ok(SimilarityProfile {
        case_id: case.case_id.clone(),
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::article_corpus::{build_corpus, Act, ArticleSpec, Slot};
    use crate::lexical::Bm25Params;

    fn setup() -> (ArticleCorpus, Bm25Index) {
        let specs = vec![
            ArticleSpec {
                article_id: "a".into(),
                acts: vec![Act(vec![
                    Slot(vec!["drive".into()]),
                    Slot(vec!["drunk".into(), "racing fast".into(), "chemicals".into()]),
                ])],
            },
            ArticleSpec {
                article_id: "b".into(),
                acts: vec![Act(vec![Slot(vec!["theft".into(), "robbery".into()])])],
            },
        ];
        let corpus = build_corpus(&specs, &TokenizerConfig::whitespace()).unwrap();
        let index = Bm25Index::build(&corpus, Bm25Params::default()).unwrap();
        (corpus, index)
    }

    fn case(holding: &str) -> CaseDocument {
        CaseDocument {
            case_id: "c".into(),
            facts: "x".into(),
            holding: holding.into(),
            decision: String::new(),
            articles: ["a".to_string()].into_iter().collect(),
        }
    }

    #[test]
    fn lengths_follow_branch_counts() {
        let (corpus, index) = setup();
        let p = similarity_profile(&case("drive drunk"), &corpus, &index, &TokenizerConfig::whitespace())
            .unwrap();
        assert_eq!(p.vector("a").unwrap().len(), 3);
        assert_eq!(p.vector("b").unwrap().len(), 2);
    }

    #[test]
    fn disjoint_holding_gives_zero_profile() {
        let (corpus, index) = setup();
        let p = similarity_profile(&case("nothing here"), &corpus, &index, &TokenizerConfig::whitespace())
            .unwrap();
        assert!(p.vectors.values().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn holding_equal_to_branch_is_article_maximum() {
        let (corpus, index) = setup();
        for (t, branch) in corpus.article("a").unwrap().branches.iter().enumerate() {
            let holding = branch.keyword_sequence.join(" ");
            let p = similarity_profile(&case(&holding), &corpus, &index, &TokenizerConfig::whitespace())
                .unwrap();
            let v = p.vector("a").unwrap();
            for (u, &x) in v.iter().enumerate() {
                if u != t {
                    assert!(v[t] > x, "branch {t} vs {u}: {v:?}");
                }
            }
        }
    }

    #[test]
    fn empty_holding_is_an_error() {
        let (corpus, index) = setup();
        let err = similarity_profile(&case(" ... "), &corpus, &index, &TokenizerConfig::whitespace())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyHolding(_)));
    }
}
