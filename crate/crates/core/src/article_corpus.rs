//! Structured statute articles and their unambiguous branches.
//!
//! An article is a list of *acts*. Each act is a sequence of *slots*, and a
//! slot lists parallel alternative phrases. A branch picks one phrase per
//! slot of one act, so an act contributes the Cartesian product of its slots
//! and the article's branches are the union over its acts.
//!
//! Article-spec files are JSON arrays:
//!
//! ```json
//! [
//!   {
//!     "article_id": "133-1",
//!     "acts": [
//!       [["driving on a road"], ["racing"], ["with vile circumstances"]],
//!       [["driving on a road"], ["school bus", "passenger transport"], ["overloading", "speeding"]]
//!     ]
//!   }
//! ]
//! ```

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::{tokenize, TokenizerConfig};

/// Alternative phrases; exactly one is chosen per branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Slot(pub Vec<String>);

/// Sequential slots describing one situation family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Act(pub Vec<Slot>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleSpec {
    pub article_id: String,
    pub acts: Vec<Act>,
}

impl ArticleSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |path: String, reason: &str| Error::InvalidArticle {
            path,
            reason: reason.to_string(),
        };
        if self.article_id.trim().is_empty() {
            return Err(invalid("article_id".into(), "empty article id"));
        }
        let root = &self.article_id;
        if self.acts.is_empty() {
            return Err(invalid(format!("{root}.acts"), "article has no acts"));
        }
        for (a, act) in self.acts.iter().enumerate() {
            if act.0.is_empty() {
                return Err(invalid(format!("{root}.acts[{a}]"), "act has no slots"));
            }
            for (s, slot) in act.0.iter().enumerate() {
                if slot.0.is_empty() {
                    return Err(invalid(
                        format!("{root}.acts[{a}].slots[{s}]"),
                        "slot has no phrases",
                    ));
                }
                for (p, phrase) in slot.0.iter().enumerate() {
                    if phrase.trim().is_empty() {
                        return Err(invalid(
                            format!("{root}.acts[{a}].slots[{s}].phrases[{p}]"),
                            "empty phrase",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Σ over acts of Π over slots of the slot width.
    pub fn branch_count(&self) -> usize {
        self.acts
            .iter()
            .map(|act| act.0.iter().map(|s| s.0.len()).product::<usize>())
            .sum()
    }
}

/// One branch of an article: a single applicable situation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnambiguousArticle {
    pub article_id: String,
    pub branch_index: usize,
    pub act_index: usize,
    /// Chosen phrase per slot, in slot order.
    pub phrases: Vec<String>,
    pub keyword_sequence: Vec<String>,
}

/// Expand a spec into its branches, act by act, iterating the last slot
/// fastest within an act.
pub fn expand_branches(spec: &ArticleSpec, cfg: &TokenizerConfig) -> Result<Vec<UnambiguousArticle>> {
    spec.validate()?;
    let mut branches = Vec::with_capacity(spec.branch_count());
    for (act_index, act) in spec.acts.iter().enumerate() {
        let slots = &act.0;
        // tokenized alternatives per slot
        let mut token_slots = Vec::with_capacity(slots.len());
        for (s, slot) in slots.iter().enumerate() {
            let mut alts = Vec::with_capacity(slot.0.len());
            for (p, phrase) in slot.0.iter().enumerate() {
                let toks = tokenize(phrase, cfg);
                if toks.is_empty() {
                    return Err(Error::InvalidArticle {
                        path: format!(
                            "{}.acts[{act_index}].slots[{s}].phrases[{p}]",
                            spec.article_id
                        ),
                        reason: "phrase produces no tokens".into(),
                    });
                }
                alts.push(toks);
            }
            token_slots.push(alts);
        }

        let mut choice = vec![0usize; slots.len()];
        loop {
            let phrases = choice
                .iter()
                .zip(slots)
                .map(|(&c, slot)| slot.0[c].clone())
                .collect();
            let keyword_sequence = choice
                .iter()
                .zip(&token_slots)
                .flat_map(|(&c, alts)| alts[c].iter().cloned())
                .collect();
            branches.push(UnambiguousArticle {
                article_id: spec.article_id.clone(),
                branch_index: branches.len(),
                act_index,
                phrases,
                keyword_sequence,
            });

            // odometer increment
            let mut pos = slots.len();
            let exhausted = loop {
                if pos == 0 {
                    break true;
                }
                pos -= 1;
                choice[pos] += 1;
                if choice[pos] < slots[pos].0.len() {
                    break false;
                }
                choice[pos] = 0;
            };
            if exhausted {
                break;
            }
        }
    }
    Ok(branches)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArticleEntry {
    pub article_id: String,
    pub branches: Vec<UnambiguousArticle>,
}

/// The keyword-sequence corpus over all articles.
#[derive(Debug, Clone, Default)]
pub struct ArticleCorpus {
    articles: Vec<ArticleEntry>,
    by_id: HashMap<String, usize>,
}

impl ArticleCorpus {
    pub fn build(specs: &[ArticleSpec], cfg: &TokenizerConfig) -> Result<Self> {
        let mut corpus = Self::default();
        for spec in specs {
            if corpus.by_id.contains_key(&spec.article_id) {
                return Err(Error::DuplicateId(spec.article_id.clone()));
            }
            let branches = expand_branches(spec, cfg)?;
            corpus
                .by_id
                .insert(spec.article_id.clone(), corpus.articles.len());
            corpus.articles.push(ArticleEntry {
                article_id: spec.article_id.clone(),
                branches,
            });
        }
        Ok(corpus)
    }

    pub fn articles(&self) -> &[ArticleEntry] {
        &self.articles
    }

    pub fn article(&self, article_id: &str) -> Option<&ArticleEntry> {
        self.by_id.get(article_id).map(|&i| &self.articles[i])
    }

    /// Position of the article in corpus order.
    pub fn article_position(&self, article_id: &str) -> Option<usize> {
        self.by_id.get(article_id).copied()
    }

    /// Number of branches `T_k` of an article.
    pub fn branch_count(&self, article_id: &str) -> Option<usize> {
        self.article(article_id).map(|a| a.branches.len())
    }

    /// All branches in global order: spec order, then branch order.
    pub fn branches(&self) -> impl Iterator<Item = &UnambiguousArticle> {
        self.articles.iter().flat_map(|a| a.branches.iter())
    }

    pub fn total_branches(&self) -> usize {
        self.articles.iter().map(|a| a.branches.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }
}

/// Convenience wrapper around [`ArticleCorpus::build`].
pub fn build_corpus(specs: &[ArticleSpec], cfg: &TokenizerConfig) -> Result<ArticleCorpus> {
    ArticleCorpus::build(specs, cfg)
}

pub fn parse_article_specs(text: &str, source_name: &str) -> Result<Vec<ArticleSpec>> {
    let specs: Vec<ArticleSpec> = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    for spec in &specs {
        spec.validate()?;
        if !seen.insert(spec.article_id.as_str()) {
            return Err(Error::DuplicateId(spec.article_id.clone()));
        }
    }
    Ok(specs)
}

pub fn load_article_specs(path: &Path) -> Result<Vec<ArticleSpec>> {
    let text = std::fs::read_to_string(path)?;
    parse_article_specs(&text, &path.display().to_string())
}

pub fn to_article_json(specs: &[ArticleSpec]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(specs)?;
    s.push('\n');
    Ok(s)
}

pub fn save_article_specs(path: &Path, specs: &[ArticleSpec]) -> Result<()> {
    std::fs::write(path, to_article_json(specs)?)?;
    Ok(())
}

/// Bundled reconstruction of the branch structure of Article 133-1 (dangerous
/// driving) of the PRC Criminal Law. The act/slot split is an editorial
/// reconstruction: the shared driving clause precedes four enumerated
/// situations, and the third one crosses two service types with two
/// violations, giving seven branches.
pub const ARTICLE_133_1_JSON: &str = include_str!("../data/article_133_1.json");

pub fn bundled_article_133_1() -> ArticleSpec {
    parse_article_specs(ARTICLE_133_1_JSON, "article_133_1.json")
        .expect("bundled article spec is valid")
        .remove(0)
}
