//! Seeded synthetic statute + case corpus with known branch assignments.
//!
//! Every branch owns a disjoint set of keyword tokens. A case is assigned
//! one branch; its holding draws from that branch's keywords (with a
//! `noise_rate` share of off-branch tokens) and its facts mix holding tokens
//! with filler. Tokens are single CJK characters joined by spaces, so both
//! tokenizer modes see the same token stream.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::article_corpus::{Act, ArticleSpec, Slot};
use crate::cases::{CaseDocument, QueryCase};
use crate::error::{Error, Result};
use crate::retrieval::QrelSet;
use crate::rng::stream;

const FIRST_TOKEN: u32 = 0x4E00;
const MAX_VOCAB: usize = 0x9FFF - 0x4E00;
const MIN_FILLER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub articles: usize,
    pub branches_per_article: usize,
    pub keywords_per_branch: usize,
    pub vocab_size: usize,
    pub cases_per_branch: usize,
    /// Held-out queries per branch.
    pub queries_per_branch: usize,
    pub facts_len: (usize, usize),
    pub holding_len: (usize, usize),
    /// Share of holding tokens drawn from outside the assigned branch.
    pub noise_rate: f64,
    /// Share of facts tokens copied from the holding; the rest is filler.
    pub facts_keyword_share: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            articles: 3,
            branches_per_article: 2,
            keywords_per_branch: 6,
            vocab_size: 60,
            cases_per_branch: 8,
            queries_per_branch: 2,
            facts_len: (10, 16),
            holding_len: (6, 10),
            noise_rate: 0.0,
            facts_keyword_share: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn num_branches(&self) -> usize {
        self.articles * self.branches_per_article
    }

    fn keyword_count(&self) -> usize {
        self.num_branches() * self.keywords_per_branch
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("articles", self.articles),
            ("branches_per_article", self.branches_per_article),
            ("keywords_per_branch", self.keywords_per_branch),
            ("vocab_size", self.vocab_size),
            ("cases_per_branch", self.cases_per_branch),
            ("facts_len.0", self.facts_len.0),
            ("holding_len.0", self.holding_len.0),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.facts_len.0 > self.facts_len.1 || self.holding_len.0 > self.holding_len.1 {
            return Err(Error::Config("length ranges must satisfy min <= max".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config("noise_rate must lie in [0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.facts_keyword_share) {
            return Err(Error::Config("facts_keyword_share must lie in [0,1]".into()));
        }
        let needed = self.keyword_count() + MIN_FILLER;
        if self.vocab_size < needed {
            return Err(Error::Config(format!(
                "vocab_size {} cannot hold {} branch-unique keywords plus {MIN_FILLER} filler tokens",
                self.vocab_size,
                self.keyword_count()
            )));
        }
        if self.vocab_size > MAX_VOCAB {
            return Err(Error::Config(format!("vocab_size is limited to {MAX_VOCAB}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchLabel {
    pub id: String,
    pub article_id: String,
    pub branch_index: usize,
    /// Global branch number, `article * branches_per_article + branch_index`.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub articles: Vec<ArticleSpec>,
    pub cases: Vec<CaseDocument>,
    pub case_labels: Vec<BranchLabel>,
    pub queries: Vec<QueryCase>,
    pub query_labels: Vec<BranchLabel>,
    /// Grade 2 for the query's branch, 1 for a sibling branch of the same article, 0 otherwise.
    pub qrels: QrelSet,
}

fn token(i: usize) -> String {
    char::from_u32(FIRST_TOKEN + i as u32).unwrap().to_string()
}

pub fn article_id(a: usize) -> String {
    format!("A{}", a + 1)
}

struct Draw<'a> {
    spec: &'a SynthSpec,
    keywords: Vec<Vec<String>>,
    off_branch: Vec<Vec<String>>,
    filler: Vec<String>,
}

impl Draw<'_> {
    fn holding<R: Rng>(&self, branch: usize, rng: &mut R) -> Vec<String> {
        let (lo, hi) = self.spec.holding_len;
        let n = rng.random_range(lo..=hi);
        let kw = &self.keywords[branch];
        let mut out: Vec<String> = kw.choose_multiple(rng, n.min(kw.len())).cloned().collect();
        while out.len() < n {
            out.push(kw.choose(rng).unwrap().clone());
        }
        // noise replaces positions after the first, so the branch signal is never erased
        for t in out.iter_mut().skip(1) {
            if rng.random::<f64>() < self.spec.noise_rate {
                *t = self.off_branch[branch].choose(rng).unwrap().clone();
            }
        }
        out.shuffle(rng);
        out
    }

    fn facts<R: Rng>(&self, holding: &[String], rng: &mut R) -> Vec<String> {
        let (lo, hi) = self.spec.facts_len;
        let n = rng.random_range(lo..=hi);
        let mut out: Vec<String> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < self.spec.facts_keyword_share {
                    holding.choose(rng).unwrap().clone()
                } else {
                    self.filler.choose(rng).unwrap().clone()
                }
            })
            .collect();
        out.shuffle(rng);
        out
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let nb = spec.num_branches();
    let keywords: Vec<Vec<String>> = (0..nb)
        .map(|b| (0..spec.keywords_per_branch).map(|k| token(b * spec.keywords_per_branch + k)).collect())
        .collect();
    let filler: Vec<String> = (spec.keyword_count()..spec.vocab_size).map(token).collect();
    let off_branch = (0..nb)
        .map(|b| {
            let mut v: Vec<String> = keywords
                .iter()
                .enumerate()
                .filter(|(o, _)| *o != b)
                .flat_map(|(_, k)| k.iter().cloned())
                .collect();
            v.extend(filler.iter().cloned());
            v
        })
        .collect();
    let draw = Draw {
        spec,
        keywords,
        off_branch,
        filler,
    };

    let articles = (0..spec.articles)
        .map(|a| ArticleSpec {
            article_id: article_id(a),
            acts: (0..spec.branches_per_article)
                .map(|b| {
                    let kws = &draw.keywords[a * spec.branches_per_article + b];
                    Act(kws.iter().map(|k| Slot(vec![k.clone()])).collect())
                })
                .collect(),
        })
        .collect();

    let label_of = |id: String, g: usize| BranchLabel {
        id,
        article_id: article_id(g / spec.branches_per_article),
        branch_index: g % spec.branches_per_article,
        label: g,
    };

    let mut cases = Vec::new();
    let mut case_labels = Vec::new();
    let mut queries = Vec::new();
    let mut query_labels = Vec::new();
    for g in 0..nb {
        let mut rng = stream(spec.seed, "synth-branch", g as u64);
        for i in 0..spec.cases_per_branch {
            let holding = draw.holding(g, &mut rng);
            let facts = draw.facts(&holding, &mut rng);
            let id = format!("c{:02}-{:03}", g, i);
            cases.push(CaseDocument {
                case_id: id.clone(),
                facts: facts.join(" "),
                holding: holding.join(" "),
                decision: String::new(),
                articles: [article_id(g / spec.branches_per_article)].into_iter().collect(),
            });
            case_labels.push(label_of(id, g));
        }
        for i in 0..spec.queries_per_branch {
            let holding = draw.holding(g, &mut rng);
            let facts = draw.facts(&holding, &mut rng);
            let id = format!("q{:02}-{:03}", g, i);
            queries.push(QueryCase {
                query_id: id.clone(),
                facts: facts.join(" "),
            });
            query_labels.push(label_of(id, g));
        }
    }

    let mut qrels = QrelSet::default();
    for q in &query_labels {
        for c in &case_labels {
            let grade = if c.label == q.label {
                2
            } else if c.article_id == q.article_id {
                1
            } else {
                0
            };
            qrels.insert(&q.id, &c.id, grade);
        }
    }

    Ok(SynthCorpus {
        articles,
        cases,
        case_labels,
        queries,
        query_labels,
        qrels,
    })
}
