mod common;

use case_encoder::article_corpus::{build_corpus, ArticleSpec};
use case_encoder::lexical::{tokenize, Bm25Index, Bm25Params, IdfVariant, TokenizerConfig};
use case_encoder::Error;
use common::*;
use proptest::prelude::*;

fn corpus_strategy() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<String>)> {
    let tok = (0..ALPHABET.len()).prop_map(|i| ALPHABET[i].to_string());
    (
        prop::collection::vec(prop::collection::vec(tok.clone(), 1..=30), 1..=20),
        prop::collection::vec(tok, 1..=12),
    )
}

proptest! {
    #[test]
    fn scores_match_brute_force((docs, query) in corpus_strategy()) {
        let idx = Bm25Index::from_documents(&docs, Bm25Params::default()).unwrap();
        let expected = bm25_brute(&docs, &query, 1.5, 0.75);
        for (d, e) in expected.iter().enumerate() {
            let got = idx.score_doc(d, &query);
            prop_assert!(got >= 0.0);
            prop_assert!(rel_err(got, *e) < 1e-9, "doc {} got {} expected {}", d, got, e);
        }
    }

    #[test]
    fn statistics_match_direct_counts((docs, _q) in corpus_strategy()) {
        let idx = Bm25Index::from_documents(&docs, Bm25Params::default()).unwrap();
        prop_assert_eq!(idx.num_docs(), docs.len());
        let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / docs.len() as f64;
        prop_assert!((idx.avg_doc_len() - avg).abs() < 1e-12);
        for t in ALPHABET {
            let df = docs.iter().filter(|d| d.iter().any(|x| x == t)).count();
            prop_assert_eq!(idx.doc_freq(t), df);
            prop_assert!(idx.doc_freq(t) <= idx.num_docs());
        }
        for (i, d) in docs.iter().enumerate() {
            prop_assert_eq!(idx.doc_len(i), d.len());
            for t in ALPHABET {
                prop_assert_eq!(idx.term_freq(i, t), d.iter().filter(|x| x == t).count());
            }
        }
    }

    #[test]
    fn absent_query_token_changes_nothing((docs, query) in corpus_strategy(), extra in 0..ALPHABET.len()) {
        let idx = Bm25Index::from_documents(&docs, Bm25Params::default()).unwrap();
        let token = ALPHABET[extra].to_string();
        let mut longer = query.clone();
        longer.push(token.clone());
        for (d, doc) in docs.iter().enumerate() {
            if !doc.contains(&token) {
                prop_assert_eq!(idx.score_doc(d, &query), idx.score_doc(d, &longer));
            }
        }
    }
}

fn toks(s: &str) -> Vec<String> {
    tokenize(s, &TokenizerConfig::whitespace())
}

#[test]
fn three_branch_statistics() {
    let docs = vec![toks("a b"), toks("a c c"), toks("d")];
    let idx = Bm25Index::from_documents(&docs, Bm25Params::default()).unwrap();
    assert_eq!(idx.num_docs(), 3);
    assert!((idx.avg_doc_len() - 2.0).abs() < 1e-15);
    assert_eq!(idx.doc_freq("a"), 2);
}

#[test]
fn toy_corpus_hand_values() {
    let docs = vec![toks("a b"), toks("a c c"), toks("d")];
    let idx = Bm25Index::from_documents(&docs, Bm25Params::default()).unwrap();
    let q = toks("a c");
    let e0 = 1.6f64.ln();
    let e1 = 1.6f64.ln() * 2.5 / 3.0625 + (8.0f64 / 3.0).ln() * 5.0 / 4.0625;
    assert!(rel_err(idx.score_doc(0, &q), e0) < 1e-9);
    assert!(rel_err(idx.score_doc(1, &q), e1) < 1e-9);
    assert_eq!(idx.score_doc(2, &q), 0.0);
}

#[test]
fn disjoint_query_scores_zero() {
    let docs = vec![toks("a b"), toks("c")];
    let idx = Bm25Index::from_documents(&docs, Bm25Params::default()).unwrap();
    assert_eq!(idx.score_doc(0, &toks("x y")), 0.0);
}

#[test]
fn single_branch_corpus_with_floor_zero_idf() {
    let params = Bm25Params {
        idf: IdfVariant::FloorZero,
        ..Default::default()
    };
    let idx = Bm25Index::from_documents(&[toks("a b c")], params).unwrap();
    assert_eq!(idx.score_doc(0, &toks("a b")), 0.0);
    assert_eq!(IdfVariant::FloorZero.idf(1, 1), 0.0);
}

#[test]
fn empty_corpus_is_rejected() {
    assert!(matches!(
        Bm25Index::from_documents(&[], Bm25Params::default()),
        Err(Error::EmptyCorpus)
    ));
    let corpus = build_corpus(&[] as &[ArticleSpec], &TokenizerConfig::default()).unwrap();
    assert!(Bm25Index::build(&corpus, Bm25Params::default()).is_err());
}

#[test]
fn tokenizer_examples() {
    assert!(tokenize("", &TokenizerConfig::default()).is_empty());
    assert_eq!(toks("a b a"), ["a", "b", "a"]);
    assert_eq!(tokenize("危险驾驶", &TokenizerConfig::default()).len(), 4);
}
