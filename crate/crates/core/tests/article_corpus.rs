mod common;

use std::collections::HashSet;

use case_encoder::article_corpus::{
    build_corpus, bundled_article_133_1, expand_branches, load_article_specs, parse_article_specs,
    save_article_specs, Act, ArticleSpec, Slot,
};
use case_encoder::lexical::TokenizerConfig;
use case_encoder::Error;
use common::*;

fn spec(id: &str, acts: &[&[&[&str]]]) -> ArticleSpec {
    ArticleSpec {
        article_id: id.into(),
        acts: acts
            .iter()
            .map(|a| Act(a.iter().map(|s| Slot(s.iter().map(|p| p.to_string()).collect())).collect()))
            .collect(),
    }
}

fn ws() -> TokenizerConfig {
    TokenizerConfig::whitespace()
}

#[test]
fn branch_law_against_enumerator() {
    let mut r = rng(11);
    for i in 0..1000 {
        let s = random_spec(&mut r, &format!("s{i}"));
        let expected = enumerate_branches(&s);
        let law: usize = s.acts.iter().map(|a| a.0.iter().map(|sl| sl.0.len()).product::<usize>()).sum();
        let got = expand_branches(&s, &ws()).unwrap();
        assert_eq!(got.len(), law);
        assert_eq!(s.branch_count(), law);
        let phrases: Vec<Vec<String>> = got.iter().map(|b| b.phrases.clone()).collect();
        assert_eq!(phrases, expected);
        assert!(got.iter().enumerate().all(|(k, b)| b.branch_index == k));
    }
}

#[test]
fn product_and_sum_examples() {
    let one = expand_branches(&spec("x", &[&[&["A"], &["B", "C"]]]), &ws()).unwrap();
    let seqs: Vec<Vec<String>> = one.iter().map(|b| b.keyword_sequence.clone()).collect();
    assert_eq!(seqs, vec![vec!["a", "b"], vec!["a", "c"]]);
    let two = spec("y", &[&[&["A"]], &[&["B"], &["C", "D"]]]);
    assert_eq!(expand_branches(&two, &ws()).unwrap().len(), 3);
}

#[test]
fn bundled_article_has_seven_branches() {
    let a = bundled_article_133_1();
    let branches = expand_branches(&a, &TokenizerConfig::default()).unwrap();
    assert_eq!(branches.len(), 7);
}

#[test]
fn expansion_is_deterministic_and_covers_every_phrase() {
    let mut r = rng(5);
    for i in 0..50 {
        let s = random_spec(&mut r, &format!("s{i}"));
        let a = expand_branches(&s, &ws()).unwrap();
        assert_eq!(a, expand_branches(&s.clone(), &ws()).unwrap());
        let used: HashSet<&String> = a.iter().flat_map(|b| &b.phrases).collect();
        for act in &s.acts {
            for slot in &act.0 {
                for p in &slot.0 {
                    assert!(used.contains(p), "{p} unused");
                }
            }
        }
    }
}

#[test]
fn corpus_counts() {
    assert!(build_corpus(&[], &ws()).unwrap().is_empty());
    let three = spec("t", &[&[&["a", "b", "c"]]]);
    let c = build_corpus(std::slice::from_ref(&three), &ws()).unwrap();
    assert_eq!(c.branch_count("t"), Some(3));

    let two = spec("two", &[&[&["a"], &["b", "c"]]]);
    let c = build_corpus(&[two.clone(), bundled_article_133_1()], &TokenizerConfig::default()).unwrap();
    assert_eq!(c.total_branches(), 9);
    assert_eq!(c.branch_count("two"), Some(2));
    assert_eq!(c.branch_count(&bundled_article_133_1().article_id), Some(7));
    let order: Vec<(String, usize)> = c.branches().map(|b| (b.article_id.clone(), b.branch_index)).collect();
    assert_eq!(order[0], ("two".to_string(), 0));
    assert_eq!(order[2].1, 0);

    assert!(matches!(build_corpus(&[two.clone(), two], &ws()), Err(Error::DuplicateId(_))));
}

#[test]
fn validation_names_the_offending_path() {
    let bad = spec("bad", &[&[&["a"], &[]]]);
    match bad.validate() {
        Err(Error::InvalidArticle { path, .. }) => assert!(path.contains("acts[0]") && path.contains("slots[1]"), "{path}"),
        other => panic!("{other:?}"),
    }
    let empty_phrase = spec("bad", &[&[&["a", ""]]]);
    assert!(empty_phrase.validate().is_err());
    let no_acts = spec("bad", &[]);
    assert!(no_acts.validate().is_err());
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("articles.json");
    let specs = vec![spec("p", &[&[&["a"], &["b", "c"]]]), bundled_article_133_1()];
    save_article_specs(&path, &specs).unwrap();
    let loaded = load_article_specs(&path).unwrap();
    assert_eq!(loaded.len(), 2);
    for (a, b) in specs.iter().zip(&loaded) {
        let tok = TokenizerConfig::default();
        assert_eq!(expand_branches(a, &tok).unwrap(), expand_branches(b, &tok).unwrap());
    }

    let empty_slot = r#"[{"article_id": "x", "acts": [[["a"], []]]}]"#;
    assert!(parse_article_specs(empty_slot, "inline").is_err());
    match parse_article_specs("[\n  {\"article_id\": 3}\n]", "inline") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}
