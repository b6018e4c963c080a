//! Case documents, queries and their JSON-lines files.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDocument {
    pub case_id: String,
    pub facts: String,
    pub holding: String,
    #[serde(default)]
    pub decision: String,
    /// Article set `A` of the case.
    pub articles: BTreeSet<String>,
}

impl CaseDocument {
    /// Text encoded for a retrieval candidate: facts then holding.
    pub fn candidate_text(&self) -> (&str, &str) {
        (&self.facts, &self.holding)
    }
}

/// A retrieval query: facts only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCase {
    pub query_id: String,
    pub facts: String,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn validate_cases(cases: &[CaseDocument]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in cases {
        if !seen.insert(c.case_id.as_str()) {
            return Err(Error::DuplicateId(c.case_id.clone()));
        }
        if c.facts.trim().is_empty() {
            return Err(Error::Config(format!("case `{}` has empty facts", c.case_id)));
        }
    }
    Ok(())
}

pub fn load_cases(path: &Path) -> Result<Vec<CaseDocument>> {
    let cases = read_jsonl(path)?;
    validate_cases(&cases)?;
    Ok(cases)
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryCase>> {
    let queries: Vec<QueryCase> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for q in &queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(Error::DuplicateId(q.query_id.clone()));
        }
        if q.facts.trim().is_empty() {
            return Err(Error::Config(format!("query `{}` has empty facts", q.query_id)));
        }
    }
    Ok(queries)
}
