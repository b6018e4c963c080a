use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

pub fn is_special(id: u32) -> bool {
    (id as usize) < SPECIAL_TOKENS.len()
}

/// Token ↔ id mapping. Ids 0..5 are the special tokens; corpus tokens follow
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let uniq: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| !SPECIAL_TOKENS.contains(&t.as_str()))
            .collect();
        let tokens: Vec<String> = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(uniq)
            .collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// `id<TAB>token` per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{i}\t{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parse_err = |line: usize, message: &str| Error::Parse {
            source_name: path.display().to_string(),
            line,
            column: 1,
            message: message.to_string(),
        };
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (id, tok) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(n + 1, "expected `id<TAB>token`"))?;
            let id: usize = id.parse().map_err(|_| parse_err(n + 1, "bad id"))?;
            if id != tokens.len() {
                return Err(parse_err(n + 1, "ids must be consecutive from 0"));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < SPECIAL_TOKENS.len()
            || tokens.iter().zip(SPECIAL_TOKENS).any(|(a, b)| a != b)
        {
            return Err(parse_err(1, "vocabulary must start with the special tokens"));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self { tokens, index })
    }
}
