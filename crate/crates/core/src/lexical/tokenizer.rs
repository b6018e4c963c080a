use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerMode {
    /// Split on Unicode whitespace.
    Whitespace,
    /// One token per non-whitespace character.
    #[default]
    CharUnigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub mode: TokenizerMode,
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            mode: TokenizerMode::CharUnigram,
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

impl TokenizerConfig {
    pub fn whitespace() -> Self {
        Self {
            mode: TokenizerMode::Whitespace,
            ..Self::default()
        }
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{2000}'..='\u{206F}'   // general punctuation
            | '\u{3000}'..='\u{303F}' // CJK symbols and punctuation
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF20}'
            | '\u{FF3B}'..='\u{FF40}'
            | '\u{FF5B}'..='\u{FF65}')
}

fn normalize(word: &str, cfg: &TokenizerConfig) -> String {
    let kept = word
        .chars()
        .filter(|c| !(cfg.strip_punctuation && is_punctuation(*c)));
    if cfg.lowercase {
        kept.flat_map(char::to_lowercase).collect()
    } else {
        kept.collect()
    }
}

pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    match cfg.mode {
        TokenizerMode::Whitespace => text
            .split_whitespace()
            .map(|w| normalize(w, cfg))
            .filter(|t| !t.is_empty())
            .collect(),
        TokenizerMode::CharUnigram => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| normalize(c.encode_utf8(&mut [0; 4]), cfg))
            .filter(|t| !t.is_empty())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_no_tokens() {
        assert!(tokenize("", &TokenizerConfig::default()).is_empty());
        assert!(tokenize("   ", &TokenizerConfig::whitespace()).is_empty());
    }

    #[test]
    fn whitespace_mode_keeps_repeats() {
        assert_eq!(
            tokenize("a b a", &TokenizerConfig::whitespace()),
            vec!["a", "b", "a"]
        );
    }

    #[test]
    fn char_unigram_counts_characters() {
        assert_eq!(tokenize("醉酒驾驶", &TokenizerConfig::default()).len(), 4);
        assert_eq!(tokenize("ab cd", &TokenizerConfig::default()), vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn punctuation_and_case() {
        let cfg = TokenizerConfig::whitespace();
        assert_eq!(tokenize("Drunk, driving.", &cfg), vec!["drunk", "driving"]);
        assert_eq!(tokenize("追逐竞驶，情节恶劣。", &TokenizerConfig::default()).len(), 8);
        let raw = TokenizerConfig {
            lowercase: false,
            strip_punctuation: false,
            ..TokenizerConfig::whitespace()
        };
        assert_eq!(tokenize("Drunk, x", &raw), vec!["Drunk,", "x"]);
    }
}
