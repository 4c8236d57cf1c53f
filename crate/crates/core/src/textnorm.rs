//! Text canonicalization and character tokenization.
//!
//! A token is one Unicode scalar value. Normalization runs, in order,
//! compatibility normalization (NFKC), Latin case folding, whitespace removal
//! and punctuation removal, each controlled by [`NormalizationConfig`].

use std::fmt;

use unicode_categories::UnicodeCategories;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("invalid UTF-8 at byte offset {offset}")]
    InvalidEncoding { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NormalizationConfig {
    pub apply_compatibility_normalization: bool,
    pub strip_whitespace: bool,
    pub strip_punctuation: bool,
    pub case_fold_latin: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            apply_compatibility_normalization: true,
            strip_whitespace: true,
            strip_punctuation: false,
            case_fold_latin: false,
        }
    }
}

/// Ordered sequence of scalar-value tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<char>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<char>) -> Self {
        TokenSequence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[char] {
        &self.tokens
    }

    pub fn extend(&mut self, other: &TokenSequence) {
        self.tokens.extend_from_slice(&other.tokens);
    }

    pub fn truncated(&self, len: usize) -> TokenSequence {
        TokenSequence::new(self.tokens[..len.min(self.tokens.len())].to_vec())
    }
}

impl From<&str> for TokenSequence {
    fn from(s: &str) -> Self {
        tokenize(s)
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.tokens.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

fn is_latin(c: char) -> bool {
    matches!(c as u32,
        0x0041..=0x005A | 0x0061..=0x007A | 0x00C0..=0x024F | 0x1E00..=0x1EFF | 0x2C60..=0x2C7F | 0xA720..=0xA7FF)
}

fn fold_latin(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if is_latin(c) && c.is_uppercase() {
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Canonicalizes `text` under `cfg`. Idempotent for every config.
pub fn normalize(text: &str, cfg: &NormalizationConfig) -> String {
    let mut out = pass(text, cfg);
    // Removing a separator can let a combining mark meet a new base
    // character, so repeat until the text is stable.
    loop {
        let next = pass(&out, cfg);
        if next == out {
            return out;
        }
        out = next;
    }
}

fn pass(text: &str, cfg: &NormalizationConfig) -> String {
    let mut out: String = if cfg.apply_compatibility_normalization {
        text.nfkc().collect()
    } else {
        text.to_owned()
    };
    if cfg.case_fold_latin {
        out = fold_latin(&out);
    }
    if cfg.strip_whitespace {
        out.retain(|c| !c.is_whitespace());
    }
    if cfg.strip_punctuation {
        out.retain(|c| !c.is_punctuation());
    }
    out
}

/// Byte-level entry point: validates UTF-8 before normalizing.
pub fn normalize_bytes(bytes: &[u8], cfg: &NormalizationConfig) -> Result<String, TextError> {
    let text = std::str::from_utf8(bytes).map_err(|e| TextError::InvalidEncoding {
        offset: e.valid_up_to(),
    })?;
    Ok(normalize(text, cfg))
}

/// One token per Unicode scalar value.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence::new(text.chars().collect())
}
