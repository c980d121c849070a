//! Tokenization, vocabularies, example encoding and corpus file formats.

mod encode;
mod io;
mod tokenize;
mod vocab;

pub use encode::{decode_extended, encode_example, EncodedExample};
pub use io::{
    load_parallel_tsv, load_pos_file, parse_parallel_tsv, parse_pos_lines, read_token_lines, write_token_lines,
};
pub use tokenize::{is_cjk, Cleaner, DEFAULT_HESITATIONS};
pub use vocab::{Vocabulary, BOS, DEFAULT_VOCAB_CAP, EOS, PAD, SEP_TOKEN, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid utf-8 at byte offset {offset}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    InvalidUtf8 { offset: usize, line: Option<usize> },
    #[error("line {line}: expected 2 or 3 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: empty {field} column")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: {tags} tags for {tokens} tokens")]
    TagCount { line: usize, tags: usize, tokens: usize },
    #[error("{what}: {found} lines, expected {expected}")]
    LineCount {
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("vocabulary: {0}")]
    Vocab(String),
}

/// Which side of the bilingual pair a token belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    L1,
    L2,
    Other,
}

/// CJK codepoint anywhere → L2; otherwise any Latin letter → L1.
pub fn language_id(token: &str) -> Language {
    if token.chars().any(is_cjk) {
        Language::L2
    } else if token.chars().any(is_latin_letter) {
        Language::L1
    } else {
        Language::Other
    }
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic() || (c.is_alphabetic() && ('\u{00C0}'..='\u{024F}').contains(&c))
}

/// One bilingual example: the two monolingual renderings plus an optional
/// code-switched reference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelExample {
    pub l1: Vec<String>,
    pub l2: Vec<String>,
    pub cs: Option<Vec<String>>,
}

impl ParallelExample {
    pub fn new(l1: Vec<String>, l2: Vec<String>, cs: Option<Vec<String>>) -> Self {
        Self { l1, l2, cs }
    }

    /// Whitespace-split convenience constructor, mostly for tests.
    pub fn from_text(l1: &str, l2: &str, cs: Option<&str>) -> Self {
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect();
        Self {
            l1: split(l1),
            l2: split(l2),
            cs: cs.map(split),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_classes() {
        assert_eq!(language_id("check"), Language::L1);
        assert_eq!(language_id("我"), Language::L2);
        assert_eq!(language_id("123"), Language::Other);
        assert_eq!(language_id("I'm"), Language::L1);
        assert_eq!(language_id("café"), Language::L1);
        assert_eq!(language_id("去check"), Language::L2);
        assert_eq!(language_id("'"), Language::Other);
    }
}
