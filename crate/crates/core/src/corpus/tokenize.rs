use std::collections::BTreeSet;
use std::path::Path;

use super::CorpusError;

pub const DEFAULT_HESITATIONS: &[&str] = &["uh", "um", "erm", "hmm", "ah", "er"];

pub fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{20000}'..='\u{2A6DF}'
        | '\u{2A700}'..='\u{2CEAF}'
        | '\u{30000}'..='\u{3134F}')
}

fn is_punctuation(c: char) -> bool {
    if c == '\'' {
        return false;
    }
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}' | '\u{00AB}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
            | '\u{2010}'..='\u{2027}'
            | '\u{2030}'..='\u{205E}'
            | '\u{3000}'..='\u{303F}'
            | '\u{FE10}'..='\u{FE1F}'
            | '\u{FE30}'..='\u{FE4F}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF20}'
            | '\u{FF3B}'..='\u{FF40}'
            | '\u{FF5B}'..='\u{FF65}')
}

/// Line cleaner: punctuation stripping (apostrophes survive), CJK
/// character splitting and hesitation removal. Case is preserved;
/// hesitations match case-insensitively.
#[derive(Clone, Debug)]
pub struct Cleaner {
    hesitations: BTreeSet<String>,
}

impl Default for Cleaner {
    fn default() -> Self {
        Self::with_hesitations(DEFAULT_HESITATIONS.iter().copied())
    }
}

impl Cleaner {
    pub fn with_hesitations<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            hesitations: words.into_iter().map(str::to_lowercase).collect(),
        }
    }

    /// One hesitation per line; blank lines and `#` comments ignored.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::with_hesitations(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn is_hesitation(&self, token: &str) -> bool {
        self.hesitations.contains(&token.to_lowercase())
    }

    pub fn clean(&self, raw: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in raw.split_whitespace() {
            let mut run = String::new();
            for c in word.chars().filter(|&c| !is_punctuation(c)) {
                if is_cjk(c) {
                    if !run.is_empty() {
                        out.push(std::mem::take(&mut run));
                    }
                    out.push(c.to_string());
                } else {
                    run.push(c);
                }
            }
            if !run.is_empty() {
                out.push(run);
            }
        }
        out.retain(|t| !self.is_hesitation(t));
        out
    }

    /// Byte-level entry point; invalid UTF-8 is reported by offset.
    pub fn clean_bytes(&self, raw: &[u8]) -> Result<Vec<String>, CorpusError> {
        let text = std::str::from_utf8(raw).map_err(|e| CorpusError::InvalidUtf8 {
            offset: e.valid_up_to(),
            line: None,
        })?;
        Ok(self.clean(text))
    }
}
