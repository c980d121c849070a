use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::CorpusError;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const DEFAULT_VOCAB_CAP: usize = 50_000;

/// Separator placed between the two monolingual halves of a source.
pub const SEP_TOKEN: &str = "<sep>";

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Bidirectional token ↔ id map. Ids 0–3 are PAD, UNK, BOS, EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Frequency-ranked vocabulary (ties lexicographic) holding at most
    /// `cap` entries including the specials.
    pub fn build<I, S>(corpus: I, cap: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        Self::build_with_reserved(corpus, cap, &[])
    }

    /// Like [`Vocabulary::build`], with extra reserved tokens placed right
    /// after the specials (used for [`SEP_TOKEN`]).
    pub fn build_with_reserved<I, S>(corpus: I, cap: usize, reserved: &[&str]) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        assert!(cap >= SPECIALS.len() + reserved.len() + 1, "vocabulary cap {cap} too small");
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let corpus: Vec<S> = corpus.into_iter().collect();
        for line in &corpus {
            for t in line.as_ref() {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut vocab = Self::from_tokens(SPECIALS.iter().chain(reserved).map(|s| s.to_string()))
            .expect("specials are distinct");
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !vocab.ids.contains_key(*t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (t, _) in ranked.into_iter().take(cap - vocab.len()) {
            vocab.push(t.to_string());
        }
        vocab
    }

    fn push(&mut self, token: String) {
        self.ids.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
    }

    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self, CorpusError> {
        let mut v = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in tokens {
            if v.ids.contains_key(&t) {
                return Err(CorpusError::Vocab(format!("duplicate token `{t}`")));
            }
            v.push(t);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    /// Id of `token`, or UNK.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    /// Separator id; falls back to UNK when the vocabulary has none.
    pub fn sep_id(&self) -> usize {
        self.id_or_unk(SEP_TOKEN)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    /// One token per line; line number is the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for t in &self.tokens {
            writeln!(w, "{t}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let v = Self::from_tokens(text.lines().map(str::to_string))?;
        if v.tokens.len() < SPECIALS.len() || v.tokens[..SPECIALS.len()] != SPECIALS {
            return Err(CorpusError::Vocab("file does not start with the special tokens".into()));
        }
        if v.tokens.iter().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(CorpusError::Vocab("token with whitespace".into()));
        }
        Ok(v)
    }
}
