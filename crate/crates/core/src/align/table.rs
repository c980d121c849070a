use std::collections::HashMap;
use std::path::Path;

use super::AlignError;

/// Spelling of the empty source word in table files.
pub const NULL_TOKEN: &str = "<null>";

/// Sparse `t(f | e)`, stored row-compressed by source word. Source id 0 is
/// NULL; only pairs that co-occur in training have entries.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationTable {
    pub(crate) src_words: Vec<String>,
    pub(crate) tgt_words: Vec<String>,
    src_index: HashMap<String, u32>,
    tgt_index: HashMap<String, u32>,
    pub(crate) row_start: Vec<usize>,
    pub(crate) cols: Vec<u32>,
    pub(crate) probs: Vec<f64>,
}

impl TranslationTable {
    /// Table with each row uniform over its (sorted, distinct) columns.
    pub(crate) fn uniform(src_words: Vec<String>, tgt_words: Vec<String>, rows: Vec<Vec<u32>>) -> Self {
        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        row_start.push(0);
        for row in rows {
            let p = 1.0 / row.len().max(1) as f64;
            probs.extend(std::iter::repeat_n(p, row.len()));
            cols.extend(row);
            row_start.push(cols.len());
        }
        Self::from_parts(src_words, tgt_words, row_start, cols, probs)
    }

    fn from_parts(src_words: Vec<String>, tgt_words: Vec<String>, row_start: Vec<usize>, cols: Vec<u32>, probs: Vec<f64>) -> Self {
        let index = |w: &[String]| w.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Self {
            src_index: index(&src_words),
            tgt_index: index(&tgt_words),
            src_words,
            tgt_words,
            row_start,
            cols,
            probs,
        }
    }

    pub(crate) fn with_probs(&self, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), self.probs.len());
        Self {
            probs,
            ..self.clone()
        }
    }

    /// Position of `(e, f)` in the flat storage.
    pub(crate) fn slot(&self, e: usize, f: u32) -> Option<usize> {
        let (lo, hi) = (self.row_start[e], self.row_start[e + 1]);
        self.cols[lo..hi].binary_search(&f).ok().map(|k| lo + k)
    }

    pub(crate) fn prob_ids(&self, e: usize, f: u32) -> f64 {
        self.slot(e, f).map_or(0.0, |k| self.probs[k])
    }

    pub(crate) fn src_id(&self, word: &str) -> Option<usize> {
        self.src_index.get(word).map(|&i| i as usize)
    }

    pub(crate) fn tgt_id(&self, word: &str) -> Option<u32> {
        self.tgt_index.get(word).copied()
    }

    pub(crate) fn num_src(&self) -> usize {
        self.src_words.len()
    }

    /// `t(f | e)`, with `None` for NULL; 0 for unseen pairs.
    pub fn probability(&self, e: Option<&str>, f: &str) -> f64 {
        let e = match e {
            None => Some(0),
            Some(w) => self.src_id(w),
        };
        match (e, self.tgt_id(f)) {
            (Some(e), Some(f)) => self.prob_ids(e, f),
            _ => 0.0,
        }
    }

    /// Number of stored pairs.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Σ_f t(f | e) for each source word, NULL first.
    pub fn row_sums(&self) -> Vec<f64> {
        self.row_start.windows(2).map(|w| self.probs[w[0]..w[1]].iter().sum()).collect()
    }

    /// `(e, f, t(f|e))` rows, NULL spelled [`NULL_TOKEN`].
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        (0..self.num_src()).flat_map(move |e| {
            (self.row_start[e]..self.row_start[e + 1])
                .map(move |k| (self.src_words[e].as_str(), self.tgt_words[self.cols[k] as usize].as_str(), self.probs[k]))
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (e, f, p) in self.entries() {
            out.push_str(&format!("{e}\t{f}\t{p}\n"));
        }
        out
    }

    /// Parses `e<TAB>f<TAB>prob` lines; `#` lines are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, AlignError> {
        let mut src_words = vec![NULL_TOKEN.to_string()];
        let mut src_index: HashMap<String, usize> = HashMap::from([(NULL_TOKEN.to_string(), 0)]);
        let mut tgt_words = Vec::new();
        let mut tgt_index: HashMap<String, u32> = HashMap::new();
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new()];
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| AlignError::Parse { line: n + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            let [e, f, p] = cols[..] else {
                return Err(bad(format!("expected 3 columns, found {}", cols.len())));
            };
            let p: f64 = p.parse().map_err(|_| bad(format!("bad probability `{p}`")))?;
            if !(0.0..=1.0 + 1e-9).contains(&p) {
                return Err(bad(format!("probability {p} out of range")));
            }
            let e = *src_index.entry(e.to_string()).or_insert_with(|| {
                src_words.push(e.to_string());
                rows.push(Vec::new());
                src_words.len() - 1
            });
            let f = *tgt_index.entry(f.to_string()).or_insert_with(|| {
                tgt_words.push(f.to_string());
                (tgt_words.len() - 1) as u32
            });
            rows[e].push((f, p));
        }
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(f, _)| f);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(AlignError::Parse {
                    line: 0,
                    message: "duplicate table entry".into(),
                });
            }
            for (f, p) in row {
                cols.push(f);
                probs.push(p);
            }
            row_start.push(cols.len());
        }
        Ok(Self::from_parts(src_words, tgt_words, row_start, cols, probs))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AlignError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|source| AlignError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AlignError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| AlignError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_tsv(&text)
    }
}
