//! Word alignment: IBM Model 1 with an optional diagonal positional prior,
//! Viterbi decoding, symmetrization and Pharaoh I/O.

mod em;
mod table;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

pub use em::{
    em_iteration, train_aligner, train_bidirectional, AlignCorpus, AlignModel, Aligner, AlignerConfig,
    BidirectionalAligner, Prior, DEFAULT_LAMBDA_GRID,
};
pub use table::{TranslationTable, NULL_TOKEN};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("alignment corpus is empty")]
    EmptyCorpus,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("table does not belong to this corpus")]
    VocabularyMismatch,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrization {
    Intersection,
    Union,
}

impl std::str::FromStr for Symmetrization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "intersection" => Ok(Self::Intersection),
            "union" => Ok(Self::Union),
            other => Err(format!("unknown symmetrization `{other}`")),
        }
    }
}

/// Set of `(source index, target index)` links.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Alignment {
    links: BTreeSet<(usize, usize)>,
}

impl Alignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_links(links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            links: links.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        self.links.insert((i, j))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Links in `(i, j)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().copied()
    }

    pub fn transpose(&self) -> Self {
        Self::from_links(self.iter().map(|(i, j)| (j, i)))
    }

    /// Target indices linked to source position `i`, ascending.
    pub fn targets_of(&self, i: usize) -> Vec<usize> {
        self.links.range((i, 0)..=(i, usize::MAX)).map(|&(_, j)| j).collect()
    }

    pub fn within(&self, n: usize, m: usize) -> bool {
        self.iter().all(|(i, j)| i < n && j < m)
    }

    /// Parses one Pharaoh line (`i-j` pairs separated by spaces).
    pub fn parse_pharaoh(line: &str) -> Result<Self, String> {
        let mut a = Self::new();
        for tok in line.split_whitespace() {
            let (i, j) = tok
                .split_once('-')
                .ok_or_else(|| format!("`{tok}` is not an i-j pair"))?;
            let i = i.parse().map_err(|_| format!("bad source index in `{tok}`"))?;
            let j = j.parse().map_err(|_| format!("bad target index in `{tok}`"))?;
            a.insert(i, j);
        }
        Ok(a)
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (i, j)) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{i}-{j}")?;
        }
        Ok(())
    }
}

/// Combines a forward alignment with a reverse one whose links are
/// `(target, source)`.
pub fn symmetrize(fwd: &Alignment, rev: &Alignment, method: Symmetrization) -> Alignment {
    let rev = rev.transpose();
    let links = match method {
        Symmetrization::Intersection => fwd.links.intersection(&rev.links).copied().collect(),
        Symmetrization::Union => fwd.links.union(&rev.links).copied().collect(),
    };
    Alignment { links }
}

pub fn write_pharaoh(path: impl AsRef<Path>, alignments: &[Alignment]) -> Result<(), AlignError> {
    let path = path.as_ref();
    let mut out = String::new();
    for a in alignments {
        out.push_str(&a.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| AlignError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_pharaoh(path: impl AsRef<Path>) -> Result<Vec<Alignment>, AlignError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AlignError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .map(|(n, l)| Alignment::parse_pharaoh(l).map_err(|message| AlignError::Parse { line: n + 1, message }))
        .collect()
}
