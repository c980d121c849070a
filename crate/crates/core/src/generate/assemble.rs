use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::NbestEntry;

#[derive(Debug, Error, PartialEq)]
pub enum AssembleError {
    #[error("{method}: example {example} has no rank-{rank} hypothesis")]
    MissingRank { method: String, example: usize, rank: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "1best")]
    OneBest,
    #[serde(rename = "3best")]
    ThreeBest,
}

impl Policy {
    pub fn ranks(self) -> usize {
        match self {
            Policy::OneBest => 1,
            Policy::ThreeBest => 3,
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "1best" => Ok(Self::OneBest),
            "3best" => Ok(Self::ThreeBest),
            other => Err(format!("unknown policy `{other}` (expected 1best or 3best)")),
        }
    }
}

/// Sidecar row: 1-based output line, 0-based source example, method, rank
/// (0 for real utterances).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub line: usize,
    pub source_example: usize,
    pub method: String,
    pub rank: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentedCorpus {
    pub utterances: Vec<Vec<String>>,
    pub provenance: Vec<Provenance>,
    pub real: usize,
    pub generated: usize,
}

impl AugmentedCorpus {
    pub fn provenance_tsv(&self) -> String {
        self.provenance
            .iter()
            .map(|p| format!("{}\t{}\t{}\t{}\n", p.line, p.source_example, p.method, p.rank))
            .collect()
    }
}

/// Real utterances followed by the top `policy.ranks()` hypotheses of every
/// example in each generated set, in example then rank order.
pub fn assemble_augmented_corpus(
    real: &[Vec<String>],
    generated: &[(String, Vec<NbestEntry>)],
    policy: Policy,
) -> Result<AugmentedCorpus, AssembleError> {
    assemble(real, generated, policy, false)
}

/// Like [`assemble_augmented_corpus`], but an example with fewer than
/// `policy.ranks()` hypotheses contributes what it has. Suits constrained
/// baselines whose candidate count varies per pair.
pub fn assemble_available(real: &[Vec<String>], generated: &[(String, Vec<NbestEntry>)], policy: Policy) -> AugmentedCorpus {
    assemble(real, generated, policy, true).expect("lenient assembly cannot fail")
}

fn assemble(
    real: &[Vec<String>],
    generated: &[(String, Vec<NbestEntry>)],
    policy: Policy,
    lenient: bool,
) -> Result<AugmentedCorpus, AssembleError> {
    let mut out = AugmentedCorpus::default();
    for (i, u) in real.iter().enumerate() {
        out.utterances.push(u.clone());
        out.provenance.push(Provenance {
            line: out.utterances.len(),
            source_example: i,
            method: "real".into(),
            rank: 0,
        });
    }
    out.real = real.len();
    for (method, entries) in generated {
        let mut by_example: BTreeMap<usize, BTreeMap<usize, &NbestEntry>> = BTreeMap::new();
        for e in entries {
            by_example.entry(e.example).or_default().entry(e.rank).or_insert(e);
        }
        for (&example, ranks) in &by_example {
            for rank in 1..=policy.ranks() {
                let Some(e) = ranks.get(&rank) else {
                    if lenient {
                        break;
                    }
                    return Err(AssembleError::MissingRank {
                        method: method.clone(),
                        example,
                        rank,
                    });
                };
                out.utterances.push(e.tokens.clone());
                out.provenance.push(Provenance {
                    line: out.utterances.len(),
                    source_example: example,
                    method: method.clone(),
                    rank,
                });
                out.generated += 1;
            }
        }
    }
    Ok(out)
}
