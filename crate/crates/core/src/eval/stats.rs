use serde::{Deserialize, Serialize};

use crate::corpus::Language;

/// Code-switching statistics over a tokenized corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub utterances: usize,
    /// Utterances with at least one token; the averages run over these.
    pub nonempty: usize,
    pub tokens: usize,
    pub segments: usize,
    pub switches: usize,
    /// Tokens per segment over the whole corpus.
    pub avg_segment_length: f64,
    pub avg_switches: f64,
    /// Set when no utterance had tokens, so the averages are undefined
    /// and reported as 0.
    pub undefined: bool,
}

impl CorpusStats {
    pub fn to_tsv(&self) -> String {
        format!(
            "utterances\t{}\ntokens\t{}\nsegments\t{}\nswitches\t{}\navg_segment\t{:.4}\navg_switches\t{:.4}\nundefined\t{}\n",
            self.utterances, self.tokens, self.segments, self.switches, self.avg_segment_length, self.avg_switches, self.undefined
        )
    }
}

/// Lengths of the maximal same-language runs of one utterance. Tokens of
/// no language join the run they sit in (a leading one joins the first).
pub fn segment_lengths(utterance: &[String], lang: impl Fn(&str) -> Language) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut current: Option<Language> = None;
    let mut pending = 0;
    for t in utterance {
        match lang(t) {
            Language::Other => match out.last_mut() {
                Some(n) => *n += 1,
                None => pending += 1,
            },
            l if current == Some(l) => *out.last_mut().expect("open segment") += 1,
            l => {
                current = Some(l);
                out.push(1 + std::mem::take(&mut pending));
            }
        }
    }
    if pending > 0 {
        out.push(pending);
    }
    out
}

pub fn corpus_stats(corpus: &[Vec<String>], lang: impl Fn(&str) -> Language) -> CorpusStats {
    let mut s = CorpusStats {
        utterances: corpus.len(),
        ..CorpusStats::default()
    };
    for u in corpus.iter().filter(|u| !u.is_empty()) {
        let segs = segment_lengths(u, &lang);
        s.nonempty += 1;
        s.tokens += u.len();
        s.segments += segs.len();
        s.switches += segs.len() - 1;
    }
    if s.nonempty == 0 {
        s.undefined = true;
    } else {
        s.avg_segment_length = s.tokens as f64 / s.segments as f64;
        s.avg_switches = s.switches as f64 / s.nonempty as f64;
    }
    s
}
