use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::{TranslationTable, NULL_TOKEN};
use super::{symmetrize, AlignError, Alignment, Symmetrization};
use crate::parallel::map_ordered;

pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [2.0, 4.0, 6.0, 8.0];

/// Pairs per E-step work unit. Fixed so that summation order, and hence
/// every bit of the result, is independent of the thread count.
const CHUNK: usize = 64;

/// Interned sentence pairs. Source ids start at 1; 0 is NULL.
#[derive(Clone, Debug)]
pub struct AlignCorpus {
    src_words: Vec<String>,
    tgt_words: Vec<String>,
    pairs: Vec<(Vec<u32>, Vec<u32>)>,
}

impl AlignCorpus {
    pub fn new(pairs: &[(Vec<String>, Vec<String>)]) -> Result<Self, AlignError> {
        if pairs.is_empty() {
            return Err(AlignError::EmptyCorpus);
        }
        let mut src_words = vec![NULL_TOKEN.to_string()];
        let mut tgt_words = Vec::new();
        let mut src_index = HashMap::new();
        let mut tgt_index = HashMap::new();
        let intern = |w: &String, words: &mut Vec<String>, index: &mut HashMap<String, u32>| {
            *index.entry(w.clone()).or_insert_with(|| {
                words.push(w.clone());
                (words.len() - 1) as u32
            })
        };
        let pairs = pairs
            .iter()
            .map(|(s, t)| {
                let s = s.iter().map(|w| intern(w, &mut src_words, &mut src_index)).collect();
                let t = t.iter().map(|w| intern(w, &mut tgt_words, &mut tgt_index)).collect();
                (s, t)
            })
            .collect();
        // NULL must not collide with a real source word.
        src_words[0] = NULL_TOKEN.to_string();
        Ok(Self {
            src_words,
            tgt_words,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Uniform table over co-occurring pairs (NULL co-occurs with everything).
    pub fn uniform_table(&self) -> TranslationTable {
        let mut rows: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); self.src_words.len()];
        for (s, t) in &self.pairs {
            for &f in t {
                rows[0].insert(f);
                for &e in s {
                    rows[e as usize].insert(f);
                }
            }
        }
        TranslationTable::uniform(
            self.src_words.clone(),
            self.tgt_words.clone(),
            rows.into_iter().map(|r| r.into_iter().collect()).collect(),
        )
    }
}

/// Alignment prior `p(i | j, n, m)` over NULL and the `n` source positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Uniform,
    /// NULL keeps `1/(n+1)`; the rest is spread `∝ exp(−λ·|i/n − j/m|)`
    /// with 1-based positions.
    Diagonal { lambda: f64 },
}

impl Prior {
    /// Fills `out` with `n + 1` weights, NULL first.
    pub fn weights(&self, n: usize, m: usize, j: usize, out: &mut Vec<f64>) {
        out.clear();
        let null = 1.0 / (n + 1) as f64;
        out.push(null);
        match *self {
            Prior::Uniform => out.extend(std::iter::repeat_n(null, n)),
            Prior::Diagonal { lambda } => {
                let jm = (j + 1) as f64 / m as f64;
                let start = out.len();
                out.extend((0..n).map(|i| (-lambda * ((i + 1) as f64 / n as f64 - jm).abs()).exp()));
                let z: f64 = out[start..].iter().sum();
                let scale = (1.0 - null) / z;
                for w in &mut out[start..] {
                    *w *= scale;
                }
            }
        }
    }
}

fn check_table(corpus: &AlignCorpus, table: &TranslationTable) -> Result<(), AlignError> {
    if corpus.src_words != table.src_words || corpus.tgt_words != table.tgt_words {
        return Err(AlignError::VocabularyMismatch);
    }
    Ok(())
}

/// Expected counts (or just the log-likelihood) for one chunk of pairs.
fn e_step(pairs: &[(Vec<u32>, Vec<u32>)], table: &TranslationTable, prior: Prior, counts: Option<&mut [f64]>) -> f64 {
    let mut ll = 0.0;
    let mut w = Vec::new();
    let mut post = Vec::new();
    let mut counts = counts;
    for (s, t) in pairs {
        let n = s.len();
        for (j, &f) in t.iter().enumerate() {
            prior.weights(n, t.len(), j, &mut w);
            post.clear();
            post.push((0, w[0] * table.prob_ids(0, f)));
            for (i, &e) in s.iter().enumerate() {
                post.push((e as usize, w[i + 1] * table.prob_ids(e as usize, f)));
            }
            let z: f64 = post.iter().map(|p| p.1).sum();
            ll += z.ln();
            if let Some(c) = counts.as_deref_mut() {
                for &(e, p) in &post {
                    if p > 0.0 {
                        let k = table.slot(e, f).expect("co-occurring pair");
                        c[k] += p / z;
                    }
                }
            }
        }
    }
    ll
}

/// Corpus log-likelihood `Σ ln Σ_i p(i) t(f_j | e_i)`.
pub fn log_likelihood(corpus: &AlignCorpus, table: &TranslationTable, prior: Prior, threads: usize) -> Result<f64, AlignError> {
    check_table(corpus, table)?;
    let chunks: Vec<_> = corpus.pairs.chunks(CHUNK).collect();
    Ok(map_ordered(&chunks, threads, |_, c| e_step(c, table, prior, None)).into_iter().sum())
}

/// One EM step. Returns the re-estimated table and the log-likelihood of
/// the corpus under the input table.
pub fn em_iteration(
    corpus: &AlignCorpus,
    table: &TranslationTable,
    prior: Prior,
    threads: usize,
) -> Result<(TranslationTable, f64), AlignError> {
    if corpus.is_empty() {
        return Err(AlignError::EmptyCorpus);
    }
    check_table(corpus, table)?;
    let chunks: Vec<_> = corpus.pairs.chunks(CHUNK).collect();
    let partial = map_ordered(&chunks, threads, |_, c| {
        let mut counts = vec![0.0; table.len()];
        let ll = e_step(c, table, prior, Some(&mut counts));
        (counts, ll)
    });
    let mut counts = vec![0.0; table.len()];
    let mut ll = 0.0;
    for (c, l) in partial {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        ll += l;
    }
    let mut probs = table.probs.clone();
    for e in 0..table.num_src() {
        let range = table.row_start[e]..table.row_start[e + 1];
        let z: f64 = counts[range.clone()].iter().sum();
        if z > 0.0 {
            for k in range {
                probs[k] = counts[k] / z;
            }
        }
    }
    Ok((table.with_probs(probs), ll))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignModel {
    Ibm1,
    Diagonal,
}

impl std::str::FromStr for AlignModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ibm1" => Ok(Self::Ibm1),
            "diagonal" => Ok(Self::Diagonal),
            other => Err(format!("unknown aligner model `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignerConfig {
    pub iterations: usize,
    pub model: AlignModel,
    pub lambda_grid: Vec<f64>,
    pub threads: usize,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            model: AlignModel::Ibm1,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            threads: 1,
        }
    }
}

/// A trained direction: table plus positional prior.
#[derive(Clone, Debug, PartialEq)]
pub struct Aligner {
    pub table: TranslationTable,
    pub prior: Prior,
    /// Log-likelihood before each iteration, then after the last.
    pub log_likelihoods: Vec<f64>,
}

fn run_em(corpus: &AlignCorpus, prior: Prior, cfg: &AlignerConfig) -> Result<Aligner, AlignError> {
    let mut table = corpus.uniform_table();
    let mut lls = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..cfg.iterations {
        let (next, ll) = em_iteration(corpus, &table, prior, cfg.threads)?;
        lls.push(ll);
        table = next;
    }
    lls.push(log_likelihood(corpus, &table, prior, cfg.threads)?);
    Ok(Aligner {
        table,
        prior,
        log_likelihoods: lls,
    })
}

/// Trains `t(target | source)`. The diagonal model runs EM once per grid
/// value of λ and keeps the one with the highest final likelihood (first
/// wins on ties).
pub fn train_aligner(pairs: &[(Vec<String>, Vec<String>)], cfg: &AlignerConfig) -> Result<Aligner, AlignError> {
    if cfg.iterations == 0 {
        return Err(AlignError::NoIterations);
    }
    let corpus = AlignCorpus::new(pairs)?;
    match cfg.model {
        AlignModel::Ibm1 => run_em(&corpus, Prior::Uniform, cfg),
        AlignModel::Diagonal => {
            let mut best: Option<Aligner> = None;
            for &lambda in &cfg.lambda_grid {
                let a = run_em(&corpus, Prior::Diagonal { lambda }, cfg)?;
                let better = best
                    .as_ref()
                    .is_none_or(|b| a.log_likelihoods.last() > b.log_likelihoods.last());
                if better {
                    best = Some(a);
                }
            }
            best.ok_or_else(|| AlignError::Parse {
                line: 0,
                message: "empty lambda grid".into(),
            })
        }
    }
}

impl Aligner {
    /// Each target word links to its most probable source position; NULL
    /// (no link) only when strictly better, and ties go to the smaller
    /// source index. Words with no nonzero candidate stay unlinked.
    pub fn viterbi(&self, src: &[String], tgt: &[String]) -> Alignment {
        let mut a = Alignment::new();
        let mut w = Vec::new();
        let src_ids: Vec<Option<usize>> = src.iter().map(|s| self.table.src_id(s).filter(|&e| e != 0)).collect();
        for (j, f) in tgt.iter().enumerate() {
            let Some(f) = self.table.tgt_id(f) else { continue };
            self.prior.weights(src.len(), tgt.len(), j, &mut w);
            let mut best: Option<(usize, f64)> = None;
            for (i, e) in src_ids.iter().enumerate() {
                let p = e.map_or(0.0, |e| w[i + 1] * self.table.prob_ids(e, f));
                if p > 0.0 && best.is_none_or(|b| p > b.1) {
                    best = Some((i, p));
                }
            }
            let null = w[0] * self.table.prob_ids(0, f);
            if let Some((i, p)) = best {
                if p >= null {
                    a.insert(i, j);
                }
            }
        }
        a
    }

    fn header(&self) -> String {
        match self.prior {
            Prior::Uniform => "# prior\tuniform\n".to_string(),
            Prior::Diagonal { lambda } => format!("# prior\tdiagonal\t{lambda}\n"),
        }
    }

    /// Table TSV preceded by a `# prior` comment line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AlignError> {
        let path = path.as_ref();
        std::fs::write(path, self.header() + &self.table.to_tsv()).map_err(|source| AlignError::Io {
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
        let first = text.lines().next().unwrap_or("");
        let parts: Vec<&str> = first.split('\t').collect();
        let prior = match parts[..] {
            ["# prior", "uniform"] => Prior::Uniform,
            ["# prior", "diagonal", l] => Prior::Diagonal {
                lambda: l.parse().map_err(|_| AlignError::Parse {
                    line: 1,
                    message: format!("bad lambda `{l}`"),
                })?,
            },
            _ => Prior::Uniform,
        };
        Ok(Self {
            table: TranslationTable::parse_tsv(&text)?,
            prior,
            log_likelihoods: Vec::new(),
        })
    }
}

/// Forward (L1 → L2) and reverse (L2 → L1) aligners.
#[derive(Clone, Debug, PartialEq)]
pub struct BidirectionalAligner {
    pub forward: Aligner,
    pub reverse: Aligner,
}

pub fn train_bidirectional(pairs: &[(Vec<String>, Vec<String>)], cfg: &AlignerConfig) -> Result<BidirectionalAligner, AlignError> {
    let flipped: Vec<_> = pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
    Ok(BidirectionalAligner {
        forward: train_aligner(pairs, cfg)?,
        reverse: train_aligner(&flipped, cfg)?,
    })
}

impl BidirectionalAligner {
    /// Links `(l1 index, l2 index)`.
    pub fn align(&self, l1: &[String], l2: &[String], method: Symmetrization) -> Alignment {
        symmetrize(&self.forward.viterbi(l1, l2), &self.reverse.viterbi(l2, l1), method)
    }
}
