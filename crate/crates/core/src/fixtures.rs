//! Seeded synthetic bilingual corpus with gold alignments, code-switched
//! references and POS tags.
//!
//! L1 words are Latin-script syllable strings; each has a single CJK
//! character as its L2 translation. L1 clauses run
//! `Subj Verb Obj [PP] [Adv]`; L2 clauses run `Subj [Adv] [PP] Verb Obj`,
//! with `Det Noun Adj` noun phrases and postpositions, so alignments cross.
//! A reference switches whole constituents into L2 inside the L1 frame.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::Alignment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    Det,
    Adj,
    Noun,
    Verb,
    Adp,
    Pron,
    Adv,
}

impl Pos {
    pub const ALL: [Pos; 7] = [Pos::Det, Pos::Adj, Pos::Noun, Pos::Verb, Pos::Adp, Pos::Pron, Pos::Adv];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Det => "DET",
            Pos::Adj => "ADJ",
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adp => "ADP",
            Pos::Pron => "PRON",
            Pos::Adv => "ADV",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub seed: u64,
    pub size: usize,
    /// Multiplies every per-constituent switch probability; 0 yields
    /// monolingual L1 references.
    pub switch_scale: f64,
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub adverbs: usize,
    /// Zipf exponent for word choice within a category.
    pub zipf: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            size: 2000,
            switch_scale: 1.0,
            nouns: 240,
            verbs: 40,
            adjectives: 40,
            adverbs: 12,
            zipf: 1.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub l1: String,
    pub l2: String,
    pub pos: Pos,
}

/// Lexicon and sampling weights.
#[derive(Clone, Debug)]
pub struct ToyGrammar {
    pub config: FixtureConfig,
    pub lexicon: Vec<LexEntry>,
    by_pos: HashMap<Pos, (Vec<usize>, WeightedIndex<f64>)>,
    tags: HashMap<String, Pos>,
}

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
/// First code point of the L2 character pool.
const CJK_BASE: u32 = 0x4E00;
const CJK_SPAN: u32 = 0x5000;

impl ToyGrammar {
    pub fn new(config: FixtureConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6c65_7869_636f_6e00);
        let counts = [
            (Pos::Det, 4),
            (Pos::Adj, config.adjectives),
            (Pos::Noun, config.nouns),
            (Pos::Verb, config.verbs),
            (Pos::Adp, 8),
            (Pos::Pron, 6),
            (Pos::Adv, config.adverbs),
        ];
        let total: usize = counts.iter().map(|c| c.1).sum();
        let mut chars: Vec<u32> = (0..CJK_SPAN).collect();
        chars.shuffle(&mut rng);
        let mut seen = HashSet::new();
        let mut lexicon = Vec::with_capacity(total);
        for (pos, n) in counts {
            for _ in 0..n.max(1) {
                let word = loop {
                    let syll = match pos {
                        Pos::Det | Pos::Adp | Pos::Pron => rng.gen_range(1..=2),
                        _ => rng.gen_range(2..=3),
                    };
                    let w: String = (0..syll)
                        .flat_map(|_| [*CONSONANTS.choose(&mut rng).unwrap(), *VOWELS.choose(&mut rng).unwrap()])
                        .collect();
                    if seen.insert(w.clone()) {
                        break w;
                    }
                };
                let l2 = char::from_u32(CJK_BASE + chars[lexicon.len()]).expect("CJK code point").to_string();
                lexicon.push(LexEntry { l1: word, l2, pos });
            }
        }
        let mut by_pos = HashMap::new();
        for pos in Pos::ALL {
            let ids: Vec<usize> = (0..lexicon.len()).filter(|&i| lexicon[i].pos == pos).collect();
            let w: Vec<f64> = (1..=ids.len()).map(|r| (r as f64).powf(-config.zipf)).collect();
            by_pos.insert(pos, (ids, WeightedIndex::new(w).expect("non-empty category")));
        }
        let tags = lexicon
            .iter()
            .flat_map(|e| [(e.l1.clone(), e.pos), (e.l2.clone(), e.pos)])
            .collect();
        Self {
            config,
            lexicon,
            by_pos,
            tags,
        }
    }

    /// Category of a word from either language.
    pub fn tag(&self, word: &str) -> Option<Pos> {
        self.tags.get(word).copied()
    }

    fn word<R: Rng>(&self, pos: Pos, rng: &mut R) -> usize {
        let (ids, dist) = &self.by_pos[&pos];
        ids[dist.sample(rng)]
    }

    fn noun_phrase<R: Rng>(&self, rng: &mut R) -> Constituent {
        let mut l1 = vec![self.word(Pos::Det, rng)];
        let adj = rng.gen_bool(0.5).then(|| self.word(Pos::Adj, rng));
        l1.extend(adj);
        l1.push(self.word(Pos::Noun, rng));
        // L2: Det Noun Adj.
        let l2 = match l1[..] {
            [d, a, n] => vec![d, n, a],
            _ => l1.clone(),
        };
        Constituent { l1, l2 }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> FixtureExample {
        let subj = if rng.gen_bool(0.4) {
            Constituent::single(self.word(Pos::Pron, rng))
        } else {
            self.noun_phrase(rng)
        };
        let verb = Constituent::single(self.word(Pos::Verb, rng));
        let obj = self.noun_phrase(rng);
        let pp = rng.gen_bool(0.5).then(|| {
            let adp = self.word(Pos::Adp, rng);
            let np = self.noun_phrase(rng);
            let mut l1 = vec![adp];
            l1.extend(&np.l1);
            let mut l2 = np.l2.clone();
            l2.push(adp);
            Constituent { l1, l2 }
        });
        let adv = rng.gen_bool(0.3).then(|| Constituent::single(self.word(Pos::Adv, rng)));

        let mut l1_order: Vec<(Slot, &Constituent)> = vec![(Slot::Subj, &subj), (Slot::Verb, &verb), (Slot::Obj, &obj)];
        l1_order.extend(pp.as_ref().map(|c| (Slot::Pp, c)));
        l1_order.extend(adv.as_ref().map(|c| (Slot::Adv, c)));
        let mut l2_order: Vec<(Slot, &Constituent)> = vec![(Slot::Subj, &subj)];
        l2_order.extend(adv.as_ref().map(|c| (Slot::Adv, c)));
        l2_order.extend(pp.as_ref().map(|c| (Slot::Pp, c)));
        l2_order.push((Slot::Verb, &verb));
        l2_order.push((Slot::Obj, &obj));

        let l1_ids: Vec<usize> = l1_order.iter().flat_map(|(_, c)| c.l1.iter().copied()).collect();
        let l2_ids: Vec<usize> = l2_order.iter().flat_map(|(_, c)| c.l2.iter().copied()).collect();
        let mut alignment = Alignment::new();
        for (i, a) in l1_ids.iter().enumerate() {
            let j = l2_ids.iter().position(|b| b == a).expect("every word is translated");
            alignment.insert(i, j);
        }

        let scale = self.config.switch_scale;
        let mut cs = Vec::new();
        for (slot, c) in &l1_order {
            let p = (slot.switch_prob() * scale).clamp(0.0, 1.0);
            if p > 0.0 && rng.gen_bool(p) {
                cs.extend(c.l2.iter().map(|&i| (self.lexicon[i].l2.clone(), self.lexicon[i].pos)));
            } else {
                cs.extend(c.l1.iter().map(|&i| (self.lexicon[i].l1.clone(), self.lexicon[i].pos)));
            }
        }
        let l1 = |ids: &[usize]| ids.iter().map(|&i| self.lexicon[i].l1.clone()).collect::<Vec<_>>();
        let l2 = |ids: &[usize]| ids.iter().map(|&i| self.lexicon[i].l2.clone()).collect::<Vec<_>>();
        let pos = |ids: &[usize]| ids.iter().map(|&i| self.lexicon[i].pos).collect::<Vec<_>>();
        let (cs, cs_pos): (Vec<String>, Vec<Pos>) = cs.into_iter().unzip();
        FixtureExample {
            l1: l1(&l1_ids),
            l2: l2(&l2_ids),
            l1_pos: pos(&l1_ids),
            l2_pos: pos(&l2_ids),
            cs,
            cs_pos,
            alignment,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Subj,
    Verb,
    Obj,
    Pp,
    Adv,
}

impl Slot {
    fn switch_prob(self) -> f64 {
        match self {
            Slot::Subj => 0.15,
            Slot::Verb => 0.2,
            Slot::Obj => 0.45,
            Slot::Pp => 0.3,
            Slot::Adv => 0.25,
        }
    }
}

#[derive(Clone, Debug)]
struct Constituent {
    l1: Vec<usize>,
    l2: Vec<usize>,
}

impl Constituent {
    fn single(i: usize) -> Self {
        Self { l1: vec![i], l2: vec![i] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureExample {
    pub l1: Vec<String>,
    pub l2: Vec<String>,
    pub cs: Vec<String>,
    pub l1_pos: Vec<Pos>,
    pub l2_pos: Vec<Pos>,
    pub cs_pos: Vec<Pos>,
    /// Gold `(l1 index, l2 index)` links.
    pub alignment: Alignment,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub grammar: ToyGrammar,
    pub examples: Vec<FixtureExample>,
}

/// Draws `config.size` examples; identical configs give identical output.
pub fn generate_fixture(config: FixtureConfig) -> Fixture {
    let grammar = ToyGrammar::new(config.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let examples = (0..config.size).map(|_| grammar.sample(&mut rng)).collect();
    Fixture { grammar, examples }
}

fn join_lines<'a>(rows: impl Iterator<Item = String> + 'a) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn tags_line(tags: &[Pos]) -> String {
    tags.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(" ")
}

impl Fixture {
    /// File name → contents, in the corpus file formats.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let ex = &self.examples;
        vec![
            ("parallel.tsv", join_lines(ex.iter().map(|e| format!("{}\t{}\t{}", e.l1.join(" "), e.l2.join(" "), e.cs.join(" "))))),
            ("gold.align", join_lines(ex.iter().map(|e| e.alignment.to_string()))),
            ("cs.txt", join_lines(ex.iter().map(|e| e.cs.join(" ")))),
            ("cs.pos", join_lines(ex.iter().map(|e| tags_line(&e.cs_pos)))),
            ("l1.pos", join_lines(ex.iter().map(|e| tags_line(&e.l1_pos)))),
            ("l2.pos", join_lines(ex.iter().map(|e| tags_line(&e.l2_pos)))),
            (
                "lexicon.tsv",
                join_lines(self.grammar.lexicon.iter().map(|e| format!("{}\t{}\t{}", e.l1, e.l2, e.pos))),
            ),
        ]
    }

    /// Writes [`Fixture::files`] into `dir`, each name prefixed with
    /// `prefix.` when `prefix` is non-empty.
    pub fn write(&self, dir: impl AsRef<Path>, prefix: &str) -> std::io::Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, body) in self.files() {
            let p = if prefix.is_empty() { dir.join(name) } else { dir.join(format!("{prefix}.{name}")) };
            std::fs::write(&p, body)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Sentence pairs related by a bijective word renaming, with distinct words
/// inside each sentence, so the gold alignment is the identity.
pub fn renaming_corpus(seed: u64, pairs: usize, vocab: usize, max_len: usize) -> Vec<(Vec<String>, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<usize> = (0..vocab).collect();
    let mut renaming = words.clone();
    renaming.shuffle(&mut rng);
    (0..pairs)
        .map(|_| {
            let len = rng.gen_range(1..=max_len.min(vocab));
            let s: Vec<usize> = words.choose_multiple(&mut rng, len).copied().collect();
            (
                s.iter().map(|w| format!("w{w}")).collect(),
                s.iter().map(|&w| format!("r{}", renaming[w])).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{language_id, Language};

    fn small(seed: u64, scale: f64) -> Fixture {
        generate_fixture(FixtureConfig {
            seed,
            size: 300,
            switch_scale: scale,
            ..FixtureConfig::default()
        })
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(small(4, 1.0).files(), small(4, 1.0).files());
        assert_ne!(small(4, 1.0).files(), small(5, 1.0).files());
    }

    #[test]
    fn no_switching_gives_l1_references() {
        for e in small(1, 0.0).examples {
            assert_eq!(e.cs, e.l1);
        }
    }

    #[test]
    fn structural_invariants() {
        let f = small(2, 1.0);
        let l1_of: HashMap<&str, &str> = f.grammar.lexicon.iter().map(|e| (e.l1.as_str(), e.l2.as_str())).collect();
        let l2s: HashSet<&str> = f.grammar.lexicon.iter().map(|e| e.l2.as_str()).collect();
        assert_eq!(l2s.len(), f.grammar.lexicon.len(), "lexicon is bijective");
        let mut crossing = 0;
        for e in &f.examples {
            assert!((3..=12).contains(&e.l1.len()));
            assert_eq!(e.l1.len(), e.l2.len());
            assert_eq!(e.cs.len(), e.cs_pos.len());
            for (i, j) in e.alignment.iter() {
                assert_eq!(l1_of[e.l1[i].as_str()], e.l2[j]);
            }
            let closure: HashSet<&String> = e.l1.iter().chain(&e.l2).collect();
            assert!(e.cs.iter().all(|t| closure.contains(t)));
            assert!(e.l1.iter().all(|t| language_id(t) == Language::L1));
            assert!(e.l2.iter().all(|t| language_id(t) == Language::L2));
            let links: Vec<_> = e.alignment.iter().collect();
            if links.iter().any(|a| links.iter().any(|b| a.0 < b.0 && a.1 > b.1)) {
                crossing += 1;
            }
            for (k, t) in e.cs.iter().enumerate() {
                assert_eq!(f.grammar.tag(t), Some(e.cs_pos[k]));
            }
        }
        assert!(crossing > 0);
        assert!(f.examples.iter().any(|e| e.cs != e.l1));
    }

    #[test]
    fn renaming_corpus_shape() {
        let c = renaming_corpus(0, 50, 30, 8);
        assert_eq!(c.len(), 50);
        for (a, b) in &c {
            assert_eq!(a.len(), b.len());
            assert!(a.len() <= 8);
            let d: HashSet<_> = a.iter().collect();
            assert_eq!(d.len(), a.len());
        }
    }

    #[test]
    fn files_round_trip_through_corpus_parsers() {
        let f = small(3, 1.0);
        let dir = tempfile::tempdir().unwrap();
        f.write(dir.path(), "").unwrap();
        let parsed = crate::corpus::load_parallel_tsv(dir.path().join("parallel.tsv"), &Default::default()).unwrap();
        assert_eq!(parsed.len(), 300);
        assert_eq!(parsed[0].cs.as_ref().unwrap(), &f.examples[0].cs);
        let cs: Vec<Vec<String>> = f.examples.iter().map(|e| e.cs.clone()).collect();
        let tags = crate::corpus::load_pos_file(dir.path().join("cs.pos"), &cs).unwrap();
        assert_eq!(tags[0][0], f.examples[0].cs_pos[0].as_str());
        let gold = crate::align::read_pharaoh(dir.path().join("gold.align")).unwrap();
        assert_eq!(gold[7], f.examples[7].alignment);
    }
}
