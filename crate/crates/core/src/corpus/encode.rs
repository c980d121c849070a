use super::vocab::{Vocabulary, BOS, EOS, SEP_TOKEN, UNK};
use super::ParallelExample;

/// Model-ready ids for one example.
///
/// Source OOVs get per-example extended ids `|V| + k`, numbered by first
/// occurrence, so the copy mechanism can point at them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    /// `l1 ⊕ [SEP] ⊕ l2`.
    pub src_ids: Vec<usize>,
    pub src_extended_ids: Vec<usize>,
    pub src_oovs: Vec<String>,
    /// `[BOS] ⊕ cs ⊕ [EOS]` when a reference exists.
    pub tgt_ids: Option<Vec<usize>>,
    /// Target with in-source OOVs mapped to their extended slots; OOVs
    /// absent from the source stay UNK.
    pub tgt_extended_ids: Option<Vec<usize>>,
    pub vocab_size: usize,
}

impl EncodedExample {
    pub fn extended_vocab_size(&self) -> usize {
        self.vocab_size + self.src_oovs.len()
    }
}

pub fn encode_example(ex: &ParallelExample, vocab: &Vocabulary) -> EncodedExample {
    let v = vocab.len();
    let sep = SEP_TOKEN.to_string();
    let src_tokens = ex.l1.iter().chain(std::iter::once(&sep)).chain(&ex.l2);

    let mut src_ids = Vec::new();
    let mut src_extended_ids = Vec::new();
    let mut src_oovs: Vec<String> = Vec::new();
    for (pos, t) in src_tokens.enumerate() {
        if pos == ex.l1.len() {
            let id = vocab.sep_id();
            src_ids.push(id);
            src_extended_ids.push(id);
            continue;
        }
        match vocab.id(t) {
            Some(id) => {
                src_ids.push(id);
                src_extended_ids.push(id);
            }
            None => {
                let k = src_oovs.iter().position(|o| o == t).unwrap_or_else(|| {
                    src_oovs.push(t.clone());
                    src_oovs.len() - 1
                });
                src_ids.push(UNK);
                src_extended_ids.push(v + k);
            }
        }
    }

    let (tgt_ids, tgt_extended_ids) = match &ex.cs {
        Some(cs) => {
            let mut ids = vec![BOS];
            let mut ext = vec![BOS];
            for t in cs {
                match vocab.id(t) {
                    Some(id) => {
                        ids.push(id);
                        ext.push(id);
                    }
                    None => {
                        ids.push(UNK);
                        ext.push(src_oovs.iter().position(|o| o == t).map_or(UNK, |k| v + k));
                    }
                }
            }
            ids.push(EOS);
            ext.push(EOS);
            (Some(ids), Some(ext))
        }
        None => (None, None),
    };

    EncodedExample {
        src_ids,
        src_extended_ids,
        src_oovs,
        tgt_ids,
        tgt_extended_ids,
        vocab_size: v,
    }
}

/// Maps extended ids back to tokens through the vocabulary and the
/// example's OOV list. Ids past both are rendered as UNK's surface form.
pub fn decode_extended(ids: &[usize], vocab: &Vocabulary, oovs: &[String]) -> Vec<String> {
    ids.iter()
        .map(|&id| match vocab.token(id) {
            Some(t) => t.to_string(),
            None => oovs
                .get(id - vocab.len())
                .cloned()
                .unwrap_or_else(|| vocab.token(UNK).unwrap_or("<unk>").to_string()),
        })
        .collect()
}
