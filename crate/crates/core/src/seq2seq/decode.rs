use crate::corpus::{decode_extended, EncodedExample, Vocabulary, BOS, EOS, PAD};
use crate::generate::NbestEntry;
use crate::parallel::map_ordered;

use super::beam::{beam_search, greedy_decode, BeamError};
use super::model::Seq2Seq;

/// Beam-decodes every example into `n_best` ranked entries each, with
/// copied OOVs restored to their surface form. PAD, BOS and the separator
/// are never emitted.
pub fn decode_nbest(
    model: &Seq2Seq,
    examples: &[EncodedExample],
    vocab: &Vocabulary,
    beam_size: usize,
    n_best: usize,
    threads: usize,
) -> Result<Vec<NbestEntry>, BeamError> {
    let per_example = map_ordered(examples, threads, |i, ex| -> Result<Vec<NbestEntry>, BeamError> {
        let mut dec = model.decoder(ex)?.with_banned(&[PAD, BOS, vocab.sep_id()]);
        let limit = model.config.decode_limit(ex.src_ids.len());
        let hyps = beam_search(&mut dec, beam_size, n_best, limit)?;
        Ok(hyps
            .iter()
            .enumerate()
            .map(|(r, h)| NbestEntry {
                example: i,
                rank: r + 1,
                log_prob: h.log_prob,
                tokens: decode_extended(h.content(EOS), vocab, &ex.src_oovs),
            })
            .collect())
    });
    let mut out = Vec::with_capacity(examples.len() * n_best);
    for r in per_example {
        out.extend(r?);
    }
    Ok(out)
}

/// Greedy 1-best token sequences, with the same bans as [`decode_nbest`].
pub fn decode_greedy(
    model: &Seq2Seq,
    examples: &[EncodedExample],
    vocab: &Vocabulary,
    threads: usize,
) -> Result<Vec<Vec<String>>, BeamError> {
    map_ordered(examples, threads, |_, ex| -> Result<Vec<String>, BeamError> {
        let mut dec = model.decoder(ex)?.with_banned(&[PAD, BOS, vocab.sep_id()]);
        let h = greedy_decode(&mut dec, model.config.decode_limit(ex.src_ids.len()))?;
        Ok(decode_extended(h.content(EOS), vocab, &ex.src_oovs))
    })
    .into_iter()
    .collect()
}
