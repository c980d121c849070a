use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Side, SwitchCandidate};
use crate::align::Alignment;
use crate::corpus::ParallelExample;

/// Unconstrained baseline: each draw picks a random subset of L1
/// positions, replaces every picked word that has links with its aligned
/// L2 words (in L2 order), then shuffles those substituted groups among the
/// picked slots. Duplicates are dropped, first draw wins.
pub fn random_switch_generate(pair: &ParallelExample, alignment: &Alignment, count: usize, seed: u64) -> Vec<SwitchCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<String>> = (0..pair.l1.len())
        .map(|i| {
            alignment
                .targets_of(i)
                .into_iter()
                .filter_map(|j| pair.l2.get(j).cloned())
                .collect()
        })
        .collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..count {
        let slots: Vec<usize> = (0..pair.l1.len())
            .filter(|&i| rng.gen_bool(0.5) && !groups[i].is_empty())
            .collect();
        let mut order = slots.clone();
        order.shuffle(&mut rng);
        let mut parts = Vec::new();
        let mut next = 0;
        for (i, word) in pair.l1.iter().enumerate() {
            if slots.binary_search(&i).is_ok() {
                parts.extend(groups[order[next]].iter().map(|w| (w.clone(), Side::L2)));
                next += 1;
            } else {
                parts.push((word.clone(), Side::L1));
            }
        }
        let cand = SwitchCandidate::from_parts(parts);
        if seen.insert(cand.tokens.clone()) {
            out.push(cand);
        }
    }
    out
}
