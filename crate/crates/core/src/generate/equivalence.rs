use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Side, SwitchCandidate};
use crate::align::Alignment;
use crate::corpus::ParallelExample;

pub const DEFAULT_MAX_OUTPUTS: usize = 16;

/// Boundaries `k` (between L1 positions `k` and `k + 1`) where a switch is
/// allowed: both sides carry links and every link left of the boundary
/// points strictly before every link right of it in L2. Word `k + 1` must
/// itself be aligned, since unaligned words stay with the segment on
/// their left.
pub fn permitted_boundaries(n: usize, alignment: &Alignment) -> Vec<usize> {
    if n < 2 {
        return Vec::new();
    }
    let mut prefix_max = vec![None; n];
    let mut suffix_min = vec![None; n];
    let mut by_src: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j) in alignment.iter() {
        if i < n {
            by_src[i].push(j);
        }
    }
    let mut acc: Option<usize> = None;
    for i in 0..n {
        acc = by_src[i].iter().copied().chain(acc).max();
        prefix_max[i] = acc;
    }
    let mut acc: Option<usize> = None;
    for i in (0..n).rev() {
        acc = by_src[i].iter().copied().chain(acc).min();
        suffix_min[i] = acc;
    }
    (0..n - 1)
        .filter(|&k| !by_src[k + 1].is_empty())
        .filter(|&k| matches!((prefix_max[k], suffix_min[k + 1]), (Some(a), Some(b)) if a < b))
        .collect()
}

/// Renders segments `[starts[s], starts[s+1])` of L1, switching those
/// whose parity matches `first_switched`.
fn render(pair: &ParallelExample, alignment: &Alignment, cuts: &[usize], first_switched: bool) -> SwitchCandidate {
    let n = pair.l1.len();
    let mut bounds = vec![0];
    bounds.extend(cuts.iter().map(|k| k + 1));
    bounds.push(n);
    let mut parts = Vec::new();
    for (s, w) in bounds.windows(2).enumerate() {
        let switched = (s % 2 == 0) == first_switched;
        if switched {
            let mut js: Vec<usize> = (w[0]..w[1]).flat_map(|i| alignment.targets_of(i)).collect();
            js.sort_unstable();
            js.dedup();
            parts.extend(js.into_iter().filter(|&j| j < pair.l2.len()).map(|j| (pair.l2[j].clone(), Side::L2)));
        } else {
            parts.extend(pair.l1[w[0]..w[1]].iter().map(|t| (t.clone(), Side::L1)));
        }
    }
    SwitchCandidate::from_parts(parts)
}

/// Orders by switch count then tokens, drops duplicates and monolingual
/// renderings.
pub(crate) fn finalize(cands: impl IntoIterator<Item = SwitchCandidate>, max_outputs: usize) -> Vec<SwitchCandidate> {
    let mut seen = HashSet::new();
    let mut out: Vec<SwitchCandidate> = cands
        .into_iter()
        .filter(|c| c.is_mixed() && seen.insert(c.tokens.clone()))
        .collect();
    out.sort_by(|a, b| a.switches().cmp(&b.switches()).then_with(|| a.tokens.cmp(&b.tokens)));
    out.truncate(max_outputs);
    out
}

/// All mixed sentences obtainable by switching at permitted boundaries,
/// L1 order as the frame. Each subset of boundaries is rendered twice,
/// once starting in each language.
pub fn equivalence_generate(pair: &ParallelExample, alignment: &Alignment, max_outputs: usize) -> Vec<SwitchCandidate> {
    let allowed = permitted_boundaries(pair.l1.len(), alignment);
    // 2^k subsets; capped inputs keep this bounded in practice.
    let k = allowed.len().min(20);
    let mut cands = Vec::new();
    for mask in 1u32..(1 << k) {
        let cuts: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| allowed[b]).collect();
        for first in [false, true] {
            cands.push(render(pair, alignment, &cuts, first));
        }
    }
    finalize(cands, max_outputs)
}

/// Draws `quota` candidates without replacement, keeping their order.
pub fn sample_quota<R: Rng>(cands: &[SwitchCandidate], quota: usize, rng: &mut R) -> Vec<SwitchCandidate> {
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.shuffle(rng);
    idx.truncate(quota);
    idx.sort_unstable();
    idx.into_iter().map(|i| cands[i].clone()).collect()
}
