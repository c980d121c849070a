use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramHistogram {
    pub n: usize,
    /// Sorted by count descending, then n-gram ascending.
    pub counts: Vec<(Vec<String>, usize)>,
    /// Number of n-gram tokens.
    pub total: usize,
    /// Statistics of the per-type frequency values.
    pub mean: f64,
    pub median: f64,
    /// Population moment skewness `m3 / m2^1.5` (0 when all equal).
    pub skewness: f64,
}

impl NGramHistogram {
    /// `ngram<TAB>count` lines, n-gram tokens joined by spaces.
    pub fn to_tsv(&self) -> String {
        self.counts.iter().map(|(g, c)| format!("{}\t{c}\n", g.join(" "))).collect()
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.iter().find(|(g, _)| g == gram).map_or(0, |x| x.1)
    }
}

/// Sliding-window n-grams inside each utterance.
pub fn ngram_histogram(corpus: &[Vec<String>], n: usize) -> Result<NGramHistogram, EvalError> {
    if !(1..=4).contains(&n) {
        return Err(EvalError::BadOrder(n));
    }
    let mut map: HashMap<&[String], usize> = HashMap::new();
    for u in corpus {
        for w in u.windows(n) {
            *map.entry(w).or_insert(0) += 1;
        }
    }
    let mut counts: Vec<(Vec<String>, usize)> = map.into_iter().map(|(g, c)| (g.to_vec(), c)).collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total = counts.iter().map(|x| x.1).sum();
    let freqs: Vec<f64> = counts.iter().map(|x| x.1 as f64).collect();
    let (mean, median, skewness) = summary(&freqs);
    Ok(NGramHistogram {
        n,
        counts,
        total,
        mean,
        median,
        skewness,
    })
}

fn summary(xs: &[f64]) -> (f64, f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / k;
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    (mean, median, skew)
}
