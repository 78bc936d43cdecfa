//! Corpus-level BLEU-4.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text::tokenize;

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// BLEU-4 in `[0, 100]` with brevity penalty and multiple references.
/// Precisions for n > 1 use add-one smoothing.
pub fn bleu(outputs: &[String], references: &[Vec<String>]) -> Result<f64> {
    if outputs.len() != references.len() {
        return Err(Error::Input(format!(
            "{} outputs for {} reference lists",
            outputs.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (output, refs) in outputs.iter().zip(references) {
        let hyp = tokenize(output);
        let refs: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
        hyp_len += hyp.len();
        ref_len += refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .unwrap_or(0);
        for n in 1..=MAX_ORDER {
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &refs {
                for (gram, c) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(c);
                }
            }
            for (gram, c) in ngram_counts(&hyp, n) {
                matches[n - 1] += c.min(max_ref.get(gram).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }
    if totals[0] == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_p = (matches[0] as f64 / totals[0] as f64).ln();
    for n in 1..MAX_ORDER {
        log_p += ((matches[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_p / MAX_ORDER as f64).exp())
}
