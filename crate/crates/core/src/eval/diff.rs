//! Word-level change statistics between two aligned output sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffStats {
    pub modified_fraction: f64,
    pub words_added: f64,
    pub words_removed: f64,
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// Words added and removed going from `before` to `after`. A replaced word
/// counts once in each direction.
pub fn word_edits(before: &str, after: &str) -> (usize, usize) {
    let a = tokenize(before);
    let b = tokenize(after);
    let common = lcs_len(&a, &b);
    (b.len() - common, a.len() - common)
}

pub fn diff_stats(baseline: &[String], variant: &[String]) -> Result<DiffStats> {
    if baseline.len() != variant.len() {
        return Err(Error::Input(format!(
            "{} baseline outputs for {} variant outputs",
            baseline.len(),
            variant.len()
        )));
    }
    if baseline.is_empty() {
        return Ok(DiffStats {
            modified_fraction: 0.0,
            words_added: 0.0,
            words_removed: 0.0,
        });
    }
    let (mut modified, mut added, mut removed) = (0usize, 0usize, 0usize);
    for (b, v) in baseline.iter().zip(variant) {
        if tokenize(b) != tokenize(v) {
            modified += 1;
        }
        let (a, r) = word_edits(b, v);
        added += a;
        removed += r;
    }
    let n = baseline.len() as f64;
    Ok(DiffStats {
        modified_fraction: modified as f64 / n,
        words_added: added as f64 / n,
        words_removed: removed as f64 / n,
    })
}
