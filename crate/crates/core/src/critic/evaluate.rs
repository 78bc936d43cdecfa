use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::model::{CriticModel, DataFeatures, MAX_LENGTH_BUCKET};
use super::CriticExample;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    /// Prefix length; the last bucket collects every longer prefix too.
    pub length: usize,
    pub count: usize,
    pub accuracy: f64,
}

/// Classification quality at threshold 0.5 (`p >= 0.5` predicts label 1).
/// Precision, recall and F1 treat label 1 as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticMetrics {
    pub count: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub by_length: Vec<LengthBucket>,
    #[serde(skip)]
    outcomes: Vec<(usize, bool)>,
}

impl CriticMetrics {
    pub fn from_predictions(predictions: &[(f64, u8, usize)]) -> Self {
        let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
        let mut outcomes = Vec::with_capacity(predictions.len());
        for &(p, label, len) in predictions {
            let predicted = (p >= 0.5) as u8;
            match (predicted, label) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fn_ += 1,
                _ => {}
            }
            correct += (predicted == label) as usize;
            outcomes.push((len, predicted == label));
        }
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let mut buckets: HashMap<usize, (usize, usize)> = HashMap::new();
        for &(len, ok) in &outcomes {
            let b = buckets.entry(len.min(MAX_LENGTH_BUCKET)).or_default();
            b.0 += 1;
            b.1 += ok as usize;
        }
        let by_length = (1..=MAX_LENGTH_BUCKET)
            .filter_map(|l| {
                buckets.get(&l).map(|&(n, ok)| LengthBucket {
                    length: l,
                    count: n,
                    accuracy: ok as f64 / n as f64,
                })
            })
            .collect();
        CriticMetrics {
            count: predictions.len(),
            accuracy: ratio(correct, predictions.len()),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            by_length,
            outcomes,
        }
    }

    /// Accuracy over prefixes whose length lies in `range`.
    pub fn accuracy_for_lengths(&self, range: impl std::ops::RangeBounds<usize>) -> Option<f64> {
        let hits: Vec<bool> = self
            .outcomes
            .iter()
            .filter(|(len, _)| range.contains(len))
            .map(|(_, ok)| *ok)
            .collect();
        (!hits.is_empty()).then(|| hits.iter().filter(|ok| **ok).count() as f64 / hits.len() as f64)
    }
}

pub fn evaluate_critic(
    model: &CriticModel,
    corpus: &Corpus,
    examples: &[CriticExample],
    exec: Execution,
) -> Result<CriticMetrics> {
    if examples.is_empty() {
        return Err(Error::Input("no examples to evaluate".into()));
    }
    let data: HashMap<u64, DataFeatures> = corpus.records.iter().map(|r| (r.id, model.data_features(r))).collect();
    let predictions = exec::map(examples, exec, |e| {
        let features = data
            .get(&e.record_id)
            .ok_or_else(|| Error::Input(format!("example refers to unknown record {}", e.record_id)))?;
        Ok((model.prob(features, &e.prefix)?, e.label, e.prefix.len()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(CriticMetrics::from_predictions(&predictions))
}
