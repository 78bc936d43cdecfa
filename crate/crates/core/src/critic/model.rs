//! Logistic critic over hashed sparse features.
//!
//! Feature families for a prefix `y<=i` and data `x`: prefix unigrams and
//! bigrams, the final token and final bigram, data tokens, final-token x
//! data-token pairs, how the final token relates to the data (absent, in the
//! same triple as the previous token, in another triple, or after a non-data
//! token; alone and paired with the previous token), and a prefix-length
//! bucket.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CriticExample;
use crate::corpus::{Corpus, DataRecord, FIELD_SEP, TRIPLE_SEP};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::text::tokenize;
use crate::vocab::{TokenId, Vocabulary, BOS, UNK};

const NS_UNIGRAM: u64 = 1;
const NS_BIGRAM: u64 = 2;
const NS_LAST: u64 = 3;
const NS_LAST_BIGRAM: u64 = 4;
const NS_DATA: u64 = 5;
const NS_LAST_X_DATA: u64 = 6;
const NS_LENGTH: u64 = 7;
const NS_RELATION: u64 = 8;
const NS_PREV_X_RELATION: u64 = 9;

/// Prefix lengths at or above this share one bucket.
pub const MAX_LENGTH_BUCKET: usize = 20;

// Logit clamp; keeps probabilities strictly inside (0, 1).
const MAX_LOGIT: f64 = 30.0;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-MAX_LOGIT, MAX_LOGIT)).exp())
}

/// Data-side inputs of the feature map, computed once per record.
#[derive(Debug, Clone)]
pub struct DataFeatures {
    tokens: Vec<TokenId>,
    /// Triple indices each data token occurs in.
    triples: HashMap<TokenId, Vec<usize>>,
}

impl DataFeatures {
    pub fn new(record: &DataRecord, vocab: &Vocabulary) -> Self {
        let mut tokens: Vec<TokenId> = record
            .linearized_tokens()
            .iter()
            .filter(|t| *t != FIELD_SEP && *t != TRIPLE_SEP)
            .map(|t| vocab.id_or_unk(t))
            .filter(|&id| id != UNK)
            .collect();
        tokens.sort_unstable();
        tokens.dedup();
        let mut triples: HashMap<TokenId, Vec<usize>> = HashMap::new();
        for (i, t) in record.triples.iter().enumerate() {
            for text in [&t.subject, &t.predicate, &t.object] {
                for tok in tokenize(text) {
                    let id = vocab.id_or_unk(&tok);
                    if id != UNK {
                        let list = triples.entry(id).or_default();
                        if list.last() != Some(&i) {
                            list.push(i);
                        }
                    }
                }
            }
        }
        DataFeatures { tokens, triples }
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.triples.contains_key(&id)
    }

    /// 0: `last` not in the data; 1: shares a triple with `prev`; 2: both in
    /// the data but in different triples; 3: `prev` is not a data token.
    pub fn relation(&self, prev: TokenId, last: TokenId) -> u64 {
        let Some(a) = self.triples.get(&last) else {
            return 0;
        };
        match self.triples.get(&prev) {
            None => 3,
            Some(b) if a.iter().any(|i| b.contains(i)) => 1,
            Some(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub shuffle_seed: u64,
    /// Target negatives per positive; the larger class is downsampled.
    pub neg_pos_ratio: f64,
    /// Feature space has `2^dim_bits` slots.
    pub dim_bits: u32,
    pub hash_seed: u64,
}

impl Default for CriticTrainConfig {
    fn default() -> Self {
        CriticTrainConfig {
            epochs: 5,
            learning_rate: 0.02,
            l2: 1e-7,
            shuffle_seed: 7,
            neg_pos_ratio: 1.0,
            dim_bits: 20,
            hash_seed: 0x00C0_FFEE,
        }
    }
}

impl CriticTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("critic training needs at least one epoch".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("critic learning rate must be positive".into()));
        }
        if !(self.l2 >= 0.0) || !(self.neg_pos_ratio > 0.0) {
            return Err(Error::Config("l2 must be >= 0 and neg_pos_ratio > 0".into()));
        }
        if !(4..=28).contains(&self.dim_bits) {
            return Err(Error::Config("dim_bits must lie in 4..=28".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training cross-entropy after each epoch.
    pub epoch_losses: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticModel {
    dim: usize,
    hash_seed: u64,
    bias: f64,
    weights: Vec<f64>,
    vocab: Arc<Vocabulary>,
}

impl CriticModel {
    /// All-zero model; scores 0.5 everywhere.
    pub fn zeros(vocab: Arc<Vocabulary>, dim_bits: u32, hash_seed: u64) -> Self {
        let dim = 1usize << dim_bits;
        CriticModel {
            dim,
            hash_seed,
            bias: 0.0,
            weights: vec![0.0; dim],
            vocab,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn data_features(&self, record: &DataRecord) -> DataFeatures {
        DataFeatures::new(record, &self.vocab)
    }

    fn slot(&self, ns: u64, a: u64, b: u64) -> u32 {
        let h = mix(mix(mix(self.hash_seed ^ ns.wrapping_mul(0x1000_0000_01B3)) ^ a) ^ b);
        (h as usize & (self.dim - 1)) as u32
    }

    /// Active feature slots (each with value 1; repeats accumulate).
    pub fn features(&self, data: &DataFeatures, prefix: &[TokenId]) -> Vec<u32> {
        let last = *prefix.last().expect("prefix is non-empty");
        let prev = if prefix.len() >= 2 {
            prefix[prefix.len() - 2]
        } else {
            BOS
        };
        let relation = data.relation(prev, last);
        let mut f = Vec::with_capacity(2 * prefix.len() + 2 * data.tokens.len() + 6);
        let mut before = BOS;
        for &t in prefix {
            f.push(self.slot(NS_UNIGRAM, t as u64, 0));
            f.push(self.slot(NS_BIGRAM, before as u64, t as u64));
            before = t;
        }
        f.push(self.slot(NS_LAST, last as u64, 0));
        f.push(self.slot(NS_LAST_BIGRAM, prev as u64, last as u64));
        for &d in &data.tokens {
            f.push(self.slot(NS_DATA, d as u64, 0));
            f.push(self.slot(NS_LAST_X_DATA, last as u64, d as u64));
        }
        f.push(self.slot(NS_LENGTH, prefix.len().min(MAX_LENGTH_BUCKET) as u64, 0));
        f.push(self.slot(NS_RELATION, relation, 0));
        f.push(self.slot(NS_PREV_X_RELATION, prev as u64, relation));
        f
    }

    fn logit(&self, features: &[u32]) -> f64 {
        self.bias + features.iter().map(|&i| self.weights[i as usize]).sum::<f64>()
    }

    /// `P(c = 1 | prefix, data)` with the data features already computed.
    pub fn prob(&self, data: &DataFeatures, prefix: &[TokenId]) -> Result<f64> {
        if prefix.is_empty() {
            return Err(Error::Input("critic needs a non-empty prefix".into()));
        }
        if let Some(bad) = prefix.iter().find(|&&id| !self.vocab.contains_id(id)) {
            return Err(Error::Input(format!("token id {bad} is outside the vocabulary")));
        }
        Ok(sigmoid(self.logit(&self.features(data, prefix))))
    }
}

pub fn critic_prob(model: &CriticModel, data: &DataRecord, prefix: &[TokenId]) -> Result<f64> {
    model.prob(&model.data_features(data), prefix)
}

fn bce(p: f64, label: u8) -> f64 {
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Downsamples the larger class toward `ratio` negatives per positive.
fn balance<'a>(examples: Vec<&'a CriticExample>, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<&'a CriticExample> {
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = examples.into_iter().partition(|e| e.label == 1);
    let target_neg = (ratio * pos.len() as f64).round() as usize;
    if neg.len() > target_neg {
        neg.shuffle(rng);
        neg.truncate(target_neg.max(1));
    } else if neg.len() < target_neg {
        let target_pos = ((neg.len() as f64 / ratio).round() as usize).max(1);
        pos.shuffle(rng);
        pos.truncate(target_pos);
    }
    pos.extend(neg);
    pos
}

/// Seeded SGD on binary cross-entropy. The input order does not matter: the
/// examples are put in canonical order before balancing and shuffling.
pub fn train_critic(
    corpus: &Corpus,
    examples: &[CriticExample],
    config: &CriticTrainConfig,
    exec: Execution,
) -> Result<(CriticModel, TrainReport)> {
    config.validate()?;
    if !examples.iter().any(|e| e.label == 1) || !examples.iter().any(|e| e.label == 0) {
        return Err(Error::Training(
            "critic training needs both positive and negative examples".into(),
        ));
    }
    let mut model = CriticModel::zeros(Arc::clone(&corpus.vocab), config.dim_bits, config.hash_seed);

    let mut ordered: Vec<&CriticExample> = examples.iter().collect();
    ordered.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut chosen = balance(ordered, config.neg_pos_ratio, &mut rng);
    chosen.sort();

    let data: HashMap<u64, DataFeatures> = corpus.records.iter().map(|r| (r.id, model.data_features(r))).collect();
    for e in &chosen {
        if !data.contains_key(&e.record_id) {
            return Err(Error::Input(format!(
                "example refers to unknown record {}",
                e.record_id
            )));
        }
        if e.prefix.is_empty() || e.prefix.iter().any(|&t| !corpus.vocab.contains_id(t)) {
            return Err(Error::Input(format!(
                "bad prefix in example for record {}",
                e.record_id
            )));
        }
    }
    let rows: Vec<(Vec<u32>, u8)> = exec::map(&chosen, exec, |e| {
        (model.features(&data[&e.record_id], &e.prefix), e.label)
    });

    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate / (1.0 + epoch as f64).sqrt();
        order.shuffle(&mut rng);
        for &i in &order {
            let (feats, label) = &rows[i];
            let g = sigmoid(model.logit(feats)) - *label as f64;
            model.bias -= lr * g;
            for &f in feats {
                let w = &mut model.weights[f as usize];
                *w -= lr * (g + config.l2 * *w);
            }
        }
        let losses = exec::map(&rows, exec, |row: &(Vec<u32>, u8)| {
            bce(sigmoid(model.logit(&row.0)), row.1)
        });
        epoch_losses.push(losses.iter().sum::<f64>() / rows.len() as f64);
    }
    let positives = rows.iter().filter(|r| r.1 == 1).count();
    let report = TrainReport {
        epoch_losses,
        positives,
        negatives: rows.len() - positives,
    };
    Ok((model, report))
}

#[derive(Serialize, Deserialize)]
struct CriticFile {
    dim: usize,
    hash_seed: u64,
    bias: f64,
    weights: BTreeMap<u32, f64>,
}

pub fn save_critic(model: &CriticModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = CriticFile {
        dim: model.dim,
        hash_seed: model.hash_seed,
        bias: model.bias,
        weights: model
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i as u32, *w))
            .collect(),
    };
    let body = serde_json::to_string(&file).expect("critic serialization cannot fail");
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_critic(path: impl AsRef<Path>, vocab: Arc<Vocabulary>) -> Result<CriticModel> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CriticFile = serde_json::from_str(&body).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    if !file.dim.is_power_of_two() || file.dim < 16 {
        return Err(Error::schema(format!(
            "critic dimension {} is not a power of two >= 16",
            file.dim
        )));
    }
    let mut weights = vec![0.0; file.dim];
    for (i, w) in file.weights {
        if i as usize >= file.dim || !w.is_finite() {
            return Err(Error::schema(format!("bad weight entry {i}: {w}")));
        }
        weights[i as usize] = w;
    }
    Ok(CriticModel {
        dim: file.dim,
        hash_seed: file.hash_seed,
        bias: file.bias,
        weights,
        vocab,
    })
}
