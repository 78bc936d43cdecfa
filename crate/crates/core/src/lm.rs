//! Interpolated additive-smoothing trigram model with a data copy component.
//!
//! `P(w | h, x) = mu * P_copy(w | x) + (1 - mu) * sum_k l_k * (c_k(h, w) + a) / (c_k(h) + a|V|)`
//!
//! The copy distribution is uniform over the distinct content tokens of the
//! linearized data plus EOS.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DataRecord, FIELD_SEP, TRIPLE_SEP};
use crate::error::{Error, Result};
use crate::text::tokenize;
use crate::vocab::{TokenId, Vocabulary, BOS, EOS, UNK};

/// Which linearized data tokens feed the copy distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopySource {
    /// Subject, predicate and object tokens.
    #[default]
    All,
    /// Subject and object tokens.
    Entities,
    Objects,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub alpha: f64,
    /// Interpolation weights for unigram, bigram and trigram estimates.
    pub order_weights: [f64; 3],
    pub mu: f64,
    pub conditional: bool,
    pub copy_source: CopySource,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            alpha: 0.1,
            order_weights: [0.1, 0.3, 0.6],
            mu: 0.3,
            conditional: true,
            copy_source: CopySource::All,
        }
    }
}

impl LmConfig {
    /// Plain n-gram model that ignores the data.
    pub fn unconditional() -> Self {
        LmConfig {
            mu: 0.0,
            conditional: false,
            ..LmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.order_weights.iter().any(|w| !(*w >= 0.0))
            || (self.order_weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::Config(format!(
                "order weights must be non-negative and sum to 1, got {:?}",
                self.order_weights
            )));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Config(format!("mu must lie in [0, 1], got {}", self.mu)));
        }
        if !self.conditional && self.mu != 0.0 {
            return Err(Error::Config("an unconditional model requires mu = 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Table {
    total: u64,
    next: HashMap<TokenId, u64>,
}

impl Table {
    fn add(&mut self, w: TokenId) {
        self.total += 1;
        *self.next.entry(w).or_insert(0) += 1;
    }
}

/// Natural-log probabilities indexed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    pub logprobs: Vec<f64>,
}

impl TokenDistribution {
    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    pub fn logprob(&self, id: TokenId) -> f64 {
        self.logprobs[id as usize]
    }

    pub fn total_probability(&self) -> f64 {
        self.logprobs.iter().map(|lp| lp.exp()).sum()
    }

    /// The `k` most probable tokens with finite log-probability, ties broken
    /// by lower id.
    pub fn top_k(&self, k: usize) -> Vec<TokenId> {
        top_k_by(&self.logprobs, k)
    }

    pub fn argmax(&self) -> TokenId {
        argmax(&self.logprobs)
    }
}

/// Indices of the `k` largest finite scores, descending, ties to lower index.
pub fn top_k_by(scores: &[f64], k: usize) -> Vec<TokenId> {
    let mut ids: Vec<TokenId> = (0..scores.len() as TokenId)
        .filter(|&i| scores[i as usize] > f64::NEG_INFINITY)
        .collect();
    let by_score = |a: &TokenId, b: &TokenId| scores[*b as usize].total_cmp(&scores[*a as usize]).then(a.cmp(b));
    if k < ids.len() {
        ids.select_nth_unstable_by(k, by_score);
        ids.truncate(k);
    }
    ids.sort_by(by_score);
    ids
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Per-record copy set, computed once and reused for every step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conditioning {
    copy: Vec<TokenId>,
}

impl Conditioning {
    pub fn none() -> Self {
        Conditioning { copy: Vec::new() }
    }

    pub fn copy_tokens(&self) -> &[TokenId] {
        &self.copy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    config: LmConfig,
    vocab: Arc<Vocabulary>,
    unigram: Table,
    bigram: HashMap<TokenId, Table>,
    trigram: HashMap<(TokenId, TokenId), Table>,
}

impl GeneratorModel {
    /// A model with empty count tables.
    pub fn untrained(vocab: Arc<Vocabulary>, config: LmConfig) -> Result<Self> {
        config.validate()?;
        Ok(GeneratorModel {
            config,
            vocab,
            unigram: Table::default(),
            bigram: HashMap::new(),
            trigram: HashMap::new(),
        })
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn is_conditional(&self) -> bool {
        self.config.conditional
    }

    pub fn unigram_count(&self, w: TokenId) -> u64 {
        self.unigram.next.get(&w).copied().unwrap_or(0)
    }

    fn observe(&mut self, ids: &[TokenId]) {
        let mut seq = Vec::with_capacity(ids.len() + 3);
        seq.extend([BOS, BOS]);
        seq.extend_from_slice(ids);
        seq.push(EOS);
        for j in 2..seq.len() {
            let w = seq[j];
            self.unigram.add(w);
            self.bigram.entry(seq[j - 1]).or_default().add(w);
            self.trigram.entry((seq[j - 2], seq[j - 1])).or_default().add(w);
        }
    }

    /// Copy set for `data`; empty for an unconditional model.
    pub fn condition(&self, data: Option<&DataRecord>) -> Result<Conditioning> {
        match (self.config.conditional, data) {
            (false, None) => Ok(Conditioning::none()),
            (true, Some(record)) => Ok(Conditioning {
                copy: copy_set(record, &self.vocab, self.config.copy_source),
            }),
            (true, None) => Err(Error::Input("conditional model needs a data record".into())),
            (false, Some(_)) => Err(Error::Input("unconditional model takes no data record".into())),
        }
    }

    pub fn next_token_logprobs(&self, data: Option<&DataRecord>, prefix: &[TokenId]) -> Result<TokenDistribution> {
        let cond = self.condition(data)?;
        self.logprobs(&cond, prefix)
    }

    /// Next-token distribution given a prepared conditioning. A leading BOS in
    /// `prefix` is optional.
    pub fn logprobs(&self, cond: &Conditioning, prefix: &[TokenId]) -> Result<TokenDistribution> {
        let n = self.vocab.len();
        if let Some(bad) = prefix.iter().find(|&&id| !self.vocab.contains_id(id)) {
            return Err(Error::Input(format!("token id {bad} is outside the vocabulary")));
        }
        let prefix = match prefix.first() {
            Some(&BOS) => &prefix[1..],
            _ => prefix,
        };
        let h1 = prefix.last().copied().unwrap_or(BOS);
        let h2 = if prefix.len() >= 2 {
            prefix[prefix.len() - 2]
        } else {
            BOS
        };

        let alpha = self.config.alpha;
        let size = n as f64;
        let tables = [Some(&self.unigram), self.bigram.get(&h1), self.trigram.get(&(h2, h1))];
        let mut base = 0.0;
        let mut probs = vec![0.0; n];
        for (weight, table) in self.config.order_weights.iter().zip(tables) {
            if *weight == 0.0 {
                continue;
            }
            let total = table.map_or(0, |t| t.total) as f64;
            let denom = total + alpha * size;
            base += weight * alpha / denom;
            if let Some(t) = table {
                for (&w, &c) in &t.next {
                    probs[w as usize] += weight * c as f64 / denom;
                }
            }
        }
        let mu = self.config.mu;
        let copy_mass = if cond.copy.is_empty() {
            0.0
        } else {
            mu / cond.copy.len() as f64
        };
        let keep = if cond.copy.is_empty() { 1.0 } else { 1.0 - mu };
        for p in probs.iter_mut() {
            *p = keep * (*p + base);
        }
        for &w in &cond.copy {
            probs[w as usize] += copy_mass;
        }
        Ok(TokenDistribution {
            logprobs: probs.into_iter().map(f64::ln).collect(),
        })
    }

    /// Sum of per-step log-probabilities of `seq` (no leading BOS).
    pub fn sequence_logprob(&self, cond: &Conditioning, seq: &[TokenId]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..seq.len() {
            total += self.logprobs(cond, &seq[..i])?.logprob(seq[i]);
        }
        Ok(total)
    }
}

fn copy_set(record: &DataRecord, vocab: &Vocabulary, source: CopySource) -> Vec<TokenId> {
    let mut tokens: Vec<TokenId> = Vec::new();
    let mut add = |text: &str| {
        for tok in tokenize(text) {
            if tok == FIELD_SEP || tok == TRIPLE_SEP {
                continue;
            }
            let id = vocab.id_or_unk(&tok);
            if id != UNK {
                tokens.push(id);
            }
        }
    };
    for t in &record.triples {
        match source {
            CopySource::All => {
                add(&t.subject);
                add(&t.predicate);
                add(&t.object);
            }
            CopySource::Entities => {
                add(&t.subject);
                add(&t.object);
            }
            CopySource::Objects => add(&t.object),
        }
    }
    tokens.push(EOS);
    tokens.sort_unstable();
    tokens.dedup();
    tokens
}

/// Counts n-grams over every BOS-padded, EOS-terminated reference.
pub fn train_lm(corpus: &Corpus, config: &LmConfig) -> Result<GeneratorModel> {
    if corpus.is_empty() {
        return Err(Error::Training(
            "cannot train a language model on an empty corpus".into(),
        ));
    }
    let mut model = GeneratorModel::untrained(Arc::clone(&corpus.vocab), config.clone())?;
    for record in &corpus.records {
        for text in &record.refs {
            let ids = corpus.vocab.encode(&tokenize(text));
            model.observe(&ids);
        }
    }
    Ok(model)
}

type CountMap = BTreeMap<TokenId, u64>;

#[derive(Serialize, Deserialize)]
struct Counts {
    unigram: CountMap,
    bigram: BTreeMap<TokenId, CountMap>,
    /// Keyed by `"<w-2> <w-1>"`.
    trigram: BTreeMap<String, CountMap>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    order_weights: [f64; 3],
    alpha: f64,
    mu: f64,
    conditional: bool,
    #[serde(default)]
    copy_source: CopySource,
    vocab_size: usize,
    counts: Counts,
}

fn sorted(t: &Table) -> CountMap {
    t.next.iter().map(|(&k, &v)| (k, v)).collect()
}

fn table(counts: CountMap) -> Table {
    Table {
        total: counts.values().sum(),
        next: counts.into_iter().collect(),
    }
}

pub fn save_lm(model: &GeneratorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        order_weights: model.config.order_weights,
        alpha: model.config.alpha,
        mu: model.config.mu,
        conditional: model.config.conditional,
        copy_source: model.config.copy_source,
        vocab_size: model.vocab.len(),
        counts: Counts {
            unigram: sorted(&model.unigram),
            bigram: model.bigram.iter().map(|(&k, t)| (k, sorted(t))).collect(),
            trigram: model
                .trigram
                .iter()
                .map(|(&(a, b), t)| (format!("{a} {b}"), sorted(t)))
                .collect(),
        },
    };
    let body = serde_json::to_string(&file).expect("model serialization cannot fail");
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_lm(path: impl AsRef<Path>, vocab: Arc<Vocabulary>) -> Result<GeneratorModel> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&body).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.vocab_size != vocab.len() {
        return Err(Error::schema(format!(
            "model vocabulary size {} does not match vocabulary of size {}",
            file.vocab_size,
            vocab.len()
        )));
    }
    let config = LmConfig {
        alpha: file.alpha,
        order_weights: file.order_weights,
        mu: file.mu,
        conditional: file.conditional,
        copy_source: file.copy_source,
    };
    config.validate().map_err(|e| Error::schema(e.to_string()))?;
    let in_vocab = |id: TokenId| -> Result<TokenId> {
        if vocab.contains_id(id) {
            Ok(id)
        } else {
            Err(Error::schema(format!("count table references unknown token id {id}")))
        }
    };
    for &id in file.counts.unigram.keys() {
        in_vocab(id)?;
    }
    let mut trigram = HashMap::new();
    for (key, counts) in file.counts.trigram {
        let mut parts = key.split(' ').map(|p| p.parse::<TokenId>());
        let ctx = match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(a)), Some(Ok(b)), None) => (in_vocab(a)?, in_vocab(b)?),
            _ => return Err(Error::schema(format!("bad trigram context key {key:?}"))),
        };
        trigram.insert(ctx, table(counts));
    }
    let mut bigram = HashMap::new();
    for (ctx, counts) in file.counts.bigram {
        bigram.insert(in_vocab(ctx)?, table(counts));
    }
    Ok(GeneratorModel {
        config,
        vocab,
        unigram: table(file.counts.unigram),
        bigram,
        trigram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Triple;

    fn record(refs: &[&str], triples: &[(&str, &str, &str)]) -> DataRecord {
        DataRecord {
            id: 0,
            triples: triples.iter().map(|&(s, p, o)| Triple::new(s, p, o)).collect(),
            refs: refs.iter().map(|s| s.to_string()).collect(),
            corrupted: false,
        }
    }

    fn ab_corpus() -> Corpus {
        Corpus::new(vec![record(&["a b"], &[("a", "p", "b")])])
    }

    #[test]
    fn unigram_counts_include_eos() {
        let c = ab_corpus();
        let m = train_lm(&c, &LmConfig::unconditional()).unwrap();
        let id = |t: &str| c.vocab.id(t).unwrap();
        assert_eq!(m.unigram_count(id("a")), 1);
        assert_eq!(m.unigram_count(id("b")), 1);
        assert_eq!(m.unigram_count(EOS), 1);
        assert_eq!(m.unigram_count(BOS), 0);
    }

    #[test]
    fn training_is_deterministic() {
        let c = ab_corpus();
        assert_eq!(
            train_lm(&c, &LmConfig::default()).unwrap(),
            train_lm(&c, &LmConfig::default()).unwrap()
        );
    }

    #[test]
    fn empty_corpus_is_training_error() {
        let c = Corpus::new(vec![]);
        assert!(matches!(train_lm(&c, &LmConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn large_alpha_untrained_is_uniform() {
        let c = ab_corpus();
        let cfg = LmConfig {
            alpha: 1e6,
            ..LmConfig::unconditional()
        };
        let m = GeneratorModel::untrained(Arc::clone(&c.vocab), cfg).unwrap();
        let d = m.next_token_logprobs(None, &[]).unwrap();
        let expected = -(c.vocab.len() as f64).ln();
        for lp in &d.logprobs {
            assert!((lp - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_bigram() {
        // Bigram only, alpha = 0.001, |V| = 8: P(b | a) = (1 + a) / (1 + 8a),
        // every other token gets a / (1 + 8a).
        let c = ab_corpus();
        assert_eq!(c.vocab.len(), 8); // reserved + a, b, p, |
        let cfg = LmConfig {
            alpha: 0.001,
            order_weights: [0.0, 1.0, 0.0],
            ..LmConfig::unconditional()
        };
        let m = train_lm(&c, &cfg).unwrap();
        let a = c.vocab.id("a").unwrap();
        let b = c.vocab.id("b").unwrap();
        let d = m.next_token_logprobs(None, &[BOS, a]).unwrap();
        assert_eq!(d.argmax(), b);
        let denom = 1.0 + 0.001 * 8.0;
        assert!((d.logprob(b) - (1.001f64 / denom).ln()).abs() < 1e-12);
        assert!((d.logprob(EOS) - (0.001f64 / denom).ln()).abs() < 1e-12);
    }

    #[test]
    fn pure_copy_over_single_object() {
        let r = record(&["france has paris ."], &[("france", "capital", "paris")]);
        let c = Corpus::new(vec![r.clone()]);
        let cfg = LmConfig {
            mu: 1.0,
            copy_source: CopySource::Objects,
            ..LmConfig::default()
        };
        let m = train_lm(&c, &cfg).unwrap();
        let d = m.next_token_logprobs(Some(&r), &[]).unwrap();
        let paris = c.vocab.id("paris").unwrap();
        assert!((d.logprob(paris).exp() - 0.5).abs() < 1e-12);
        assert!((d.logprob(EOS).exp() - 0.5).abs() < 1e-12);
        assert_eq!(d.top_k(5), vec![EOS, paris]);
    }

    #[test]
    fn unconditional_ignores_data_and_rejects_it() {
        let r = record(&["a b"], &[("a", "p", "b")]);
        let c = Corpus::new(vec![r.clone()]);
        let m = train_lm(&c, &LmConfig::unconditional()).unwrap();
        assert!(m.next_token_logprobs(Some(&r), &[]).is_err());
        let cm = train_lm(&c, &LmConfig::default()).unwrap();
        assert!(cm.next_token_logprobs(None, &[]).is_err());
    }

    #[test]
    fn out_of_vocabulary_prefix_is_input_error() {
        let c = ab_corpus();
        let m = train_lm(&c, &LmConfig::unconditional()).unwrap();
        assert!(matches!(m.next_token_logprobs(None, &[999]), Err(Error::Input(_))));
    }

    #[test]
    fn config_validation() {
        let bad = LmConfig {
            order_weights: [0.5, 0.5, 0.1],
            ..LmConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LmConfig {
            mu: 0.2,
            conditional: false,
            ..LmConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(LmConfig {
            alpha: 0.0,
            ..LmConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn top_k_breaks_ties_by_lower_id() {
        assert_eq!(top_k_by(&[0.1, 0.5, 0.5, f64::NEG_INFINITY, 0.2], 3), vec![1, 2, 4]);
        assert_eq!(top_k_by(&[0.1, 0.5, 0.5], 10), vec![1, 2, 0]);
        assert_eq!(argmax(&[0.3, 0.7, 0.7]), 1);
    }
}
