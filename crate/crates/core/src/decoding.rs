//! Critic-guided decoding.
//!
//! At step `i` the LM's `k` most probable next tokens are rescored as
//! `ln P_lm(t) + lambda_i * ln P_critic(prefix + t)`; every other token keeps
//! its LM log-probability. `lambda_i = min(i / W, 1) * lambda` warms the
//! critic weight up over the first `W` generated tokens.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::DataRecord;
use crate::critic::{CriticModel, DataFeatures};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::lm::{argmax, Conditioning, GeneratorModel, TokenDistribution};
use crate::text::detokenize;
use crate::vocab::{TokenId, Vocabulary, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Beam,
}

impl DecodeMode {
    pub fn name(self) -> &'static str {
        match self {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Beam => "beam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub lambda: f64,
    /// Warmup length in tokens; 0 disables warmup.
    pub warmup: usize,
    /// Candidates per step that receive a critic score.
    pub k: usize,
    pub max_len: usize,
    pub beam_size: usize,
    pub mode: DecodeMode,
    /// Beam ranking divides cumulative scores by `len^length_penalty`;
    /// 0 ranks by the raw sum.
    pub length_penalty: f64,
    /// Restrict the choice to the critic-scored candidates instead of letting
    /// lower-ranked tokens compete with their raw LM score.
    pub restrict_to_top_k: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            lambda: 0.25,
            warmup: 5,
            k: 5,
            max_len: 60,
            beam_size: 5,
            mode: DecodeMode::Greedy,
            length_penalty: 0.0,
            restrict_to_top_k: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be a non-negative number, got {}",
                self.lambda
            )));
        }
        if !(self.length_penalty >= 0.0) || !self.length_penalty.is_finite() {
            return Err(Error::Config("length_penalty must be a non-negative number".into()));
        }
        if self.k == 0 || self.max_len == 0 || self.beam_size == 0 {
            return Err(Error::Config("k, max_len and beam_size must be at least 1".into()));
        }
        Ok(())
    }

    fn effective_beam(&self) -> usize {
        match self.mode {
            DecodeMode::Greedy => 1,
            DecodeMode::Beam => self.beam_size,
        }
    }
}

/// Critic weight for the `i`-th generated token (1-based).
pub fn effective_lambda(i: usize, config: &DecodeConfig) -> f64 {
    if config.warmup == 0 {
        config.lambda
    } else {
        (i as f64 / config.warmup as f64).min(1.0) * config.lambda
    }
}

/// Adds `lambda_i * ln p` to the LM score of every token in `critic`.
pub fn combine_scores(lm: &TokenDistribution, critic: &[(TokenId, f64)], lambda_i: f64) -> Result<Vec<f64>> {
    let mut scores = lm.logprobs.clone();
    for &(t, p) in critic {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Input(format!(
                "critic probability {p} for token {t} outside (0, 1]"
            )));
        }
        let slot = scores
            .get_mut(t as usize)
            .ok_or_else(|| Error::Input(format!("token id {t} outside the distribution")))?;
        *slot += lambda_i * p.ln();
    }
    Ok(scores)
}

/// Softmax of a log-score vector, returned as log-probabilities.
pub fn normalize_combined(scores: &[f64]) -> Result<TokenDistribution> {
    if scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(Error::Input("scores must be finite or -inf".into()));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Input("all scores are -inf".into()));
    }
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(TokenDistribution {
        logprobs: scores.iter().map(|s| s - log_z).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: TokenId,
    pub lm_lp: f64,
    pub critic_p: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub i: usize,
    pub lambda_i: f64,
    pub topk: Vec<Candidate>,
    pub chosen: TokenId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub tokens: Vec<TokenId>,
    pub trace: Vec<StepTrace>,
    pub critic_calls: usize,
}

/// Per-record scorer state shared by greedy and beam search.
struct Scorer<'a> {
    generator: &'a GeneratorModel,
    critic: Option<(&'a CriticModel, DataFeatures)>,
    cond: Conditioning,
    config: &'a DecodeConfig,
}

struct Step {
    lm: TokenDistribution,
    /// Top-k candidates with critic probabilities (if any), LM order.
    scored: Vec<(TokenId, Option<f64>)>,
    lambda_i: f64,
}

impl<'a> Scorer<'a> {
    fn new(
        generator: &'a GeneratorModel,
        critic: Option<&'a CriticModel>,
        data: &DataRecord,
        config: &'a DecodeConfig,
    ) -> Result<Self> {
        config.validate()?;
        let cond = generator.condition(generator.is_conditional().then_some(data))?;
        Ok(Scorer {
            generator,
            critic: critic.map(|c| (c, c.data_features(data))),
            cond,
            config,
        })
    }

    fn step(&self, prefix: &[TokenId], extra: usize) -> Result<(Step, Vec<TokenId>)> {
        let lm = self.generator.logprobs(&self.cond, prefix)?;
        let ranked = lm.top_k(self.config.k + extra);
        let k = self.config.k.min(ranked.len());
        let lambda_i = effective_lambda(prefix.len() + 1, self.config);
        let mut extended = prefix.to_vec();
        extended.push(0);
        let mut scored = Vec::with_capacity(k);
        for &t in &ranked[..k] {
            let p = match &self.critic {
                Some((model, data)) => {
                    *extended.last_mut().unwrap() = t;
                    Some(model.prob(data, &extended)?)
                }
                None => None,
            };
            scored.push((t, p));
        }
        Ok((Step { lm, scored, lambda_i }, ranked))
    }

    fn critic_calls(&self, step: &Step) -> usize {
        if self.critic.is_some() {
            step.scored.len()
        } else {
            0
        }
    }
}

fn adjusted(lm_lp: f64, p: Option<f64>, lambda_i: f64) -> f64 {
    match p {
        Some(p) => lm_lp + lambda_i * p.ln(),
        None => lm_lp,
    }
}

pub fn greedy_decode(
    generator: &GeneratorModel,
    critic: Option<&CriticModel>,
    data: &DataRecord,
    config: &DecodeConfig,
) -> Result<DecodeOutput> {
    let scorer = Scorer::new(generator, critic, data, config)?;
    let mut tokens = Vec::new();
    let mut trace = Vec::new();
    let mut critic_calls = 0;
    while tokens.len() < config.max_len {
        let (step, _) = scorer.step(&tokens, 0)?;
        critic_calls += scorer.critic_calls(&step);
        let critic_map: Vec<(TokenId, f64)> = step.scored.iter().filter_map(|&(t, p)| p.map(|p| (t, p))).collect();
        let scores = combine_scores(&step.lm, &critic_map, step.lambda_i)?;
        let chosen = if config.restrict_to_top_k {
            let mut best = step.scored[0].0;
            for &(t, _) in &step.scored[1..] {
                let (s, b) = (scores[t as usize], scores[best as usize]);
                if s > b || (s == b && t < best) {
                    best = t;
                }
            }
            best
        } else {
            argmax(&scores)
        };
        trace.push(StepTrace {
            i: tokens.len() + 1,
            lambda_i: step.lambda_i,
            topk: step
                .scored
                .iter()
                .map(|&(id, p)| Candidate {
                    id,
                    lm_lp: step.lm.logprob(id),
                    critic_p: p,
                    score: scores[id as usize],
                })
                .collect(),
            chosen,
        });
        tokens.push(chosen);
        if chosen == EOS {
            break;
        }
    }
    Ok(DecodeOutput {
        tokens,
        trace,
        critic_calls,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Sum of per-step combined scores.
    pub score: f64,
    /// Sum of per-step LM log-probabilities.
    pub lm_logprob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Ranking score; equals `score` when `length_penalty` is 0.
    pub fn normalized_score(&self, length_penalty: f64) -> f64 {
        self.score / (self.tokens.len().max(1) as f64).powf(length_penalty)
    }
}

fn rank(a: &(f64, Hypothesis), b: &(f64, Hypothesis)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.tokens.cmp(&b.1.tokens))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamOutput {
    pub best: Hypothesis,
    /// Final beam, best first.
    pub beam: Vec<Hypothesis>,
    pub critic_calls: usize,
}

/// Beam search over cumulative combined scores. Ranking is unnormalized
/// unless `length_penalty` is set.
pub fn beam_decode(
    generator: &GeneratorModel,
    critic: Option<&CriticModel>,
    data: &DataRecord,
    config: &DecodeConfig,
) -> Result<BeamOutput> {
    let scorer = Scorer::new(generator, critic, data, config)?;
    let width = config.beam_size;
    let extra = if config.restrict_to_top_k { 0 } else { width };
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        lm_logprob: 0.0,
        finished: false,
    }];
    let mut critic_calls = 0;
    while beam.iter().any(|h| !h.finished) {
        let mut pool = Vec::new();
        for hyp in beam {
            if hyp.finished {
                pool.push(hyp);
                continue;
            }
            let (step, ranked) = scorer.step(&hyp.tokens, extra)?;
            critic_calls += scorer.critic_calls(&step);
            let critic_ps = step.scored.iter().map(|&(_, p)| p).chain(std::iter::repeat(None));
            for (&t, p) in ranked.iter().zip(critic_ps) {
                if p.is_some_and(|p| !(p > 0.0 && p <= 1.0)) {
                    return Err(Error::Input(format!("critic probability {p:?} outside (0, 1]")));
                }
                let lm_lp = step.lm.logprob(t);
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                let finished = t == EOS || tokens.len() >= config.max_len;
                pool.push(Hypothesis {
                    tokens,
                    score: hyp.score + adjusted(lm_lp, p, step.lambda_i),
                    lm_logprob: hyp.lm_logprob + lm_lp,
                    finished,
                });
            }
        }
        let mut ranked: Vec<(f64, Hypothesis)> = pool
            .into_iter()
            .map(|h| (h.normalized_score(config.length_penalty), h))
            .collect();
        ranked.sort_by(rank);
        ranked.truncate(width);
        beam = ranked.into_iter().map(|(_, h)| h).collect();
    }
    Ok(BeamOutput {
        best: beam[0].clone(),
        beam,
        critic_calls,
    })
}

/// Decodes one record with the configured mode and returns its tokens.
pub fn decode(
    generator: &GeneratorModel,
    critic: Option<&CriticModel>,
    data: &DataRecord,
    config: &DecodeConfig,
) -> Result<Vec<TokenId>> {
    match config.mode {
        DecodeMode::Greedy => Ok(greedy_decode(generator, critic, data, config)?.tokens),
        DecodeMode::Beam if config.effective_beam() == 1 => Ok(greedy_decode(generator, critic, data, config)?.tokens),
        DecodeMode::Beam => Ok(beam_decode(generator, critic, data, config)?.best.tokens),
    }
}

/// Decodes every record; output order follows `records`.
pub fn decode_all(
    generator: &GeneratorModel,
    critic: Option<&CriticModel>,
    records: &[DataRecord],
    config: &DecodeConfig,
    exec: Execution,
) -> Result<Vec<Vec<TokenId>>> {
    exec::map(records, exec, |r| decode(generator, critic, r, config))
        .into_iter()
        .collect()
}

/// Output text with the trailing EOS removed.
pub fn output_text(vocab: &Vocabulary, tokens: &[TokenId]) -> String {
    let body = match tokens.last() {
        Some(&EOS) => &tokens[..tokens.len() - 1],
        _ => tokens,
    };
    detokenize(&vocab.decode(body))
}
