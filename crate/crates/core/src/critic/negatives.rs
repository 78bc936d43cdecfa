//! Positive prefixes and the five negative-example strategies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CriticExample, Variant};
use crate::corpus::Corpus;
use crate::decoding::{greedy_decode, DecodeConfig};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::lm::GeneratorModel;
use crate::text::tokenize;
use crate::vocab::{TokenId, EOS};

/// Number of LM candidates the LM-based strategies sample from.
pub const TOP_CANDIDATES: usize = 5;

const MAX_DRAWS: usize = 64;

/// Reference token ids per record, without EOS.
fn reference_tokens(corpus: &Corpus) -> Vec<Vec<Vec<TokenId>>> {
    corpus
        .records
        .iter()
        .map(|r| r.refs.iter().map(|t| corpus.vocab.encode(&tokenize(t))).collect())
        .collect()
}

fn with_eos(tokens: &[TokenId]) -> Vec<TokenId> {
    let mut v = tokens.to_vec();
    v.push(EOS);
    v
}

/// Next tokens of every reference of a record that starts with `context`.
fn gold_continuations(refs: &[Vec<TokenId>], context: &[TokenId]) -> Vec<TokenId> {
    refs.iter()
        .filter(|r| r.len() >= context.len() && r[..context.len()] == *context)
        .map(|r| r.get(context.len()).copied().unwrap_or(EOS))
        .collect()
}

/// First position where `text` leaves every reference; `None` if it is a
/// prefix of one of them.
fn deviation_point(text: &[TokenId], refs: &[Vec<TokenId>]) -> Option<usize> {
    let mut point = 0;
    for r in refs {
        let full = with_eos(r);
        let common = text.iter().zip(&full).take_while(|(a, b)| a == b).count();
        if common == text.len() {
            return None;
        }
        point = point.max(common);
    }
    Some(point)
}

fn require_non_empty(corpus: &Corpus) -> Result<()> {
    if corpus.is_empty() {
        Err(Error::Input("corpus is empty".into()))
    } else {
        Ok(())
    }
}

/// One positive per prefix length `1..=n` of every reference, EOS included.
pub fn build_positives(corpus: &Corpus) -> Result<Vec<CriticExample>> {
    require_non_empty(corpus)?;
    let mut out = Vec::new();
    for (record, refs) in corpus.records.iter().zip(reference_tokens(corpus)) {
        for tokens in refs {
            let full = with_eos(&tokens);
            for len in 1..=full.len() {
                out.push(CriticExample::positive(record.id, full[..len].to_vec()));
            }
        }
    }
    Ok(out)
}

struct ReplacementSampler<'a> {
    refs: &'a [Vec<Vec<TokenId>>],
}

impl ReplacementSampler<'_> {
    fn check(&self) -> Result<()> {
        let total_refs: usize = self.refs.iter().map(Vec::len).sum();
        if total_refs < 2 {
            return Err(Error::SamplingPool(
                "need at least two references in the corpus to sample replacement tokens".into(),
            ));
        }
        Ok(())
    }

    fn draw_from(pool: &[TokenId], gold: &[TokenId], rng: &mut ChaCha8Rng) -> Option<TokenId> {
        if pool.iter().all(|t| gold.contains(t)) {
            return None;
        }
        loop {
            let t = *pool.choose(rng)?;
            if !gold.contains(&t) {
                return Some(t);
            }
        }
    }

    /// A token from a random reference of another record (or, in a
    /// one-record corpus, another reference of the same record).
    fn other_record_token(&self, record: usize, gold: &[TokenId], rng: &mut ChaCha8Rng) -> Result<TokenId> {
        let n = self.refs.len();
        for _ in 0..MAX_DRAWS {
            let other = if n > 1 {
                let mut j = rng.gen_range(0..n - 1);
                if j >= record {
                    j += 1;
                }
                j
            } else {
                record
            };
            if let Some(pool) = self.refs[other].choose(rng) {
                if let Some(t) = Self::draw_from(pool, gold, rng) {
                    return Ok(t);
                }
            }
        }
        Err(Error::SamplingPool(format!(
            "no replacement token outside {gold:?} after {MAX_DRAWS} draws"
        )))
    }

    /// Prefers another reference of the same record.
    fn sibling_first(
        &self,
        record: usize,
        reference: usize,
        gold: &[TokenId],
        rng: &mut ChaCha8Rng,
    ) -> Result<TokenId> {
        let siblings = &self.refs[record];
        if siblings.len() >= 2 {
            let mut j = rng.gen_range(0..siblings.len() - 1);
            if j >= reference {
                j += 1;
            }
            if let Some(t) = Self::draw_from(&siblings[j], gold, rng) {
                return Ok(t);
            }
        }
        self.other_record_token(record, gold, rng)
    }
}

/// Share of variant-1 replacements drawn from a sibling reference of the same
/// record; the rest come from a random other record's reference.
pub const BASE_SIBLING_SHARE: f64 = 0.5;

/// Variant 1 with the default [`BASE_SIBLING_SHARE`].
pub fn build_negatives_base(corpus: &Corpus, seed: u64) -> Result<Vec<CriticExample>> {
    build_negatives_base_with(corpus, seed, BASE_SIBLING_SHARE)
}

/// Variant 1: for every positive, the last token is swapped for one that no
/// reference of the record continues the context with. With probability `sibling_share` it comes from another reference of
/// the same record (when there is one), otherwise from a random other
/// record's reference.
pub fn build_negatives_base_with(corpus: &Corpus, seed: u64, sibling_share: f64) -> Result<Vec<CriticExample>> {
    require_non_empty(corpus)?;
    if !(0.0..=1.0).contains(&sibling_share) {
        return Err(Error::Config(format!("sibling share {sibling_share} outside [0, 1]")));
    }
    let refs = reference_tokens(corpus);
    let sampler = ReplacementSampler { refs: &refs };
    sampler.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (ri, record) in corpus.records.iter().enumerate() {
        for (fi, tokens) in refs[ri].iter().enumerate() {
            let full = with_eos(tokens);
            for len in 1..=full.len() {
                let gold = gold_continuations(&refs[ri], &full[..len - 1]);
                let t = if rng.gen_bool(sibling_share) {
                    sampler.sibling_first(ri, fi, &gold, &mut rng)?
                } else {
                    sampler.other_record_token(ri, &gold, &mut rng)?
                };
                let mut prefix = full[..len - 1].to_vec();
                prefix.push(t);
                out.push(CriticExample::negative(record.id, prefix, Variant::Base));
            }
        }
    }
    Ok(out)
}

/// Sentence spans, each ending after a `.` token.
fn sentences(tokens: &[TokenId], period: Option<TokenId>) -> Vec<std::ops::Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, &t) in tokens.iter().enumerate() {
        if Some(t) == period {
            spans.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        spans.push(start..tokens.len());
    }
    spans
}

fn push_suffix_prefixes(out: &mut Vec<CriticExample>, id: u64, text: &[TokenId], from: usize, variant: Variant) {
    for len in from + 1..=text.len() {
        out.push(CriticExample::negative(id, text[..len].to_vec(), variant));
    }
}

/// Variant 2: per reference, one random sentence replaced by a sentence from
/// another record and one random token replaced by a wrong one; each
/// corruption yields every prefix from where it leaves all of the record's
/// references.
pub fn build_negatives_base_full(corpus: &Corpus, seed: u64) -> Result<Vec<CriticExample>> {
    require_non_empty(corpus)?;
    let refs = reference_tokens(corpus);
    let sampler = ReplacementSampler { refs: &refs };
    sampler.check()?;
    let period = corpus.vocab.id(".");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = refs.len();
    let mut out = Vec::new();

    for (ri, record) in corpus.records.iter().enumerate() {
        for (fi, tokens) in refs[ri].iter().enumerate() {
            if tokens.is_empty() {
                continue;
            }
            let original = with_eos(tokens);

            // Sentence replacement.
            let spans = sentences(tokens, period);
            for _ in 0..MAX_DRAWS {
                let span = spans.choose(&mut rng).expect("non-empty reference").clone();
                let (oj, of) = if n > 1 {
                    let mut j = rng.gen_range(0..n - 1);
                    if j >= ri {
                        j += 1;
                    }
                    (j, rng.gen_range(0..refs[j].len()))
                } else {
                    let others: Vec<usize> = (0..refs[ri].len()).filter(|&f| f != fi).collect();
                    (ri, *others.choose(&mut rng).expect("checked by sampler"))
                };
                let donor = &refs[oj][of];
                let Some(donor_span) = sentences(donor, period).choose(&mut rng).cloned() else {
                    continue;
                };
                let mut corrupted = tokens[..span.start].to_vec();
                corrupted.extend_from_slice(&donor[donor_span]);
                corrupted.extend_from_slice(&tokens[span.end..]);
                corrupted.push(EOS);
                if corrupted != original {
                    if let Some(d) = deviation_point(&corrupted, &refs[ri]) {
                        push_suffix_prefixes(&mut out, record.id, &corrupted, d, Variant::BaseFull);
                        break;
                    }
                }
            }

            // Single-token replacement.
            let pos = rng.gen_range(0..tokens.len());
            let gold = gold_continuations(&refs[ri], &tokens[..pos]);
            let t = sampler.other_record_token(ri, &gold, &mut rng)?;
            let mut corrupted = original.clone();
            corrupted[pos] = t;
            push_suffix_prefixes(&mut out, record.id, &corrupted, pos, Variant::BaseFull);
        }
    }
    Ok(out)
}

fn lm_negatives(corpus: &Corpus, model: &GeneratorModel, seed: u64, variant: Variant) -> Result<Vec<CriticExample>> {
    require_non_empty(corpus)?;
    let refs = reference_tokens(corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (record, record_refs) in corpus.records.iter().zip(&refs) {
        let data = model.is_conditional().then_some(record);
        let cond = model.condition(data)?;
        for tokens in record_refs {
            let full = with_eos(tokens);
            for len in 1..=full.len() {
                let context = &full[..len - 1];
                let gold = gold_continuations(record_refs, context);
                let candidates: Vec<TokenId> = model
                    .logprobs(&cond, context)?
                    .top_k(TOP_CANDIDATES)
                    .into_iter()
                    .filter(|t| !gold.contains(t))
                    .collect();
                let Some(&t) = candidates.choose(&mut rng) else {
                    continue;
                };
                let mut prefix = context.to_vec();
                prefix.push(t);
                out.push(CriticExample::negative(record.id, prefix, variant));
            }
        }
    }
    Ok(out)
}

/// Variant 3: the gold token is replaced by one of the unconditional LM's top
/// five next tokens, excluding every reference's continuation of the context.
pub fn build_negatives_vanilla_lm(corpus: &Corpus, model: &GeneratorModel, seed: u64) -> Result<Vec<CriticExample>> {
    if model.is_conditional() {
        return Err(Error::Input("vanilla-LM negatives need an unconditional model".into()));
    }
    lm_negatives(corpus, model, seed, Variant::VanillaLm)
}

/// Variant 4: as variant 3 with the data-conditioned LM.
pub fn build_negatives_ft_lm(corpus: &Corpus, model: &GeneratorModel, seed: u64) -> Result<Vec<CriticExample>> {
    if !model.is_conditional() {
        return Err(Error::Input("fine-tuned-LM negatives need a conditional model".into()));
    }
    lm_negatives(corpus, model, seed, Variant::FtLm)
}

/// Prefixes of `output` from the position where it leaves the references.
///
/// The deviation point is the largest first-mismatch position over all
/// references. Empty when the output agrees with some reference up to the
/// shorter length.
pub fn deviation_negatives(output: &[TokenId], references: &[Vec<TokenId>]) -> Vec<Vec<TokenId>> {
    let mut deviation = 0;
    for reference in references {
        let common = output.iter().zip(reference).take_while(|(a, b)| a == b).count();
        if common == output.len().min(reference.len()) {
            return Vec::new();
        }
        deviation = deviation.max(common);
    }
    (deviation + 1..=output.len())
        .map(|len| output[..len].to_vec())
        .collect()
}

/// Variant 5: greedy LM outputs (no critic) compared against the references.
pub fn build_negatives_ft_lm_full(
    corpus: &Corpus,
    model: &GeneratorModel,
    config: &DecodeConfig,
    exec: Execution,
) -> Result<Vec<CriticExample>> {
    require_non_empty(corpus)?;
    if !model.is_conditional() {
        return Err(Error::Input("fine-tuned-LM negatives need a conditional model".into()));
    }
    let config = DecodeConfig {
        lambda: 0.0,
        ..config.clone()
    };
    let refs = reference_tokens(corpus);
    let outputs = exec::map(&corpus.records, exec, |r| greedy_decode(model, None, r, &config));
    let mut out = Vec::new();
    for ((record, record_refs), decoded) in corpus.records.iter().zip(&refs).zip(outputs) {
        let output = decoded?.tokens;
        let references: Vec<Vec<TokenId>> = record_refs.iter().map(|t| with_eos(t)).collect();
        for prefix in deviation_negatives(&output, &references) {
            out.push(CriticExample::negative(record.id, prefix, Variant::FtLmFull));
        }
    }
    Ok(out)
}

/// Dispatches on `variant`. LM-based variants need the matching model.
pub fn build_negatives(
    variant: Variant,
    corpus: &Corpus,
    vanilla_lm: Option<&GeneratorModel>,
    conditional_lm: Option<&GeneratorModel>,
    decode: &DecodeConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<CriticExample>> {
    fn need<'m>(m: Option<&'m GeneratorModel>, variant: Variant, what: &str) -> Result<&'m GeneratorModel> {
        m.ok_or_else(|| Error::Input(format!("variant {variant} needs the {what} language model")))
    }
    match variant {
        Variant::Positive => Err(Error::Input("positive is not a negative-sampling variant".into())),
        Variant::Base => build_negatives_base(corpus, seed),
        Variant::BaseFull => build_negatives_base_full(corpus, seed),
        Variant::VanillaLm => build_negatives_vanilla_lm(corpus, need(vanilla_lm, variant, "unconditional")?, seed),
        Variant::FtLm => build_negatives_ft_lm(corpus, need(conditional_lm, variant, "conditional")?, seed),
        Variant::FtLmFull => {
            build_negatives_ft_lm_full(corpus, need(conditional_lm, variant, "conditional")?, decode, exec)
        }
    }
}
