//! Template-inverse fact extraction and faithfulness scoring.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{DataRecord, Triple};
use crate::error::{Error, Result};
use crate::text::tokenize;
use crate::world::PredicateRegistry;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub facts: BTreeSet<Triple>,
    pub sentences: usize,
    pub unparsable: usize,
}

fn sentences(tokens: &[String]) -> Vec<&[String]> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t == "." {
            out.push(&tokens[start..=i]);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(&tokens[start..]);
    }
    out
}

/// Facts plus sentence diagnostics. Each sentence yields at most one triple.
pub fn extract_with_diagnostics(text: &str, registry: &PredicateRegistry) -> Extraction {
    let tokens = tokenize(text);
    let mut extraction = Extraction::default();
    for sentence in sentences(&tokens) {
        extraction.sentences += 1;
        let found = registry.patterns().find_map(|(spec, pattern)| {
            pattern
                .matches(sentence)
                .map(|(s, o)| Triple::new(s.join(" "), tokenize(&spec.name).join(" "), o.join(" ")))
        });
        match found {
            Some(t) => {
                extraction.facts.insert(t);
            }
            None => extraction.unparsable += 1,
        }
    }
    extraction
}

pub fn extract_facts(text: &str, registry: &PredicateRegistry) -> BTreeSet<Triple> {
    extract_with_diagnostics(text, registry).facts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFaithfulness {
    pub id: u64,
    pub hallucinated: usize,
    pub omitted: usize,
    pub precision: f64,
    pub recall: f64,
    pub unparsable: usize,
}

impl RecordFaithfulness {
    pub fn score(id: u64, output: &str, record: &DataRecord, registry: &PredicateRegistry) -> Self {
        let extraction = extract_with_diagnostics(output, registry);
        let gold = record.fact_set();
        let correct = extraction.facts.intersection(&gold).count();
        let extracted = extraction.facts.len();
        RecordFaithfulness {
            id,
            hallucinated: extracted - correct,
            omitted: gold.len() - correct,
            precision: if extracted == 0 {
                1.0
            } else {
                correct as f64 / extracted as f64
            },
            recall: if gold.is_empty() {
                1.0
            } else {
                correct as f64 / gold.len() as f64
            },
            unparsable: extraction.unparsable,
        }
    }
}

/// Means over a group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessSummary {
    pub records: usize,
    pub hallucinated: f64,
    pub omitted: f64,
    pub precision: f64,
    pub recall: f64,
    /// Fraction of outputs with at least one hallucinated fact.
    pub halluc_rate: f64,
    /// Mean fraction of input facts missing from the output.
    pub omission_rate: f64,
    pub unparsable_sentences: usize,
}

impl FaithfulnessSummary {
    fn from_rows<'a>(rows: impl Iterator<Item = (&'a RecordFaithfulness, usize)>) -> Self {
        let mut s = FaithfulnessSummary {
            records: 0,
            hallucinated: 0.0,
            omitted: 0.0,
            precision: 0.0,
            recall: 0.0,
            halluc_rate: 0.0,
            omission_rate: 0.0,
            unparsable_sentences: 0,
        };
        for (r, facts) in rows {
            s.records += 1;
            s.hallucinated += r.hallucinated as f64;
            s.omitted += r.omitted as f64;
            s.precision += r.precision;
            s.recall += r.recall;
            s.halluc_rate += f64::from(u8::from(r.hallucinated > 0));
            s.omission_rate += if facts == 0 {
                0.0
            } else {
                r.omitted as f64 / facts as f64
            };
            s.unparsable_sentences += r.unparsable;
        }
        if s.records > 0 {
            let n = s.records as f64;
            for v in [
                &mut s.hallucinated,
                &mut s.omitted,
                &mut s.precision,
                &mut s.recall,
                &mut s.halluc_rate,
                &mut s.omission_rate,
            ] {
                *v /= n;
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub overall: FaithfulnessSummary,
    /// Records with at least one held-out predicate.
    pub ood: Option<FaithfulnessSummary>,
    pub ind: Option<FaithfulnessSummary>,
    pub per_record: Vec<RecordFaithfulness>,
}

/// Scores aligned outputs against their records. `held_out` lists
/// predicates that mark a record as out-of-domain; empty means no breakdown.
pub fn faithfulness_report(
    outputs: &[String],
    records: &[DataRecord],
    registry: &PredicateRegistry,
    held_out: &[String],
) -> Result<FaithfulnessReport> {
    if outputs.len() != records.len() {
        return Err(Error::Input(format!(
            "{} outputs for {} records",
            outputs.len(),
            records.len()
        )));
    }
    let per_record: Vec<RecordFaithfulness> = outputs
        .iter()
        .zip(records)
        .map(|(o, r)| RecordFaithfulness::score(r.id, o, r, registry))
        .collect();
    let sizes: Vec<usize> = records.iter().map(|r| r.fact_set().len()).collect();
    let is_ood: Vec<bool> = records
        .iter()
        .map(|r| r.triples.iter().any(|t| held_out.contains(&t.predicate)))
        .collect();
    let group = |want: bool| {
        FaithfulnessSummary::from_rows(
            per_record
                .iter()
                .zip(&sizes)
                .zip(&is_ood)
                .filter(|(_, &o)| o == want)
                .map(|((r, &n), _)| (r, n)),
        )
    };
    let (ood, ind) = if held_out.is_empty() {
        (None, None)
    } else {
        (Some(group(true)), Some(group(false)))
    };
    Ok(FaithfulnessReport {
        overall: FaithfulnessSummary::from_rows(per_record.iter().zip(sizes.iter().copied())),
        ood,
        ind,
        per_record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::default_predicates;

    fn registry() -> PredicateRegistry {
        PredicateRegistry::new(default_predicates()).unwrap()
    }

    fn record(triples: &[(&str, &str, &str)]) -> DataRecord {
        DataRecord {
            id: 1,
            triples: triples.iter().map(|&(s, p, o)| Triple::new(s, p, o)).collect(),
            refs: vec!["x".into()],
            corrupted: false,
        }
    }

    #[test]
    fn round_trip_every_predicate() {
        let reg = registry();
        for spec in reg.specs() {
            let object = &spec.values[spec.values.len() - 1];
            let text = spec.realize("Rosa Bay", object);
            let want = Triple::new("Rosa Bay", spec.name.as_str(), object.as_str()).normalized();
            assert_eq!(extract_facts(&text, &reg), BTreeSet::from([want]), "{text}");
        }
    }

    #[test]
    fn empty_and_unparsable() {
        let reg = registry();
        assert!(extract_facts("", &reg).is_empty());
        let e = extract_with_diagnostics("Rosa Bay is nice . Rosa Bay has the city Paris .", &reg);
        assert_eq!(e.sentences, 2);
        assert_eq!(e.unparsable, 1);
        assert_eq!(e.facts.len(), 1);
    }

    #[test]
    fn swapped_object_is_one_hallucination_and_one_omission() {
        let reg = registry();
        let r = record(&[("Rosa Bay", "city", "Paris")]);
        let score = RecordFaithfulness::score(1, "Rosa Bay has the city Rome .", &r, &reg);
        assert_eq!((score.hallucinated, score.omitted), (1, 1));
        assert_eq!(score.precision, 0.0);
    }

    #[test]
    fn partial_output_recall() {
        let reg = registry();
        let r = record(&[("Rosa Bay", "city", "Paris"), ("Rosa Bay", "year", "1900")]);
        let rep = faithfulness_report(&["Rosa Bay has the city Paris .".into()], &[r], &reg, &[]).unwrap();
        assert_eq!(rep.per_record[0].recall, 0.5);
        assert_eq!(rep.per_record[0].precision, 1.0);
        assert_eq!(rep.overall.halluc_rate, 0.0);
        assert_eq!(rep.overall.omission_rate, 0.5);
        assert!(rep.ood.is_none());
    }

    #[test]
    fn ood_breakdown() {
        let reg = registry();
        let a = record(&[("Rosa Bay", "city", "Paris")]);
        let b = record(&[("Rosa Bay", "year", "1900")]);
        let outs = vec![
            "Rosa Bay has the city Rome .".to_string(),
            "Rosa Bay has the year 1900 .".into(),
        ];
        let rep = faithfulness_report(&outs, &[a, b], &reg, &["city".into()]).unwrap();
        assert_eq!(rep.ood.unwrap().halluc_rate, 1.0);
        assert_eq!(rep.ind.unwrap().halluc_rate, 0.0);
        assert_eq!(rep.overall.halluc_rate, 0.5);
    }

    #[test]
    fn misaligned_inputs() {
        assert!(faithfulness_report(&[], &[record(&[("a", "city", "b")])], &registry(), &[]).is_err());
    }
}
