//! Data records, linearization, splitting and the JSONL interchange format.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::tokenize;
use crate::vocab::{TokenId, Vocabulary};

pub const FIELD_SEP: &str = "|";
pub const TRIPLE_SEP: &str = "&&";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }

    /// Lowercased, token-joined form used for fact comparison.
    pub fn normalized(&self) -> Triple {
        let norm = |s: &str| tokenize(s).join(" ");
        Triple {
            subject: norm(&self.subject),
            predicate: norm(&self.predicate),
            object: norm(&self.object),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataRecord {
    pub id: u64,
    pub triples: Vec<Triple>,
    pub refs: Vec<String>,
    pub corrupted: bool,
}

impl DataRecord {
    pub fn validate(&self) -> Result<()> {
        if self.triples.is_empty() {
            return Err(Error::schema(format!("record {} has no triples", self.id)));
        }
        if self.refs.is_empty() {
            return Err(Error::schema(format!("record {} has no references", self.id)));
        }
        for t in &self.triples {
            if t.subject.trim().is_empty() || t.predicate.trim().is_empty() || t.object.trim().is_empty() {
                return Err(Error::schema(format!("record {} has an empty triple field", self.id)));
            }
        }
        Ok(())
    }

    pub fn linearized_text(&self) -> String {
        self.triples
            .iter()
            .map(|t| format!("{} {FIELD_SEP} {} {FIELD_SEP} {}", t.subject, t.predicate, t.object))
            .collect::<Vec<_>>()
            .join(&format!(" {TRIPLE_SEP} "))
    }

    pub fn linearized_tokens(&self) -> Vec<String> {
        tokenize(&self.linearized_text())
    }

    /// Normalized set of the record's input facts.
    pub fn fact_set(&self) -> BTreeSet<Triple> {
        self.triples.iter().map(Triple::normalized).collect()
    }
}

/// Token ids of `s | p | o && s | p | o ...`, preserving triple order.
pub fn linearize(record: &DataRecord, vocab: &Vocabulary) -> Vec<TokenId> {
    vocab.encode(&record.linearized_tokens())
}

/// Inverse of [`linearize`]: reads triples back out of a linearized sequence.
pub fn delinearize(ids: &[TokenId], vocab: &Vocabulary) -> Result<Vec<Triple>> {
    let tokens = vocab.decode(ids);
    let mut triples = Vec::new();
    for group in tokens.split(|t| t == TRIPLE_SEP) {
        let fields: Vec<&[String]> = group.split(|t| t == FIELD_SEP).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Input(format!("malformed linearized triple: {group:?}")));
        }
        triples.push(Triple::new(
            fields[0].join(" "),
            fields[1].join(" "),
            fields[2].join(" "),
        ));
    }
    Ok(triples)
}

/// Reference text as token ids, EOS appended.
pub fn encode_reference(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    let mut ids = vocab.encode(&tokenize(text));
    ids.push(crate::vocab::EOS);
    ids
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<DataRecord>,
    pub vocab: Arc<Vocabulary>,
}

impl Corpus {
    /// Builds the vocabulary from every reference and linearization.
    pub fn new(records: Vec<DataRecord>) -> Self {
        let vocab = Arc::new(vocabulary_for(&records));
        Corpus { records, vocab }
    }

    pub fn with_vocab(records: Vec<DataRecord>, vocab: Arc<Vocabulary>) -> Self {
        Corpus { records, vocab }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: u64) -> Option<&DataRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert(r.id) {
                return Err(Error::schema(format!("duplicate record id {}", r.id)));
            }
        }
        Ok(())
    }

    /// Every (record index, reference index, encoded reference with EOS).
    pub fn encoded_references(&self) -> Vec<(usize, usize, Vec<TokenId>)> {
        let mut out = Vec::new();
        for (ri, r) in self.records.iter().enumerate() {
            for (fi, text) in r.refs.iter().enumerate() {
                out.push((ri, fi, encode_reference(text, &self.vocab)));
            }
        }
        out
    }

    pub fn subset(&self, records: Vec<DataRecord>) -> Corpus {
        Corpus::with_vocab(records, Arc::clone(&self.vocab))
    }
}

pub fn vocabulary_for(records: &[DataRecord]) -> Vocabulary {
    let mut tokens = BTreeSet::new();
    for r in records {
        tokens.extend(r.linearized_tokens());
        for text in &r.refs {
            tokens.extend(tokenize(text));
        }
    }
    Vocabulary::from_tokens(tokens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitMode {
    #[default]
    Standard,
    /// Records mentioning any held-out predicate go to test only.
    OutOfDomain { held_out: Vec<String> },
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

pub fn split(corpus: &Corpus, fractions: [f64; 3], seed: u64, mode: &SplitMode) -> Result<Split> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let held: HashSet<&str> = match mode {
        SplitMode::Standard => HashSet::new(),
        SplitMode::OutOfDomain { held_out } => held_out.iter().map(String::as_str).collect(),
    };
    let (ood, mut pool): (Vec<&DataRecord>, Vec<&DataRecord>) = corpus
        .records
        .iter()
        .partition(|r| r.triples.iter().any(|t| held.contains(t.predicate.as_str())));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let n = pool.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);

    let take = |rs: &[&DataRecord]| rs.iter().map(|r| (*r).clone()).collect::<Vec<_>>();
    let train = take(&pool[..n_train]);
    let val = take(&pool[n_train..n_train + n_val]);
    let mut test = take(&pool[n_train + n_val..]);
    test.extend(ood.into_iter().cloned());

    Ok(Split {
        train: corpus.subset(train),
        val: corpus.subset(val),
        test: corpus.subset(test),
    })
}

#[derive(Serialize)]
struct RecordLine<'a> {
    id: u64,
    triples: Vec<[&'a str; 3]>,
    refs: &'a [String],
    corrupted: bool,
}

pub fn record_to_json(r: &DataRecord) -> String {
    let line = RecordLine {
        id: r.id,
        triples: r
            .triples
            .iter()
            .map(|t| [t.subject.as_str(), t.predicate.as_str(), t.object.as_str()])
            .collect(),
        refs: &r.refs,
        corrupted: r.corrupted,
    };
    serde_json::to_string(&line).expect("record serialization cannot fail")
}

fn record_from_value(v: &Value, line: usize) -> Result<DataRecord> {
    let schema = |message: String| Error::Schema {
        line: Some(line),
        message,
    };
    let obj = v
        .as_object()
        .ok_or_else(|| schema("record is not a JSON object".into()))?;
    let field = |name: &str| obj.get(name).ok_or_else(|| schema(format!("missing field {name:?}")));

    let id = field("id")?
        .as_u64()
        .ok_or_else(|| schema("\"id\" must be a non-negative integer".into()))?;
    let triples = field("triples")?
        .as_array()
        .ok_or_else(|| schema("\"triples\" must be an array".into()))?
        .iter()
        .map(|t| {
            let parts = t
                .as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| schema("each triple must be a 3-element array".into()))?;
            let s: Vec<&str> = parts
                .iter()
                .map(|p| p.as_str().ok_or_else(|| schema("triple fields must be strings".into())))
                .collect::<Result<_>>()?;
            Ok(Triple::new(s[0], s[1], s[2]))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs = field("refs")?
        .as_array()
        .ok_or_else(|| schema("\"refs\" must be an array".into()))?
        .iter()
        .map(|r| {
            r.as_str()
                .map(str::to_string)
                .ok_or_else(|| schema("refs must be strings".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let corrupted = match obj.get("corrupted") {
        None => false,
        Some(c) => c
            .as_bool()
            .ok_or_else(|| schema("\"corrupted\" must be a boolean".into()))?,
    };
    let record = DataRecord {
        id,
        triples,
        refs,
        corrupted,
    };
    record.validate().map_err(|e| match e {
        Error::Schema { message, .. } => schema(message),
        other => other,
    })?;
    Ok(record)
}

pub fn save_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    save_records(&corpus.records, path)
}

pub fn save_records(records: &[DataRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", record_to_json(r)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<DataRecord>> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let record = record_from_value(&value, lineno)?;
        if !seen.insert(record.id) {
            return Err(Error::Schema {
                line: Some(lineno),
                message: format!("duplicate record id {}", record.id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
    Ok(Corpus::new(load_records(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, triples: &[(&str, &str, &str)], refs: &[&str]) -> DataRecord {
        DataRecord {
            id,
            triples: triples.iter().map(|&(s, p, o)| Triple::new(s, p, o)).collect(),
            refs: refs.iter().map(|s| s.to_string()).collect(),
            corrupted: false,
        }
    }

    #[test]
    fn linearize_single_triple() {
        let r = rec(0, &[("A", "country", "B")], &["A is in B ."]);
        let corpus = Corpus::new(vec![r.clone()]);
        let got = linearize(&r, &corpus.vocab);
        assert_eq!(got, corpus.vocab.encode(&tokenize("A | country | B")));
    }

    #[test]
    fn linearize_joins_triples() {
        let r = rec(0, &[("A", "country", "B"), ("A", "leader", "C D")], &["x"]);
        assert_eq!(r.linearized_text(), "A | country | B && A | leader | C D");
    }

    #[test]
    fn linearize_is_idempotent_through_inverse() {
        let r = rec(
            3,
            &[
                ("The A-Rosa", "length", "125.8 metres"),
                ("The A-Rosa", "country", "Germany"),
            ],
            &["x"],
        );
        let corpus = Corpus::new(vec![r.clone()]);
        let ids = linearize(&r, &corpus.vocab);
        let back = DataRecord {
            triples: delinearize(&ids, &corpus.vocab).unwrap(),
            ..r
        };
        assert_eq!(linearize(&back, &corpus.vocab), ids);
    }

    fn corpus_of(n: u64) -> Corpus {
        let preds = ["country", "leader", "length"];
        Corpus::new(
            (0..n)
                .map(|i| {
                    let p = preds[(i % 3) as usize];
                    rec(i, &[("s", p, "o")], &["s o ."])
                })
                .collect(),
        )
    }

    #[test]
    fn split_sizes_and_partition() {
        let c = corpus_of(1000);
        let s = split(&c, [0.8, 0.1, 0.1], 7, &SplitMode::Standard).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (800, 100, 100));
        let mut ids: Vec<u64> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|c| c.records.iter().map(|r| r.id))
            .collect();
        ids.sort();
        assert_eq!(ids, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let c = corpus_of(200);
        let a = split(&c, [0.8, 0.1, 0.1], 11, &SplitMode::Standard).unwrap();
        let b = split(&c, [0.8, 0.1, 0.1], 11, &SplitMode::Standard).unwrap();
        assert_eq!(a.train.records, b.train.records);
        assert_eq!(a.test.records, b.test.records);
    }

    #[test]
    fn ood_split_holds_out_predicate() {
        let c = corpus_of(300);
        let mode = SplitMode::OutOfDomain {
            held_out: vec!["leader".into()],
        };
        let s = split(&c, [0.8, 0.1, 0.1], 7, &mode).unwrap();
        assert!(s
            .train
            .records
            .iter()
            .all(|r| r.triples.iter().all(|t| t.predicate != "leader")));
        assert!(s
            .val
            .records
            .iter()
            .all(|r| r.triples.iter().all(|t| t.predicate != "leader")));
        assert_eq!(
            s.test
                .records
                .iter()
                .filter(|r| r.triples[0].predicate == "leader")
                .count(),
            100
        );
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let c = corpus_of(10);
        assert!(matches!(
            split(&c, [0.8, 0.3, 0.1], 1, &SplitMode::Standard),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split(&c, [1.0, 0.0, 0.0], 1, &SplitMode::Standard),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut records = corpus_of(3).records;
        records[1].corrupted = true;
        records[2].refs.push("another \"quoted\" ref".into());
        let c = Corpus::new(records);
        save_jsonl(&c, &path).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), c);
    }

    #[test]
    fn missing_refs_is_schema_error_at_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(
            &path,
            "{\"id\":0,\"triples\":[[\"a\",\"b\",\"c\"]],\"refs\":[\"a c\"]}\n{\"id\":1,\"triples\":[[\"a\",\"b\",\"c\"]]}\n",
        )
        .unwrap();
        match load_jsonl(&path) {
            Err(Error::Schema { line: Some(2), message }) => assert!(message.contains("refs")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(
            &path,
            "{\"id\":0,\"triples\":[[\"a\",\"b\",\"c\"]],\"refs\":[\"x\"]}\n{oops\n",
        )
        .unwrap();
        assert!(matches!(load_jsonl(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_jsonl(&path).unwrap().is_empty());
    }
}
