//! Seeded synthetic triples-to-text world.
//!
//! Every predicate owns one sentence template (`{s}` and `{o}` mark the
//! subject and object slots) and an inverse token pattern used by the fact
//! oracle. References concatenate one realized sentence per triple in a
//! shuffled order. Corruption swaps one object mention in the reference text
//! while leaving the triples untouched.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DataRecord, Triple};
use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub name: String,
    /// Forward template, e.g. `"{s} has the country {o} ."`.
    pub template: String,
    /// Inverse pattern in the same placeholder syntax.
    pub pattern: String,
    pub values: Vec<String>,
}

impl PredicateSpec {
    pub fn new(name: &str, template: &str, values: Vec<String>) -> Self {
        PredicateSpec {
            name: name.to_string(),
            template: template.to_string(),
            pattern: template.to_string(),
            values,
        }
    }

    pub fn realize(&self, subject: &str, object: &str) -> String {
        self.template.replace("{s}", subject).replace("{o}", object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum PatternItem {
    Lit(String),
    Subject,
    Object,
}

/// Token-level inverse of a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPattern {
    items: Vec<PatternItem>,
}

impl TokenPattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let mut items = Vec::new();
        for chunk in pattern.split_whitespace() {
            match chunk {
                "{s}" => items.push(PatternItem::Subject),
                "{o}" => items.push(PatternItem::Object),
                other => items.extend(tokenize(other).into_iter().map(PatternItem::Lit)),
            }
        }
        let count = |want: &PatternItem| items.iter().filter(|i| *i == want).count();
        if count(&PatternItem::Subject) != 1 || count(&PatternItem::Object) != 1 {
            return Err(Error::Config(format!(
                "pattern {pattern:?} must contain exactly one {{s}} and one {{o}}"
            )));
        }
        Ok(TokenPattern { items })
    }

    /// Matches the whole token slice; slots capture at least one token.
    pub fn matches<'a>(&self, tokens: &'a [String]) -> Option<(&'a [String], &'a [String])> {
        let mut subject = None;
        let mut object = None;
        if self.match_from(0, tokens, 0, &mut subject, &mut object) {
            Some((subject.unwrap(), object.unwrap()))
        } else {
            None
        }
    }

    fn match_from<'a>(
        &self,
        item: usize,
        tokens: &'a [String],
        pos: usize,
        subject: &mut Option<&'a [String]>,
        object: &mut Option<&'a [String]>,
    ) -> bool {
        let Some(current) = self.items.get(item) else {
            return pos == tokens.len();
        };
        match current {
            PatternItem::Lit(lit) => {
                tokens.get(pos).is_some_and(|t| t == lit) && self.match_from(item + 1, tokens, pos + 1, subject, object)
            }
            slot => {
                for end in pos + 1..=tokens.len() {
                    let span = &tokens[pos..end];
                    match slot {
                        PatternItem::Subject => *subject = Some(span),
                        _ => *object = Some(span),
                    }
                    if self.match_from(item + 1, tokens, end, subject, object) {
                        return true;
                    }
                }
                false
            }
        }
    }
}

/// Predicate registry with compiled inverse patterns.
#[derive(Debug, Clone)]
pub struct PredicateRegistry {
    specs: Vec<PredicateSpec>,
    patterns: Vec<TokenPattern>,
    by_name: HashMap<String, usize>,
}

impl PredicateRegistry {
    pub fn new(specs: Vec<PredicateSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("empty predicate registry".into()));
        }
        let mut patterns = Vec::with_capacity(specs.len());
        let mut by_name = HashMap::new();
        for (i, spec) in specs.iter().enumerate() {
            if spec.name.trim().is_empty() {
                return Err(Error::Config("predicate with empty name".into()));
            }
            if by_name.insert(spec.name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate predicate {:?}", spec.name)));
            }
            let forward = TokenPattern::parse(&spec.template)?;
            let sentence_ends = forward
                .items
                .iter()
                .filter(|i| **i == PatternItem::Lit(".".into()))
                .count();
            if sentence_ends != 1 || forward.items.last() != Some(&PatternItem::Lit(".".into())) {
                return Err(Error::Config(format!(
                    "template for {:?} must be exactly one sentence ending in '.'",
                    spec.name
                )));
            }
            patterns.push(TokenPattern::parse(&spec.pattern)?);
        }
        Ok(PredicateRegistry {
            specs,
            patterns,
            by_name,
        })
    }

    pub fn specs(&self) -> &[PredicateSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&PredicateSpec> {
        self.by_name.get(name).map(|&i| &self.specs[i])
    }

    pub fn patterns(&self) -> impl Iterator<Item = (&PredicateSpec, &TokenPattern)> {
        self.specs.iter().zip(&self.patterns)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub records: usize,
    pub entity_count: usize,
    pub predicates: Vec<PredicateSpec>,
    /// Relative weight of 1, 2, ... triples per record (at most 7 entries).
    pub triples_per_record: Vec<f64>,
    pub refs_per_record: usize,
    pub corruption_rate: f64,
    /// Zipf exponent of the per-predicate object distribution.
    pub value_skew: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            records: 1000,
            entity_count: 80,
            predicates: default_predicates(),
            triples_per_record: vec![0.25, 0.25, 0.2, 0.12, 0.08, 0.06, 0.04],
            refs_per_record: 2,
            corruption_rate: 0.15,
            value_skew: 1.0,
            seed: 7,
        }
    }
}

impl WorldConfig {
    pub fn registry(&self) -> Result<PredicateRegistry> {
        PredicateRegistry::new(self.predicates.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.registry()?;
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::Config(format!(
                "corruption rate {} outside [0, 1]",
                self.corruption_rate
            )));
        }
        if self.triples_per_record.is_empty()
            || self.triples_per_record.len() > 7
            || self.triples_per_record.iter().any(|w| !(*w >= 0.0))
            || self.triples_per_record.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Config("invalid triples-per-record distribution".into()));
        }
        if self.refs_per_record == 0 {
            return Err(Error::Config("refs_per_record must be at least 1".into()));
        }
        if self.entity_count == 0 || self.entity_count > SUBJECT_HEADS.len() * SUBJECT_TAILS.len() {
            return Err(Error::Config(format!(
                "entity_count must be in 1..={}",
                SUBJECT_HEADS.len() * SUBJECT_TAILS.len()
            )));
        }
        for p in &self.predicates {
            if p.values.is_empty() {
                return Err(Error::Config(format!("predicate {:?} has no values", p.name)));
            }
        }
        Ok(())
    }
}

const SUBJECT_HEADS: [&str; 26] = [
    "Alto", "Bravo", "Celia", "Dorn", "Elba", "Fenna", "Gala", "Hesta", "Iona", "Jura", "Kora", "Lumen", "Mira",
    "Nova", "Orla", "Pyra", "Quill", "Rosa", "Sola", "Tamsin", "Ulla", "Vega", "Wren", "Xeno", "Yara", "Zola",
];

const SUBJECT_TAILS: [&str; 20] = [
    "bay", "burg", "crest", "dale", "ford", "gate", "haven", "holm", "lund", "mere", "mont", "moor", "ness", "port",
    "ridge", "stad", "ton", "vale", "wick", "by",
];

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// The built-in registry: fourteen predicates sharing the sentence frame
/// `{s} has the <predicate> {o} .`
pub fn default_predicates() -> Vec<PredicateSpec> {
    let people_first = ["Anna", "Boris", "Clara", "David", "Emil", "Freya", "Georg", "Hana"];
    let people_last = ["Berger", "Costa", "Duval", "Ekberg", "Fischer", "Grant"];
    let people: Vec<String> = people_first
        .iter()
        .flat_map(|f| people_last.iter().map(move |l| format!("{f} {l}")))
        .take(30)
        .collect();
    let lengths: Vec<String> = (0..30)
        .map(|i| format!("{}.{} metres", 60 + i * 7, (i * 3) % 10))
        .collect();
    let populations: Vec<String> = (0..30).map(|i| format!("{}", 12_000 + i * 4_350)).collect();
    let years: Vec<String> = (0..30).map(|i| format!("{}", 1850 + i * 5)).collect();
    let elevations: Vec<String> = (0..30).map(|i| format!("{} metres", 20 + i * 45)).collect();

    let frame = |p: &str| format!("{{s}} has the {p} {{o}} .");
    let spec = |name: &str, values: Vec<String>| PredicateSpec::new(name, &frame(name), values);

    vec![
        spec(
            "country",
            strings(&[
                "Germany",
                "France",
                "Italy",
                "Spain",
                "United States",
                "United Kingdom",
                "Japan",
                "China",
                "India",
                "Brazil",
                "Canada",
                "Mexico",
                "Netherlands",
                "Belgium",
                "Sweden",
                "Norway",
                "Poland",
                "Austria",
                "Greece",
                "Turkey",
                "South Korea",
                "New Zealand",
                "Argentina",
                "Egypt",
                "Kenya",
            ]),
        ),
        spec(
            "city",
            strings(&[
                "Berlin", "Paris", "Rome", "Madrid", "London", "Tokyo", "Vienna", "Prague", "Oslo", "Lisbon", "Dublin",
                "Athens", "Cairo", "Nairobi", "Lima", "Quito", "Hamburg", "Lyon", "Milan", "Seville", "Kyoto", "Osaka",
                "Toronto", "Boston", "Chicago", "Denver", "Austin", "Porto", "Bergen", "Krakow",
            ]),
        ),
        spec("leader", people.clone()),
        spec("length", lengths),
        spec("population", populations),
        spec("year", years),
        spec(
            "operator",
            strings(&[
                "AIDA Cruises",
                "Viking Lines",
                "Nordic Rail",
                "Atlas Air",
                "Blue Harbor",
                "Crown Transit",
                "Delta Marine",
                "Evergreen Lines",
                "Falcon Freight",
                "Granite Logistics",
                "Horizon Ferries",
                "Iris Shipping",
                "Juniper Rail",
                "Kestrel Aviation",
                "Lighthouse Group",
                "Meridian Travel",
                "Northwind Co",
                "Orion Carriers",
                "Pioneer Lines",
                "Quartz Holdings",
            ]),
        ),
        spec(
            "language",
            strings(&[
                "German",
                "French",
                "Italian",
                "Spanish",
                "English",
                "Japanese",
                "Mandarin",
                "Hindi",
                "Portuguese",
                "Dutch",
                "Swedish",
                "Polish",
                "Greek",
                "Turkish",
                "Korean",
                "Arabic",
                "Swahili",
                "Czech",
                "Norwegian",
                "Danish",
            ]),
        ),
        spec(
            "currency",
            strings(&[
                "Euro", "Dollar", "Pound", "Yen", "Yuan", "Rupee", "Real", "Peso", "Krona", "Krone", "Zloty", "Lira",
                "Won", "Shilling", "Franc", "Rand", "Dinar", "Forint", "Koruna", "Lev",
            ]),
        ),
        spec(
            "genre",
            strings(&[
                "jazz",
                "rock",
                "folk",
                "blues",
                "opera",
                "techno",
                "reggae",
                "punk",
                "soul",
                "gospel",
                "ambient",
                "swing",
                "funk",
                "grunge",
                "disco",
                "salsa",
                "tango",
                "bluegrass",
                "metal",
                "indie",
            ]),
        ),
        spec(
            "manufacturer",
            strings(&[
                "MTU Friedrichshafen",
                "Rolls Royce",
                "Siemens",
                "Alstom",
                "Bombardier",
                "Wartsila",
                "Caterpillar",
                "Cummins",
                "Volvo Penta",
                "Yanmar",
                "Deutz",
                "Scania",
                "Hyundai Heavy",
                "Fincantieri",
                "Meyer Werft",
                "Damen",
                "Austal",
                "Navantia",
                "Kawasaki",
                "Mitsubishi",
            ]),
        ),
        spec("elevation", elevations),
        spec("owner", people.into_iter().rev().collect()),
        spec(
            "builder",
            strings(&[
                "Harland Wolff",
                "Blohm Voss",
                "Chantiers Atlantique",
                "Kvaerner",
                "Odense Yard",
                "Samsung Heavy",
                "Daewoo Marine",
                "Nordseewerke",
                "Lurssen",
                "Abeking Rasmussen",
                "Vard",
                "Ulstein",
                "Kership",
                "Saint Nazaire",
                "Cochin Yard",
                "Hanjin Heavy",
                "Sembcorp",
                "Keppel",
                "Oshima",
                "Tsuneishi",
            ]),
        ),
    ]
}

fn subject_names(count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut all: Vec<String> = SUBJECT_HEADS
        .iter()
        .flat_map(|h| SUBJECT_TAILS.iter().map(move |t| format!("{h}{t}")))
        .collect();
    all.shuffle(rng);
    all.truncate(count);
    all
}

fn zipf_weights(n: usize, skew: f64) -> Vec<f64> {
    (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(skew)).collect()
}

/// Generates the corpus described by `config`. Pure function of the config.
pub fn generate_world(config: &WorldConfig) -> Result<Corpus> {
    config.validate()?;
    let registry = config.registry()?;
    let specs = registry.specs();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let subjects = subject_names(config.entity_count, &mut rng);
    let count_dist = WeightedIndex::new(&config.triples_per_record)
        .map_err(|e| Error::Config(format!("triples-per-record weights: {e}")))?;
    let value_dists: Vec<WeightedIndex<f64>> = specs
        .iter()
        .map(|p| WeightedIndex::new(zipf_weights(p.values.len(), config.value_skew)).unwrap())
        .collect();

    // Pass 1: facts.
    let mut facts: Vec<(String, Vec<(usize, String)>)> = Vec::with_capacity(config.records);
    for _ in 0..config.records {
        let subject = subjects[rng.gen_range(0..subjects.len())].clone();
        let n = (count_dist.sample(&mut rng) + 1).min(specs.len());
        let mut pred_ids: Vec<usize> = (0..specs.len()).collect();
        pred_ids.shuffle(&mut rng);
        pred_ids.truncate(n);
        let triples = pred_ids
            .into_iter()
            .map(|p| (p, specs[p].values[value_dists[p].sample(&mut rng)].clone()))
            .collect();
        facts.push((subject, triples));
    }

    // Objects of each predicate, by record, for corruption.
    let mut by_predicate: Vec<Vec<(usize, &str)>> = vec![Vec::new(); specs.len()];
    for (ri, (_, triples)) in facts.iter().enumerate() {
        for (p, o) in triples {
            by_predicate[*p].push((ri, o.as_str()));
        }
    }

    // Pass 2: references.
    let mut records = Vec::with_capacity(config.records);
    for (ri, (subject, triples)) in facts.iter().enumerate() {
        let corrupted = rng.gen_bool(config.corruption_rate);
        let mut refs = Vec::with_capacity(config.refs_per_record);
        for _ in 0..config.refs_per_record {
            let mut order: Vec<usize> = (0..triples.len()).collect();
            order.shuffle(&mut rng);
            let swap_at = corrupted.then(|| rng.gen_range(0..order.len()));
            let sentences: Vec<String> = order
                .iter()
                .enumerate()
                .map(|(pos, &ti)| {
                    let (p, object) = &triples[ti];
                    let object = if swap_at == Some(pos) {
                        swapped_object(&by_predicate[*p], ri, object, &specs[*p], &mut rng)
                    } else {
                        object.clone()
                    };
                    specs[*p].realize(subject, &object)
                })
                .collect();
            refs.push(sentences.join(" "));
        }
        records.push(DataRecord {
            id: ri as u64,
            triples: triples
                .iter()
                .map(|(p, o)| Triple::new(subject.clone(), specs[*p].name.clone(), o.clone()))
                .collect(),
            refs,
            corrupted,
        });
    }
    Ok(Corpus::new(records))
}

fn swapped_object(
    pool: &[(usize, &str)],
    record: usize,
    original: &str,
    spec: &PredicateSpec,
    rng: &mut ChaCha8Rng,
) -> String {
    let candidates: Vec<&str> = pool
        .iter()
        .filter(|(r, o)| *r != record && *o != original)
        .map(|(_, o)| *o)
        .collect();
    if let Some(o) = candidates.choose(rng) {
        return o.to_string();
    }
    // Every other record agrees on this object; fall back to the value pool.
    let alternatives: Vec<&String> = spec.values.iter().filter(|v| *v != original).collect();
    alternatives
        .choose(rng)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("not {original}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_extracts_multi_token_slots() {
        let p = TokenPattern::parse("{s} has the country {o} .").unwrap();
        let toks = tokenize("Rosa Quay has the country United States .");
        let (s, o) = p.matches(&toks).unwrap();
        assert_eq!(s.join(" "), "rosa quay");
        assert_eq!(o.join(" "), "united states");
        assert!(p.matches(&tokenize("Rosa Quay has the city Paris .")).is_none());
    }

    #[test]
    fn empty_registry_is_config_error() {
        let cfg = WorldConfig {
            predicates: vec![],
            ..WorldConfig::default()
        };
        assert!(matches!(generate_world(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_multi_sentence_template() {
        let spec = PredicateSpec::new("x", "{s} is . {o} .", vec!["a".into()]);
        assert!(PredicateRegistry::new(vec![spec]).is_err());
    }

    #[test]
    fn rejects_bad_corruption_rate() {
        let cfg = WorldConfig {
            corruption_rate: 1.5,
            ..WorldConfig::default()
        };
        assert!(matches!(generate_world(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = WorldConfig {
            records: 50,
            ..WorldConfig::default()
        };
        assert_eq!(generate_world(&cfg).unwrap(), generate_world(&cfg).unwrap());
        let other = WorldConfig { seed: 8, ..cfg.clone() };
        assert_ne!(
            generate_world(&cfg).unwrap().records,
            generate_world(&other).unwrap().records
        );
    }

    #[test]
    fn records_are_well_formed() {
        let cfg = WorldConfig {
            records: 200,
            ..WorldConfig::default()
        };
        let corpus = generate_world(&cfg).unwrap();
        corpus.validate().unwrap();
        for r in &corpus.records {
            assert!((1..=7).contains(&r.triples.len()));
            assert_eq!(r.refs.len(), 2);
            let subject = &r.triples[0].subject;
            assert!(r.triples.iter().all(|t| &t.subject == subject));
        }
    }

    #[test]
    fn vocabulary_closure() {
        let cfg = WorldConfig {
            records: 100,
            ..WorldConfig::default()
        };
        let corpus = generate_world(&cfg).unwrap();
        for r in &corpus.records {
            for text in &r.refs {
                for tok in tokenize(text) {
                    assert!(corpus.vocab.id(&tok).is_some(), "missing {tok}");
                }
            }
        }
    }
}
