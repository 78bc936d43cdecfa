use critic_decode::corpus::Triple;
use critic_decode::eval::{bleu, diff_stats, extract_facts, faithfulness_report, word_edits};
use critic_decode::text::{detokenize, tokenize};
use critic_decode::world::{generate_world, WorldConfig};
use proptest::prelude::*;

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 1..12).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn bleu_is_bounded(outs in prop::collection::vec(sentence(), 1..6), seed in sentence()) {
        let refs: Vec<Vec<String>> = outs.iter().map(|_| vec![seed.clone()]).collect();
        let b = bleu(&outs, &refs).unwrap();
        prop_assert!((0.0..=100.0).contains(&b));
    }

    #[test]
    fn bleu_of_a_perfect_match_is_100(outs in prop::collection::vec(sentence(), 1..6)) {
        let refs: Vec<Vec<String>> = outs.iter().map(|o| vec![o.clone()]).collect();
        prop_assert!((bleu(&outs, &refs).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn edits_bound_the_length_change(a in sentence(), b in sentence()) {
        let (added, removed) = word_edits(&a, &b);
        let (la, lb) = (tokenize(&a).len() as i64, tokenize(&b).len() as i64);
        prop_assert_eq!(added as i64 - removed as i64, lb - la);
        prop_assert!(removed as i64 <= la && added as i64 <= lb);
    }

    #[test]
    fn tokenize_roundtrips(text in "[A-Za-z]{1,6}( [A-Za-z0-9]{1,6}){0,6}( \\.)?") {
        let tokens = tokenize(&text);
        prop_assert_eq!(tokenize(&detokenize(&tokens)), tokens);
    }
}

#[test]
fn replacement_is_one_add_one_remove() {
    assert_eq!(word_edits("the ship is red", "the ship is blue"), (1, 1));
    assert_eq!(word_edits("a b c", "a b c d"), (1, 0));
    let s = diff_stats(
        &["x y".to_string(), "p q".to_string()],
        &["x y".to_string(), "p z".to_string()],
    )
    .unwrap();
    assert_eq!(s.modified_fraction, 0.5);
    assert_eq!(s.words_added, 0.5);
    assert_eq!(s.words_removed, 0.5);
}

#[test]
fn clean_references_carry_exactly_their_facts() {
    let cfg = WorldConfig {
        corruption_rate: 0.0,
        records: 300,
        ..WorldConfig::default()
    };
    let corpus = generate_world(&cfg).unwrap();
    let registry = cfg.registry().unwrap();
    for r in &corpus.records {
        for text in &r.refs {
            assert_eq!(extract_facts(text, &registry), r.fact_set(), "{text}");
        }
    }
    let outputs: Vec<String> = corpus.records.iter().map(|r| r.refs[0].clone()).collect();
    let report = faithfulness_report(&outputs, &corpus.records, &registry, &[]).unwrap();
    assert_eq!(report.overall.halluc_rate, 0.0);
    assert_eq!(report.overall.omission_rate, 0.0);
    assert_eq!(report.overall.precision, 1.0);
}

#[test]
fn corrupted_references_mention_a_foreign_object() {
    let cfg = WorldConfig {
        corruption_rate: 1.0,
        records: 200,
        ..WorldConfig::default()
    };
    let corpus = generate_world(&cfg).unwrap();
    let registry = cfg.registry().unwrap();
    for r in &corpus.records {
        assert!(r.corrupted);
        for text in &r.refs {
            let facts = extract_facts(text, &registry);
            let gold = r.fact_set();
            assert!(facts.iter().any(|f: &Triple| !gold.contains(f)), "{text}");
        }
    }
}

#[test]
fn corruption_rate_within_binomial_band() {
    let corpus = generate_world(&WorldConfig::default()).unwrap();
    let flagged = corpus.records.iter().filter(|r| r.corrupted).count() as f64 / corpus.len() as f64;
    assert!((0.10..=0.20).contains(&flagged), "{flagged}");
}
