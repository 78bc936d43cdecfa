use critic_decode::decoding::{combine_scores, effective_lambda, normalize_combined, DecodeConfig};
use critic_decode::lm::{argmax, TokenDistribution};
use critic_decode::vocab::TokenId;
use proptest::prelude::*;

fn dist(weights: &[f64]) -> TokenDistribution {
    let z: f64 = weights.iter().sum();
    TokenDistribution {
        logprobs: weights.iter().map(|w| (w / z).ln()).collect(),
    }
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-4f64..1.0, n)
}

fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..=1.0, n)
}

fn full_map(p: &[f64]) -> Vec<(TokenId, f64)> {
    p.iter().enumerate().map(|(i, &p)| (i as TokenId, p)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn full_vocabulary_product_renormalizes(w in weights(10), c in probs(10)) {
        let lm = dist(&w);
        let got = normalize_combined(&combine_scores(&lm, &full_map(&c), 1.0).unwrap()).unwrap();
        let z: f64 = w.iter().sum();
        let prod: Vec<f64> = w.iter().zip(&c).map(|(w, c)| w / z * c).collect();
        let total: f64 = prod.iter().sum();
        for (lp, q) in got.logprobs.iter().zip(&prod) {
            prop_assert!((lp.exp() - q / total).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_lambda_or_unit_critic_is_identity(w in weights(12), c in probs(5), lambda in 0.0f64..2.0) {
        let lm = dist(&w);
        let map = full_map(&c);
        prop_assert_eq!(&combine_scores(&lm, &map, 0.0).unwrap(), &lm.logprobs);
        let ones: Vec<(TokenId, f64)> = map.iter().map(|&(t, _)| (t, 1.0)).collect();
        prop_assert_eq!(&combine_scores(&lm, &ones, lambda).unwrap(), &lm.logprobs);
    }

    #[test]
    fn raising_one_critic_probability_keeps_or_takes_the_argmax(
        w in weights(8),
        c in probs(4),
        lambda in 0.01f64..2.0,
        pick in 0usize..4,
        bump in 0.0f64..1.0,
    ) {
        let lm = dist(&w);
        let mut map = full_map(&c);
        let before = argmax(&combine_scores(&lm, &map, lambda).unwrap());
        map[pick].1 += (1.0 - map[pick].1) * bump;
        let after = argmax(&combine_scores(&lm, &map, lambda).unwrap());
        prop_assert!(after == before || after == pick as TokenId);
    }

    #[test]
    fn untouched_tokens_keep_their_lm_score(w in weights(9), c in probs(3), lambda in 0.0f64..3.0) {
        let lm = dist(&w);
        let scores = combine_scores(&lm, &full_map(&c), lambda).unwrap();
        prop_assert_eq!(&scores[3..], &lm.logprobs[3..]);
        for (s, lp) in scores.iter().zip(&lm.logprobs).take(3) {
            prop_assert!(s <= lp);
        }
    }
}

#[test]
fn warmup_table() {
    let expected_quarter = [0.05, 0.1, 0.15, 0.2, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25];
    let expected_one = [0.2, 0.4, 0.6, 0.8, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    for (lambda, expected) in [(0.25, expected_quarter), (1.0, expected_one)] {
        let cfg = DecodeConfig {
            lambda,
            warmup: 5,
            ..DecodeConfig::default()
        };
        for (i, e) in (1..=10).zip(expected) {
            assert!((effective_lambda(i, &cfg) - e).abs() < 1e-12, "i={i} lambda={lambda}");
        }
    }
}
