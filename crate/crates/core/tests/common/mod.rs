#![allow(dead_code)]

use std::sync::OnceLock;

use critic_decode::corpus::Split;
use critic_decode::critic::{train_critic, CriticModel, Variant};
use critic_decode::exec::Execution;
use critic_decode::pipeline::{critic_examples, train_language_models, LanguageModels, RunConfig};
use critic_decode::world::{generate_world, PredicateRegistry};

pub struct Testbed {
    pub config: RunConfig,
    pub split: Split,
    pub lms: LanguageModels,
    pub base: CriticModel,
    pub registry: PredicateRegistry,
}

/// Default world at seed 7 with a base critic, built once per test binary.
pub fn testbed() -> &'static Testbed {
    static BED: OnceLock<Testbed> = OnceLock::new();
    BED.get_or_init(|| {
        let config = RunConfig::default();
        let corpus = generate_world(&config.world).unwrap();
        let split = config.split_corpus(&corpus).unwrap();
        let lms = train_language_models(&split.train, &config.lm).unwrap();
        let exec = Execution::default();
        let examples = critic_examples(Variant::Base, &split.train, &lms, &config.decode, config.seed, exec).unwrap();
        let (base, _) = train_critic(&split.train, &examples, &config.critic_train, exec).unwrap();
        let registry = config.world.registry().unwrap();
        Testbed {
            config,
            split,
            lms,
            base,
            registry,
        }
    })
}
