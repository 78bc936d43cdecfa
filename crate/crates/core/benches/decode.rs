use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use critic_decode::critic::{build_negatives_base, build_positives, train_critic, CriticTrainConfig};
use critic_decode::decoding::{decode_all, DecodeConfig, DecodeMode};
use critic_decode::exec::Execution;
use critic_decode::lm::{train_lm, LmConfig};
use critic_decode::world::{generate_world, WorldConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench(c: &mut Criterion) {
    let corpus = generate_world(&WorldConfig {
        records: 400,
        ..WorldConfig::default()
    })
    .unwrap();
    let lm = train_lm(&corpus, &LmConfig::default()).unwrap();
    let mut examples = build_positives(&corpus).unwrap();
    examples.extend(build_negatives_base(&corpus, 7).unwrap());
    let train_cfg = CriticTrainConfig {
        epochs: 1,
        ..CriticTrainConfig::default()
    };
    let (critic, _) = train_critic(&corpus, &examples, &train_cfg, Execution::Parallel).unwrap();
    let records = &corpus.records[..100];

    let mut group = c.benchmark_group("decode_all");
    group.sample_size(10);
    for mode in [DecodeMode::Greedy, DecodeMode::Beam] {
        let cfg = DecodeConfig {
            mode,
            ..DecodeConfig::default()
        };
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(mode.name(), name), &exec, |b, &exec| {
                b.iter(|| decode_all(&lm, Some(&critic), records, &cfg, exec).unwrap())
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("train_critic");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| train_critic(&corpus, &examples, &train_cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
