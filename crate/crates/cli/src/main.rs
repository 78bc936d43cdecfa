use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use critic_decode::corpus::{load_jsonl, save_jsonl, Corpus, Split};
use critic_decode::critic::{build_negatives, build_positives, CriticExample, CriticModel};
use critic_decode::critic::{evaluate_critic, load_critic, save_critic, save_examples, train_critic, Variant};
use critic_decode::decoding::{greedy_decode, DecodeMode};
use critic_decode::eval::{sweep, write_csv};
use critic_decode::exec::{self, Execution};
use critic_decode::lm::{load_lm, save_lm, train_lm, GeneratorModel, LmConfig};
use critic_decode::pipeline::{
    self, decode_texts, evaluate_outputs, read_outputs, system_name, write_outputs, write_report, RunConfig,
};
use critic_decode::world::generate_world;

#[derive(Parser)]
#[command(
    name = "critic-decode",
    version,
    about = "Critic-guided decoding for data-to-text generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    warmup: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Beam size; 1 selects greedy decoding.
    #[arg(long, global = true)]
    beam: Option<usize>,
    /// Divide beam scores by length^p when ranking (0 = raw sums).
    #[arg(long, global = true)]
    length_penalty: Option<f64>,
    /// base, base-full, vanilla-lm, ft-lm, ft-lm-full or none.
    #[arg(long, global = true, alias = "variant")]
    critic: Option<String>,
    #[arg(long, global = true, conflicts_with = "critic")]
    no_critic: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    GenCorpus,
    /// Train the data-conditioned language model on the training split.
    TrainLm,
    /// Build positives and the selected variant's negatives.
    BuildNegatives,
    /// Train the selected critic variant.
    TrainCritic,
    /// Decode the test split.
    Decode {
        /// Also write the per-step greedy trace to trace-<system>.jsonl.
        #[arg(long)]
        trace: bool,
    },
    /// Score decoded outputs against the test split.
    Evaluate,
    /// Decode and score over the configured hyperparameter grid.
    Sweep,
    /// Full pipeline: corpus, models, all critics, decoding and comparison table.
    Repro,
}

fn parse_critic(name: &str) -> Result<Option<Variant>> {
    if name == "none" {
        return Ok(None);
    }
    let v: Variant = name.parse()?;
    if v == Variant::Positive {
        bail!("`positive` is not a critic variant");
    }
    Ok(Some(v))
}

fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    if let Some(l) = c.lambda {
        cfg.decode.lambda = l;
    }
    if let Some(w) = c.warmup {
        cfg.decode.warmup = w;
    }
    if let Some(k) = c.k {
        cfg.decode.k = k;
    }
    if let Some(p) = c.length_penalty {
        cfg.decode.length_penalty = p;
    }
    if let Some(b) = c.beam {
        cfg.decode.beam_size = b.max(1);
        cfg.decode.mode = if b > 1 { DecodeMode::Beam } else { DecodeMode::Greedy };
    }
    if let Some(name) = &c.critic {
        cfg.critic_variant = parse_critic(name)?;
    }
    if c.no_critic {
        cfg.critic_variant = None;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Ctx {
    cfg: RunConfig,
    exec: Execution,
}

impl Ctx {
    fn corpus(&self) -> Result<Corpus> {
        let path = self.cfg.corpus_file();
        load_jsonl(&path).with_context(|| format!("loading corpus {} (run gen-corpus first)", path.display()))
    }

    fn split(&self, corpus: &Corpus) -> Result<Split> {
        Ok(self.cfg.split_corpus(corpus)?)
    }

    fn lm(&self, corpus: &Corpus) -> Result<GeneratorModel> {
        let path = self.cfg.lm_file();
        load_lm(&path, Arc::clone(&corpus.vocab))
            .with_context(|| format!("loading language model {} (run train-lm first)", path.display()))
    }

    fn variant(&self) -> Result<Variant> {
        self.cfg
            .critic_variant
            .context("this command needs a critic variant (--critic)")
    }

    fn critic(&self, corpus: &Corpus, variant: Variant) -> Result<CriticModel> {
        let path = self.cfg.critic_file(variant);
        load_critic(&path, Arc::clone(&corpus.vocab))
            .with_context(|| format!("loading critic {} (run train-critic first)", path.display()))
    }

    fn lms(&self, corpus: &Corpus, train: &Corpus) -> Result<pipeline::LanguageModels> {
        let conditional = self.lm(corpus)?;
        let unconditional = train_lm(
            train,
            &LmConfig {
                alpha: self.cfg.lm.alpha,
                order_weights: self.cfg.lm.order_weights,
                ..LmConfig::unconditional()
            },
        )?;
        Ok(pipeline::LanguageModels {
            conditional,
            unconditional,
        })
    }

    /// Language models, loaded only for the LM-based variants.
    fn lms_for(&self, variant: Variant, corpus: &Corpus, train: &Corpus) -> Result<Option<pipeline::LanguageModels>> {
        match variant {
            Variant::VanillaLm | Variant::FtLm | Variant::FtLmFull => Ok(Some(self.lms(corpus, train)?)),
            _ => Ok(None),
        }
    }

    /// Positives plus `variant` negatives built from `part` of the corpus.
    fn examples(
        &self,
        variant: Variant,
        lms: Option<&pipeline::LanguageModels>,
        part: &Corpus,
    ) -> Result<Vec<CriticExample>> {
        let mut examples = build_positives(part)?;
        examples.extend(build_negatives(
            variant,
            part,
            lms.map(|m| &m.unconditional),
            lms.map(|m| &m.conditional),
            &self.cfg.decode,
            self.cfg.seed,
            self.exec,
        )?);
        Ok(examples)
    }

    fn out_dir(&self) -> Result<()> {
        let dir = &self.cfg.out_dir;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
    }
}

fn decoded_name(cfg: &RunConfig) -> String {
    let name = system_name(cfg.critic_variant);
    match cfg.decode.mode {
        DecodeMode::Greedy => name,
        DecodeMode::Beam => format!("{name}-beam"),
    }
}

fn write_traces(
    lm: &GeneratorModel,
    critic: Option<&CriticModel>,
    test: &Corpus,
    cfg: &RunConfig,
    path: &std::path::Path,
) -> Result<()> {
    let mut out = String::new();
    for record in &test.records {
        let decoded = greedy_decode(lm, critic, record, &cfg.decode)?;
        for step in &decoded.trace {
            let mut line = serde_json::to_value(step)?;
            line["record"] = serde_json::json!(record.id);
            out.push_str(&line.to_string());
            out.push('\n');
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command, ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    ctx.out_dir()?;
    match command {
        Command::GenCorpus => {
            let corpus = generate_world(&cfg.world)?;
            save_jsonl(&corpus, cfg.corpus_file())?;
            println!("wrote {} records to {}", corpus.len(), cfg.corpus_file().display());
        }
        Command::TrainLm => {
            let corpus = ctx.corpus()?;
            let split = ctx.split(&corpus)?;
            let train = split.train;
            let lm = train_lm(&train, &cfg.lm)?;
            save_lm(&lm, cfg.lm_file())?;
            println!("trained on {} records, wrote {}", train.len(), cfg.lm_file().display());
        }
        Command::BuildNegatives => {
            let variant = ctx.variant()?;
            let corpus = ctx.corpus()?;
            let split = ctx.split(&corpus)?;
            let lms = ctx.lms_for(variant, &corpus, &split.train)?;
            let positives = build_positives(&split.train)?;
            let negatives = build_negatives(
                variant,
                &split.train,
                lms.as_ref().map(|m| &m.unconditional),
                lms.as_ref().map(|m| &m.conditional),
                &cfg.decode,
                cfg.seed,
                ctx.exec,
            )?;
            save_examples(&negatives, cfg.negatives_file(variant))?;
            println!("positives {}", positives.len());
            println!("negatives {}", negatives.len());
        }
        Command::TrainCritic => {
            let variant = ctx.variant()?;
            let corpus = ctx.corpus()?;
            let split = ctx.split(&corpus)?;
            let lms = ctx.lms_for(variant, &corpus, &split.train)?;
            let examples = ctx.examples(variant, lms.as_ref(), &split.train)?;
            let (critic, report) = train_critic(&split.train, &examples, &cfg.critic_train, ctx.exec)?;
            save_critic(&critic, cfg.critic_file(variant))?;
            let held = ctx.examples(variant, lms.as_ref(), &split.test)?;
            let metrics = evaluate_critic(&critic, &split.test, &held, ctx.exec)?;
            println!(
                "trained {variant} critic on {} positives / {} negatives; held-out accuracy {:.4}",
                report.positives, report.negatives, metrics.accuracy
            );
        }
        Command::Decode { trace } => {
            let corpus = ctx.corpus()?;
            let split = ctx.split(&corpus)?;
            let lm = ctx.lm(&corpus)?;
            let critic = cfg.critic_variant.map(|v| ctx.critic(&corpus, v)).transpose()?;
            let outputs = decode_texts(&lm, critic.as_ref(), &split.test, &cfg.decode, ctx.exec)?;
            let path = cfg.outputs_file(&decoded_name(cfg));
            write_outputs(&split.test, &outputs, &path)?;
            println!("wrote {} outputs to {}", outputs.len(), path.display());
            if trace {
                let path = cfg.out_dir.join(format!("trace-{}.jsonl", decoded_name(cfg)));
                write_traces(&lm, critic.as_ref(), &split.test, cfg, &path)?;
                println!("wrote greedy traces to {}", path.display());
            }
        }
        Command::Evaluate => {
            let corpus = ctx.corpus()?;
            let split = ctx.split(&corpus)?;
            let name = decoded_name(cfg);
            let read = |name: &str| -> Result<Vec<String>> {
                let path = cfg.outputs_file(name);
                let rows = read_outputs(&path).with_context(|| format!("reading {}", path.display()))?;
                if rows.len() != split.test.len() || rows.iter().zip(&split.test.records).any(|(r, x)| r.0 != x.id) {
                    bail!("{} does not match the test split", path.display());
                }
                Ok(rows.into_iter().map(|r| r.1).collect())
            };
            let outputs = read(&name)?;
            let baseline_name = match cfg.decode.mode {
                DecodeMode::Greedy => "none".to_string(),
                DecodeMode::Beam => "none-beam".to_string(),
            };
            let baseline = if cfg.outputs_file(&baseline_name).exists() {
                read(&baseline_name)?
            } else {
                outputs.clone()
            };
            let registry = cfg.world.registry()?;
            let report = evaluate_outputs(
                &system_name(cfg.critic_variant),
                cfg.decode.mode,
                &outputs,
                &baseline,
                &split.test,
                &registry,
                &cfg.held_out(),
            )?;
            write_report(&report, cfg.report_file(&name))?;
            let f = &report.faithfulness.overall;
            println!(
                "bleu {:.2}  halluc_rate {:.4}  omission_rate {:.4}  modified {:.1}%",
                report.bleu, f.halluc_rate, f.omission_rate, report.modified_pct
            );
        }
        Command::Sweep => {
            let corpus = ctx.corpus()?;
            let split = ctx.split(&corpus)?;
            let lm = ctx.lm(&corpus)?;
            let variants: Vec<Variant> = match cfg.critic_variant {
                Some(v) => vec![v],
                None => Variant::NEGATIVE.to_vec(),
            };
            let mut critics = Vec::new();
            for v in variants {
                critics.push((v.cli_name(), ctx.critic(&corpus, v)?));
            }
            let refs: Vec<(String, &CriticModel)> = critics.iter().map(|(n, c)| (n.clone(), c)).collect();
            let registry = cfg.world.registry()?;
            let rows = sweep(&split.test, &lm, &refs, &cfg.sweep, &cfg.decode, &registry, ctx.exec)?;
            let path = cfg.out_dir.join("sweep.csv");
            write_csv(&rows, &path)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Repro => {
            let experiment = pipeline::repro(cfg, ctx.exec)?;
            print!("{}", pipeline::comparison_csv(&experiment));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve_config(&cli.common).and_then(|cfg| {
        let jobs = cfg.jobs;
        let ctx = Ctx {
            cfg,
            exec: Execution::default(),
        };
        exec::with_jobs(jobs, || run(cli.command, &ctx))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
