//! Run configuration and the end-to-end experiment.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{self, Corpus, Split, SplitMode};
use crate::critic::{
    build_negatives, build_positives, evaluate_critic, save_critic, train_critic, CriticExample, CriticMetrics,
    CriticModel, CriticTrainConfig, Variant,
};
use crate::decoding::{decode_all, output_text, DecodeConfig, DecodeMode};
use crate::error::{Error, Result};
use crate::eval::{bleu, diff_stats, faithfulness_report, FaithfulnessReport, SweepGrid};
use crate::exec::Execution;
use crate::lm::{save_lm, train_lm, GeneratorModel, LmConfig};
use crate::world::{generate_world, PredicateRegistry, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Corpus to load instead of `<out_dir>/corpus.jsonl`.
    pub corpus_path: Option<PathBuf>,
    pub world: WorldConfig,
    pub split: SplitMode,
    pub split_fractions: [f64; 3],
    pub lm: LmConfig,
    pub critic_train: CriticTrainConfig,
    pub decode: DecodeConfig,
    pub sweep: SweepGrid,
    /// `None` decodes without a critic.
    pub critic_variant: Option<Variant>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            corpus_path: None,
            world: WorldConfig::default(),
            split: SplitMode::Standard,
            split_fractions: [0.8, 0.1, 0.1],
            lm: LmConfig::default(),
            critic_train: CriticTrainConfig::default(),
            decode: DecodeConfig::default(),
            sweep: SweepGrid::default(),
            critic_variant: Some(Variant::Base),
            seed: 7,
            jobs: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Sets the global seed and every seed derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.world.seed = seed;
        self.critic_train.shuffle_seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.lm.validate()?;
        self.critic_train.validate()?;
        self.decode.validate()
    }

    pub fn corpus_file(&self) -> PathBuf {
        self.corpus_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("corpus.jsonl"))
    }

    pub fn lm_file(&self) -> PathBuf {
        self.out_dir.join("lm.json")
    }

    pub fn critic_file(&self, variant: Variant) -> PathBuf {
        self.out_dir.join(format!("critic-{}.json", variant.cli_name()))
    }

    pub fn negatives_file(&self, variant: Variant) -> PathBuf {
        self.out_dir.join(format!("negatives-{}.jsonl", variant.cli_name()))
    }

    pub fn outputs_file(&self, system: &str) -> PathBuf {
        self.out_dir.join(format!("outputs-{system}.jsonl"))
    }

    pub fn report_file(&self, system: &str) -> PathBuf {
        self.out_dir.join(format!("report-{system}.json"))
    }

    pub fn comparison_file(&self) -> PathBuf {
        self.out_dir.join("comparison.csv")
    }

    pub fn split_corpus(&self, corpus: &Corpus) -> Result<Split> {
        corpus::split(corpus, self.split_fractions, self.seed, &self.split)
    }

    pub fn held_out(&self) -> Vec<String> {
        match &self.split {
            SplitMode::Standard => Vec::new(),
            SplitMode::OutOfDomain { held_out } => held_out.clone(),
        }
    }
}

/// System name used in file names: `none` for the critic-free baseline.
pub fn system_name(variant: Option<Variant>) -> String {
    variant.map_or_else(|| "none".to_string(), Variant::cli_name)
}

pub struct LanguageModels {
    pub conditional: GeneratorModel,
    pub unconditional: GeneratorModel,
}

pub fn train_language_models(train: &Corpus, config: &LmConfig) -> Result<LanguageModels> {
    Ok(LanguageModels {
        conditional: train_lm(train, config)?,
        unconditional: train_lm(
            train,
            &LmConfig {
                alpha: config.alpha,
                order_weights: config.order_weights,
                ..LmConfig::unconditional()
            },
        )?,
    })
}

/// Positives plus the variant's negatives.
pub fn critic_examples(
    variant: Variant,
    corpus: &Corpus,
    lms: &LanguageModels,
    decode: &DecodeConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<CriticExample>> {
    let mut examples = build_positives(corpus)?;
    examples.extend(build_negatives(
        variant,
        corpus,
        Some(&lms.unconditional),
        Some(&lms.conditional),
        decode,
        seed,
        exec,
    )?);
    Ok(examples)
}

pub fn decode_texts(
    generator: &GeneratorModel,
    critic: Option<&CriticModel>,
    corpus: &Corpus,
    config: &DecodeConfig,
    exec: Execution,
) -> Result<Vec<String>> {
    let tokens = decode_all(generator, critic, &corpus.records, config, exec)?;
    Ok(tokens.iter().map(|t| output_text(&corpus.vocab, t)).collect())
}

pub fn write_outputs(corpus: &Corpus, outputs: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (r, text) in corpus.records.iter().zip(outputs) {
        writeln!(w, "{}", json!({"id": r.id, "text": text})).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_outputs(path: impl AsRef<Path>) -> Result<Vec<(u64, String)>> {
    #[derive(Deserialize)]
    struct Row {
        id: u64,
        text: String,
    }
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((row.id, row.text));
    }
    Ok(out)
}

/// Evaluation of one decoded system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    pub mode: DecodeMode,
    pub bleu: f64,
    pub faithfulness: FaithfulnessReport,
    pub modified_pct: f64,
    pub words_added: f64,
    pub words_removed: f64,
    pub critic: Option<CriticMetrics>,
}

pub fn evaluate_outputs(
    system: &str,
    mode: DecodeMode,
    outputs: &[String],
    baseline: &[String],
    test: &Corpus,
    registry: &PredicateRegistry,
    held_out: &[String],
) -> Result<SystemReport> {
    let refs: Vec<Vec<String>> = test.records.iter().map(|r| r.refs.clone()).collect();
    let diff = diff_stats(baseline, outputs)?;
    Ok(SystemReport {
        system: system.to_string(),
        mode,
        bleu: bleu(outputs, &refs)?,
        faithfulness: faithfulness_report(outputs, &test.records, registry, held_out)?,
        modified_pct: 100.0 * diff.modified_fraction,
        words_added: diff.words_added,
        words_removed: diff.words_removed,
        critic: None,
    })
}

pub fn write_report(report: &SystemReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub struct Experiment {
    pub corpus: Corpus,
    pub split: Split,
    pub lms: LanguageModels,
    pub critics: Vec<(Variant, CriticModel)>,
    /// Baseline first, then one entry per critic variant, for each mode.
    pub systems: Vec<(SystemReport, Vec<String>)>,
}

impl Experiment {
    pub fn system(&self, name: &str, mode: DecodeMode) -> Option<&SystemReport> {
        self.systems
            .iter()
            .map(|(r, _)| r)
            .find(|r| r.system == name && r.mode == mode)
    }
}

/// Generate, split, train the LMs and every critic variant, decode the test
/// split with the baseline and each critic (greedy and beam) and evaluate.
pub fn run_experiment(config: &RunConfig, variants: &[Variant], exec: Execution) -> Result<Experiment> {
    config.validate()?;
    let corpus = generate_world(&config.world)?;
    let registry = config.world.registry()?;
    let split = config.split_corpus(&corpus)?;
    let lms = train_language_models(&split.train, &config.lm)?;
    let held_out = config.held_out();

    let mut critics = Vec::new();
    let mut metrics = Vec::new();
    for &variant in variants {
        let examples = critic_examples(variant, &split.train, &lms, &config.decode, config.seed, exec)?;
        let (critic, _) = train_critic(&split.train, &examples, &config.critic_train, exec)?;
        let held = critic_examples(variant, &split.test, &lms, &config.decode, config.seed, exec)?;
        metrics.push(evaluate_critic(&critic, &split.test, &held, exec)?);
        critics.push((variant, critic));
    }

    let mut systems = Vec::new();
    for mode in [DecodeMode::Greedy, DecodeMode::Beam] {
        let cfg = DecodeConfig {
            mode,
            ..config.decode.clone()
        };
        let baseline = decode_texts(&lms.conditional, None, &split.test, &cfg, exec)?;
        let report = evaluate_outputs("none", mode, &baseline, &baseline, &split.test, &registry, &held_out)?;
        let mut rows = vec![(report, baseline.clone())];
        for ((variant, critic), m) in critics.iter().zip(&metrics) {
            let outputs = decode_texts(&lms.conditional, Some(critic), &split.test, &cfg, exec)?;
            let mut report = evaluate_outputs(
                &variant.cli_name(),
                mode,
                &outputs,
                &baseline,
                &split.test,
                &registry,
                &held_out,
            )?;
            report.critic = Some(m.clone());
            rows.push((report, outputs));
        }
        systems.extend(rows);
    }
    Ok(Experiment {
        corpus,
        split,
        lms,
        critics,
        systems,
    })
}

pub const COMPARISON_HEADER: &str = "system,mode,bleu,halluc_rate,omission_rate,precision,recall,\
hallucinated_per_output,modified_pct,words_added,words_removed,critic_accuracy";

pub fn comparison_csv(experiment: &Experiment) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for (r, _) in &experiment.systems {
        let f = &r.faithfulness.overall;
        let acc = r.critic.as_ref().map(|m| format!("{:.4}", m.accuracy)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.2},{:.4},{:.4},{:.4},{:.4},{:.4},{:.2},{:.4},{:.4},{}",
            r.system,
            r.mode.name(),
            r.bleu,
            f.halluc_rate,
            f.omission_rate,
            f.precision,
            f.recall,
            f.hallucinated,
            r.modified_pct,
            r.words_added,
            r.words_removed,
            acc
        );
    }
    out
}

/// Runs [`run_experiment`] on all variants and writes every artifact under
/// `config.out_dir`.
pub fn repro(config: &RunConfig, exec: Execution) -> Result<Experiment> {
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let experiment = run_experiment(config, &Variant::NEGATIVE, exec)?;
    corpus::save_jsonl(&experiment.corpus, config.corpus_file())?;
    save_lm(&experiment.lms.conditional, config.lm_file())?;
    for (variant, critic) in &experiment.critics {
        save_critic(critic, config.critic_file(*variant))?;
    }
    for (report, outputs) in &experiment.systems {
        let name = match report.mode {
            DecodeMode::Greedy => report.system.clone(),
            DecodeMode::Beam => format!("{}-beam", report.system),
        };
        write_outputs(&experiment.split.test, outputs, config.outputs_file(&name))?;
        write_report(report, config.report_file(&name))?;
    }
    let path = config.comparison_file();
    fs::write(&path, comparison_csv(&experiment)).map_err(|e| Error::io(&path, e))?;
    Ok(experiment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut cfg = RunConfig::default();
        cfg.set_seed(11);
        cfg.decode.lambda = 0.5;
        cfg.critic_variant = None;
        cfg.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 3, "decode": {"k": 15}}"#).unwrap();
        assert_eq!(cfg.decode.k, 15);
        assert_eq!(cfg.decode.lambda, DecodeConfig::default().lambda);
        assert_eq!(cfg.world, WorldConfig::default());
    }

    #[test]
    fn seed_propagates() {
        let mut cfg = RunConfig::default();
        cfg.set_seed(99);
        assert_eq!((cfg.world.seed, cfg.critic_train.shuffle_seed), (99, 99));
    }

    #[test]
    fn file_names() {
        let cfg = RunConfig {
            out_dir: PathBuf::from("o"),
            ..RunConfig::default()
        };
        assert_eq!(
            cfg.critic_file(Variant::FtLmFull),
            PathBuf::from("o/critic-ft-lm-full.json")
        );
        assert_eq!(
            cfg.outputs_file(&system_name(None)),
            PathBuf::from("o/outputs-none.jsonl")
        );
    }
}
