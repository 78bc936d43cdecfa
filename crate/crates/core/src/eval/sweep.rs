//! Hyperparameter grid over decoding settings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{bleu, diff_stats, faithfulness_report};
use crate::corpus::Corpus;
use crate::critic::CriticModel;
use crate::decoding::{decode_all, output_text, DecodeConfig, DecodeMode};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::lm::GeneratorModel;
use crate::world::PredicateRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub warmups: Vec<usize>,
    pub ks: Vec<usize>,
    pub modes: Vec<DecodeMode>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            lambdas: vec![0.0, 0.25, 0.5, 1.0],
            warmups: vec![0, 5],
            ks: vec![5, 15],
            modes: vec![DecodeMode::Greedy],
        }
    }
}

impl SweepGrid {
    fn points(&self) -> Vec<(DecodeMode, f64, usize, usize)> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &lambda in &self.lambdas {
                for &warmup in &self.warmups {
                    for &k in &self.ks {
                        out.push((mode, lambda, warmup, k));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub warmup: usize,
    pub k: usize,
    pub mode: DecodeMode,
    pub critic_variant: String,
    pub bleu: f64,
    pub halluc_rate: f64,
    pub omission_rate: f64,
    pub modified_pct: f64,
    pub words_added: f64,
    pub words_removed: f64,
}

pub const CSV_HEADER: &str =
    "lambda,warmup,k,mode,critic_variant,bleu,halluc_rate,omission_rate,modified_pct,words_added,words_removed";

/// Decodes and scores `test` once per grid point and critic. Each mode also
/// gets a critic-free row (`none`); `modified_pct` compares against it.
pub fn sweep(
    test: &Corpus,
    generator: &GeneratorModel,
    critics: &[(String, &CriticModel)],
    grid: &SweepGrid,
    base: &DecodeConfig,
    registry: &PredicateRegistry,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let refs: Vec<Vec<String>> = test.records.iter().map(|r| r.refs.clone()).collect();
    let run = |critic: Option<&CriticModel>, cfg: &DecodeConfig| -> Result<Vec<String>> {
        let tokens = decode_all(generator, critic, &test.records, cfg, Execution::Sequential)?;
        Ok(tokens.iter().map(|t| output_text(&test.vocab, t)).collect())
    };
    let row = |name: &str, cfg: &DecodeConfig, outputs: &[String], baseline: &[String]| -> Result<SweepRow> {
        let report = faithfulness_report(outputs, &test.records, registry, &[])?;
        let diff = diff_stats(baseline, outputs)?;
        Ok(SweepRow {
            lambda: cfg.lambda,
            warmup: cfg.warmup,
            k: cfg.k,
            mode: cfg.mode,
            critic_variant: name.to_string(),
            bleu: bleu(outputs, &refs)?,
            halluc_rate: report.overall.halluc_rate,
            omission_rate: report.overall.omission_rate,
            modified_pct: 100.0 * diff.modified_fraction,
            words_added: diff.words_added,
            words_removed: diff.words_removed,
        })
    };

    let mut rows = Vec::new();
    for &mode in &grid.modes {
        let cfg = DecodeConfig { mode, ..base.clone() };
        let baseline = run(None, &cfg)?;
        rows.push(row("none", &DecodeConfig { lambda: 0.0, ..cfg }, &baseline, &baseline)?);
        let jobs: Vec<(&String, &CriticModel, DecodeConfig)> = points
            .iter()
            .filter(|p| p.0 == mode)
            .flat_map(|&(mode, lambda, warmup, k)| {
                critics.iter().map(move |(name, critic)| {
                    let cfg = DecodeConfig {
                        lambda,
                        warmup,
                        k,
                        mode,
                        ..base.clone()
                    };
                    (name, *critic, cfg)
                })
            })
            .collect();
        let results = exec::map(&jobs, exec, |(name, critic, cfg)| {
            run(Some(critic), cfg).and_then(|outputs| row(name, cfg, &outputs, &baseline))
        });
        for r in results {
            rows.push(r?);
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.2},{:.4},{:.4},{:.2},{:.4},{:.4}",
            r.lambda,
            r.warmup,
            r.k,
            r.mode.name(),
            r.critic_variant,
            r.bleu,
            r.halluc_rate,
            r.omission_rate,
            r.modified_pct,
            r.words_added,
            r.words_removed
        );
    }
    out
}

pub fn write_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv(rows)).map_err(|e| Error::io(path, e))
}
