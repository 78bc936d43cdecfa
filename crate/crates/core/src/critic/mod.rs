//! Text critic: training-set construction, the hashed-feature classifier and
//! its evaluation.

mod evaluate;
mod model;
mod negatives;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

pub use evaluate::{evaluate_critic, CriticMetrics, LengthBucket};
pub use model::{
    critic_prob, load_critic, save_critic, train_critic, CriticModel, CriticTrainConfig, DataFeatures, TrainReport,
};
pub use negatives::{
    build_negatives, build_negatives_base, build_negatives_base_full, build_negatives_base_with, build_negatives_ft_lm,
    build_negatives_ft_lm_full, build_negatives_vanilla_lm, build_positives, deviation_negatives, BASE_SIBLING_SHARE,
    TOP_CANDIDATES,
};

/// How an example was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Positive,
    /// Last token replaced by a token from another reference.
    Base,
    /// A sentence or token replaced; every prefix after the deviation.
    BaseFull,
    /// Top-5 continuation from an unconditional LM.
    VanillaLm,
    /// Top-5 continuation from the data-conditioned LM.
    FtLm,
    /// Greedy LM output from the point it leaves the reference.
    FtLmFull,
}

impl Variant {
    pub const NEGATIVE: [Variant; 5] = [
        Variant::Base,
        Variant::BaseFull,
        Variant::VanillaLm,
        Variant::FtLm,
        Variant::FtLmFull,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Positive => "positive",
            Variant::Base => "base",
            Variant::BaseFull => "base_full",
            Variant::VanillaLm => "vanilla_lm",
            Variant::FtLm => "ft_lm",
            Variant::FtLmFull => "ft_lm_full",
        }
    }

    /// Command-line spelling, e.g. `base-full`.
    pub fn cli_name(self) -> String {
        self.tag().replace('_', "-")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        [Variant::Positive]
            .into_iter()
            .chain(Variant::NEGATIVE)
            .find(|v| v.tag() == norm)
            .ok_or_else(|| Error::Input(format!("unknown critic variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CriticExample {
    #[serde(rename = "id")]
    pub record_id: u64,
    pub prefix: Vec<TokenId>,
    pub label: u8,
    pub variant: Variant,
}

impl CriticExample {
    pub fn positive(record_id: u64, prefix: Vec<TokenId>) -> Self {
        CriticExample {
            record_id,
            prefix,
            label: 1,
            variant: Variant::Positive,
        }
    }

    pub fn negative(record_id: u64, prefix: Vec<TokenId>, variant: Variant) -> Self {
        CriticExample {
            record_id,
            prefix,
            label: 0,
            variant,
        }
    }
}

pub fn save_examples(examples: &[CriticExample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("example serialization cannot fail");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<CriticExample>> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: CriticExample = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if ex.label > 1 || ex.prefix.is_empty() {
            return Err(Error::Schema {
                line: Some(i + 1),
                message: "label must be 0 or 1 and prefix non-empty".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_parse_both_spellings() {
        for v in Variant::NEGATIVE {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
            assert_eq!(v.cli_name().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }

    #[test]
    fn example_file_format() {
        let ex = CriticExample::negative(4, vec![5, 6], Variant::BaseFull);
        assert_eq!(
            serde_json::to_string(&ex).unwrap(),
            r#"{"id":4,"prefix":[5,6],"label":0,"variant":"base_full"}"#
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.jsonl");
        save_examples(&[ex.clone(), CriticExample::positive(1, vec![7])], &path).unwrap();
        assert_eq!(
            load_examples(&path).unwrap(),
            vec![ex, CriticExample::positive(1, vec![7])]
        );
    }
}
