//! Faithfulness oracle, BLEU, output diffs and sweeps.

mod bleu;
mod diff;
mod facts;
mod sweep;

pub use bleu::bleu;
pub use diff::{diff_stats, lcs_len, word_edits, DiffStats};
pub use facts::{
    extract_facts, extract_with_diagnostics, faithfulness_report, Extraction, FaithfulnessReport, FaithfulnessSummary,
    RecordFaithfulness,
};
pub use sweep::{sweep, to_csv, write_csv, SweepGrid, SweepRow, CSV_HEADER};
