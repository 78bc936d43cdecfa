//! Critic-guided decoding for data-to-text generation.
//!
//! A copy-augmented n-gram generator proposes next tokens, and a prefix
//! classifier (the critic) rescores the most probable candidates so that the
//! output stays consistent with the input triples. A seeded synthetic world
//! with an exact fact oracle serves as the testbed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod critic;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod exec;
pub mod lm;
pub mod pipeline;
pub mod text;
pub mod vocab;
pub mod world;

pub use error::{Error, Result};
