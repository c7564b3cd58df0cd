//! Stereotype detection and LLM bias auditing.
//!
//! A nine-label stereotype corpus is built from StereoSet and CrowS-Pairs
//! and used to train and evaluate classifiers. For auditing, neutral prompts
//! go to a text-generation endpoint and the completions are scored per
//! dimension.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod features;
pub mod inference;
pub mod labels;
pub mod onnx;
pub mod probe;
pub mod promptgen;
pub mod textproc;

pub use error::{Error, Result};
