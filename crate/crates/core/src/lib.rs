//! Multimodal fact-verification toolkit: a shared schema for heterogeneous
//! benchmarks, transfer-learning mixtures, a stance-aggregation verifier,
//! LLM explanation augmentation, evaluation and annotation aggregation.

pub mod anno;
pub mod cli;
pub mod eval;
pub mod explain;
pub mod mixture;
pub mod schema;
pub mod verifier;
