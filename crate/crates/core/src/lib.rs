//! Multi-agent debate over retrieved documents.
//!
//! Each retrieved document is handed to its own agent; an aggregator reads
//! the agents' answers and consolidates them, and the agents revise over a
//! few rounds until their answers stop changing. The crate also builds
//! conflict corpora (ambiguity, misinformation, noise) and scores methods
//! with a strict multi-answer exact match.

#![allow(clippy::result_large_err)]

pub mod backend;
pub mod jsonl;
pub mod model;
pub mod prompting;
pub mod engine;
pub mod baselines;
pub mod eval;
pub mod dataset;
