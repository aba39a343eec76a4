//! Iterative translation refinement with large language models.
//!
//! The crate is organised along the stages of an experiment:
//!
//! - [`corpus`] loads line-aligned test sets and draws reproducible samples.
//! - [`prompts`] renders the five prompt templates.
//! - [`gateway`] talks to chat-completion backends with caching, retry and
//!   rate limiting, and ships a deterministic mock backend.
//! - [`pipeline`] runs translation, iterative refinement and best-iteration
//!   selection over a sample.
//! - [`metrics`] scores outputs with BLEU and chrF++ (toolkit compatible)
//!   and external neural scorers.
//! - [`report`] turns per-iteration scores into tables, trend series and
//!   side-by-side case files.

pub mod config;
pub mod corpus;
mod error;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
