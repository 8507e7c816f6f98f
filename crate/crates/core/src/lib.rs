//! Worst-case-aware automated curriculum learning for multilingual
//! graph-based dependency parsing.
//!
//! A bandit sampler fills per-task queues with loss-scored batches, a
//! trainer picks among them with a worst-case-aware rule, and one biaffine
//! parser is shared by every language. Baseline samplers, zero-shot
//! evaluation and report statistics round out the experiment pipeline.

pub mod conllu;
pub mod curriculum;
pub mod decode;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod parser;
pub mod synthetic;

pub use error::{Error, Result};
