//! Worst-case-aware choice of the training loss and loss summaries.
//!
//! With probability `φ` the trainer takes the task with the largest loss;
//! otherwise it samples a task with probability proportional to its loss.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{Buffer, ScoredBatch};
use super::policy::sample_index;
use crate::error::{Error, Result};

/// Normalise non-negative task losses into a probability distribution.
pub fn normalize_losses(losses: &[f64]) -> Result<Vec<f64>> {
    if losses.iter().any(|&l| !l.is_finite() || l < 0.0) {
        return Err(Error::invalid("losses must be finite and non-negative"));
    }
    let total: f64 = losses.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("cannot normalise an all-zero loss vector"));
    }
    Ok(losses.iter().map(|l| l / total).collect())
}

/// `L^p` norm of a loss vector; `p = f64::INFINITY` gives the maximum.
pub fn lp_summarize(losses: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!("L^p summary needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(losses.iter().copied().fold(0.0, f64::max));
    }
    if p == 1.0 {
        return Ok(losses.iter().sum());
    }
    Ok(losses.iter().map(|l| l.powf(p)).sum::<f64>().powf(1.0 / p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Worst case: the task with the largest loss.
    Max,
    /// Task sampled in proportion to its loss.
    Proportional,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Max => "max",
            Branch::Proportional => "proportional",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Choice {
    pub task: usize,
    /// The uniform draw compared against `φ`.
    pub p_drawn: f64,
    pub branch: Branch,
}

/// Choose a task from per-task losses, skipping tasks without a loss.
/// Equal maxima are broken uniformly at random.
/// When every available loss is zero the proportional branch falls back to
/// a uniform choice.
pub fn choose_task<R: Rng + ?Sized>(
    losses: &[Option<f64>],
    phi: f64,
    rng: &mut R,
) -> Result<Choice> {
    let available: Vec<(usize, f64)> = losses
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .collect();
    if available.is_empty() {
        return Err(Error::invalid("no task has a queued batch"));
    }
    let p_drawn: f64 = rng.random();
    if p_drawn < phi {
        let top = available
            .iter()
            .map(|&(_, l)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = available
            .iter()
            .filter(|&&(_, l)| l == top)
            .map(|&(i, _)| i)
            .collect();
        // a fixed tie-break would keep rewarding the same task
        let task = if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.random_range(0..tied.len())]
        };
        return Ok(Choice {
            task,
            p_drawn,
            branch: Branch::Max,
        });
    }
    let values: Vec<f64> = available.iter().map(|&(_, l)| l).collect();
    let probs = normalize_losses(&values).unwrap_or_else(|_| vec![1.0; values.len()]);
    let pick = sample_index(&probs, rng.random::<f64>());
    Ok(Choice {
        task: available[pick].0,
        p_drawn,
        branch: Branch::Proportional,
    })
}

/// Pick the training batch among the queue fronts and pop it.
pub fn select_training_loss<'a, R: Rng + ?Sized>(
    buffer: &mut Buffer<'a>,
    phi: f64,
    rng: &mut R,
) -> Result<(Choice, ScoredBatch<'a>)> {
    if buffer.is_empty() {
        return Err(Error::invalid("cannot select from an empty buffer"));
    }
    let choice = choose_task(&buffer.front_losses(), phi, rng)?;
    let batch = buffer.pop(choice.task).expect("chosen queue is non-empty");
    Ok((choice, batch))
}
