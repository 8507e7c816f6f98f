//! Exponential-weights task sampler.

use rand::Rng;

use crate::error::{Error, Result};

/// Bandit policy over tasks. The sampling distribution mixes a softmax over
/// `log_weights` with a uniform floor:
/// `π_i = (1 − ε)·softmax(w)_i + ε/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerPolicy {
    pub log_weights: Vec<f64>,
    pub exploration: f64,
    pub learning_rate: f64,
}

impl SamplerPolicy {
    pub fn new(n_tasks: usize, exploration: f64, learning_rate: f64) -> Result<Self> {
        if n_tasks == 0 {
            return Err(Error::invalid("policy needs at least one task"));
        }
        if !(0.0..=1.0).contains(&exploration) {
            return Err(Error::invalid(format!(
                "exploration {exploration} outside [0, 1]"
            )));
        }
        if learning_rate.is_nan() || learning_rate <= 0.0 {
            return Err(Error::invalid(format!(
                "policy learning rate {learning_rate} must be positive"
            )));
        }
        Ok(SamplerPolicy {
            log_weights: vec![0.0; n_tasks],
            exploration,
            learning_rate,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.log_weights.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.n_tasks() as f64;
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = self.log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.iter()
            .map(|e| (1.0 - self.exploration) * e / total + self.exploration / n)
            .collect()
    }
}

/// Index drawn from a discrete distribution by inverse CDF on `u ∈ [0, 1)`.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if target < acc {
            return i;
        }
    }
    // rounding left `target` just past the last bucket
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Draw a task from the policy's distribution.
pub fn sampler_draw<R: Rng + ?Sized>(policy: &SamplerPolicy, rng: &mut R) -> usize {
    sample_index(&policy.probabilities(), rng.random::<f64>())
}

/// Reward the trainer's choice and penalise the other tasks the sampler
/// offered this round. The chosen task gains `η`; the distinct other sampled
/// tasks share a loss of `η` between them. Tasks not involved are untouched.
pub fn update_policy(policy: &mut SamplerPolicy, trainer_chosen: usize, round_sampled: &[usize]) {
    let mut others: Vec<usize> = round_sampled
        .iter()
        .copied()
        .filter(|&t| t != trainer_chosen)
        .collect();
    others.sort_unstable();
    others.dedup();
    let eta = policy.learning_rate;
    policy.log_weights[trainer_chosen] += eta;
    let penalty = eta / others.len().max(1) as f64;
    for t in others {
        policy.log_weights[t] -= penalty;
    }
}
