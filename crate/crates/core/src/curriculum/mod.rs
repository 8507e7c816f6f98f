//! Worst-case-aware automated curriculum learning.
//!
//! Each training step runs three stages:
//!
//! 1. the bandit sampler draws `k` tasks and pushes one batch of each, scored
//!    with the current model, onto per-task FIFO queues;
//! 2. the trainer picks one queued batch, taking the worst-case task with
//!    probability `φ` and a loss-proportional task otherwise, and updates
//!    the model on it;
//! 3. the sampler rewards the task the trainer picked and penalises the other
//!    tasks it offered in the round.
//!
//! The uniform, size-proportional and smoothed baselines skip the buffer and
//! the bandit and train directly on a task drawn from a fixed distribution.

mod buffer;
mod policy;
mod selection;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use buffer::{Buffer, QueueCounters, ScoredBatch};
pub use policy::{sampler_draw, update_policy, SamplerPolicy};
pub use selection::{
    choose_task, lp_summarize, normalize_losses, select_training_loss, Branch, Choice,
};
pub use trainer::{push_round, train_loop, History, StepRecord, TrainOutcome};

use crate::conllu::DEFAULT_MAX_TRAIN_LEN;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Curriculum,
    Uniform,
    Proportional,
    Smooth,
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curriculum" => Ok(SamplerKind::Curriculum),
            "uniform" => Ok(SamplerKind::Uniform),
            "proportional" | "size-proportional" => Ok(SamplerKind::Proportional),
            "smooth" | "smooth-sampling" => Ok(SamplerKind::Smooth),
            other => Err(Error::config(
                "sampler",
                format!("unknown sampler kind `{other}` (expected curriculum, uniform, proportional or smooth)"),
            )),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::Curriculum => "curriculum",
            SamplerKind::Uniform => "uniform",
            SamplerKind::Proportional => "proportional",
            SamplerKind::Smooth => "smooth",
        })
    }
}

/// Fixed task distribution of a baseline sampler over treebank sizes.
pub fn baseline_distribution(kind: SamplerKind, sizes: &[usize], alpha: f64) -> Result<Vec<f64>> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::invalid("treebank sizes must be positive"));
    }
    let weights: Vec<f64> = match kind {
        SamplerKind::Uniform => vec![1.0; sizes.len()],
        SamplerKind::Proportional => sizes.iter().map(|&s| s as f64).collect(),
        SamplerKind::Smooth => {
            if alpha.is_nan() || alpha <= 0.0 {
                return Err(Error::invalid(format!(
                    "smoothing exponent {alpha} must be positive"
                )));
            }
            sizes.iter().map(|&s| (s as f64).powf(alpha)).collect()
        }
        SamplerKind::Curriculum => {
            return Err(Error::invalid(
                "the curriculum sampler has no fixed distribution",
            ))
        }
    };
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub sampler: SamplerKind,
    /// Probability of training on the worst-case task.
    pub phi: f64,
    /// Batches pushed per round; `0` means one per training task.
    pub k: usize,
    pub buffer_capacity: usize,
    pub steps: usize,
    pub seed: u64,
    pub smooth_alpha: f64,
    pub exploration: f64,
    pub policy_lr: f64,
    pub batch_size: usize,
    pub max_train_len: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            sampler: SamplerKind::Curriculum,
            phi: 0.5,
            k: 0,
            buffer_capacity: 4,
            steps: 1000,
            seed: 0,
            smooth_alpha: 0.5,
            exploration: 0.1,
            policy_lr: 0.1,
            batch_size: 16,
            max_train_len: DEFAULT_MAX_TRAIN_LEN,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.phi) {
            return Err(Error::config(
                "phi",
                format!("{} is outside [0, 1]", self.phi),
            ));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.max_train_len == 0 {
            return Err(Error::config("max_train_len", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.exploration) {
            return Err(Error::config("exploration", "must lie in [0, 1]"));
        }
        if self.policy_lr.is_nan() || self.policy_lr <= 0.0 {
            return Err(Error::config("policy_lr", "must be positive"));
        }
        if self.sampler == SamplerKind::Smooth
            && (self.smooth_alpha.is_nan() || self.smooth_alpha <= 0.0)
        {
            return Err(Error::config("smooth_alpha", "must be positive"));
        }
        Ok(())
    }

    /// Batches pushed per round for `n_tasks` training tasks.
    pub fn rounds_k(&self, n_tasks: usize) -> usize {
        if self.k == 0 {
            n_tasks
        } else {
            self.k
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines() {
        assert_eq!(
            baseline_distribution(SamplerKind::Proportional, &[100, 300], 0.5).unwrap(),
            [0.25, 0.75]
        );
        let s = baseline_distribution(SamplerKind::Smooth, &[100, 400], 0.5).unwrap();
        assert!((s[0] - 1.0 / 3.0).abs() < 1e-12 && (s[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            baseline_distribution(SamplerKind::Uniform, &[1, 50, 7, 9], 0.5).unwrap(),
            [0.25; 4]
        );
        assert!(baseline_distribution(SamplerKind::Curriculum, &[1, 2], 0.5).is_err());
        assert!(baseline_distribution(SamplerKind::Uniform, &[1, 0], 0.5).is_err());
    }

    #[test]
    fn sampler_names() {
        assert_eq!(
            "smooth".parse::<SamplerKind>().unwrap(),
            SamplerKind::Smooth
        );
        match "greedy".parse::<SamplerKind>() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sampler"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(CurriculumConfig::default().validate().is_ok());
        for (cfg, field) in [
            (
                CurriculumConfig {
                    phi: 1.5,
                    ..Default::default()
                },
                "phi",
            ),
            (
                CurriculumConfig {
                    steps: 0,
                    ..Default::default()
                },
                "steps",
            ),
            (
                CurriculumConfig {
                    buffer_capacity: 0,
                    ..Default::default()
                },
                "buffer_capacity",
            ),
        ] {
            match cfg.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(CurriculumConfig::default().rounds_k(5), 5);
    }
}
