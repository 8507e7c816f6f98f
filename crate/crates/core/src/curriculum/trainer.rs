use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::{Buffer, ScoredBatch};
use super::policy::{sample_index, sampler_draw, update_policy, SamplerPolicy};
use super::selection::{lp_summarize, select_training_loss, Branch};
use super::{baseline_distribution, CurriculumConfig, SamplerKind};
use crate::conllu::{BatchStream, Treebank, Vocab};
use crate::error::{Error, Result};
use crate::parser::{apply_update, batch_gradient, batch_loss, OptimizerState, ParserParams};

/// One row of the training history.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Tasks the sampler pushed this step (the drawn task for baselines).
    pub sampler_tasks: Vec<usize>,
    pub trainer_task: usize,
    /// Loss of the trained batch under the parameters before the update.
    pub loss: f64,
    /// `L^1` and `L^∞` summaries of the latest known loss of every task.
    pub l1: f64,
    pub linf: f64,
    /// Uniform draw and branch of the worst-case-aware choice; absent for
    /// baseline samplers.
    pub choice: Option<(f64, Branch)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub task_ids: Vec<String>,
    pub records: Vec<StepRecord>,
}

pub const HISTORY_HEADER: &str =
    "step\tsampler_task\ttrainer_task\tloss\tL1_summary\tLinf_summary\tp_drawn\tbranch";

impl History {
    /// Tab-separated history with a header line. Baseline steps print `-` for
    /// the draw and the branch.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let sampled: Vec<&str> = r
                .sampler_tasks
                .iter()
                .map(|&t| self.task_ids[t].as_str())
                .collect();
            let (p, branch) = match r.choice {
                Some((p, b)) => (format!("{p:.6}"), b.to_string()),
                None => ("-".to_string(), "-".to_string()),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                r.step,
                sampled.join(","),
                self.task_ids[r.trainer_task],
                r.loss,
                r.l1,
                r.linf,
                p,
                branch
            );
        }
        out
    }

    /// Fraction of the last `window` steps whose trainer task was `task`.
    pub fn trainer_share(&self, task: usize, window: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(window)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|r| r.trainer_task == task).count() as f64 / tail.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: History,
    /// Final bandit policy; `None` for baseline samplers.
    pub policy: Option<SamplerPolicy>,
    /// Latest measured loss per task.
    pub task_losses: Vec<f64>,
}

/// Draw `k` tasks from the policy and queue one freshly scored batch of each.
/// Returns the drawn task indices in order.
#[allow(clippy::too_many_arguments)]
pub fn push_round<'a, R: Rng + ?Sized>(
    policy: &SamplerPolicy,
    buffer: &mut Buffer<'a>,
    params: &ParserParams,
    vocab: &Vocab,
    streams: &mut [BatchStream<'a>],
    k: usize,
    step: u64,
    rng: &mut R,
) -> Vec<usize> {
    (0..k)
        .map(|_| {
            let task = sampler_draw(policy, rng);
            let batch = streams[task].next_batch();
            let recorded_loss = batch_loss(&batch, params, vocab);
            buffer.push(
                task,
                ScoredBatch {
                    batch,
                    recorded_loss,
                    push_step: step,
                },
            );
            task
        })
        .collect()
}

fn stream_seed(seed: u64, task: usize) -> u64 {
    seed.wrapping_add(task as u64 + 1)
        .wrapping_mul(0x2545_F491_4F6C_DD1D)
}

fn summaries(losses: &[f64]) -> (f64, f64) {
    (
        lp_summarize(losses, 1.0).unwrap_or(f64::NAN),
        lp_summarize(losses, f64::INFINITY).unwrap_or(f64::NAN),
    )
}

/// Train `params` on the given treebanks for `config.steps` updates.
/// Deterministic for a fixed config and seed.
pub fn train_loop(
    config: &CurriculumConfig,
    treebanks: &[Treebank],
    vocab: &Vocab,
    params: &mut ParserParams,
    optimizer: &mut OptimizerState,
) -> Result<TrainOutcome> {
    config.validate()?;
    if treebanks.is_empty() {
        return Err(Error::invalid("training needs at least one treebank"));
    }
    let n = treebanks.len();
    let mut streams = treebanks
        .iter()
        .enumerate()
        .map(|(i, tb)| {
            BatchStream::new(
                tb,
                config.batch_size,
                config.max_train_len,
                stream_seed(config.seed, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let task_ids: Vec<String> = treebanks.iter().map(|tb| tb.task_id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut task_losses = vec![0.0; n];
    let mut records = Vec::with_capacity(config.steps);

    let mut train_on =
        |params: &mut ParserParams, batch: &crate::conllu::Batch<'_>| -> Result<f64> {
            let (loss, grads) = batch_gradient(batch, params, vocab);
            apply_update(params, &grads, optimizer).map_err(|_| Error::NonFiniteGradient {
                task: batch.task_id.to_string(),
            })?;
            Ok(loss)
        };

    let policy = if config.sampler == SamplerKind::Curriculum {
        let k = config.rounds_k(n);
        let mut policy = SamplerPolicy::new(n, config.exploration, config.policy_lr)?;
        let mut buffer = Buffer::new(n, config.buffer_capacity)?;
        for step in 0..config.steps {
            let sampled = push_round(
                &policy,
                &mut buffer,
                params,
                vocab,
                &mut streams,
                k,
                step as u64,
                &mut rng,
            );
            for (task, latest) in task_losses.iter_mut().enumerate() {
                if let Some(newest) = buffer.queue(task).back() {
                    *latest = newest.recorded_loss;
                }
            }
            let (choice, chosen) = select_training_loss(&mut buffer, config.phi, &mut rng)?;
            let loss = train_on(params, &chosen.batch)?;
            task_losses[choice.task] = loss;
            update_policy(&mut policy, choice.task, &sampled);
            let (l1, linf) = summaries(&task_losses);
            records.push(StepRecord {
                step,
                sampler_tasks: sampled,
                trainer_task: choice.task,
                loss,
                l1,
                linf,
                choice: Some((choice.p_drawn, choice.branch)),
            });
        }
        Some(policy)
    } else {
        let sizes: Vec<usize> = treebanks.iter().map(Treebank::len).collect();
        let dist = baseline_distribution(config.sampler, &sizes, config.smooth_alpha)?;
        for step in 0..config.steps {
            let task = sample_index(&dist, rng.random::<f64>());
            let batch = streams[task].next_batch();
            let loss = train_on(params, &batch)?;
            task_losses[task] = loss;
            let (l1, linf) = summaries(&task_losses);
            records.push(StepRecord {
                step,
                sampler_tasks: vec![task],
                trainer_task: task,
                loss,
                l1,
                linf,
                choice: None,
            });
        }
        None
    };

    Ok(TrainOutcome {
        history: History { task_ids, records },
        policy,
        task_losses,
    })
}
