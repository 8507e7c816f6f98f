use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{load_test_section, RunConfig, TreebankRef};
use crate::conllu::{build_vocab, read_treebank, Split, Treebank};
use crate::curriculum::train_loop;
use crate::error::{Error, Result};
use crate::eval::{compare_reports, zero_shot_eval, Comparison, EvalReport};
use crate::io::write_atomic;
use crate::parser::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState, ParserParams};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    /// Latest measured training loss per task.
    pub final_task_losses: BTreeMap<String, f64>,
    pub final_l1: f64,
    pub final_linf: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_las: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_uas: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub metrics: RunMetrics,
    pub history: PathBuf,
    pub checkpoint: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn read_all(refs: &[TreebankRef], split: Split) -> Result<Vec<Treebank>> {
    refs.iter()
        .map(|r| read_treebank(&r.file, &r.task_id, split))
        .collect()
}

pub struct EvalOutput {
    pub report: EvalReport,
    pub tsv: PathBuf,
    pub json: PathBuf,
}

fn write_report(report: &EvalReport, dir: &Path) -> Result<EvalOutput> {
    let tsv = dir.join("report.tsv");
    let json = dir.join("report.json");
    write_atomic(&tsv, report.to_tsv().as_bytes())?;
    write_atomic(&json, report.to_json().as_bytes())?;
    Ok(EvalOutput {
        report: report.clone(),
        tsv,
        json,
    })
}

/// Train with a resolved config. Writes `checkpoint.bin`, `history.tsv`,
/// the test reports when a test list is configured, and `manifest.json`
/// last.
pub fn cmd_train(config: &RunConfig) -> Result<RunManifest> {
    let started_at = now();
    config.validate()?;
    let train = read_all(&config.train.treebanks, Split::Train)?;
    let tests = read_all(&config.test.treebanks, Split::Test)?;
    let vocab = build_vocab(&train)?;
    let mut params = ParserParams::init(
        config.model,
        vocab.n_words(),
        vocab.n_upos(),
        vocab.n_labels(),
        config.seed,
    );
    let mut optimizer = OptimizerState::new(&params, config.adam);
    let outcome = train_loop(
        &config.curriculum,
        &train,
        &vocab,
        &mut params,
        &mut optimizer,
    )?;

    let out = &config.output_dir;
    let history = out.join("history.tsv");
    write_atomic(&history, outcome.history.to_tsv().as_bytes())?;
    let checkpoint = out.join("checkpoint.bin");
    let ckpt = Checkpoint {
        params,
        vocab,
        metadata: serde_json::to_value(config)?,
    };
    save_checkpoint(&checkpoint, &ckpt)?;

    let last = outcome.history.records.last();
    let mut metrics = RunMetrics {
        steps: outcome.history.records.len(),
        final_task_losses: outcome
            .history
            .task_ids
            .iter()
            .cloned()
            .zip(outcome.task_losses.iter().copied())
            .collect(),
        final_l1: last.map_or(f64::NAN, |r| r.l1),
        final_linf: last.map_or(f64::NAN, |r| r.linf),
        macro_las: None,
        macro_uas: None,
    };
    let mut report = None;
    if !tests.is_empty() {
        let r = zero_shot_eval(&ckpt.params, &ckpt.vocab, &tests)?;
        metrics.macro_las = Some(r.macro_average_las);
        metrics.macro_uas = Some(r.macro_average_uas);
        report = Some(write_report(&r, out)?.json);
    }

    let manifest = RunManifest {
        config: config.clone(),
        version: VERSION.to_string(),
        started_at,
        finished_at: now(),
        metrics,
        history,
        checkpoint,
        report,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&out.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// Evaluate a checkpoint on the test treebanks named in `test_config`.
/// Reports go to `out_dir`, or next to the checkpoint.
pub fn cmd_eval(
    checkpoint: &Path,
    test_config: &Path,
    out_dir: Option<&Path>,
) -> Result<EvalOutput> {
    let refs = load_test_section(test_config)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let tests = read_all(&refs, Split::Test)?;
    let report = zero_shot_eval(&ckpt.params, &ckpt.vocab, &tests)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => checkpoint
            .parent()
            .unwrap_or_else(|| Path::new(""))
            .to_path_buf(),
    };
    write_report(&report, &dir)
}

/// Compare two reports with `base` as the reference system.
pub fn cmd_compare(base: &Path, ours: &Path, resamples: usize, seed: u64) -> Result<Comparison> {
    if resamples == 0 {
        return Err(Error::config("resamples", "must be at least 1"));
    }
    let (a, b) = (EvalReport::load(base)?, EvalReport::load(ours)?);
    compare_reports(&a, &b, resamples, seed)
}
