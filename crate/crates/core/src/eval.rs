//! Attachment scoring, zero-shot evaluation and report statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Treebank, Vocab};
use crate::decode::ParseTree;
use crate::error::{Error, Result};
use crate::parser::{parse_sentence, ParserParams};

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AttachmentCounts {
    pub correct_heads: usize,
    pub correct_labeled: usize,
    pub tokens: usize,
}

impl AttachmentCounts {
    pub fn add(&mut self, other: AttachmentCounts) {
        self.correct_heads += other.correct_heads;
        self.correct_labeled += other.correct_labeled;
        self.tokens += other.tokens;
    }

    pub fn uas(&self) -> f64 {
        percent(self.correct_heads, self.tokens)
    }

    pub fn las(&self) -> f64 {
        percent(self.correct_labeled, self.tokens)
    }
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Count correct heads and correct (head, label) pairs. Every token counts,
/// punctuation included. Gold labels unknown to the vocabulary never match.
pub fn attachment_scores(
    gold: &Sentence,
    pred: &ParseTree,
    vocab: &Vocab,
) -> Result<AttachmentCounts> {
    let n = gold.len();
    if pred.heads.len() != n || pred.labels.len() != n {
        return Err(Error::invalid(format!(
            "prediction covers {} tokens, gold has {n}",
            pred.heads.len()
        )));
    }
    let mut counts = AttachmentCounts {
        tokens: n,
        ..Default::default()
    };
    for (i, tok) in gold.tokens.iter().enumerate() {
        if pred.heads[i] == tok.head {
            counts.correct_heads += 1;
            if vocab.deprel_id(&tok.deprel) == Some(pred.labels[i]) {
                counts.correct_labeled += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreebankScore {
    pub task_id: String,
    pub uas: f64,
    pub las: f64,
    pub tokens: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_treebank: Vec<TreebankScore>,
    pub macro_average_uas: f64,
    pub macro_average_las: f64,
}

impl EvalReport {
    /// Build a report from per-treebank rows; averages are unweighted means.
    pub fn from_scores(per_treebank: Vec<TreebankScore>) -> Result<Self> {
        if per_treebank.is_empty() {
            return Err(Error::invalid("a report needs at least one treebank"));
        }
        let n = per_treebank.len() as f64;
        let macro_average_uas = per_treebank.iter().map(|s| s.uas).sum::<f64>() / n;
        let macro_average_las = per_treebank.iter().map(|s| s.las).sum::<f64>() / n;
        Ok(EvalReport {
            per_treebank,
            macro_average_uas,
            macro_average_las,
        })
    }

    pub fn las_vector(&self) -> Vec<f64> {
        self.per_treebank.iter().map(|s| s.las).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("treebank\tUAS\tLAS\ttokens\n");
        for s in &self.per_treebank {
            let _ = writeln!(
                out,
                "{}\t{:.2}\t{:.2}\t{}",
                s.task_id, s.uas, s.las, s.tokens
            );
        }
        let total: usize = self.per_treebank.iter().map(|s| s.tokens).sum();
        let _ = writeln!(
            out,
            "average\t{:.2}\t{:.2}\t{}",
            self.macro_average_uas, self.macro_average_las, total
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }
}

/// Parse every sentence of every test treebank and score it. Test treebanks
/// must come from tasks absent from training; the caller enforces that.
pub fn zero_shot_eval(
    params: &ParserParams,
    vocab: &Vocab,
    tests: &[Treebank],
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(tests.len());
    for tb in tests {
        let mut counts = AttachmentCounts::default();
        for sentence in tb.sentences.iter().filter(|s| !s.is_empty()) {
            let tree = parse_sentence(sentence, params, vocab)?;
            counts.add(attachment_scores(sentence, &tree, vocab)?);
        }
        rows.push(TreebankScore {
            task_id: tb.task_id.clone(),
            uas: counts.uas(),
            las: counts.las(),
            tokens: counts.tokens,
        });
    }
    EvalReport::from_scores(rows)
}

/// One-sided paired bootstrap over treebanks testing whether system `a`
/// beats system `b`. Returns the fraction of resamples in which the mean
/// difference `a − b` is not positive.
pub fn bootstrap_test(
    scores_a: &[f64],
    scores_b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::invalid(format!(
            "paired scores differ in length: {} vs {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    let n = scores_a.len();
    if n < 2 {
        return Err(Error::invalid("bootstrap needs at least two paired scores"));
    }
    if resamples == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    let diffs: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut not_better = 0usize;
    for _ in 0..resamples {
        let total: f64 = (0..n).map(|_| diffs[rng.random_range(0..n)]).sum();
        if total <= 0.0 {
            not_better += 1;
        }
    }
    Ok(not_better as f64 / resamples as f64)
}

/// Absolute difference and relative error reduction between two LAS values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReduction {
    pub delta: f64,
    pub rer: f64,
}

impl ErrorReduction {
    pub fn rounded(&self) -> ErrorReduction {
        ErrorReduction {
            delta: round1(self.delta),
            rer: round1(self.rer),
        }
    }
}

/// Round to one decimal, half away from zero, ignoring float noise below 1e-9.
pub fn round1(x: f64) -> f64 {
    let cleaned = (x * 1e9).round() / 1e9;
    (cleaned * 10.0).round() / 10.0
}

pub fn relative_error_reduction(base_las: f64, ours_las: f64) -> Result<ErrorReduction> {
    for (name, v) in [("base", base_las), ("ours", ours_las)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::invalid(format!("{name} LAS {v} outside [0, 100]")));
        }
    }
    if base_las >= 100.0 {
        return Err(Error::invalid(
            "relative error reduction is undefined for a perfect baseline",
        ));
    }
    let delta = ours_las - base_las;
    Ok(ErrorReduction {
        delta,
        rer: 100.0 * delta / (100.0 - base_las),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task_id: String,
    pub base: f64,
    pub ours: f64,
    pub delta: f64,
}

/// Per-treebank and macro comparison of a base report against ours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub base: f64,
    pub ours: f64,
    pub reduction: ErrorReduction,
    /// Bootstrap p-value for "ours beats base".
    pub p_value: f64,
}

pub fn compare_reports(
    base: &EvalReport,
    ours: &EvalReport,
    resamples: usize,
    seed: u64,
) -> Result<Comparison> {
    let ids = |r: &EvalReport| -> BTreeSet<String> {
        r.per_treebank.iter().map(|s| s.task_id.clone()).collect()
    };
    let (base_ids, ours_ids) = (ids(base), ids(ours));
    if base_ids != ours_ids || base.per_treebank.len() != ours.per_treebank.len() {
        let only_base: Vec<_> = base_ids.difference(&ours_ids).cloned().collect();
        let only_ours: Vec<_> = ours_ids.difference(&base_ids).cloned().collect();
        return Err(Error::invalid(format!(
            "reports cover different treebanks: only in first [{}], only in second [{}]",
            only_base.join(", "),
            only_ours.join(", ")
        )));
    }
    let mut rows = Vec::with_capacity(base.per_treebank.len());
    for b in &base.per_treebank {
        let o = ours
            .per_treebank
            .iter()
            .find(|s| s.task_id == b.task_id)
            .expect("same treebank sets");
        rows.push(ComparisonRow {
            task_id: b.task_id.clone(),
            base: b.las,
            ours: o.las,
            delta: o.las - b.las,
        });
    }
    let base_vec: Vec<f64> = rows.iter().map(|r| r.base).collect();
    let ours_vec: Vec<f64> = rows.iter().map(|r| r.ours).collect();
    let p_value = if rows.len() >= 2 {
        bootstrap_test(&ours_vec, &base_vec, resamples, seed)?
    } else {
        f64::NAN
    };
    Ok(Comparison {
        rows,
        base: base.macro_average_las,
        ours: ours.macro_average_las,
        reduction: relative_error_reduction(base.macro_average_las, ours.macro_average_las)?,
        p_value,
    })
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut out = String::from("treebank\tbase\tours\tdelta\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.1}\t{:.1}\t{:.1}",
                r.task_id,
                r.base,
                r.ours,
                round1(r.delta)
            );
        }
        let red = self.reduction.rounded();
        out.push('\n');
        out.push_str("sample\tbase\tours\tdelta\tRER\tp\n");
        let _ = writeln!(
            out,
            "average\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.4}",
            self.base, self.ours, red.delta, red.rer, self.p_value
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{Split, Token};
    use std::collections::BTreeMap;

    fn gold(heads: &[usize], labels: &[&str]) -> Sentence {
        Sentence {
            tokens: heads
                .iter()
                .zip(labels)
                .map(|(&h, &l)| Token {
                    form: "w".into(),
                    upos: "X".into(),
                    head: h,
                    deprel: l.into(),
                })
                .collect(),
            sent_id: None,
        }
    }

    fn vocab() -> Vocab {
        let labels: BTreeMap<String, usize> = ["root", "nsubj", "obj", "punct"]
            .iter()
            .enumerate()
            .map(|(i, l)| (l.to_string(), i))
            .collect();
        Vocab {
            word_to_id: BTreeMap::new(),
            upos_to_id: BTreeMap::new(),
            deprel_to_id: labels,
        }
    }

    #[test]
    fn attachment_examples() {
        let v = vocab();
        let g = gold(&[2, 0, 2, 2], &["nsubj", "root", "obj", "punct"]);
        let perfect = ParseTree {
            heads: vec![2, 0, 2, 2],
            labels: vec![1, 0, 2, 3],
        };
        let c = attachment_scores(&g, &perfect, &v).unwrap();
        assert_eq!((c.uas(), c.las()), (100.0, 100.0));

        // 3 heads right, 2 of them labelled right
        let partial = ParseTree {
            heads: vec![2, 0, 2, 1],
            labels: vec![1, 0, 3, 3],
        };
        let c = attachment_scores(&g, &partial, &v).unwrap();
        assert_eq!((c.uas(), c.las()), (75.0, 50.0));

        let wrong = ParseTree {
            heads: vec![3, 3, 0, 3],
            labels: vec![1, 0, 2, 3],
        };
        let c = attachment_scores(&g, &wrong, &v).unwrap();
        assert_eq!((c.uas(), c.las()), (0.0, 0.0));

        let short = ParseTree {
            heads: vec![0],
            labels: vec![0],
        };
        assert!(attachment_scores(&g, &short, &v).is_err());
    }

    #[test]
    fn macro_average_is_unweighted() {
        let row = |id: &str, las: f64, tokens| TreebankScore {
            task_id: id.into(),
            uas: las,
            las,
            tokens,
        };
        let one = EvalReport::from_scores(vec![row("a", 40.0, 10)]).unwrap();
        assert_eq!(one.macro_average_las, 40.0);
        let two = EvalReport::from_scores(vec![row("a", 40.0, 10), row("b", 0.0, 1000)]).unwrap();
        assert_eq!(two.macro_average_las, 20.0);
        assert!(EvalReport::from_scores(vec![]).is_err());
        let back = EvalReport::from_json(&two.to_json()).unwrap();
        assert_eq!(back, two);
        assert!(two.to_tsv().ends_with("average\t20.00\t20.00\t1010\n"));
    }

    #[test]
    fn bootstrap_edge_cases() {
        let a: Vec<f64> = (0..30).map(|i| 20.0 + i as f64).collect();
        assert_eq!(bootstrap_test(&a, &a, 2000, 1).unwrap(), 1.0);
        let b: Vec<f64> = a.iter().map(|x| x - 2.0).collect();
        assert_eq!(bootstrap_test(&a, &b, 2000, 1).unwrap(), 0.0);
        assert!(bootstrap_test(&a, &b[1..], 100, 1).is_err());
        assert!(bootstrap_test(&a[..1], &b[..1], 100, 1).is_err());
        assert_eq!(
            bootstrap_test(&a, &b, 500, 9).unwrap(),
            bootstrap_test(&a, &b, 500, 9).unwrap()
        );
    }

    #[test]
    fn rer_examples() {
        let r = relative_error_reduction(35.2, 36.4).unwrap().rounded();
        assert_eq!((r.delta, r.rer), (1.2, 1.9));
        let r = relative_error_reduction(33.3, 34.8).unwrap().rounded();
        assert_eq!((r.delta, r.rer), (1.5, 2.2));
        let r = relative_error_reduction(50.0, 50.0).unwrap();
        assert_eq!((r.delta, r.rer), (0.0, 0.0));
        assert!(relative_error_reduction(100.0, 100.0).is_err());
        assert!(relative_error_reduction(-1.0, 3.0).is_err());
    }

    #[test]
    fn compare_rejects_mismatched_sets() {
        let row = |id: &str| TreebankScore {
            task_id: id.into(),
            uas: 50.0,
            las: 40.0,
            tokens: 5,
        };
        let a = EvalReport::from_scores(vec![row("x"), row("y")]).unwrap();
        let b = EvalReport::from_scores(vec![row("x"), row("z")]).unwrap();
        let err = compare_reports(&a, &b, 100, 0).unwrap_err().to_string();
        assert!(err.contains('y') && err.contains('z'), "{err}");
        let same = compare_reports(&a, &a, 100, 0).unwrap();
        assert_eq!(same.reduction.rounded().delta, 0.0);
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn zero_shot_requires_tests() {
        let params = ParserParams::zeros(Default::default(), 2, 2, 1);
        assert!(zero_shot_eval(&params, &vocab(), &[]).is_err());
        let tb = Treebank {
            task_id: "t".into(),
            sentences: vec![gold(&[0], &["root"])],
            split: Split::Test,
        };
        let report = zero_shot_eval(&params, &vocab(), &[tb]).unwrap();
        assert_eq!(report.per_treebank[0].uas, 100.0);
    }

    proptest::proptest! {
        #[test]
        fn rer_sign_and_magnitude(base in 0.0f64..99.9, ours in 0.0f64..100.0) {
            let r = relative_error_reduction(base, ours).unwrap();
            proptest::prop_assert_eq!(r.rer.signum() == r.delta.signum() || r.delta == 0.0, true);
            if base > 0.0 && r.delta > 0.0 {
                proptest::prop_assert!(r.rer >= r.delta);
            }
        }

        #[test]
        fn las_never_exceeds_uas(
            heads in proptest::collection::vec(0usize..4, 4),
            labels in proptest::collection::vec(0usize..4, 4),
        ) {
            let g = gold(&[2, 0, 2, 2], &["nsubj", "root", "obj", "punct"]);
            let c = attachment_scores(&g, &ParseTree { heads, labels }, &vocab()).unwrap();
            proptest::prop_assert!(c.las() <= c.uas());
        }

        #[test]
        fn bootstrap_complementarity(
            a in proptest::collection::vec(0.0f64..100.0, 2..12),
            noise in proptest::collection::vec(0.001f64..5.0, 12),
            seed in 0u64..1000,
        ) {
            // b differs from a by a non-zero amount everywhere, alternating sign
            let b: Vec<f64> = a.iter().zip(&noise).enumerate()
                .map(|(i, (x, e))| if i % 2 == 0 { x + e } else { x - e }).collect();
            let p = bootstrap_test(&a, &b, 500, seed).unwrap();
            let q = bootstrap_test(&b, &a, 500, seed).unwrap();
            proptest::prop_assert!(p + q >= 1.0 - 1e-12);
        }
    }
}
