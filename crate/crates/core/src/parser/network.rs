//! Forward pass, loss and hand-derived gradients.
//!
//! For a sentence of `n` tokens with encodings `R` ((n+1)×hidden, row 0 the
//! root), head and dependent projections are `Hp = R·Whᵀ + bh` and
//! `Dp = R·Wdᵀ + bd`. Arc scores are `S = Hp·U·Dpᵀ + (Hp·b)·1ᵀ` and the label
//! scores of arc `h → d` are `z_l = Hp[h]·U_l·Dp[d] + c_l`.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};

use super::{GradientSet, ParserParams, Tensors, WINDOW, WINDOW_WIDTH};
use crate::conllu::{Batch, Sentence, Vocab, PAD_ID};
use crate::decode::{assign_labels, chu_liu_edmonds, ParseTree};
use crate::error::Result;

pub use crate::decode::{ScoreMatrix, MASKED};

struct Lookup {
    words: Vec<usize>,
    upos: Vec<usize>,
}

impl Lookup {
    fn new(sentence: &Sentence, vocab: &Vocab) -> Self {
        Lookup {
            words: sentence
                .tokens
                .iter()
                .map(|t| vocab.word_id(&t.form))
                .collect(),
            upos: sentence
                .tokens
                .iter()
                .map(|t| vocab.upos_id(&t.upos))
                .collect(),
        }
    }

    /// Word and UPOS ids at 0-based position `pos`, padding outside.
    fn at(&self, pos: isize) -> (usize, usize) {
        if pos < 0 || pos as usize >= self.words.len() {
            (PAD_ID, PAD_ID)
        } else {
            (self.words[pos as usize], self.upos[pos as usize])
        }
    }
}

fn window_features(lookup: &Lookup, t: &Tensors) -> Array2<f64> {
    let n = lookup.words.len();
    let dw = t.word_emb.ncols();
    let dp = t.upos_emb.ncols();
    let seg = dw + dp;
    let mut x = Array2::zeros((n, WINDOW_WIDTH * seg));
    for i in 0..n {
        for j in 0..WINDOW_WIDTH {
            let (w, u) = lookup.at(i as isize + j as isize - WINDOW as isize);
            let off = j * seg;
            x.slice_mut(s![i, off..off + dw]).assign(&t.word_emb.row(w));
            x.slice_mut(s![i, off + dw..off + seg])
                .assign(&t.upos_emb.row(u));
        }
    }
    x
}

fn affine_rows(input: &Array2<f64>, weight: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    input.dot(&weight.t()) + bias
}

struct Forward {
    x: Array2<f64>,
    reps: Array2<f64>,
    hp: Array2<f64>,
    dp: Array2<f64>,
}

impl Forward {
    fn run(lookup: &Lookup, t: &Tensors) -> Self {
        let n = lookup.words.len();
        let x = window_features(lookup, t);
        let mut reps = Array2::zeros((n + 1, t.root.len()));
        reps.row_mut(0).assign(&t.root);
        let hidden = affine_rows(&x, &t.enc_w, &t.enc_b).mapv(f64::tanh);
        reps.slice_mut(s![1.., ..]).assign(&hidden);
        let hp = affine_rows(&reps, &t.head_w, &t.head_b);
        let dp = affine_rows(&reps, &t.dep_w, &t.dep_b);
        Forward { x, reps, hp, dp }
    }
}

fn arc_scores(hp: &Array2<f64>, dp: &Array2<f64>, t: &Tensors) -> Array2<f64> {
    let mut scores = hp.dot(&t.arc_u).dot(&dp.t());
    let head_bias = hp.dot(&t.arc_b);
    for (mut row, b) in scores.axis_iter_mut(Axis(0)).zip(head_bias.iter()) {
        row += *b;
    }
    let m = scores.nrows();
    for i in 0..m {
        scores[[i, i]] = MASKED;
        scores[[i, 0]] = MASKED;
    }
    scores
}

fn label_u_flat(t: &Tensors) -> ndarray::ArrayView2<'_, f64> {
    let (l, a, _) = t.label_u.dim();
    t.label_u
        .view()
        .into_shape_with_order((l * a, a))
        .expect("contiguous")
}

/// Encode a sentence into one row per node; row 0 is the root.
pub fn encode(sentence: &Sentence, params: &ParserParams, vocab: &Vocab) -> Array2<f64> {
    Forward::run(&Lookup::new(sentence, vocab), &params.tensors).reps
}

/// Biaffine arc scores over encoder output, masked.
pub fn score_arcs(reps: &Array2<f64>, params: &ParserParams) -> ScoreMatrix {
    let t = &params.tensors;
    let hp = affine_rows(reps, &t.head_w, &t.head_b);
    let dp = affine_rows(reps, &t.dep_w, &t.dep_b);
    ScoreMatrix::new(arc_scores(&hp, &dp, t)).expect("square score matrix")
}

/// Label scores for every candidate arc, shaped labels × (n+1) × n:
/// entry `[l, h, d]` scores label `l` on the arc `h → d+1`.
pub fn label_scores(reps: &Array2<f64>, params: &ParserParams) -> Array3<f64> {
    let t = &params.tensors;
    let hp = affine_rows(reps, &t.head_w, &t.head_b);
    let dp = affine_rows(reps, &t.dep_w, &t.dep_b);
    let m = reps.nrows();
    let n_labels = t.label_b.len();
    let mut out = Array3::zeros((n_labels, m, m - 1));
    let dep_rows = dp.slice(s![1.., ..]);
    for l in 0..n_labels {
        let z = hp.dot(&t.label_u.index_axis(Axis(0), l)).dot(&dep_rows.t()) + t.label_b[l];
        out.index_axis_mut(Axis(0), l).assign(&z);
    }
    out
}

/// Decode one sentence: Chu-Liu-Edmonds on the arc scores, then the best
/// label on each chosen arc.
pub fn parse_sentence(
    sentence: &Sentence,
    params: &ParserParams,
    vocab: &Vocab,
) -> Result<ParseTree> {
    let reps = encode(sentence, params, vocab);
    let scores = score_arcs(&reps, params);
    let heads = chu_liu_edmonds(&scores)?;
    let labels = assign_labels(&label_scores(&reps, params), &heads);
    Ok(ParseTree { heads, labels })
}

fn log_softmax_in_place(v: &mut [f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    v.iter_mut().for_each(|x| *x -= lse);
    lse
}

/// Summed token loss of one sentence and, when `grads` is given, the
/// gradient of `scale × loss` added into it.
fn sentence_loss(
    sentence: &Sentence,
    params: &ParserParams,
    vocab: &Vocab,
    grads: Option<(&mut GradientSet, f64)>,
) -> f64 {
    let t = &params.tensors;
    let lookup = Lookup::new(sentence, vocab);
    let fwd = Forward::run(&lookup, t);
    let n = sentence.len();
    let a = params.dims.arc_dim;
    let n_labels = t.label_b.len();
    let gold_heads = sentence.heads();
    let gold_labels: Vec<Option<usize>> = sentence
        .tokens
        .iter()
        .map(|tok| vocab.deprel_id(&tok.deprel).filter(|&l| l < n_labels))
        .collect();

    let scores = arc_scores(&fwd.hp, &fwd.dp, t);
    // (labels·arc_dim) × (n+1): column d holds U_l·Dp[d] stacked over l
    let stacked = label_u_flat(t).dot(&fwd.dp.t());

    let mut loss = 0.0;
    let mut arc_probs = Array2::<f64>::zeros((n + 1, n + 1));
    let mut label_probs = Array2::<f64>::zeros((n, n_labels));
    for d in 1..=n {
        let mut col: Vec<f64> = scores.column(d).to_vec();
        log_softmax_in_place(&mut col);
        loss -= col[gold_heads[d - 1]];
        for (h, lp) in col.iter().enumerate() {
            arc_probs[[h, d]] = lp.exp();
        }

        if let Some(gold) = gold_labels[d - 1] {
            let head_row = fwd.hp.row(gold_heads[d - 1]);
            let mut z: Vec<f64> = (0..n_labels)
                .map(|l| stacked.slice(s![l * a..(l + 1) * a, d]).dot(&head_row) + t.label_b[l])
                .collect();
            log_softmax_in_place(&mut z);
            loss -= z[gold];
            for (l, lp) in z.iter().enumerate() {
                label_probs[[d - 1, l]] = lp.exp();
            }
        }
    }

    if let Some((g, scale)) = grads {
        backward(
            &fwd,
            &lookup,
            t,
            &stacked,
            arc_probs,
            label_probs,
            &gold_heads,
            &gold_labels,
            g,
            scale,
        );
    }
    loss
}

#[allow(clippy::too_many_arguments)]
fn backward(
    fwd: &Forward,
    lookup: &Lookup,
    t: &Tensors,
    stacked: &Array2<f64>,
    arc_probs: Array2<f64>,
    label_probs: Array2<f64>,
    gold_heads: &[usize],
    gold_labels: &[Option<usize>],
    g: &mut GradientSet,
    scale: f64,
) {
    let n = gold_heads.len();
    let a = fwd.hp.ncols();
    let n_labels = t.label_b.len();

    // d loss / d scores: softmax minus one-hot, zero on masked entries.
    let mut g_scores = arc_probs;
    for d in 1..=n {
        g_scores[[gold_heads[d - 1], d]] -= 1.0;
        g_scores[[d, d]] = 0.0;
    }
    g_scores.column_mut(0).fill(0.0);
    g_scores *= scale;

    let row_sums = g_scores.sum_axis(Axis(1));
    let mut d_hp = g_scores.dot(&fwd.dp.dot(&t.arc_u.t()));
    for (mut row, s) in d_hp.axis_iter_mut(Axis(0)).zip(row_sums.iter()) {
        row.scaled_add(*s, &t.arc_b);
    }
    let mut d_dp = g_scores.t().dot(&fwd.hp.dot(&t.arc_u));
    g.arc_u += &fwd.hp.t().dot(&g_scores).dot(&fwd.dp);
    g.arc_b += &fwd.hp.t().dot(&row_sums);

    // Label scorer, only at gold arcs.
    let mut g_labels = label_probs;
    for (d, gold) in gold_labels.iter().enumerate() {
        match gold {
            Some(l) => g_labels[[d, *l]] -= 1.0,
            None => g_labels.row_mut(d).fill(0.0),
        }
    }
    g_labels *= scale;
    g.label_b += &g_labels.sum_axis(Axis(0));

    // weighted[d, l·a + i] = g_labels[d, l] · Hp[head(d), i]
    let mut weighted = Array2::<f64>::zeros((n, n_labels * a));
    for d in 0..n {
        let head_row: ArrayView1<f64> = fwd.hp.row(gold_heads[d]);
        for l in 0..n_labels {
            let gl = g_labels[[d, l]];
            if gl != 0.0 {
                weighted
                    .slice_mut(s![d, l * a..(l + 1) * a])
                    .scaled_add(gl, &head_row);
            }
        }
        let mut head_grad = Array1::<f64>::zeros(a);
        for l in 0..n_labels {
            head_grad.scaled_add(
                g_labels[[d, l]],
                &stacked.slice(s![l * a..(l + 1) * a, d + 1]),
            );
        }
        d_hp.row_mut(gold_heads[d]).scaled_add(1.0, &head_grad);
    }
    let dep_rows = fwd.dp.slice(s![1.., ..]);
    let flat_grad = weighted.t().dot(&dep_rows);
    let (l_dim, _, _) = g.label_u.dim();
    g.label_u += &flat_grad
        .into_shape_with_order((l_dim, a, a))
        .expect("contiguous");
    let label_dep = weighted.dot(&label_u_flat(t));
    d_dp.slice_mut(s![1.., ..]).scaled_add(1.0, &label_dep);

    // Projections.
    g.head_w += &d_hp.t().dot(&fwd.reps);
    g.head_b += &d_hp.sum_axis(Axis(0));
    g.dep_w += &d_dp.t().dot(&fwd.reps);
    g.dep_b += &d_dp.sum_axis(Axis(0));
    let d_reps = d_hp.dot(&t.head_w) + d_dp.dot(&t.dep_w);

    g.root.scaled_add(1.0, &d_reps.row(0));

    // Encoder.
    let hidden = fwd.reps.slice(s![1.., ..]);
    let d_pre = &d_reps.slice(s![1.., ..]) * &hidden.mapv(|r| 1.0 - r * r);
    g.enc_w += &d_pre.t().dot(&fwd.x);
    g.enc_b += &d_pre.sum_axis(Axis(0));
    let d_x = d_pre.dot(&t.enc_w);

    let dw = t.word_emb.ncols();
    let seg = dw + t.upos_emb.ncols();
    for i in 0..n {
        for j in 0..WINDOW_WIDTH {
            let (w, u) = lookup.at(i as isize + j as isize - WINDOW as isize);
            let off = j * seg;
            g.word_emb
                .row_mut(w)
                .scaled_add(1.0, &d_x.slice(s![i, off..off + dw]));
            g.upos_emb
                .row_mut(u)
                .scaled_add(1.0, &d_x.slice(s![i, off + dw..off + seg]));
        }
    }
}

/// Mean per-token loss of a batch: head cross-entropy over candidate heads
/// plus label cross-entropy at the gold arc.
pub fn batch_loss(batch: &Batch<'_>, params: &ParserParams, vocab: &Vocab) -> f64 {
    let tokens = batch.token_count();
    if tokens == 0 {
        return 0.0;
    }
    let total: f64 = batch
        .sentences
        .iter()
        .map(|s| sentence_loss(s, params, vocab, None))
        .sum();
    total / tokens as f64
}

/// Loss and its gradient with respect to every parameter. The loss is
/// computed exactly as in [`batch_loss`].
pub fn batch_gradient(
    batch: &Batch<'_>,
    params: &ParserParams,
    vocab: &Vocab,
) -> (f64, GradientSet) {
    let mut grads = Tensors::zeros_like(&params.tensors);
    let tokens = batch.token_count();
    if tokens == 0 {
        return (0.0, grads);
    }
    let scale = 1.0 / tokens as f64;
    let total: f64 = batch
        .sentences
        .iter()
        .map(|s| sentence_loss(s, params, vocab, Some((&mut grads, scale))))
        .sum();
    (total / tokens as f64, grads)
}
