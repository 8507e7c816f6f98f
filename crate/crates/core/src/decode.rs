//! Tree decoding from arc score matrices.

use ndarray::{Array2, Array3};

use crate::conllu::check_tree;
use crate::error::{Error, Result};

/// Score given to arcs that may never be used: self-loops and arcs into the
/// root. Finite so that softmax over a column never computes `inf - inf`.
pub const MASKED: f64 = -1e9;

/// Largest sentence length accepted by [`brute_force_best_tree`].
pub const BRUTE_FORCE_MAX_LEN: usize = 7;

/// Arc scores for an `n`-token sentence as an `(n+1)×(n+1)` matrix, where
/// entry `[h][d]` scores the arc `h → d` and index 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    scores: Array2<f64>,
}

impl ScoreMatrix {
    /// Wrap a square matrix, overwriting the diagonal and column 0 with
    /// [`MASKED`].
    pub fn new(mut scores: Array2<f64>) -> Result<Self> {
        if scores.nrows() != scores.ncols() || scores.nrows() == 0 {
            return Err(Error::invalid(format!(
                "score matrix must be square and non-empty, got {:?}",
                scores.shape()
            )));
        }
        for i in 0..scores.nrows() {
            scores[[i, i]] = MASKED;
            scores[[i, 0]] = MASKED;
        }
        Ok(ScoreMatrix { scores })
    }

    /// Build from nested rows; convenient in tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((n, flat.len() / n.max(1)), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(arr)
    }

    /// Number of real tokens.
    pub fn len(&self) -> usize {
        self.scores.nrows() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, head: usize, dep: usize) -> f64 {
        self.scores[[head, dep]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn into_array(self) -> Array2<f64> {
        self.scores
    }

    /// Sum of arc scores for `heads` (index `d` holds the head of token `d+1`).
    pub fn tree_score(&self, heads: &[usize]) -> f64 {
        heads
            .iter()
            .enumerate()
            .map(|(d, &h)| self.scores[[h, d + 1]])
            .sum()
    }
}

/// A decoded tree: `heads[d]` and `labels[d]` belong to token `d+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseTree {
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
}

/// True when `heads` is a spanning arborescence with exactly one token
/// attached to the root.
pub fn is_single_root_tree(heads: &[usize]) -> bool {
    heads.iter().filter(|&&h| h == 0).count() == 1 && check_tree(heads).is_ok()
}

fn is_masked(x: f64) -> bool {
    x <= MASKED / 2.0
}

/// Maximum spanning arborescence rooted at node 0 of a dense score matrix,
/// with no constraint on the number of root children. Masked entries must
/// already be `-inf`. Returns a parent per node; entry 0 is meaningless.
fn cle_unconstrained(scores: &Array2<f64>) -> Vec<usize> {
    let m = scores.nrows();
    let mut parent = vec![0usize; m];
    for v in 1..m {
        let mut best = f64::NEG_INFINITY;
        let mut arg = usize::MAX;
        for u in 0..m {
            if u != v && (arg == usize::MAX || scores[[u, v]] > best) {
                best = scores[[u, v]];
                arg = u;
            }
        }
        parent[v] = arg;
    }

    let Some(cycle) = find_cycle(&parent) else {
        return parent;
    };

    let mut in_cycle = vec![false; m];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    // Nodes outside the cycle keep their relative order, the cycle becomes
    // the last node of the contracted graph.
    let outside: Vec<usize> = (0..m).filter(|&v| !in_cycle[v]).collect();
    let c = outside.len();
    let mut contracted = Array2::from_elem((c + 1, c + 1), f64::NEG_INFINITY);
    let mut enter_at = vec![usize::MAX; c];
    let mut leave_from = vec![usize::MAX; c];

    for (ui, &u) in outside.iter().enumerate() {
        for (vi, &v) in outside.iter().enumerate() {
            contracted[[ui, vi]] = scores[[u, v]];
        }
        let mut best_in = f64::NEG_INFINITY;
        let mut best_out = f64::NEG_INFINITY;
        for &w in &cycle {
            let gain = scores[[u, w]] - scores[[parent[w], w]];
            if enter_at[ui] == usize::MAX || gain > best_in {
                best_in = gain;
                enter_at[ui] = w;
            }
            if leave_from[ui] == usize::MAX || scores[[w, u]] > best_out {
                best_out = scores[[w, u]];
                leave_from[ui] = w;
            }
        }
        contracted[[ui, c]] = best_in;
        contracted[[c, ui]] = best_out;
    }

    let sub = cle_unconstrained(&contracted);

    let mut result = parent.clone();
    for (vi, &v) in outside.iter().enumerate().skip(1) {
        let p = sub[vi];
        result[v] = if p == c { leave_from[vi] } else { outside[p] };
    }
    let entering = sub[c];
    let w = enter_at[entering];
    result[w] = outside[entering];
    result
}

fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let m = parent.len();
    // 0 = unseen, 1 = on the current walk, 2 = done
    let mut state = vec![0u8; m];
    state[0] = 2;
    for start in 1..m {
        let mut walk = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            walk.push(v);
            v = parent[v];
        }
        if state[v] == 1 {
            let pos = walk.iter().position(|&x| x == v).unwrap();
            return Some(walk[pos..].to_vec());
        }
        for x in walk {
            state[x] = 2;
        }
    }
    None
}

/// Best single-root spanning arborescence by Chu-Liu-Edmonds.
///
/// Each token is tried as the sole child of the root (all other root arcs
/// disabled) and the highest-scoring result wins; earlier candidates win ties.
pub fn chu_liu_edmonds(scores: &ScoreMatrix) -> Result<Vec<usize>> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::invalid("cannot decode an empty sentence"));
    }
    let base = scores
        .as_array()
        .mapv(|x| if is_masked(x) { f64::NEG_INFINITY } else { x });

    let mut best: Option<(f64, Vec<usize>)> = None;
    for root_child in 1..=n {
        if base[[0, root_child]] == f64::NEG_INFINITY {
            continue;
        }
        let mut constrained = base.clone();
        for d in 1..=n {
            if d != root_child {
                constrained[[0, d]] = f64::NEG_INFINITY;
            }
        }
        let heads = cle_unconstrained(&constrained)[1..].to_vec();
        let total = scores.tree_score(&heads);
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, heads));
        }
    }
    best.map(|(_, heads)| heads)
        .ok_or_else(|| Error::invalid("every root arc is masked"))
}

/// Per-token argmax over candidate heads. May produce cycles or several
/// root children.
pub fn greedy_decode(scores: &ScoreMatrix) -> Vec<usize> {
    let n = scores.len();
    (1..=n)
        .map(|d| {
            let mut arg = 0;
            let mut best = f64::NEG_INFINITY;
            for h in 0..=n {
                if h != d && scores.get(h, d) > best {
                    best = scores.get(h, d);
                    arg = h;
                }
            }
            arg
        })
        .collect()
}

/// All single-root spanning arborescences over `n` tokens in lexicographic
/// order of their head lists.
pub fn enumerate_single_root_trees(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut heads = vec![0usize; n];
    loop {
        if heads.iter().enumerate().all(|(d, &h)| h != d + 1) && is_single_root_tree(&heads) {
            out.push(heads.clone());
        }
        // odometer increment, last position fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if heads[pos] < n {
                heads[pos] += 1;
                break;
            }
            heads[pos] = 0;
        }
    }
}

/// Exhaustive search over single-root trees; ties go to the
/// lexicographically smallest head list.
pub fn brute_force_best_tree(scores: &ScoreMatrix) -> Result<Vec<usize>> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::invalid("cannot decode an empty sentence"));
    }
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::invalid(format!(
            "brute-force decoding limited to {BRUTE_FORCE_MAX_LEN} tokens, got {n}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for heads in enumerate_single_root_trees(n) {
        let total = scores.tree_score(&heads);
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, heads));
        }
    }
    Ok(best.expect("n >= 1 has at least one tree").1)
}

/// Pick the best label for every arc of a tree. `label_scores[[l, h, d]]`
/// scores label `l` on the arc from `h` to token `d+1`.
pub fn assign_labels(label_scores: &Array3<f64>, heads: &[usize]) -> Vec<usize> {
    let n_labels = label_scores.shape()[0];
    heads
        .iter()
        .enumerate()
        .map(|(d, &h)| {
            let mut arg = 0;
            for l in 1..n_labels {
                if label_scores[[l, h, d]] > label_scores[[arg, h, d]] {
                    arg = l;
                }
            }
            arg
        })
        .collect()
}
