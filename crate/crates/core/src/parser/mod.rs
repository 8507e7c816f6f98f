//! Biaffine graph-based dependency parser.
//!
//! Tokens are encoded from word and UPOS embeddings of a five-token window
//! through one affine-tanh layer. Head and dependent projections of the
//! encodings feed a biaffine arc scorer and a bilinear label scorer. One set
//! of parameters is shared by every language.

mod adam;
mod checkpoint;
mod network;

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{apply_update, AdamConfig, NonFiniteGradient, OptimizerState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use network::{
    batch_gradient, batch_loss, encode, label_scores, parse_sentence, score_arcs, ScoreMatrix,
    MASKED,
};

/// Tokens on each side of the current one that feed its encoding.
pub const WINDOW: usize = 2;
pub const WINDOW_WIDTH: usize = 2 * WINDOW + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub word_dim: usize,
    pub upos_dim: usize,
    pub hidden_dim: usize,
    pub arc_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            word_dim: 64,
            upos_dim: 16,
            hidden_dim: 128,
            arc_dim: 64,
        }
    }
}

impl ModelDims {
    pub fn window_features(&self) -> usize {
        WINDOW_WIDTH * (self.word_dim + self.upos_dim)
    }
}

/// Every trainable tensor of the parser. Used both for parameters and for
/// gradients and optimizer moments, which share the same shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensors {
    pub word_emb: Array2<f64>,
    pub upos_emb: Array2<f64>,
    /// hidden × window features
    pub enc_w: Array2<f64>,
    pub enc_b: Array1<f64>,
    /// arc_dim × hidden
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    pub dep_w: Array2<f64>,
    pub dep_b: Array1<f64>,
    pub arc_u: Array2<f64>,
    pub arc_b: Array1<f64>,
    /// labels × arc_dim × arc_dim
    pub label_u: Array3<f64>,
    pub label_b: Array1<f64>,
    /// Encoding of the artificial root token.
    pub root: Array1<f64>,
}

macro_rules! tensor_fields {
    ($m:ident) => {
        $m!(
            word_emb, upos_emb, enc_w, enc_b, head_w, head_b, dep_w, dep_b, arc_u, arc_b, label_u,
            label_b, root
        )
    };
}

pub const TENSOR_NAMES: [&str; 13] = [
    "word_emb", "upos_emb", "enc_w", "enc_b", "head_w", "head_b", "dep_w", "dep_b", "arc_u",
    "arc_b", "label_u", "label_b", "root",
];

impl Tensors {
    pub fn zeros(dims: &ModelDims, n_words: usize, n_upos: usize, n_labels: usize) -> Self {
        let a = dims.arc_dim;
        let h = dims.hidden_dim;
        Tensors {
            word_emb: Array2::zeros((n_words, dims.word_dim)),
            upos_emb: Array2::zeros((n_upos, dims.upos_dim)),
            enc_w: Array2::zeros((h, dims.window_features())),
            enc_b: Array1::zeros(h),
            head_w: Array2::zeros((a, h)),
            head_b: Array1::zeros(a),
            dep_w: Array2::zeros((a, h)),
            dep_b: Array1::zeros(a),
            arc_u: Array2::zeros((a, a)),
            arc_b: Array1::zeros(a),
            label_u: Array3::zeros((n_labels, a, a)),
            label_b: Array1::zeros(n_labels),
            root: Array1::zeros(h),
        }
    }

    pub fn zeros_like(other: &Tensors) -> Self {
        macro_rules! build {
            ($($f:ident),*) => { Tensors { $($f: ndarray::Array::zeros(other.$f.raw_dim())),* } };
        }
        tensor_fields!(build)
    }

    /// Flat row-major views of every tensor, in `TENSOR_NAMES` order.
    pub fn slices(&self) -> Vec<&[f64]> {
        macro_rules! collect {
            ($($f:ident),*) => { vec![$(self.$f.as_slice().expect("standard layout")),*] };
        }
        tensor_fields!(collect)
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        macro_rules! collect {
            ($($f:ident),*) => { vec![$(self.$f.as_slice_mut().expect("standard layout")),*] };
        }
        tensor_fields!(collect)
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        macro_rules! collect {
            ($($f:ident),*) => { vec![$(self.$f.shape().to_vec()),*] };
        }
        tensor_fields!(collect)
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    /// Read the `index`-th scalar when all tensors are laid end to end.
    pub fn get_flat(&self, mut index: usize) -> f64 {
        for s in self.slices() {
            if index < s.len() {
                return s[index];
            }
            index -= s.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for s in self.slices_mut() {
            if index < s.len() {
                s[index] = value;
                return;
            }
            index -= s.len();
        }
        panic!("flat index out of range");
    }
}

/// Trainable parameters of the parser.
#[derive(Clone, Debug, PartialEq)]
pub struct ParserParams {
    pub dims: ModelDims,
    pub tensors: Tensors,
}

pub type GradientSet = Tensors;

fn glorot(rng: &mut ChaCha8Rng, data: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in data {
        *x = rng.random_range(-bound..bound);
    }
}

impl ParserParams {
    pub fn zeros(dims: ModelDims, n_words: usize, n_upos: usize, n_labels: usize) -> Self {
        ParserParams {
            dims,
            tensors: Tensors::zeros(&dims, n_words, n_upos, n_labels),
        }
    }

    /// Glorot-uniform weights and embeddings; biases and the arc bias
    /// vector start at zero.
    pub fn init(
        dims: ModelDims,
        n_words: usize,
        n_upos: usize,
        n_labels: usize,
        seed: u64,
    ) -> Self {
        let mut p = Self::zeros(dims, n_words, n_upos, n_labels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = &mut p.tensors;
        let (a, h) = (dims.arc_dim, dims.hidden_dim);
        glorot(
            &mut rng,
            t.word_emb.as_slice_mut().unwrap(),
            n_words,
            dims.word_dim,
        );
        glorot(
            &mut rng,
            t.upos_emb.as_slice_mut().unwrap(),
            n_upos,
            dims.upos_dim,
        );
        glorot(
            &mut rng,
            t.enc_w.as_slice_mut().unwrap(),
            dims.window_features(),
            h,
        );
        glorot(&mut rng, t.head_w.as_slice_mut().unwrap(), h, a);
        glorot(&mut rng, t.dep_w.as_slice_mut().unwrap(), h, a);
        glorot(&mut rng, t.arc_u.as_slice_mut().unwrap(), a, a);
        glorot(&mut rng, t.label_u.as_slice_mut().unwrap(), a, a);
        glorot(&mut rng, t.root.as_slice_mut().unwrap(), 1, h);
        p
    }

    pub fn n_words(&self) -> usize {
        self.tensors.word_emb.nrows()
    }

    pub fn n_upos(&self) -> usize {
        self.tensors.upos_emb.nrows()
    }

    pub fn n_labels(&self) -> usize {
        self.tensors.label_b.len()
    }
}
