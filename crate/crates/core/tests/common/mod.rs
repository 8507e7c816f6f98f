#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use worstcase::conllu::{build_vocab, Batch, Sentence, Split, Token, Treebank, Vocab};
use worstcase::curriculum::{train_loop, CurriculumConfig, SamplerKind, TrainOutcome};
use worstcase::parser::{
    batch_gradient, batch_loss, AdamConfig, ModelDims, OptimizerState, ParserParams,
};
use worstcase::synthetic::{random_tree, scramble, treebank, Language, WordOrder};

/// An easy task and a same-sized task whose trees are random, so its loss
/// stays high however long it is trained.
pub fn easy_and_hard(sentences: usize, seed: u64) -> Vec<Treebank> {
    let easy = treebank(
        &Language::new("ea", WordOrder::svo_prepositional()),
        "easy",
        sentences,
        Split::Train,
        seed,
    );
    let source = treebank(
        &Language::new("ha", WordOrder::sov_postpositional()),
        "hard",
        sentences,
        Split::Train,
        seed + 1,
    );
    let hard = scramble(&source, "hard", seed + 2);
    vec![easy, hard]
}

pub fn train(
    treebanks: &[Treebank],
    config: &CurriculumConfig,
    dims: ModelDims,
    adam: AdamConfig,
) -> (TrainOutcome, ParserParams, Vocab) {
    let vocab = build_vocab(treebanks).unwrap();
    let mut params = ParserParams::init(
        dims,
        vocab.n_words(),
        vocab.n_upos(),
        vocab.n_labels(),
        config.seed,
    );
    let mut optimizer = OptimizerState::new(&params, adam);
    let outcome = train_loop(config, treebanks, &vocab, &mut params, &mut optimizer).unwrap();
    (outcome, params, vocab)
}

pub fn chase_config(sampler: SamplerKind, phi: f64, seed: u64) -> CurriculumConfig {
    CurriculumConfig {
        sampler,
        phi,
        steps: 500,
        seed,
        batch_size: 8,
        ..CurriculumConfig::default()
    }
}

pub fn chase_dims() -> ModelDims {
    ModelDims {
        word_dim: 16,
        upos_dim: 8,
        hidden_dim: 32,
        arc_dim: 16,
    }
}

const STEP: f64 = 1e-4;

fn small_dims() -> ModelDims {
    ModelDims {
        word_dim: 4,
        upos_dim: 4,
        hidden_dim: 8,
        arc_dim: 6,
    }
}

fn random_treebank(rng: &mut ChaCha8Rng) -> Treebank {
    let labels = ["nsubj", "obj", "root", "det"];
    let upos = ["NOUN", "VERB", "DET"];
    let sentences = (0..rng.random_range(1..=3))
        .map(|_| {
            let n = rng.random_range(1..=5);
            let heads = random_tree(rng, n);
            Sentence {
                tokens: heads
                    .into_iter()
                    .map(|h| Token {
                        form: format!("w{}", rng.random_range(0..6)),
                        upos: upos[rng.random_range(0..upos.len())].to_string(),
                        head: h,
                        deprel: labels[rng.random_range(0..labels.len())].to_string(),
                    })
                    .collect(),
                sent_id: None,
            }
        })
        .collect();
    Treebank {
        task_id: "gc".to_string(),
        sentences,
        split: Split::Train,
    }
}

/// Symmetric difference relative to the larger magnitude, floored so that
/// entries that are zero in both count as exact.
fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_relative_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tb = random_treebank(&mut rng);
    let vocab = build_vocab(std::slice::from_ref(&tb)).unwrap();
    let mut params = ParserParams::init(
        small_dims(),
        vocab.n_words(),
        vocab.n_upos(),
        vocab.n_labels(),
        seed,
    );
    // push biases and the root vector off zero so their gradients are exercised
    for i in 0..params.tensors.len() {
        if params.tensors.get_flat(i) == 0.0 {
            params.tensors.set_flat(i, rng.random_range(-0.3..0.3));
        }
    }
    let batch = Batch {
        task_id: "gc",
        sentences: tb.sentences.iter().collect(),
    };
    let (_, grads) = batch_gradient(&batch, &params, &vocab);
    let mut worst: f64 = 0.0;
    for i in 0..params.tensors.len() {
        let x = params.tensors.get_flat(i);
        params.tensors.set_flat(i, x + STEP);
        let up = batch_loss(&batch, &params, &vocab);
        params.tensors.set_flat(i, x - STEP);
        let down = batch_loss(&batch, &params, &vocab);
        params.tensors.set_flat(i, x);
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(relative_error(grads.get_flat(i), numeric));
    }
    worst
}
