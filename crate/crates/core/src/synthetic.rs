//! Toy treebanks from a parameterised word-order grammar.
//!
//! Every generated language uses the same UPOS tags and relations but its own
//! word forms, so transfer between languages can only go through UPOS and
//! word order. Languages differ in verb-object order, adposition placement
//! and adjective and determiner placement.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Split, Token, Treebank};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordOrder {
    /// Object follows the verb (SVO) rather than preceding it (SOV).
    pub verb_object: bool,
    /// Adpositions precede their noun.
    pub prepositions: bool,
    /// Adjectives precede their noun.
    pub adjective_first: bool,
    /// Determiners precede their noun.
    pub determiner_first: bool,
}

impl WordOrder {
    /// SVO with prepositions and prenominal modifiers, roughly English.
    pub fn svo_prepositional() -> Self {
        WordOrder {
            verb_object: true,
            prepositions: true,
            adjective_first: true,
            determiner_first: true,
        }
    }

    /// SOV with postpositions and postnominal modifiers, roughly Basque.
    pub fn sov_postpositional() -> Self {
        WordOrder {
            verb_object: false,
            prepositions: false,
            adjective_first: false,
            determiner_first: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Language {
    pub code: String,
    pub order: WordOrder,
}

impl Language {
    pub fn new(code: &str, order: WordOrder) -> Self {
        Language {
            code: code.to_string(),
            order,
        }
    }

    fn word(&self, upos: &str, index: usize) -> String {
        if upos == "PUNCT" {
            return ".".to_string();
        }
        format!("{}{}{}", self.code, upos.to_lowercase(), index)
    }
}

const LEXICON_SIZE: usize = 12;

/// A node under construction: the token index of its head word within the
/// phrase and the phrase's tokens as (upos, relation, local head index).
struct Phrase {
    head: usize,
    tokens: Vec<(&'static str, &'static str, Option<usize>)>,
}

impl Phrase {
    fn word(upos: &'static str, rel: &'static str) -> Self {
        Phrase {
            head: 0,
            tokens: vec![(upos, rel, None)],
        }
    }

    /// Attach `dep` before or after this phrase's head; `dep`'s head gets
    /// relation `rel` and points at this phrase's head.
    fn attach(self, dep: Phrase, rel: &'static str, before: bool) -> Phrase {
        let mut dep_tokens = dep.tokens;
        dep_tokens[dep.head].1 = rel;
        let (mut first, second, head_in_first) = if before {
            (dep_tokens, self.tokens, false)
        } else {
            (self.tokens, dep_tokens, true)
        };
        let offset = first.len();
        let (own_head, dep_head) = if head_in_first {
            (self.head, offset + dep.head)
        } else {
            (offset + self.head, dep.head)
        };
        // shift local heads of the second half
        let shifted: Vec<_> = second
            .into_iter()
            .map(|(u, r, h)| (u, r, h.map(|h| h + offset)))
            .collect();
        first.extend(shifted);
        first[dep_head].2 = Some(own_head);
        Phrase {
            head: own_head,
            tokens: first,
        }
    }
}

fn noun_phrase<R: Rng>(rng: &mut R, order: &WordOrder) -> Phrase {
    let mut np = Phrase::word("NOUN", "dep");
    if rng.random_bool(0.5) {
        np = np.attach(Phrase::word("ADJ", "amod"), "amod", order.adjective_first);
    }
    if rng.random_bool(0.6) {
        np = np.attach(Phrase::word("DET", "det"), "det", order.determiner_first);
    }
    np
}

/// Generate one sentence of `lang`.
pub fn sentence<R: Rng>(rng: &mut R, lang: &Language) -> Sentence {
    let o = &lang.order;
    let mut clause = Phrase::word("VERB", "root");
    if rng.random_bool(0.7) {
        clause = clause.attach(noun_phrase(rng, o), "obj", !o.verb_object);
    }
    if rng.random_bool(0.4) {
        let pp = noun_phrase(rng, o).attach(Phrase::word("ADP", "case"), "case", o.prepositions);
        clause = clause.attach(pp, "obl", !o.verb_object);
    }
    if rng.random_bool(0.3) {
        clause = clause.attach(Phrase::word("ADV", "advmod"), "advmod", !o.verb_object);
    }
    clause = clause.attach(noun_phrase(rng, o), "nsubj", true);
    clause = clause.attach(Phrase::word("PUNCT", "punct"), "punct", false);

    let tokens = clause
        .tokens
        .iter()
        .map(|&(upos, rel, head)| Token {
            form: lang.word(upos, rng.random_range(0..LEXICON_SIZE)),
            upos: upos.to_string(),
            head: head.map_or(0, |h| h + 1),
            deprel: rel.to_string(),
        })
        .collect();
    Sentence {
        tokens,
        sent_id: None,
    }
}

pub fn treebank(
    lang: &Language,
    task_id: &str,
    n_sentences: usize,
    split: Split,
    seed: u64,
) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n_sentences)
        .map(|i| {
            let mut s = sentence(&mut rng, lang);
            s.sent_id = Some(format!("{task_id}-{}", i + 1));
            s
        })
        .collect();
    Treebank {
        task_id: task_id.to_string(),
        sentences,
        split,
    }
}

/// Uniformly random single-root tree over `n` tokens: a random insertion
/// order where each token attaches to an earlier one.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for i in 1..n {
        heads[order[i] - 1] = order[rng.random_range(0..i)];
    }
    heads
}

/// Replace every gold tree with a random one and every relation with a
/// random relation from the same inventory, keeping words and tags. The
/// result carries no learnable syntax.
pub fn scramble(treebank: &Treebank, task_id: &str, seed: u64) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut relations: Vec<String> = treebank
        .sentences
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.deprel.clone()))
        .collect();
    relations.sort();
    relations.dedup();
    let sentences = treebank
        .sentences
        .iter()
        .map(|s| {
            let heads = random_tree(&mut rng, s.len());
            Sentence {
                tokens: s
                    .tokens
                    .iter()
                    .zip(heads)
                    .map(|(t, h)| Token {
                        head: h,
                        deprel: relations[rng.random_range(0..relations.len())].clone(),
                        ..t.clone()
                    })
                    .collect(),
                sent_id: s.sent_id.clone(),
            }
        })
        .collect();
    Treebank {
        task_id: task_id.to_string(),
        sentences,
        split: treebank.split,
    }
}

/// Training and held-out treebanks for a zero-shot transfer experiment.
#[derive(Clone, Debug)]
pub struct TransferSuite {
    pub train: Vec<Treebank>,
    pub test: Vec<Treebank>,
}

/// Four training shards of one SVO language, one smaller shard of an SOV
/// language, and two held-out SOV languages with their own lexicons. The
/// second held-out language puts adjectives before the noun.
pub fn transfer_suite(
    majority_size: usize,
    minority_size: usize,
    test_size: usize,
    seed: u64,
) -> TransferSuite {
    let majority = Language::new("maj", WordOrder::svo_prepositional());
    let minority = Language::new("min", WordOrder::sov_postpositional());
    let mut train: Vec<Treebank> = (0..4)
        .map(|i| {
            treebank(
                &majority,
                &format!("maj_{}", i + 1),
                majority_size,
                Split::Train,
                seed * 100 + i,
            )
        })
        .collect();
    train.push(treebank(
        &minority,
        "min_1",
        minority_size,
        Split::Train,
        seed * 100 + 10,
    ));
    let held_out = [
        Language::new("hoa", WordOrder::sov_postpositional()),
        Language::new(
            "hob",
            WordOrder {
                adjective_first: true,
                ..WordOrder::sov_postpositional()
            },
        ),
    ];
    let test = held_out
        .iter()
        .enumerate()
        .map(|(i, lang)| {
            treebank(
                lang,
                &lang.code,
                test_size,
                Split::Test,
                seed * 100 + 20 + i as u64,
            )
        })
        .collect();
    TransferSuite { train, test }
}
