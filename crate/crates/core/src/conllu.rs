//! CoNLL-U reading, vocabularies and per-task batching.
//!
//! Only the ID, FORM, UPOS, HEAD and DEPREL columns are consumed. Multiword
//! token ranges (`1-2`) and empty nodes (`3.1`) are dropped, so every
//! sentence holds syntactic words only.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on sentence length for training batches.
pub const DEFAULT_MAX_TRAIN_LEN: usize = 60;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub upos: String,
    /// 0 is the artificial root; tokens are numbered from 1.
    pub head: usize,
    /// Universal relation, subtype already stripped.
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub sent_id: Option<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    fn describe(&self, index: usize) -> String {
        match &self.sent_id {
            Some(id) => id.clone(),
            None => format!("#{}", index + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Treebank {
    pub task_id: String,
    pub sentences: Vec<Sentence>,
    pub split: Split,
}

impl Treebank {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// Strip a relation subtype: `nsubj:pass` becomes `nsubj`.
pub fn universal_relation(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

/// Check that `heads` (1-based tokens, 0 = root) form a tree rooted at 0.
pub fn check_tree(heads: &[usize]) -> std::result::Result<(), String> {
    let n = heads.len();
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(format!("token {} has out-of-range head {}", i + 1, h));
        }
        if h == i + 1 {
            return Err(format!("token {} is its own head", i + 1));
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut node = start;
        while state[node] == 0 {
            state[node] = 1;
            path.push(node);
            node = heads[node - 1];
        }
        if state[node] == 1 {
            return Err(format!("cycle through token {node}"));
        }
        for v in path {
            state[v] = 2;
        }
    }
    Ok(())
}

/// Parse CoNLL-U text into a treebank.
pub fn parse_conllu(text: &str, task_id: &str, split: Split) -> Result<Treebank> {
    let mut sentences = Vec::new();
    let mut current = Sentence::default();

    let finish = |sentence: &mut Sentence, sentences: &mut Vec<Sentence>| -> Result<()> {
        let sentence = std::mem::take(sentence);
        if sentence.is_empty() {
            return Ok(());
        }
        if let Err(reason) = check_tree(&sentence.heads()) {
            return Err(Error::InvalidTree {
                sentence: sentence.describe(sentences.len()),
                reason,
            });
        }
        sentences.push(sentence);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut current, &mut sentences)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    current.sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid token id `{id}`"),
        })?;
        if id != current.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "token id {id} out of sequence, expected {}",
                    current.len() + 1
                ),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("non-integer HEAD `{}`", cols[6]),
        })?;
        let form = cols[1];
        let upos = cols[3];
        if form.is_empty() || upos.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty FORM or UPOS".into(),
            });
        }
        current.tokens.push(Token {
            form: form.to_string(),
            upos: upos.to_string(),
            head,
            deprel: universal_relation(cols[7]).to_string(),
        });
    }
    finish(&mut current, &mut sentences)?;

    Ok(Treebank {
        task_id: task_id.to_string(),
        sentences,
        split,
    })
}

pub fn read_treebank(path: impl AsRef<Path>, task_id: &str, split: Split) -> Result<Treebank> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text, task_id, split)
}

/// Render sentences back to CoNLL-U, filling unused columns with `_`.
pub fn write_conllu(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        if let Some(id) = &s.sent_id {
            out.push_str(&format!("# sent_id = {id}\n"));
        }
        for (i, t) in s.tokens.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                t.form,
                t.upos,
                t.head,
                t.deprel
            ));
        }
        out.push('\n');
    }
    out
}

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Word, UPOS and relation inventories shared by all tasks.
///
/// Word and UPOS maps reserve id 0 for padding and id 1 for unknown entries.
/// Relation ids are dense from 0 with no reserved entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub word_to_id: BTreeMap<String, usize>,
    pub upos_to_id: BTreeMap<String, usize>,
    pub deprel_to_id: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn word_id(&self, form: &str) -> usize {
        self.word_to_id
            .get(&form.to_lowercase())
            .copied()
            .unwrap_or(UNK_ID)
    }

    pub fn upos_id(&self, upos: &str) -> usize {
        self.upos_to_id.get(upos).copied().unwrap_or(UNK_ID)
    }

    pub fn deprel_id(&self, deprel: &str) -> Option<usize> {
        self.deprel_to_id.get(universal_relation(deprel)).copied()
    }

    pub fn n_words(&self) -> usize {
        self.word_to_id.len()
    }

    pub fn n_upos(&self) -> usize {
        self.upos_to_id.len()
    }

    pub fn n_labels(&self) -> usize {
        self.deprel_to_id.len()
    }

    /// Relation names indexed by id.
    pub fn labels(&self) -> Vec<&str> {
        let mut names = vec![""; self.deprel_to_id.len()];
        for (name, &id) in &self.deprel_to_id {
            names[id] = name;
        }
        names
    }
}

fn reserved_map() -> BTreeMap<String, usize> {
    BTreeMap::from([(PAD.to_string(), PAD_ID), (UNK.to_string(), UNK_ID)])
}

fn intern(map: &mut BTreeMap<String, usize>, key: &str) {
    if !map.contains_key(key) {
        let id = map.len();
        map.insert(key.to_string(), id);
    }
}

/// Build the shared vocabulary from training treebanks, assigning ids in
/// first-occurrence order.
pub fn build_vocab(treebanks: &[Treebank]) -> Result<Vocab> {
    if treebanks.is_empty() {
        return Err(Error::invalid(
            "cannot build a vocabulary from zero treebanks",
        ));
    }
    let mut word_to_id = reserved_map();
    let mut upos_to_id = reserved_map();
    let mut deprel_to_id = BTreeMap::new();
    for token in treebanks
        .iter()
        .flat_map(|tb| &tb.sentences)
        .flat_map(|s| &s.tokens)
    {
        intern(&mut word_to_id, &token.form.to_lowercase());
        intern(&mut upos_to_id, &token.upos);
        intern(&mut deprel_to_id, universal_relation(&token.deprel));
    }
    Ok(Vocab {
        word_to_id,
        upos_to_id,
        deprel_to_id,
    })
}

/// A batch of sentences drawn from a single task.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<'a> {
    pub task_id: &'a str,
    pub sentences: Vec<&'a Sentence>,
}

impl Batch<'_> {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }
}

fn shuffled_batches<'a>(
    task_id: &'a str,
    mut sentences: Vec<&'a Sentence>,
    batch_size: usize,
    seed: u64,
) -> Vec<Batch<'a>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sentences.shuffle(&mut rng);
    sentences
        .chunks(batch_size)
        .map(|chunk| Batch {
            task_id,
            sentences: chunk.to_vec(),
        })
        .collect()
}

/// Shuffle a treebank under `seed` and cut it into consecutive batches.
pub fn make_batches(treebank: &Treebank, batch_size: usize, seed: u64) -> Result<Vec<Batch<'_>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if treebank.is_empty() {
        return Err(Error::invalid(format!(
            "treebank `{}` has no sentences",
            treebank.task_id
        )));
    }
    Ok(shuffled_batches(
        &treebank.task_id,
        treebank.sentences.iter().collect(),
        batch_size,
        seed,
    ))
}

/// Endless stream of training batches for one task. Sentences longer than
/// `max_len` are left out; each epoch is reshuffled with a seed derived from
/// the stream seed and the epoch number.
pub struct BatchStream<'a> {
    task_id: &'a str,
    sentences: Vec<&'a Sentence>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    pending: std::vec::IntoIter<Batch<'a>>,
}

impl<'a> BatchStream<'a> {
    pub fn new(
        treebank: &'a Treebank,
        batch_size: usize,
        max_len: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let sentences: Vec<&Sentence> = treebank
            .sentences
            .iter()
            .filter(|s| !s.is_empty() && s.len() <= max_len)
            .collect();
        if sentences.is_empty() {
            return Err(Error::invalid(format!(
                "treebank `{}` has no training sentences of length <= {max_len}",
                treebank.task_id
            )));
        }
        Ok(BatchStream {
            task_id: &treebank.task_id,
            sentences,
            batch_size,
            seed,
            epoch: 0,
            pending: Vec::new().into_iter(),
        })
    }

    pub fn task_id(&self) -> &'a str {
        self.task_id
    }

    pub fn next_batch(&mut self) -> Batch<'a> {
        loop {
            if let Some(batch) = self.pending.next() {
                return batch;
            }
            let epoch_seed = self
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(self.epoch);
            self.epoch += 1;
            self.pending = shuffled_batches(
                self.task_id,
                self.sentences.clone(),
                self.batch_size,
                epoch_seed,
            )
            .into_iter();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, form: &str, upos: &str, head: &str, deprel: &str) -> String {
        format!("{id}\t{form}\t_\t{upos}\t_\t_\t{head}\t{deprel}\t_\t_\n")
    }

    #[test]
    fn two_token_sentence() {
        let text = line("1", "Hi", "INTJ", "0", "root") + &line("2", "!", "PUNCT", "1", "punct");
        let tb = parse_conllu(&text, "xx", Split::Train).unwrap();
        assert_eq!(tb.sentences.len(), 1);
        let s = &tb.sentences[0];
        let forms: Vec<_> = s.tokens.iter().map(|t| t.form.as_str()).collect();
        assert_eq!(forms, ["Hi", "!"]);
        assert_eq!(s.heads(), [0, 1]);
    }

    #[test]
    fn multiword_ranges_and_empty_nodes_skipped() {
        let text = "# sent_id = s1\n".to_string()
            + &line("1-2", "del", "_", "_", "_")
            + &line("1", "de", "ADP", "2", "case")
            + &line("2", "el", "DET", "0", "root")
            + &line("2.1", "x", "X", "_", "_");
        let tb = parse_conllu(&text, "es", Split::Test).unwrap();
        assert_eq!(tb.sentences[0].len(), 2);
        assert_eq!(tb.sentences[0].sent_id.as_deref(), Some("s1"));
    }

    #[test]
    fn empty_input() {
        let tb = parse_conllu("", "xx", Split::Dev).unwrap();
        assert!(tb.is_empty());
    }

    #[test]
    fn subtypes_truncated() {
        let text =
            line("1", "it", "PRON", "2", "nsubj:pass") + &line("2", "went", "VERB", "0", "root");
        let tb = parse_conllu(&text, "en", Split::Train).unwrap();
        assert_eq!(tb.sentences[0].tokens[0].deprel, "nsubj");
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = "# c\n1\tHi\tINTJ\n";
        match parse_conllu(text, "xx", Split::Train) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_head() {
        let text = line("1", "Hi", "INTJ", "x", "root");
        assert!(matches!(
            parse_conllu(&text, "xx", Split::Train),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn cycle_is_validation_error() {
        let text = "# sent_id = bad\n".to_string()
            + &line("1", "a", "X", "2", "dep")
            + &line("2", "b", "X", "1", "dep");
        match parse_conllu(&text, "xx", Split::Train) {
            Err(Error::InvalidTree { sentence, .. }) => assert_eq!(sentence, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_head() {
        let text = line("1", "a", "X", "3", "dep");
        assert!(matches!(
            parse_conllu(&text, "xx", Split::Train),
            Err(Error::InvalidTree { .. })
        ));
    }

    #[test]
    fn tree_check() {
        assert!(check_tree(&[0]).is_ok());
        assert!(check_tree(&[2, 0, 2]).is_ok());
        assert!(check_tree(&[1]).is_err());
        assert!(check_tree(&[2, 3, 1]).is_err());
        assert!(check_tree(&[0, 3, 2]).is_err());
    }

    fn treebank_from_words(words: &[&[&str]]) -> Treebank {
        let sentences = words
            .iter()
            .map(|ws| Sentence {
                tokens: ws
                    .iter()
                    .enumerate()
                    .map(|(i, w)| Token {
                        form: w.to_string(),
                        upos: "X".into(),
                        head: i, // chain rooted at token 1
                        deprel: if i == 0 { "root".into() } else { "dep".into() },
                    })
                    .collect(),
                sent_id: None,
            })
            .collect();
        Treebank {
            task_id: "t".into(),
            sentences,
            split: Split::Train,
        }
    }

    #[test]
    fn vocab_sizes_and_unk() {
        let tb = treebank_from_words(&[&["a", "b", "A"]]);
        let vocab = build_vocab(&[tb]).unwrap();
        assert_eq!(vocab.n_words(), 2 + 2);
        assert_eq!(vocab.word_id("zzz"), UNK_ID);
        assert_eq!(vocab.word_id("a"), vocab.word_id("A"));
        assert_ne!(vocab.word_id("a"), UNK_ID);
        assert_eq!(vocab.word_to_id[PAD], PAD_ID);
    }

    #[test]
    fn deprel_inventory() {
        let text = line("1", "x", "X", "0", "root")
            + "\n"
            + &line("1", "he", "PRON", "2", "nsubj")
            + &line("2", "ate", "VERB", "0", "root")
            + &line("3", "it", "PRON", "2", "obj");
        let tb = parse_conllu(&text, "en", Split::Train).unwrap();
        let mut only = tb.clone();
        only.sentences.remove(0);
        let vocab = build_vocab(&[only]).unwrap();
        assert_eq!(vocab.n_labels(), 3);
        let mut two = Treebank {
            sentences: vec![tb.sentences[1].clone()],
            ..tb
        };
        two.sentences[0].tokens.retain(|t| t.deprel != "root");
        let vocab = build_vocab(&[two]).unwrap();
        assert_eq!(vocab.n_labels(), 2);
        assert_eq!(vocab.labels(), ["nsubj", "obj"]);
    }

    #[test]
    fn vocab_needs_treebanks() {
        assert!(build_vocab(&[]).is_err());
    }

    #[test]
    fn batch_partition_sizes() {
        let words: Vec<Vec<String>> = (0..10).map(|i| vec![format!("w{i}")]).collect();
        let refs: Vec<Vec<&str>> = words
            .iter()
            .map(|w| w.iter().map(|s| s.as_str()).collect())
            .collect();
        let slices: Vec<&[&str]> = refs.iter().map(|v| v.as_slice()).collect();
        let tb = treebank_from_words(&slices);

        let batches = make_batches(&tb, 4, 3).unwrap();
        let sizes: Vec<_> = batches.iter().map(|b| b.sentences.len()).collect();
        assert_eq!(sizes, [4, 4, 2]);
        assert_eq!(batches, make_batches(&tb, 4, 3).unwrap());
        assert_eq!(make_batches(&tb, 10, 3).unwrap().len(), 1);
        assert_eq!(make_batches(&tb, 25, 3).unwrap()[0].sentences.len(), 10);
        assert!(make_batches(&tb, 0, 3).is_err());

        let mut seen: Vec<&str> = batches
            .iter()
            .flat_map(|b| b.sentences.iter().map(|s| s.tokens[0].form.as_str()))
            .collect();
        seen.sort();
        let mut expected: Vec<&str> = tb
            .sentences
            .iter()
            .map(|s| s.tokens[0].form.as_str())
            .collect();
        expected.sort();
        assert_eq!(seen, expected);
    }

    #[test]
    fn stream_skips_long_sentences_and_cycles() {
        let tb = treebank_from_words(&[&["a"], &["b", "c", "d"], &["e"]]);
        let mut stream = BatchStream::new(&tb, 1, 2, 9).unwrap();
        for _ in 0..10 {
            let b = stream.next_batch();
            assert_eq!(b.sentences.len(), 1);
            assert_eq!(b.sentences[0].len(), 1);
        }
        assert!(BatchStream::new(&tb, 1, 0, 9).is_err());
    }
}
