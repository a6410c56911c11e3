//! Back-off n-gram language model with interpolated Kneser-Ney estimation.
//!
//! Probabilities are stored as log10 values (the ARPA convention) rounded to
//! 7 significant digits, so a model survives an ARPA round trip unchanged.

mod arpa;
mod train;

pub use arpa::{load_arpa, read_arpa, save_arpa, write_arpa};
pub use train::{train, train_with, Discounting, PruneConfig};

use std::collections::HashMap;

use thiserror::Error;

pub type WordId = u32;

pub const UNK: WordId = 0;
pub const BOS: WordId = 1;
pub const EOS: WordId = 2;

pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

/// Largest supported order.
pub const MAX_ORDER: usize = 6;

/// log10 probability assigned to `<s>` as a predicted word.
pub const BOS_LOG_PROB: f64 = -99.0;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("training corpus has no non-empty sentence")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("reserved token {0:?} in training text")]
    ReservedToken(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub log_prob: f64,
    /// log10 back-off weight; 0 for the highest order.
    pub backoff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    order: usize,
    words: Vec<String>,
    ids: HashMap<String, WordId>,
    /// `tables[m - 1]` holds the n-grams of order `m`.
    tables: Vec<HashMap<Box<[WordId]>, Entry>>,
}

impl NGramModel {
    pub(crate) fn from_parts(order: usize, words: Vec<String>, tables: Vec<HashMap<Box<[WordId]>, Entry>>) -> Self {
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as WordId))
            .collect();
        NGramModel {
            order,
            words,
            ids,
            tables,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of n-grams stored at order `m` (1-based).
    pub fn count(&self, m: usize) -> usize {
        self.tables.get(m - 1).map_or(0, HashMap::len)
    }

    /// Vocabulary size including `<unk>`, `<s>` and `</s>`.
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    /// Every word in id order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    /// Id of `word`, [`UNK`] when out of vocabulary.
    pub fn word_id(&self, word: &str) -> WordId {
        self.ids.get(word).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.ids.contains_key(word)
    }

    pub fn entry(&self, ngram: &[WordId]) -> Option<&Entry> {
        self.tables.get(ngram.len().checked_sub(1)?)?.get(ngram)
    }

    pub(crate) fn tables(&self) -> &[HashMap<Box<[WordId]>, Entry>] {
        &self.tables
    }

    /// log10 P(word | history). Only the last `order - 1` history words are
    /// used; missing n-grams back off to shorter contexts.
    pub fn log_prob_ids(&self, history: &[WordId], word: WordId) -> f64 {
        let keep = history.len().min(self.order - 1);
        let h = &history[history.len() - keep..];
        let mut key = [0 as WordId; MAX_ORDER];
        let mut backoff = 0.0;
        for m in (0..=h.len()).rev() {
            let ctx = &h[h.len() - m..];
            key[..m].copy_from_slice(ctx);
            key[m] = word;
            if let Some(e) = self.tables[m].get(&key[..=m]) {
                return e.log_prob + backoff;
            }
            if m > 0 {
                if let Some(c) = self.tables[m - 1].get(ctx) {
                    backoff += c.backoff;
                }
            }
        }
        // Words outside the unigram table score as <unk>.
        self.tables[0][&[UNK][..]].log_prob + backoff
    }

    pub fn log_prob(&self, word: &str, history: &[&str]) -> f64 {
        let h: Vec<WordId> = history.iter().map(|w| self.word_id(w)).collect();
        self.log_prob_ids(&h, self.word_id(word))
    }

    /// log10 probability of a whole sentence: every word plus `</s>`,
    /// starting from `<s>`.
    pub fn sentence_log_prob_ids(&self, sentence: &[WordId]) -> f64 {
        let mut history = Vec::with_capacity(sentence.len() + 1);
        history.push(BOS);
        let mut total = 0.0;
        for &w in sentence {
            total += self.log_prob_ids(&history, w);
            history.push(w);
        }
        total + self.log_prob_ids(&history, EOS)
    }

    pub fn sentence_log_prob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let ids: Vec<WordId> = sentence.iter().map(|w| self.word_id(w.as_ref())).collect();
        self.sentence_log_prob_ids(&ids)
    }

    /// Ids of every word the model can predict: the vocabulary without `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = WordId> + '_ {
        (0..self.words.len() as WordId).filter(|&w| w != BOS)
    }

    /// Σ_w P(w | history) over the predictable vocabulary.
    pub fn conditional_mass(&self, history: &[WordId]) -> f64 {
        self.predictable()
            .map(|w| 10f64.powf(self.log_prob_ids(history, w)))
            .sum()
    }

    /// Every stored context (n-grams of orders below the maximum, and the
    /// empty context), as histories for [`Self::conditional_mass`].
    pub fn contexts(&self) -> Vec<Vec<WordId>> {
        let mut out = vec![Vec::new()];
        for table in &self.tables[..self.order - 1] {
            let mut keys: Vec<Vec<WordId>> = table.keys().map(|k| k.to_vec()).collect();
            keys.sort();
            out.extend(keys);
        }
        out
    }
}
