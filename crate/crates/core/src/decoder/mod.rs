//! Greedy CTC decoding and prefix beam search with shallow fusion.
//!
//! Scores live in the natural-log domain. A candidate's fused beam score is
//!
//! ```text
//! log_bs = log_am + alpha * log_lm + beta * word_count
//! ```
//!
//! where `log_am` is the summed probability of every alignment collapsing to
//! the candidate's symbol sequence and `log_lm` the n-gram log-probability of
//! its words (converted from log10).

mod beam;
mod nbest_io;

pub use beam::{beam_search, BeamDecoder};
pub use nbest_io::{read_nbest, write_nbest, NBestParseError};

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::LogitMatrix;
use crate::ngram::NGramModel;
use crate::trie::PrefixTrie;

/// Token standing for a space in character-level language models.
pub const SPACE_TOKEN: &str = "<space>";

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("beam is empty after frame {frame}")]
    EmptyBeam { frame: usize },
    #[error("invalid beam configuration: {0}")]
    Config(String),
}

/// When the language model and word-count bonus enter the fused score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BonusPoint {
    /// A word-level LM scores each word when a space closes it, and the last
    /// word plus `</s>` at the end of the utterance.
    #[default]
    WordBoundary,
    /// A character-level LM scores every non-blank symbol as it is emitted
    /// (spaces as [`SPACE_TOKEN`]) and `</s>` at the end. The word-count
    /// bonus still counts words.
    EveryCharacter,
}

#[derive(Clone, Debug)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Language-model weight.
    pub alpha: f64,
    /// Word-count bonus weight.
    pub beta: f64,
    pub lm: Option<Arc<NGramModel>>,
    pub trie: Option<Arc<PrefixTrie>>,
    pub bonus_point: BonusPoint,
    /// Prefixes whose acoustic mass falls more than this many nats below the
    /// best prefix of the same frame are dropped. `None` disables the floor.
    pub mass_floor: Option<f64>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 1024,
            alpha: 0.0,
            beta: 0.0,
            lm: None,
            trie: None,
            bonus_point: BonusPoint::WordBoundary,
            mass_floor: Some(30.0),
        }
    }
}

impl BeamConfig {
    pub fn with_width(beam_width: usize) -> Self {
        BeamConfig {
            beam_width,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_width == 0 {
            return Err(DecodeError::Config("beam width must be at least 1".into()));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(DecodeError::Config("alpha and beta must be finite".into()));
        }
        if self.lm.is_some() && self.trie.is_none() && self.bonus_point == BonusPoint::WordBoundary {
            return Err(DecodeError::Config(
                "a word-level language model needs a vocabulary trie".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub text: Vec<String>,
    /// Natural-log acoustic mass.
    pub log_am: f64,
    /// Natural-log language-model score (0 without an LM).
    pub log_lm: f64,
    pub word_count: usize,
    /// Fused beam score.
    pub log_bs: f64,
    /// Score from a secondary scorer, natural log.
    pub rescorer_score: Option<f64>,
    /// Interpolated score after rescoring.
    pub rescored: Option<f64>,
    /// Position in the original beam output, 0-based.
    pub rank: usize,
}

impl Candidate {
    pub fn text_string(&self) -> String {
        self.text.join(" ")
    }

    pub fn fused(&self, alpha: f64, beta: f64) -> f64 {
        fused_score(self.log_am, self.log_lm, self.word_count, alpha, beta)
    }
}

pub fn fused_score(log_am: f64, log_lm: f64, word_count: usize, alpha: f64, beta: f64) -> f64 {
    log_am + alpha * log_lm + beta * word_count as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct NBestList {
    pub utterance_id: String,
    pub candidates: Vec<Candidate>,
    /// Acoustic probability mass the search dropped (pruning, blocked
    /// extensions, unfinished words). Not persisted.
    pub pruned_mass: f64,
}

impl NBestList {
    pub fn new(utterance_id: impl Into<String>, candidates: Vec<Candidate>) -> Self {
        NBestList {
            utterance_id: utterance_id.into(),
            candidates,
            pruned_mass: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

/// Per-frame argmax, collapse repeats, drop blanks, split on spaces.
pub fn greedy_decode(z: &LogitMatrix) -> Vec<String> {
    let alphabet = z.alphabet();
    let mut text = String::new();
    let mut prev = None;
    for row in z.rows() {
        let mut best = 0;
        for (k, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = k;
            }
        }
        if prev != Some(best) {
            if let Some(ch) = alphabet.char_of(best) {
                text.push(ch);
            }
        }
        prev = Some(best);
    }
    crate::corpus::tokenize(&text)
}

/// Character tokens of a transcript for training a character-level LM used
/// with [`BonusPoint::EveryCharacter`].
pub fn char_tokens(words: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(SPACE_TOKEN.to_string());
        }
        out.extend(w.chars().map(String::from));
    }
    out
}

/// Decodes every matrix on the rayon pool. Output order follows utterance
/// id.
pub fn decode_all(decoder: &BeamDecoder, matrices: &[LogitMatrix]) -> Vec<Result<NBestList, DecodeError>> {
    let mut out: Vec<(String, Result<NBestList, DecodeError>)> = matrices
        .par_iter()
        .map(|z| (z.utterance_id.clone(), decoder.decode(z)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().map(|(_, r)| r).collect()
}
