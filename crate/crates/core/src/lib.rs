//! Decoding and rescoring for CTC speech recognizers.
//!
//! The crate covers everything downstream of an acoustic model that emits
//! per-frame symbol probabilities:
//!
//! * [`ngram`]: Kneser-Ney n-gram language models with ARPA I/O,
//! * [`trie`]: the vocabulary prefix trie that keeps decoding in-vocabulary,
//! * [`decoder`]: greedy decoding and CTC prefix beam search with shallow
//!   fusion, producing N-best lists,
//! * [`rescore`]: N-best reranking against an external scorer and oracle
//!   selection,
//! * [`scorer`]: the line-oriented scorer protocol, a built-in n-gram scorer
//!   and pairwise evaluation,
//! * [`taskgen`]: fine-tuning data for conversational next-utterance
//!   prediction and hypothesis disambiguation,
//! * [`tuning`]: random search over fusion weights and the interpolation
//!   weight grid,
//! * [`metrics`]: total WER/CER, WER recovery rate and length bins,
//! * [`corpus`]: conversations, splits, logit matrices and a synthetic corpus.

pub mod corpus;
pub mod decoder;
pub mod fmt;
pub mod metrics;
pub mod ngram;
pub mod rescore;
pub mod scorer;
pub mod taskgen;
pub mod trie;
pub mod tuning;

#[cfg(doctest)]
mod book;
