//! The boundary to secondary language models.
//!
//! A scorer receives a [`ScoreRequest`] (a mode, the conversational context
//! and a list of candidate transcripts) and returns one natural-log score
//! per candidate. On the wire both are single-line JSON objects:
//!
//! ```text
//! {"request_id":7,"mode":"mlm_pll","context":["hello","hi there"],"candidates":["how are you","who are you"]}
//! {"request_id":7,"scores":[-12.3456789,-15.0023417]}
//! ```
//!
//! A failed request is answered with `{"request_id":7,"error":"..."}`.
//! Scores carry 9 significant digits. Responses may arrive out of order and
//! are matched by `request_id`.

mod cache;
pub mod mock;
mod pairwise;
mod transport;

pub use cache::{CachedScorer, RecordingScorer, ReplayScorer};
pub use pairwise::{evaluate_pairwise, PairwiseEvalResult};
pub use transport::{serve_lines, Endpoint, LineScorer};

use std::collections::HashMap;
use std::f64::consts::LN_10;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::decoder::NBestList;
use crate::ngram::NGramModel;
use crate::rescore::unique_texts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerMode {
    /// Masked-LM pseudo-log-likelihood.
    MlmPll,
    /// Next-sentence-prediction head given the context.
    Nsp,
    /// Sequence-classification head given the context.
    Classifier,
}

impl ScorerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerMode::MlmPll => "mlm_pll",
            ScorerMode::Nsp => "nsp",
            ScorerMode::Classifier => "classifier",
        }
    }
}

impl fmt::Display for ScorerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlm_pll" => Ok(ScorerMode::MlmPll),
            "nsp" => Ok(ScorerMode::Nsp),
            "classifier" => Ok(ScorerMode::Classifier),
            other => Err(format!("unknown scorer mode {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub request_id: u64,
    pub mode: ScorerMode,
    #[serde(default)]
    pub context: Vec<String>,
    pub candidates: Vec<String>,
}

fn nine_digits<S: Serializer>(scores: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(scores.iter().map(|&x| crate::fmt::round_sig(x, 9)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub request_id: u64,
    #[serde(serialize_with = "nine_digits", default)]
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoreResponse {
    pub fn ok(request_id: u64, scores: Vec<f64>) -> Self {
        ScoreResponse {
            request_id,
            scores,
            error: None,
        }
    }

    /// Checks the response against its request.
    pub fn validate(&self, request: &ScoreRequest) -> Result<(), ScorerError> {
        let id = request.request_id;
        if self.request_id != id {
            return Err(ScorerError::Protocol(format!(
                "response id {} for request {id}",
                self.request_id
            )));
        }
        if let Some(e) = &self.error {
            return Err(ScorerError::Remote {
                request_id: id,
                message: e.clone(),
            });
        }
        if self.scores.len() != request.candidates.len() {
            return Err(ScorerError::Misaligned {
                request_id: id,
                expected: request.candidates.len(),
                got: self.scores.len(),
            });
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(ScorerError::NonFinite { request_id: id });
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("request {request_id}: transport failure: {message}")]
    Transport { request_id: u64, message: String },
    #[error("request {request_id}: timed out")]
    Timeout { request_id: u64 },
    #[error("request {request_id}: expected {expected} scores, got {got}")]
    Misaligned {
        request_id: u64,
        expected: usize,
        got: usize,
    },
    #[error("request {request_id}: non-finite score")]
    NonFinite { request_id: u64 },
    #[error("request {request_id}: scorer reported: {message}")]
    Remote { request_id: u64, message: String },
    #[error("request has no candidates")]
    EmptyRequest,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("empty token list")]
    EmptyTokens,
    #[error("token log-probability {0} is not in (-inf, 0]")]
    BadLogProb(f64),
}

pub trait Scorer: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError>;

    /// Scores several requests. Transports override this to keep several
    /// requests in flight.
    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        requests.iter().map(|r| self.score(r)).collect()
    }
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (**self).score(request)
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        (**self).score_batch(requests)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (**self).score(request)
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        (**self).score_batch(requests)
    }
}

/// Pseudo-log-likelihood of a sentence: the sum of the log-probabilities of
/// each token with that position masked.
pub fn mlm_pll_aggregate(token_log_probs: &[f64]) -> Result<f64, ScorerError> {
    if token_log_probs.is_empty() {
        return Err(ScorerError::EmptyTokens);
    }
    let mut total = 0.0;
    for &lp in token_log_probs {
        if lp.is_nan() || lp > 0.0 || lp == f64::NEG_INFINITY {
            return Err(ScorerError::BadLogProb(lp));
        }
        total += lp;
    }
    Ok(total)
}

/// Scores candidates with an n-gram model: the natural-log sentence
/// probability, ignoring the context.
#[derive(Clone, Debug)]
pub struct NgramScorer {
    model: Arc<NGramModel>,
}

impl NgramScorer {
    pub fn new(model: Arc<NGramModel>) -> Self {
        NgramScorer { model }
    }

    pub fn score_text(&self, text: &str) -> f64 {
        let words = crate::corpus::tokenize(text);
        LN_10 * self.model.sentence_log_prob(&words)
    }
}

impl Scorer for NgramScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        if request.candidates.is_empty() {
            return Err(ScorerError::EmptyRequest);
        }
        Ok(ScoreResponse::ok(
            request.request_id,
            request.candidates.iter().map(|c| self.score_text(c)).collect(),
        ))
    }
}

/// One request per N-best list (distinct texts only), paired with each
/// list's context.
pub fn nbest_requests(items: &[(&NBestList, Vec<String>)], mode: ScorerMode, first_id: u64) -> Vec<ScoreRequest> {
    items
        .iter()
        .enumerate()
        .map(|(i, (nb, ctx))| ScoreRequest {
            request_id: first_id + i as u64,
            mode,
            context: ctx.clone(),
            candidates: unique_texts(nb),
        })
        .collect()
}

/// Scores every list and returns per-list maps from candidate text to score.
pub fn score_nbest_lists<S: Scorer + ?Sized>(
    scorer: &S,
    items: &[(&NBestList, Vec<String>)],
    mode: ScorerMode,
) -> Result<Vec<HashMap<String, f64>>, ScorerError> {
    let requests: Vec<ScoreRequest> = nbest_requests(items, mode, 0)
        .into_iter()
        .filter(|r| !r.candidates.is_empty())
        .collect();
    let responses = scorer.score_batch(&requests)?;
    let mut by_id: HashMap<u64, HashMap<String, f64>> = HashMap::new();
    for (req, resp) in requests.iter().zip(&responses) {
        resp.validate(req)?;
        by_id.insert(
            req.request_id,
            req.candidates
                .iter()
                .cloned()
                .zip(resp.scores.iter().copied())
                .collect(),
        );
    }
    Ok((0..items.len() as u64)
        .map(|i| by_id.remove(&i).unwrap_or_default())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{train, PruneConfig};

    #[test]
    fn pll_aggregation() {
        let half = 0.5f64.ln();
        assert!((mlm_pll_aggregate(&[half, half]).unwrap() - 0.25f64.ln()).abs() < 1e-12);
        assert_eq!(mlm_pll_aggregate(&[-0.7]).unwrap(), -0.7);
        assert_eq!(mlm_pll_aggregate(&[]), Err(ScorerError::EmptyTokens));
        assert!(mlm_pll_aggregate(&[0.1]).is_err());
        assert!(mlm_pll_aggregate(&[f64::NAN]).is_err());
    }

    #[test]
    fn wire_format() {
        let req = ScoreRequest {
            request_id: 3,
            mode: ScorerMode::MlmPll,
            context: vec!["a b".into()],
            candidates: vec!["c".into()],
        };
        let line = serde_json::to_string(&req).unwrap();
        assert_eq!(
            line,
            r#"{"request_id":3,"mode":"mlm_pll","context":["a b"],"candidates":["c"]}"#
        );
        let resp = ScoreResponse::ok(3, vec![-1.234567891234]);
        let line = serde_json::to_string(&resp).unwrap();
        assert_eq!(line, r#"{"request_id":3,"scores":[-1.23456789]}"#);
        let back: ScoreResponse = serde_json::from_str(&line).unwrap();
        back.validate(&req).unwrap();
        let err: ScoreResponse = serde_json::from_str(r#"{"request_id":3,"error":"boom"}"#).unwrap();
        assert!(matches!(
            err.validate(&req),
            Err(ScorerError::Remote { request_id: 3, .. })
        ));
        let short = ScoreResponse::ok(3, vec![]);
        assert!(matches!(short.validate(&req), Err(ScorerError::Misaligned { .. })));
    }

    #[test]
    fn ngram_scorer_delegates() {
        let lm = Arc::new(
            train(
                &[crate::corpus::tokenize("a b"), crate::corpus::tokenize("b a")],
                2,
                &PruneConfig::none(2),
            )
            .unwrap(),
        );
        let s = NgramScorer::new(lm.clone());
        let req = ScoreRequest {
            request_id: 1,
            mode: ScorerMode::MlmPll,
            context: vec![],
            candidates: vec!["a b".into(), "a b".into()],
        };
        let resp = s.score(&req).unwrap();
        assert_eq!(resp.scores[0], LN_10 * lm.sentence_log_prob(&["a", "b"]));
        assert_eq!(resp.scores[0], resp.scores[1]);
    }
}
