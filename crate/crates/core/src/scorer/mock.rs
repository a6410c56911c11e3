//! Scorers with known behaviour, for tests and dry runs.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::{mlm_pll_aggregate, ScoreRequest, ScoreResponse, Scorer, ScorerError};

/// Returns the same score for every candidate.
#[derive(Clone, Debug)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        Ok(ScoreResponse::ok(
            request.request_id,
            vec![self.0; request.candidates.len()],
        ))
    }
}

/// Scores each candidate with a closure of `(context, candidate)`.
pub struct FnScorer<F>(pub F);

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&[String], &str) -> f64 + Send + Sync,
{
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        Ok(ScoreResponse::ok(
            request.request_id,
            request
                .candidates
                .iter()
                .map(|c| (self.0)(&request.context, c))
                .collect(),
        ))
    }
}

/// Pseudo-random scores in `(-10, 0)` drawn independently for every
/// `(request_id, position)`; deterministic for a seed.
#[derive(Clone, Debug)]
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let scores = (0..request.candidates.len())
            .map(|i| {
                let mut h = DefaultHasher::new();
                (self.seed, request.request_id, i).hash(&mut h);
                -10.0 * ((h.finish() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
            })
            .collect();
        Ok(ScoreResponse::ok(request.request_id, scores))
    }
}

/// A masked LM that predicts every masked position uniformly over
/// `vocab_size` tokens, one token per word.
#[derive(Clone, Debug)]
pub struct UniformMlmScorer {
    pub vocab_size: usize,
}

impl Scorer for UniformMlmScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let per_token = -(self.vocab_size as f64).ln();
        let scores = request
            .candidates
            .iter()
            .map(|c| {
                let n = c.split_whitespace().count();
                let lps = vec![per_token; n];
                if lps.is_empty() {
                    Ok(0.0)
                } else {
                    mlm_pll_aggregate(&lps)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScoreResponse::ok(request.request_id, scores))
    }
}
