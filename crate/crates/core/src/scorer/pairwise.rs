//! Pairwise accuracy of a scorer on balanced positive/negative pairs.

use super::{ScoreRequest, Scorer, ScorerError, ScorerMode};
use crate::taskgen::PairwiseSample;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseEvalResult {
    pub accuracy: f64,
    pub true_positive_rate: f64,
    pub true_negative_rate: f64,
    /// Presentations scored: two per pair.
    pub sample_count: usize,
    /// Presentations whose two scores were equal (counted as errors).
    pub ties: usize,
}

/// Presents every pair in both orientations, `[positive, negative]` and
/// `[negative, positive]`, as two-candidate requests. The prediction is the
/// higher-scored candidate. A correct prediction on the first orientation
/// is a true positive, on the second a true negative; ties are wrong in
/// both.
pub fn evaluate_pairwise<S: Scorer + ?Sized>(
    scorer: &S,
    samples: &[PairwiseSample],
    mode: ScorerMode,
) -> Result<PairwiseEvalResult, ScorerError> {
    let mut requests = Vec::with_capacity(2 * samples.len());
    for (i, s) in samples.iter().enumerate() {
        let pos_first = vec![s.positive.clone(), s.negative.clone()];
        let neg_first = vec![s.negative.clone(), s.positive.clone()];
        let (a, b) = if s.positive_first {
            (pos_first, neg_first)
        } else {
            (neg_first, pos_first)
        };
        for (j, candidates) in [a, b].into_iter().enumerate() {
            requests.push(ScoreRequest {
                request_id: (2 * i + j) as u64,
                mode,
                context: s.context.clone(),
                candidates,
            });
        }
    }
    let responses = scorer.score_batch(&requests)?;
    let (mut tp, mut fn_, mut tn, mut fp, mut ties) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (req, resp) in requests.iter().zip(&responses) {
        resp.validate(req)?;
        let sample = &samples[req.request_id as usize / 2];
        let positive_first = req.candidates[0] == sample.positive && req.candidates[1] == sample.negative;
        let (first, second) = (resp.scores[0], resp.scores[1]);
        if first == second {
            ties += 1;
        }
        match (positive_first, first > second, first < second) {
            (true, true, _) => tp += 1,
            (true, false, _) => fn_ += 1,
            (false, _, true) => tn += 1,
            (false, _, false) => fp += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    Ok(PairwiseEvalResult {
        accuracy: ratio(tp + tn, fp + fn_),
        true_positive_rate: ratio(tp, fn_),
        true_negative_rate: ratio(tn, fp),
        sample_count: requests.len(),
        ties,
    })
}
