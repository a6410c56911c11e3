//! N-best reranking and oracle selection.
//!
//! Rescoring interpolates the fused beam score with a secondary scorer's
//! log-probability, `(1 - gamma) * log_bs + gamma * score`, and re-sorts.
//! With `gamma = 0` the beam order is reproduced exactly.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::decoder::{Candidate, NBestList};
use crate::metrics::word_edit_distance;
use crate::scorer::ScorerMode;

#[derive(Debug, Error, PartialEq)]
pub enum RescoreError {
    #[error("N-best list {0:?} is empty")]
    Empty(String),
    #[error("no score for candidate {text:?} of {utterance_id}")]
    MissingScore { utterance_id: String, text: String },
    #[error("interpolation weight {0} outside [0, 1]")]
    Gamma(f64),
    #[error("score for {0:?} is not finite")]
    NonFinite(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RescoreConfig {
    /// Interpolation weight, searched over `[0, 0.5]`.
    pub gamma: f64,
    pub scorer_mode: ScorerMode,
    /// Standardize both interpolands to zero mean and unit variance within
    /// each N-best list before mixing.
    pub standardize: bool,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        RescoreConfig {
            gamma: 0.0,
            scorer_mode: ScorerMode::MlmPll,
            standardize: false,
        }
    }
}

/// Candidate with the highest fused beam score; ties go to the lower rank.
pub fn top_candidate(nbest: &NBestList) -> Result<&Candidate, RescoreError> {
    nbest
        .candidates
        .iter()
        .min_by(|a, b| b.log_bs.total_cmp(&a.log_bs).then(a.rank.cmp(&b.rank)))
        .ok_or_else(|| RescoreError::Empty(nbest.utterance_id.clone()))
}

/// Candidate closest to `reference` in word edit distance. Ties go to the
/// higher beam score, then the lower rank.
pub fn oracle_select<'a>(nbest: &'a NBestList, reference: &[String]) -> Result<&'a Candidate, RescoreError> {
    nbest
        .candidates
        .iter()
        .map(|c| (word_edit_distance(&c.text, reference), c))
        .min_by(|(da, a), (db, b)| da.cmp(db).then(b.log_bs.total_cmp(&a.log_bs)).then(a.rank.cmp(&b.rank)))
        .map(|(_, c)| c)
        .ok_or_else(|| RescoreError::Empty(nbest.utterance_id.clone()))
}

/// Distinct candidate texts in list order.
pub fn unique_texts(nbest: &NBestList) -> Vec<String> {
    let mut seen = HashSet::new();
    nbest
        .candidates
        .iter()
        .map(Candidate::text_string)
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

pub(crate) fn standardized(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    values
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect()
}

/// Reranks `nbest` by `(1 - gamma) * log_bs + gamma * score`, where
/// `scores` maps candidate text (words joined by single spaces) to the
/// scorer's log-probability. Ties keep the original rank order. Every
/// candidate carries its scorer score and interpolated score afterwards.
pub fn interpolate(
    nbest: &NBestList,
    scores: &HashMap<String, f64>,
    gamma: f64,
    standardize: bool,
) -> Result<NBestList, RescoreError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(RescoreError::Gamma(gamma));
    }
    let mut raw = Vec::with_capacity(nbest.len());
    for c in &nbest.candidates {
        let text = c.text_string();
        let s = *scores.get(&text).ok_or_else(|| RescoreError::MissingScore {
            utterance_id: nbest.utterance_id.clone(),
            text: text.clone(),
        })?;
        if !s.is_finite() {
            return Err(RescoreError::NonFinite(text));
        }
        raw.push(s);
    }
    let bs: Vec<f64> = nbest.candidates.iter().map(|c| c.log_bs).collect();
    let (bs_mix, sc_mix) = if standardize && !raw.is_empty() {
        (standardized(&bs), standardized(&raw))
    } else {
        (bs, raw.clone())
    };

    let mut candidates: Vec<Candidate> = nbest
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| Candidate {
            rescorer_score: Some(raw[i]),
            rescored: Some((1.0 - gamma) * bs_mix[i] + gamma * sc_mix[i]),
            ..c.clone()
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.rescored
            .unwrap()
            .total_cmp(&a.rescored.unwrap())
            .then(a.rank.cmp(&b.rank))
    });
    Ok(NBestList {
        utterance_id: nbest.utterance_id.clone(),
        candidates,
        pruned_mass: nbest.pruned_mass,
    })
}

/// Scores already attached to the candidates of a rescored or annotated
/// list, keyed by text.
pub fn attached_scores(nbest: &NBestList) -> Option<HashMap<String, f64>> {
    nbest
        .candidates
        .iter()
        .map(|c| Some((c.text_string(), c.rescorer_score?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn cand(text: &str, rank: usize, log_bs: f64) -> Candidate {
        Candidate {
            text: tokenize(text),
            log_am: log_bs,
            log_lm: 0.0,
            word_count: text.split_whitespace().count(),
            log_bs,
            rescorer_score: None,
            rescored: None,
            rank,
        }
    }

    fn list(c: Vec<Candidate>) -> NBestList {
        NBestList::new("u", c)
    }

    fn scores(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(t, s)| (t.to_string(), *s)).collect()
    }

    #[test]
    fn top_candidate_examples() {
        let one = list(vec![cand("a", 0, -3.0)]);
        assert_eq!(top_candidate(&one).unwrap().text, tokenize("a"));
        let two = list(vec![cand("a", 0, -1.0), cand("b", 1, -2.0)]);
        assert_eq!(top_candidate(&two).unwrap().rank, 0);
        let tie = list(vec![cand("b", 1, -1.0), cand("a", 0, -1.0)]);
        assert_eq!(top_candidate(&tie).unwrap().rank, 0);
        assert!(top_candidate(&list(vec![])).is_err());
    }

    #[test]
    fn oracle_examples() {
        let l = list(vec![cand("a c", 0, -1.0), cand("a b", 1, -2.0)]);
        assert_eq!(oracle_select(&l, &tokenize("a b")).unwrap().text_string(), "a b");
        // Equal distance: higher beam score wins.
        let l = list(vec![cand("x b", 1, -2.0), cand("a y", 0, -1.0)]);
        assert_eq!(oracle_select(&l, &tokenize("a b")).unwrap().text_string(), "a y");
        assert!(oracle_select(&list(vec![]), &[]).is_err());
    }

    #[test]
    fn hand_computed_interpolation() {
        let l = list(vec![cand("one", 0, -1.0), cand("two", 1, -2.0), cand("three", 2, -3.0)]);
        let s = scores(&[("one", -10.0), ("two", -1.0), ("three", -5.0)]);
        let r = interpolate(&l, &s, 0.5, false).unwrap();
        let order: Vec<usize> = r.candidates.iter().map(|c| c.rank).collect();
        assert_eq!(order, vec![1, 2, 0]);
        let fused: Vec<f64> = r.candidates.iter().map(|c| c.rescored.unwrap()).collect();
        assert_eq!(fused, vec![-1.5, -4.0, -5.5]);
        assert_eq!(r.candidates[0].rescorer_score, Some(-1.0));
        assert_eq!(r.candidates[0].log_bs, -2.0);
    }

    #[test]
    fn gamma_extremes() {
        let l = list(vec![cand("one", 0, -1.0), cand("two", 1, -2.0), cand("three", 2, -3.0)]);
        let s = scores(&[("one", -10.0), ("two", -1.0), ("three", -5.0)]);
        let r0 = interpolate(&l, &s, 0.0, false).unwrap();
        assert_eq!(r0.candidates.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![0, 1, 2]);
        let r1 = interpolate(&l, &s, 1.0, false).unwrap();
        assert_eq!(r1.candidates.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![1, 2, 0]);
        for standardize in [false, true] {
            let r = interpolate(&l, &s, 0.0, standardize).unwrap();
            assert_eq!(r.candidates[0].rank, 0);
        }
    }

    #[test]
    fn contract_errors() {
        let l = list(vec![cand("one", 0, -1.0), cand("two", 1, -2.0)]);
        let s = scores(&[("one", -1.0)]);
        assert!(matches!(
            interpolate(&l, &s, 0.1, false),
            Err(RescoreError::MissingScore { .. })
        ));
        let s = scores(&[("one", -1.0), ("two", -1.0)]);
        assert_eq!(interpolate(&l, &s, 1.5, false), Err(RescoreError::Gamma(1.5)));
        let s = scores(&[("one", -1.0), ("two", f64::NEG_INFINITY)]);
        assert!(matches!(
            interpolate(&l, &s, 0.1, false),
            Err(RescoreError::NonFinite(_))
        ));
    }

    #[test]
    fn duplicate_texts_dedupe() {
        let l = list(vec![cand("a", 0, -1.0), cand("b", 1, -1.5), cand("a", 2, -2.0)]);
        assert_eq!(unique_texts(&l), vec!["a", "b"]);
    }
}
