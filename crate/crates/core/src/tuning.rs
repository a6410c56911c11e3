//! Hyperparameter search: random search over the fusion weights, then a
//! grid over the rescoring interpolation weight.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LogitMatrix;
use crate::decoder::{BeamConfig, BeamDecoder, NBestList};
use crate::metrics::word_edit_distance;
use crate::rescore::{oracle_select, standardized, top_candidate, RescoreError};

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error("invalid range [{lo}, {hi}] for {name}")]
    Range { name: &'static str, lo: f64, hi: f64 },
    #[error("every trial failed; first error: {0}")]
    AllFailed(String),
    #[error("evaluation set has no reference words")]
    ZeroReference,
    #[error(transparent)]
    Rescore(#[from] RescoreError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamObjective {
    /// Total edits of the top beam candidate.
    #[default]
    Top1Wed,
    /// Total edits of the oracle candidate.
    OracleWed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub params: BTreeMap<String, f64>,
    /// `None` when the trial failed.
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best_params: BTreeMap<String, f64>,
    pub best_objective: f64,
    pub trials: Vec<Trial>,
    pub seed: u64,
    pub failed: usize,
}

impl TuneResult {
    fn from_trials(trials: Vec<Trial>, seed: u64, first_error: Option<String>) -> Result<Self, TuneError> {
        let failed = trials.iter().filter(|t| t.objective.is_none()).count();
        // First strict minimum, so ties keep the earlier trial.
        let best = trials
            .iter()
            .filter_map(|t| Some((t, t.objective?)))
            .fold(None::<(&Trial, f64)>, |acc, (t, o)| match acc {
                Some((_, b)) if b <= o => acc,
                _ => Some((t, o)),
            })
            .ok_or_else(|| TuneError::AllFailed(first_error.unwrap_or_default()))?;
        Ok(TuneResult {
            best_params: best.0.params.clone(),
            best_objective: best.1,
            seed,
            failed,
            trials,
        })
    }

    /// One row per trial; failed trials have an empty objective.
    pub fn write_trials_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&String> = self.best_params.keys().collect();
        let header: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        writeln!(w, "trial,{},objective", header.join(","))?;
        for (i, t) in self.trials.iter().enumerate() {
            let vals: Vec<String> = names.iter().map(|n| t.params[*n].to_string()).collect();
            let obj = t.objective.map(|o| o.to_string()).unwrap_or_default();
            writeln!(w, "{i},{},{obj}", vals.join(","))?;
        }
        Ok(())
    }
}

/// Inclusive sampling ranges for the fusion weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamRanges {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl Default for BeamRanges {
    fn default() -> Self {
        BeamRanges {
            alpha: (0.0, 5.0),
            beta: (0.0, 5.0),
        }
    }
}

fn check_range(name: &'static str, (lo, hi): (f64, f64)) -> Result<(), TuneError> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(TuneError::Range { name, lo, hi })
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Objective of one `(alpha, beta)` setting: total edits of the selected
/// candidate over the evaluation set, decoding with `base` otherwise.
pub fn beam_objective(
    eval: &[(LogitMatrix, Vec<String>)],
    base: &BeamConfig,
    alpha: f64,
    beta: f64,
    objective: BeamObjective,
) -> Result<f64, String> {
    let decoder = BeamDecoder::new(BeamConfig {
        alpha,
        beta,
        ..base.clone()
    })
    .map_err(|e| e.to_string())?;
    let mut total = 0usize;
    for (z, reference) in eval {
        let nb = decoder.decode(z).map_err(|e| e.to_string())?;
        let pick = match objective {
            BeamObjective::Top1Wed => top_candidate(&nb),
            BeamObjective::OracleWed => oracle_select(&nb, reference),
        }
        .map_err(|e| e.to_string())?;
        total += word_edit_distance(&pick.text, reference);
    }
    Ok(total as f64)
}

/// Uniform random search over `(alpha, beta)`. All trial points are drawn
/// from the seed before any is evaluated; evaluation runs in parallel.
/// Failed trials are kept in the record but excluded from the argmin.
pub fn random_search_beam(
    eval: &[(LogitMatrix, Vec<String>)],
    base: &BeamConfig,
    objective: BeamObjective,
    trials: usize,
    ranges: BeamRanges,
    seed: u64,
) -> Result<TuneResult, TuneError> {
    if trials == 0 {
        return Err(TuneError::NoTrials);
    }
    check_range("alpha", ranges.alpha)?;
    check_range("beta", ranges.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(f64, f64)> = (0..trials)
        .map(|_| {
            let a = draw(&mut rng, ranges.alpha);
            let b = draw(&mut rng, ranges.beta);
            (a, b)
        })
        .collect();
    let outcomes: Vec<Result<f64, String>> = points
        .par_iter()
        .map(|&(a, b)| beam_objective(eval, base, a, b, objective))
        .collect();
    let first_error = outcomes.iter().find_map(|o| o.clone().err());
    let trials = points
        .iter()
        .zip(outcomes)
        .map(|(&(a, b), o)| Trial {
            params: BTreeMap::from([("alpha".to_string(), a), ("beta".to_string(), b)]),
            objective: o.ok(),
        })
        .collect();
    TuneResult::from_trials(trials, seed, first_error)
}

/// An N-best list prepared for fast reranking at many weights.
struct Prepared {
    bs: Vec<f64>,
    sc: Vec<f64>,
    rank: Vec<usize>,
    wed: Vec<usize>,
}

impl Prepared {
    fn new(nbest: &NBestList, reference: &[String], standardize: bool) -> Result<Self, RescoreError> {
        let raw = nbest
            .candidates
            .iter()
            .map(|c| {
                c.rescorer_score.ok_or_else(|| RescoreError::MissingScore {
                    utterance_id: nbest.utterance_id.clone(),
                    text: c.text_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let bs: Vec<f64> = nbest.candidates.iter().map(|c| c.log_bs).collect();
        if let Some(i) = raw.iter().position(|s| !s.is_finite()) {
            return Err(RescoreError::NonFinite(nbest.candidates[i].text_string()));
        }
        let (bs, sc) = if standardize && !raw.is_empty() {
            (standardized(&bs), standardized(&raw))
        } else {
            (bs, raw)
        };
        Ok(Prepared {
            bs,
            sc,
            rank: nbest.candidates.iter().map(|c| c.rank).collect(),
            wed: nbest
                .candidates
                .iter()
                .map(|c| word_edit_distance(&c.text, reference))
                .collect(),
        })
    }

    /// Edits of the top candidate at `gamma`, with the same arithmetic and
    /// tie-break as [`crate::rescore::interpolate`].
    fn top_wed(&self, gamma: f64) -> usize {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..self.bs.len() {
            let s = (1.0 - gamma) * self.bs[i] + gamma * self.sc[i];
            let better = match best {
                None => true,
                Some((bs, br, _)) => s > bs || (s == bs && self.rank[i] < br),
            };
            if better {
                best = Some((s, self.rank[i], i));
            }
        }
        best.map(|(_, _, i)| self.wed[i]).unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaSearch {
    pub result: TuneResult,
    /// `(gamma, total WER)` for every grid point, in order.
    pub curve: Vec<(f64, f64)>,
}

impl GammaSearch {
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "gamma,wer")?;
        for (g, wer) in &self.curve {
            writeln!(w, "{g:.3},{wer}")?;
        }
        Ok(())
    }
}

/// Number of points of the grid `lo, lo + step, ..., hi`.
pub fn grid_points(lo: f64, hi: f64, step: f64) -> usize {
    ((hi - lo) / step).round() as usize + 1
}

/// Grid search for the interpolation weight over `[lo, hi]`. The objective
/// is the total WER of the reranked top candidates; ties go to the smaller
/// weight. Every candidate must carry a rescorer score.
pub fn grid_search_gamma(
    lists: &[(NBestList, Vec<String>)],
    (lo, hi): (f64, f64),
    step: f64,
    standardize: bool,
) -> Result<GammaSearch, TuneError> {
    check_range("gamma", (lo, hi))?;
    if step.is_nan() || step <= 0.0 || lo < 0.0 || hi > 1.0 {
        return Err(TuneError::Range { name: "gamma", lo, hi });
    }
    let words: usize = lists.iter().map(|(_, r)| r.len()).sum();
    if words == 0 {
        return Err(TuneError::ZeroReference);
    }
    let prepared = lists
        .iter()
        .map(|(nb, r)| Prepared::new(nb, r, standardize))
        .collect::<Result<Vec<_>, _>>()?;
    let n = grid_points(lo, hi, step);
    let curve: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let gamma = (lo + i as f64 * step).min(hi);
            let edits: usize = prepared.iter().map(|p| p.top_wed(gamma)).sum();
            (gamma, edits as f64 / words as f64)
        })
        .collect();
    let trials = curve
        .iter()
        .map(|&(g, wer)| Trial {
            params: BTreeMap::from([("gamma".to_string(), g)]),
            objective: Some(wer),
        })
        .collect();
    Ok(GammaSearch {
        result: TuneResult::from_trials(trials, 0, None)?,
        curve,
    })
}
