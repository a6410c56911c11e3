//! Fine-tuning and evaluation data for secondary scorers.
//!
//! * Conversational next-sentence prediction: triplets of consecutive
//!   utterances, with negatives whose third utterance comes from another
//!   conversation of the same split.
//! * Disambiguation: the best transcript in an N-best list against
//!   candidates with strictly more word errors, under the ground-truth
//!   context of the utterance.
//! * Pairwise evaluation sets: one positive and one negative per list.
//!
//! Sampling is seeded; each group draws from its own ChaCha stream so the
//! output is independent of thread scheduling.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Conversation, Split};
use crate::decoder::NBestList;
use crate::metrics::word_edit_distance;
use crate::rescore::oracle_select;

#[derive(Debug, Error, PartialEq)]
pub enum TaskgenError {
    #[error("conversation {0} has no other conversation in its split to draw negatives from")]
    NoForeignConversation(String),
    #[error("negative ratio {0} outside [0, 1)")]
    Ratio(f64),
    #[error("requested {requested} samples per label but only {available} are available")]
    TooFew { requested: usize, available: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

/// A triplet for conversational next-sentence prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnspSample {
    pub first: String,
    pub second: String,
    pub third: String,
    pub label: Label,
    pub source_conversation: String,
    pub negative_source: Option<String>,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The candidate closest to the reference.
    #[default]
    Oracle,
    /// The reference itself.
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationSample {
    pub context: Vec<String>,
    pub candidate: String,
    pub label: Label,
    pub utterance_id: String,
    /// Word edit distance from the candidate to the reference.
    pub candidate_wed: usize,
}

/// An N-best list with its reference transcript and context texts.
#[derive(Clone, Debug, PartialEq)]
pub struct NBestGroup {
    pub nbest: NBestList,
    pub reference: Vec<String>,
    pub context: Vec<String>,
}

/// A positive and a negative hypothesis for one utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSample {
    pub utterance_id: String,
    pub context: Vec<String>,
    pub positive: String,
    pub negative: String,
    pub positive_wed: usize,
    pub negative_wed: usize,
    /// Which orientation is presented first.
    pub positive_first: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenStats {
    pub groups: usize,
    /// Groups without any candidate worse than the best one.
    pub dropped: usize,
}

fn group_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sliding-window triplets plus negatives. With `negative_ratio = r` the
/// output holds `round(P * r / (1 - r))` negatives for `P` positives; each
/// negative reuses a positive's first two utterances (cycling through them
/// in order) and replaces the third with an utterance drawn uniformly from
/// the other conversations of the same split. The result is shuffled.
pub fn gen_cnsp(
    conversations: &[Conversation],
    negative_ratio: f64,
    seed: u64,
) -> Result<Vec<CnspSample>, TaskgenError> {
    if !(0.0..1.0).contains(&negative_ratio) {
        return Err(TaskgenError::Ratio(negative_ratio));
    }
    let mut positives = Vec::new();
    for conv in conversations {
        for w in conv.utterances.windows(3) {
            positives.push(CnspSample {
                first: w[0].text_string(),
                second: w[1].text_string(),
                third: w[2].text_string(),
                label: Label::Positive,
                source_conversation: conv.id.clone(),
                negative_source: None,
                split: conv.split,
            });
        }
    }
    let n_neg = if positives.is_empty() {
        0
    } else {
        (positives.len() as f64 * negative_ratio / (1.0 - negative_ratio)).round() as usize
    };

    // Utterances by split; negatives are drawn by rejection, which is
    // uniform over the utterances of the other conversations.
    let mut by_split: HashMap<Split, Vec<(&str, String)>> = HashMap::new();
    let mut sizes: HashMap<&str, usize> = HashMap::new();
    for c in conversations {
        *sizes.entry(c.id.as_str()).or_default() += c.utterances.len();
        let pool = by_split.entry(c.split).or_default();
        pool.extend(c.utterances.iter().map(|u| (c.id.as_str(), u.text_string())));
    }
    let mut rng = group_rng(seed, 0);
    let mut negatives = Vec::with_capacity(n_neg);
    for i in 0..n_neg {
        let anchor = &positives[i % positives.len()];
        let pool = &by_split[&anchor.split];
        if sizes[anchor.source_conversation.as_str()] == pool.len() {
            return Err(TaskgenError::NoForeignConversation(anchor.source_conversation.clone()));
        }
        let (src, text) = loop {
            let pick = pool.choose(&mut rng).expect("pool is non-empty");
            if pick.0 != anchor.source_conversation {
                break pick;
            }
        };
        negatives.push(CnspSample {
            third: text.clone(),
            label: Label::Negative,
            negative_source: Some(src.to_string()),
            ..anchor.clone()
        });
    }
    let mut out = positives;
    out.extend(negatives);
    out.shuffle(&mut rng);
    Ok(out)
}

/// A balanced evaluation set: `per_label` positives and `per_label`
/// negatives drawn without replacement, then shuffled.
pub fn gen_cnsp_eval(
    conversations: &[Conversation],
    per_label: usize,
    seed: u64,
) -> Result<Vec<CnspSample>, TaskgenError> {
    let all = gen_cnsp(conversations, 0.5, seed)?;
    let mut rng = group_rng(seed, 1);
    let mut out = Vec::with_capacity(2 * per_label);
    for label in [Label::Positive, Label::Negative] {
        let pool: Vec<&CnspSample> = all.iter().filter(|s| s.label == label).collect();
        if pool.len() < per_label {
            return Err(TaskgenError::TooFew {
                requested: per_label,
                available: pool.len(),
            });
        }
        out.extend(pool.choose_multiple(&mut rng, per_label).map(|s| (*s).clone()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

struct Scored {
    text: String,
    wed: usize,
}

/// Distinct candidate texts with their distance to the reference, and the
/// oracle candidate's distance.
fn scored_candidates(g: &NBestGroup) -> Option<(Scored, Vec<Scored>)> {
    let best = oracle_select(&g.nbest, &g.reference).ok()?;
    let oracle = Scored {
        text: best.text_string(),
        wed: word_edit_distance(&best.text, &g.reference),
    };
    let mut seen = HashSet::new();
    let worse = g
        .nbest
        .candidates
        .iter()
        .filter(|c| seen.insert(c.text.clone()))
        .map(|c| Scored {
            text: c.text_string(),
            wed: word_edit_distance(&c.text, &g.reference),
        })
        .filter(|s| s.wed > oracle.wed)
        .collect();
    Some((oracle, worse))
}

/// One positive and up to `negatives_per_sample` negatives per group.
/// Negatives are sampled without replacement among the distinct candidates
/// whose distance to the reference exceeds the oracle's; groups with none
/// are dropped.
pub fn gen_disambiguation(
    groups: &[NBestGroup],
    target: Target,
    negatives_per_sample: usize,
    seed: u64,
) -> (Vec<DisambiguationSample>, GenStats) {
    let per_group: Vec<Option<Vec<DisambiguationSample>>> = groups
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let (oracle, worse) = scored_candidates(g)?;
            if worse.is_empty() {
                return None;
            }
            let mut rng = group_rng(seed, i as u64);
            let (pos_text, pos_wed) = match target {
                Target::Oracle => (oracle.text, oracle.wed),
                Target::GroundTruth => (g.reference.join(" "), 0),
            };
            let id = g.nbest.utterance_id.clone();
            let mut out = vec![DisambiguationSample {
                context: g.context.clone(),
                candidate: pos_text,
                label: Label::Positive,
                utterance_id: id.clone(),
                candidate_wed: pos_wed,
            }];
            for s in worse.choose_multiple(&mut rng, negatives_per_sample) {
                out.push(DisambiguationSample {
                    context: g.context.clone(),
                    candidate: s.text.clone(),
                    label: Label::Negative,
                    utterance_id: id.clone(),
                    candidate_wed: s.wed,
                });
            }
            Some(out)
        })
        .collect();
    let stats = GenStats {
        groups: groups.len(),
        dropped: per_group.iter().filter(|g| g.is_none()).count(),
    };
    (per_group.into_iter().flatten().flatten().collect(), stats)
}

/// One pair per group: the oracle candidate against a uniformly drawn
/// worse candidate. A seeded shuffle picks the half of the pairs (rounded
/// down) that show the positive first.
pub fn gen_pairwise_eval(groups: &[NBestGroup], seed: u64) -> (Vec<PairwiseSample>, GenStats) {
    let per_group: Vec<Option<PairwiseSample>> = groups
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let (oracle, worse) = scored_candidates(g)?;
            let mut rng = group_rng(seed, i as u64);
            let neg = worse.choose(&mut rng)?;
            Some(PairwiseSample {
                utterance_id: g.nbest.utterance_id.clone(),
                context: g.context.clone(),
                positive: oracle.text,
                negative: neg.text.clone(),
                positive_wed: oracle.wed,
                negative_wed: neg.wed,
                positive_first: false,
            })
        })
        .collect();
    let stats = GenStats {
        groups: groups.len(),
        dropped: per_group.iter().filter(|g| g.is_none()).count(),
    };
    let mut pairs: Vec<PairwiseSample> = per_group.into_iter().flatten().collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut group_rng(seed, u64::MAX));
    let half = order.len() / 2;
    for (k, &i) in order.iter().enumerate() {
        pairs[i].positive_first = k < half;
    }
    (pairs, stats)
}

/// A line of a task file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub kind: String,
    pub label: Label,
    pub context: Vec<String>,
    pub texts: Vec<String>,
    pub ids: Vec<String>,
    pub wed: Vec<usize>,
}

impl From<&CnspSample> for TaskRecord {
    fn from(s: &CnspSample) -> Self {
        let mut ids = vec![s.source_conversation.clone()];
        ids.extend(s.negative_source.clone());
        TaskRecord {
            kind: "cnsp".into(),
            label: s.label,
            context: vec![s.first.clone(), s.second.clone()],
            texts: vec![s.third.clone()],
            ids,
            wed: vec![],
        }
    }
}

impl From<&DisambiguationSample> for TaskRecord {
    fn from(s: &DisambiguationSample) -> Self {
        TaskRecord {
            kind: "disambiguation".into(),
            label: s.label,
            context: s.context.clone(),
            texts: vec![s.candidate.clone()],
            ids: vec![s.utterance_id.clone()],
            wed: vec![s.candidate_wed],
        }
    }
}

impl From<&PairwiseSample> for TaskRecord {
    fn from(s: &PairwiseSample) -> Self {
        TaskRecord {
            kind: "pairwise".into(),
            label: if s.positive_first {
                Label::Positive
            } else {
                Label::Negative
            },
            context: s.context.clone(),
            texts: vec![s.positive.clone(), s.negative.clone()],
            ids: vec![s.utterance_id.clone()],
            wed: vec![s.positive_wed, s.negative_wed],
        }
    }
}

impl TryFrom<TaskRecord> for PairwiseSample {
    type Error = String;

    fn try_from(r: TaskRecord) -> Result<Self, String> {
        if r.kind != "pairwise" || r.texts.len() != 2 || r.wed.len() != 2 || r.ids.len() != 1 {
            return Err(format!("not a pairwise record: kind {:?}", r.kind));
        }
        let mut texts = r.texts.into_iter();
        Ok(PairwiseSample {
            utterance_id: r.ids.into_iter().next().unwrap(),
            context: r.context,
            positive: texts.next().unwrap(),
            negative: texts.next().unwrap(),
            positive_wed: r.wed[0],
            negative_wed: r.wed[1],
            positive_first: r.label == Label::Positive,
        })
    }
}

pub fn write_records<'a, W, T>(mut w: W, samples: impl IntoIterator<Item = &'a T>) -> std::io::Result<()>
where
    W: Write,
    T: 'a,
    &'a T: Into<TaskRecord>,
{
    for s in samples {
        let rec: TaskRecord = s.into();
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<TaskRecord>, TaskgenError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let err = |message: String| TaskgenError::Parse { line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Utterance};
    use crate::decoder::Candidate;

    fn conv(id: &str, split: Split, texts: &[&str]) -> Conversation {
        Conversation {
            id: id.into(),
            split,
            utterances: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Utterance::new(id, i, tokenize(t)))
                .collect(),
        }
    }

    fn cand(text: &str, rank: usize) -> Candidate {
        Candidate {
            text: tokenize(text),
            log_am: -(rank as f64),
            log_lm: 0.0,
            word_count: 0,
            log_bs: -(rank as f64),
            rescorer_score: None,
            rescored: None,
            rank,
        }
    }

    fn group(id: &str, texts: &[&str], reference: &str) -> NBestGroup {
        NBestGroup {
            nbest: NBestList::new(id, texts.iter().enumerate().map(|(i, t)| cand(t, i)).collect()),
            reference: tokenize(reference),
            context: vec!["previous turn".into()],
        }
    }

    #[test]
    fn cnsp_sliding_window_and_negatives() {
        let convs = vec![
            conv("a", Split::Train, &["one", "two", "three", "four", "five"]),
            conv("b", Split::Train, &["x", "y"]),
        ];
        let out = gen_cnsp(&convs, 0.5, 1).unwrap();
        let pos: Vec<_> = out.iter().filter(|s| s.label == Label::Positive).collect();
        let neg: Vec<_> = out.iter().filter(|s| s.label == Label::Negative).collect();
        assert_eq!(pos.len(), 3);
        assert_eq!(neg.len(), 3);
        for n in neg {
            assert_eq!(n.negative_source.as_deref(), Some("b"));
            assert!(n.third == "x" || n.third == "y");
        }
        assert_eq!(out, gen_cnsp(&convs, 0.5, 1).unwrap());
    }

    #[test]
    fn cnsp_minimal_case() {
        let convs = vec![
            conv("a", Split::Train, &["p", "q", "r"]),
            conv("b", Split::Train, &["z"]),
        ];
        let out = gen_cnsp(&convs, 0.5, 3).unwrap();
        assert_eq!(out.iter().filter(|s| s.label == Label::Positive).count(), 1);
        let neg = out.iter().find(|s| s.label == Label::Negative).unwrap();
        assert_eq!(
            (neg.first.as_str(), neg.second.as_str(), neg.third.as_str()),
            ("p", "q", "z")
        );
    }

    #[test]
    fn cnsp_requires_foreign_conversation_in_split() {
        let convs = vec![
            conv("a", Split::Train, &["p", "q", "r"]),
            conv("b", Split::Eval, &["z"]),
        ];
        assert_eq!(
            gen_cnsp(&convs, 0.5, 0),
            Err(TaskgenError::NoForeignConversation("a".into()))
        );
        assert_eq!(gen_cnsp(&convs[..1], 0.0, 0).unwrap().len(), 1);
        assert!(gen_cnsp(&convs, 1.0, 0).is_err());
    }

    #[test]
    fn cnsp_eval_is_balanced() {
        let convs: Vec<_> = (0..6)
            .map(|c| {
                let texts: Vec<String> = (0..12).map(|i| format!("c{c} u{i}")).collect();
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                conv(&format!("c{c}"), Split::Eval, &refs)
            })
            .collect();
        let out = gen_cnsp_eval(&convs, 32, 5).unwrap();
        assert_eq!(out.len(), 64);
        assert_eq!(out.iter().filter(|s| s.label == Label::Positive).count(), 32);
        assert!(matches!(
            gen_cnsp_eval(&convs, 1000, 5),
            Err(TaskgenError::TooFew { .. })
        ));
    }

    #[test]
    fn disambiguation_example() {
        let g = group("u", &["a b", "a c", "x y"], "a b");
        let (out, stats) = gen_disambiguation(std::slice::from_ref(&g), Target::Oracle, 2, 0);
        assert_eq!(stats, GenStats { groups: 1, dropped: 0 });
        assert_eq!(out[0].candidate, "a b");
        assert_eq!(out[0].label, Label::Positive);
        let negs: HashSet<&str> = out[1..].iter().map(|s| s.candidate.as_str()).collect();
        assert_eq!(negs, HashSet::from(["a c", "x y"]));

        let (one, _) = gen_disambiguation(std::slice::from_ref(&g), Target::Oracle, 1, 0);
        assert_eq!(one.len(), 2);

        let g2 = group("v", &["a c", "x y"], "a b");
        let (gt, _) = gen_disambiguation(&[g2], Target::GroundTruth, 2, 0);
        assert_eq!(gt[0].candidate, "a b");
        assert_eq!(gt[0].candidate_wed, 0);
        // Only "x y" is strictly worse than the oracle "a c".
        assert_eq!(gt.len(), 2);
        assert_eq!(gt[1].candidate, "x y");
    }

    #[test]
    fn degenerate_groups_are_dropped() {
        let g = group("u", &["a c", "c b"], "a b");
        let (out, stats) = gen_disambiguation(std::slice::from_ref(&g), Target::Oracle, 2, 0);
        assert!(out.is_empty());
        assert_eq!(stats.dropped, 1);
        let (pairs, stats) = gen_pairwise_eval(&[g], 0);
        assert!(pairs.is_empty());
        assert_eq!(stats.dropped, 1);
    }

    #[test]
    fn pairwise_balance_and_records() {
        let groups: Vec<_> = (0..10)
            .map(|i| group(&format!("u{i}"), &["a b", "a c", "x y"], "a b"))
            .collect();
        let (pairs, stats) = gen_pairwise_eval(&groups, 4);
        assert_eq!(pairs.len(), 10 - stats.dropped);
        assert_eq!(pairs.iter().filter(|p| p.positive_first).count(), 5);
        for p in &pairs {
            assert!(p.negative_wed > p.positive_wed);
        }
        let mut buf = Vec::new();
        write_records(&mut buf, &pairs).unwrap();
        let back: Vec<PairwiseSample> = read_records(buf.as_slice())
            .unwrap()
            .into_iter()
            .map(|r| r.try_into().unwrap())
            .collect();
        assert_eq!(back, pairs);
    }
}
