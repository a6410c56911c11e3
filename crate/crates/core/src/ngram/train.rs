use std::collections::{BTreeSet, HashMap};

use super::{
    Entry, LmError, NGramModel, WordId, BOS, BOS_LOG_PROB, BOS_TOKEN, EOS, EOS_TOKEN, MAX_ORDER, UNK, UNK_TOKEN,
};
use crate::fmt::round_sig;

/// Minimum raw count an n-gram needs to survive, per order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneConfig {
    pub min_counts: Vec<u64>,
}

impl PruneConfig {
    /// Keeps all unigrams and drops singletons of every higher order.
    pub fn singletons(order: usize) -> Self {
        let mut min_counts = vec![2; order];
        if let Some(first) = min_counts.first_mut() {
            *first = 1;
        }
        PruneConfig { min_counts }
    }

    pub fn none(order: usize) -> Self {
        PruneConfig {
            min_counts: vec![1; order],
        }
    }

    fn threshold(&self, m: usize) -> u64 {
        self.min_counts.get(m - 1).copied().unwrap_or(1).max(1)
    }
}

/// How discounts are derived from count-of-counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Discounting {
    /// Three discounts per order (counts 1, 2, 3+).
    #[default]
    Modified,
    /// One discount per order, `n1 / (n1 + 2 n2)`.
    Single,
}

/// Discount used when count-of-counts are degenerate.
const FALLBACK_DISCOUNT: f64 = 0.75;

/// Trains a modified Kneser-Ney model. See [`train_with`].
pub fn train<S: AsRef<[String]>>(sentences: &[S], order: usize, prune: &PruneConfig) -> Result<NGramModel, LmError> {
    train_with(sentences, order, prune, Discounting::Modified)
}

/// Interpolated Kneser-Ney estimation.
///
/// Each sentence is padded with `<s>` and `</s>` on its own; no n-gram spans
/// two sentences. Counts of the highest order and of n-grams starting with
/// `<s>` are raw counts; all other orders use continuation counts (number of
/// distinct left neighbours). Pruning removes n-grams whose *raw* count is
/// below the per-order threshold, except those needed as the prefix or
/// suffix of a surviving longer n-gram. The probability mass of pruned
/// n-grams moves into the back-off weight of their context.
pub fn train_with<S: AsRef<[String]>>(
    sentences: &[S],
    order: usize,
    prune: &PruneConfig,
    discounting: Discounting,
) -> Result<NGramModel, LmError> {
    if order == 0 || order > MAX_ORDER {
        return Err(LmError::Config(format!(
            "order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    if prune.min_counts.len() != order {
        return Err(LmError::Config(format!(
            "prune config has {} thresholds for order {order}",
            prune.min_counts.len()
        )));
    }
    if prune.threshold(1) > 1 {
        return Err(LmError::Config("unigrams cannot be pruned".into()));
    }
    if sentences.iter().all(|s| s.as_ref().is_empty()) {
        return Err(LmError::EmptyCorpus);
    }

    // Vocabulary: reserved symbols first, then words in lexicographic order
    // so ids do not depend on sentence order.
    let mut vocab = BTreeSet::new();
    for s in sentences {
        for w in s.as_ref() {
            if w == BOS_TOKEN || w == EOS_TOKEN {
                return Err(LmError::ReservedToken(w.clone()));
            }
            if w != UNK_TOKEN {
                vocab.insert(w.as_str());
            }
        }
    }
    let mut words: Vec<String> = vec![UNK_TOKEN.into(), BOS_TOKEN.into(), EOS_TOKEN.into()];
    words.extend(vocab.iter().map(|w| w.to_string()));
    let ids: HashMap<&str, WordId> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i as WordId))
        .collect();

    // Raw counts per order.
    let mut raw: Vec<HashMap<Vec<WordId>, u64>> = vec![HashMap::new(); order];
    for s in sentences {
        let mut padded = Vec::with_capacity(s.as_ref().len() + 2);
        padded.push(BOS);
        padded.extend(s.as_ref().iter().map(|w| ids[w.as_str()]));
        padded.push(EOS);
        for m in 1..=order {
            for win in padded.windows(m) {
                if m == 1 && win[0] == BOS {
                    continue;
                }
                *raw[m - 1].entry(win.to_vec()).or_default() += 1;
            }
        }
    }

    // Adjusted counts.
    let mut adjusted: Vec<HashMap<Vec<WordId>, u64>> = vec![HashMap::new(); order];
    adjusted[order - 1] = raw[order - 1].clone();
    for m in (1..order).rev() {
        let mut cont: HashMap<Vec<WordId>, u64> = HashMap::new();
        for gram in raw[m].keys() {
            *cont.entry(gram[1..].to_vec()).or_default() += 1;
        }
        for (gram, &c) in &raw[m - 1] {
            let a = if gram[0] == BOS {
                c
            } else {
                cont.get(gram).copied().unwrap_or(c)
            };
            adjusted[m - 1].insert(gram.clone(), a);
        }
    }

    // Pruning on raw counts, closed under prefixes and suffixes.
    let mut kept: Vec<BTreeSet<Vec<WordId>>> = vec![BTreeSet::new(); order];
    for m in (1..=order).rev() {
        let threshold = if m == 1 { 1 } else { prune.threshold(m) };
        let mut set: BTreeSet<Vec<WordId>> = raw[m - 1]
            .iter()
            .filter(|(_, &c)| c >= threshold)
            .map(|(g, _)| g.clone())
            .collect();
        if m < order {
            for g in &kept[m] {
                set.insert(g[..m].to_vec());
                set.insert(g[1..].to_vec());
            }
        }
        // A prefix `<s>` is a context, not a unigram entry; it is added below.
        set.remove(&vec![BOS]);
        kept[m - 1] = set;
    }

    let discounts: Vec<[f64; 3]> = adjusted
        .iter()
        .map(|counts| discounts_for(counts, discounting))
        .collect();

    // Group every observed n-gram by its context.
    struct Group {
        total: u64,
        leftover: f64,
    }
    let mut tables: Vec<HashMap<Box<[WordId]>, Entry>> = vec![HashMap::new(); order];
    let mut gamma: Vec<HashMap<Vec<WordId>, f64>> = vec![HashMap::new(); order];
    for m in 1..=order {
        let d = &discounts[m - 1];
        let mut groups: HashMap<&[WordId], Group> = HashMap::new();
        for (gram, &a) in &adjusted[m - 1] {
            let g = groups.entry(&gram[..m - 1]).or_insert(Group {
                total: 0,
                leftover: 0.0,
            });
            g.total += a;
            g.leftover += if kept[m - 1].contains(gram) {
                discount(d, a)
            } else {
                a as f64
            };
        }
        for (ctx, g) in &groups {
            gamma[m - 1].insert(ctx.to_vec(), g.leftover / g.total as f64);
        }

        let uniform = 1.0 / (words.len() - 1) as f64;
        let mut probs: Vec<(Vec<WordId>, f64)> = Vec::new();
        for gram in &kept[m - 1] {
            let ctx = &gram[..m - 1];
            let a = adjusted[m - 1][gram];
            let g = &groups[ctx];
            let lower = if m == 1 {
                uniform
            } else {
                10f64.powf(tables[m - 2][&gram[1..]].log_prob)
            };
            let p = (a as f64 - discount(d, a)) / g.total as f64 + gamma[m - 1][ctx] * lower;
            probs.push((gram.clone(), p));
        }
        if m == 1 {
            let p_unk = gamma[0][&Vec::new()] * uniform;
            probs.push((vec![UNK], p_unk));
        }
        for (gram, p) in probs {
            tables[m - 1].insert(
                gram.into_boxed_slice(),
                Entry {
                    log_prob: round_sig(p.log10(), 7),
                    backoff: 0.0,
                },
            );
        }
        if m == 1 {
            tables[0].insert(
                vec![BOS].into_boxed_slice(),
                Entry {
                    log_prob: BOS_LOG_PROB,
                    backoff: 0.0,
                },
            );
        }
    }

    // Back-off weights of stored contexts.
    for m in 1..order {
        for (ctx, entry) in tables[m - 1].iter_mut() {
            if let Some(&g) = gamma[m].get(&ctx[..]) {
                entry.backoff = round_sig(g.log10(), 7);
            }
        }
    }

    Ok(NGramModel::from_parts(order, words, tables))
}

fn discount(d: &[f64; 3], count: u64) -> f64 {
    match count {
        0 => 0.0,
        1 => d[0],
        2 => d[1],
        _ => d[2],
    }
}

fn discounts_for(counts: &HashMap<Vec<WordId>, u64>, discounting: Discounting) -> [f64; 3] {
    let mut n = [0u64; 5];
    for &c in counts.values() {
        if (1..=4).contains(&c) {
            n[c as usize] += 1;
        }
    }
    let fallback = [FALLBACK_DISCOUNT; 3];
    if n[1] == 0 || n[2] == 0 {
        return fallback;
    }
    let y = n[1] as f64 / (n[1] as f64 + 2.0 * n[2] as f64);
    match discounting {
        Discounting::Single => [y; 3],
        Discounting::Modified => {
            if n[3] == 0 || n[4] == 0 {
                return fallback;
            }
            let d = [
                1.0 - 2.0 * y * n[2] as f64 / n[1] as f64,
                2.0 - 3.0 * y * n[3] as f64 / n[2] as f64,
                3.0 - 4.0 * y * n[4] as f64 / n[3] as f64,
            ];
            if d.iter().enumerate().all(|(i, &x)| x > 0.0 && x < (i + 1) as f64) {
                d
            } else {
                fallback
            }
        }
    }
}
