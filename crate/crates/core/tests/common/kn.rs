//! Interpolated Kneser-Ney written directly from its definition.

use std::collections::{BTreeSet, HashMap};

use ctc_rescore::corpus::tokenize;
use ctc_rescore::ngram::NGramModel;

/// Interpolated Kneser-Ney written directly from its definition, on string
/// n-grams, without pruning.
pub struct Oracle {
    pub order: usize,
    /// Adjusted count of every n-gram, by order.
    pub adjusted: Vec<HashMap<Vec<String>, u64>>,
    pub discounts: Vec<[f64; 3]>,
    pub words: BTreeSet<String>,
}

impl Oracle {
    pub fn new(corpus: &[Vec<String>], order: usize, single: bool) -> Self {
        let padded: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| {
                let mut p = vec!["<s>".to_string()];
                p.extend(s.iter().cloned());
                p.push("</s>".into());
                p
            })
            .collect();
        let mut raw: Vec<HashMap<Vec<String>, u64>> = vec![HashMap::new(); order + 1];
        let mut left: Vec<HashMap<Vec<String>, BTreeSet<String>>> = vec![HashMap::new(); order + 1];
        for s in &padded {
            for m in 1..=order {
                for (i, w) in s.windows(m).enumerate() {
                    if m == 1 && w[0] == "<s>" {
                        continue;
                    }
                    *raw[m].entry(w.to_vec()).or_default() += 1;
                    if i > 0 {
                        left[m].entry(w.to_vec()).or_default().insert(s[i - 1].clone());
                    }
                }
            }
        }
        let mut adjusted = vec![HashMap::new(); order + 1];
        for m in 1..=order {
            for (g, &c) in &raw[m] {
                let a = if m == order || g[0] == "<s>" {
                    c
                } else {
                    left[m].get(g).map_or(0, |l| l.len() as u64)
                };
                adjusted[m].insert(g.clone(), a);
            }
        }
        let discounts = (0..=order)
            .map(|m| {
                if m == 0 {
                    return [0.0; 3];
                }
                let nk = |k: u64| adjusted[m].values().filter(|&&c| c == k).count() as f64;
                let (n1, n2, n3, n4) = (nk(1), nk(2), nk(3), nk(4));
                // Degenerate count-of-counts fall back to a fixed discount.
                let fallback = [0.75; 3];
                if n1 == 0.0 || n2 == 0.0 {
                    return fallback;
                }
                let y = n1 / (n1 + 2.0 * n2);
                if single {
                    return [y; 3];
                }
                if n3 == 0.0 || n4 == 0.0 {
                    return fallback;
                }
                let d = [
                    1.0 - 2.0 * y * n2 / n1,
                    2.0 - 3.0 * y * n3 / n2,
                    3.0 - 4.0 * y * n4 / n3,
                ];
                if d.iter().enumerate().any(|(k, &x)| x <= 0.0 || x >= (k + 1) as f64) {
                    return fallback;
                }
                d
            })
            .collect();
        let mut words: BTreeSet<String> = corpus.iter().flatten().cloned().collect();
        words.insert("</s>".into());
        words.insert("<unk>".into());
        Oracle {
            order,
            adjusted,
            discounts,
            words,
        }
    }

    fn discount(&self, m: usize, c: u64) -> f64 {
        self.discounts[m][(c.min(3) - 1) as usize]
    }

    pub fn prob(&self, w: &str, history: &[&str]) -> f64 {
        let keep = history.len().min(self.order - 1);
        self.interp(w, &history[history.len() - keep..])
    }

    fn interp(&self, w: &str, h: &[&str]) -> f64 {
        let m = h.len() + 1;
        let lower = if h.is_empty() {
            // Uniform over every predictable word.
            1.0 / self.words.len() as f64
        } else {
            self.interp(w, &h[1..])
        };
        let ext: Vec<(&Vec<String>, u64)> = self.adjusted[m]
            .iter()
            .filter(|(g, _)| g[..m - 1].iter().zip(h).all(|(a, b)| a == b))
            .map(|(g, &c)| (g, c))
            .collect();
        let total: u64 = ext.iter().map(|e| e.1).sum();
        if total == 0 {
            return lower;
        }
        let mut own = 0.0;
        let mut gamma = 0.0;
        for (g, c) in &ext {
            let d = self.discount(m, *c);
            gamma += d;
            if g[m - 1] == w {
                own = (*c as f64 - d).max(0.0);
            }
        }
        (own + gamma * lower) / total as f64
    }
}

pub fn sents(list: &[&str]) -> Vec<Vec<String>> {
    list.iter().map(|s| tokenize(s)).collect()
}

pub fn p(m: &NGramModel, w: &str, h: &[&str]) -> f64 {
    10f64.powf(m.log_prob(w, h))
}

/// Every history the corpus can produce, plus some it cannot.
pub fn histories(corpus: &[Vec<String>], order: usize) -> Vec<Vec<String>> {
    let mut out: BTreeSet<Vec<String>> = BTreeSet::new();
    out.insert(vec![]);
    for s in corpus {
        let mut padded = vec!["<s>".to_string()];
        padded.extend(s.iter().cloned());
        for m in 1..order {
            for w in padded.windows(m) {
                out.insert(w.to_vec());
                let mut unseen = w.to_vec();
                unseen.insert(0, "</s>".into());
                out.insert(unseen);
            }
        }
    }
    out.into_iter().collect()
}

/// Three sentences small enough to work through by hand.
pub const TOY: &[&str] = &["a b", "a c", "b a c"];

/// Bigram probabilities of [`TOY`] with a single discount per order
/// (1/7 for unigrams, 0.4 for bigrams), computed by hand.
pub const TOY_BIGRAM: &[(&str, &[(&str, f64)])] = &[
    (
        "",
        &[
            ("</s>", 0.2816326530612245),
            ("<unk>", 0.016326530612244896),
            ("a", 0.2816326530612245),
            ("b", 0.2816326530612245),
            ("c", 0.13877551020408163),
        ],
    ),
    (
        "<s>",
        &[
            ("</s>", 0.0751020408),
            ("<unk>", 0.0043537415),
            ("a", 0.6084353741),
            ("b", 0.2751020408),
            ("c", 0.0370068027),
        ],
    ),
    (
        "a",
        &[
            ("</s>", 0.0751020408),
            ("<unk>", 0.0043537415),
            ("a", 0.0751020408),
            ("b", 0.2751020408),
            ("c", 0.5703401361),
        ],
    ),
    (
        "b",
        &[
            ("</s>", 0.4126530612),
            ("<unk>", 0.0065306122),
            ("a", 0.4126530612),
            ("b", 0.1126530612),
            ("c", 0.0555102041),
        ],
    ),
    (
        "c",
        &[
            ("</s>", 0.8563265306),
            ("<unk>", 0.0032653061),
            ("a", 0.0563265306),
            ("b", 0.0563265306),
            ("c", 0.027755102),
        ],
    ),
];
