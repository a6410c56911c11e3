//! Edit distance, corpus-level WER/CER, WER recovery rate and
//! length-binned diagnostics.
//!
//! WER here is always the *total* form: summed edit distance over summed
//! reference length. Averaging per-utterance WERs would weight short
//! utterances more heavily.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::fmt::plain_sig;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference set contains no words")]
    ZeroReference,
    #[error("baseline WER {baseline} equals oracle WER; the beam holds no better candidate")]
    DegenerateBeam { baseline: f64 },
    #[error("bin width must be at least 1")]
    BinWidth,
}

/// A reference transcript and a hypothesis, both as words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPair {
    pub reference: Vec<String>,
    pub hypothesis: Vec<String>,
}

impl EvalPair {
    pub fn new(reference: Vec<String>, hypothesis: Vec<String>) -> Self {
        EvalPair { reference, hypothesis }
    }

    /// Builds a pair from whitespace-separated strings.
    pub fn from_strs(reference: &str, hypothesis: &str) -> Self {
        EvalPair {
            reference: crate::corpus::tokenize(reference),
            hypothesis: crate::corpus::tokenize(hypothesis),
        }
    }

    pub fn word_edits(&self) -> usize {
        word_edit_distance(&self.reference, &self.hypothesis)
    }
}

/// Levenshtein distance between two sequences with unit costs.
pub fn word_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.len() < b.len() {
        return word_edit_distance(b, a);
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Characters of a transcript, words joined by single spaces.
fn chars_of(words: &[String]) -> Vec<char> {
    words.join(" ").chars().collect()
}

/// `(edits, reference words)` summed over `pairs`.
pub fn word_totals(pairs: &[EvalPair]) -> (usize, usize) {
    pairs
        .iter()
        .fold((0, 0), |(e, n), p| (e + p.word_edits(), n + p.reference.len()))
}

/// Total word error rate: summed edits over summed reference words.
pub fn total_wer(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    let (edits, words) = word_totals(pairs);
    ratio(edits, words)
}

/// Character error rate. Reference characters include the single spaces
/// between words.
pub fn char_error_rate(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    let (edits, chars) = pairs.iter().fold((0, 0), |(e, n), p| {
        let r = chars_of(&p.reference);
        let h = chars_of(&p.hypothesis);
        (e + word_edit_distance(&r, &h), n + r.len())
    });
    ratio(edits, chars)
}

fn ratio(edits: usize, total: usize) -> Result<f64, MetricError> {
    if total == 0 {
        return Err(MetricError::ZeroReference);
    }
    Ok(edits as f64 / total as f64)
}

/// WER recovery rate: the share of the baseline-to-oracle gap closed by the
/// rescored system. Inputs may be ratios or percentages, as long as all
/// three use the same scale.
pub fn werr(wer_baseline: f64, wer_rescored: f64, wer_oracle: f64) -> Result<f64, MetricError> {
    let gap = wer_baseline - wer_oracle;
    if gap == 0.0 {
        return Err(MetricError::DegenerateBeam { baseline: wer_baseline });
    }
    Ok((wer_baseline - wer_rescored) / gap)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WerReport {
    pub total_edits: usize,
    pub total_reference_words: usize,
    pub wer: f64,
    pub cer: f64,
    /// Bin start -> (edits, reference words). A bin starting at `i` covers
    /// reference lengths `i..=i + bin_width`; empty references sit in bin 0.
    pub per_bin: BTreeMap<usize, (usize, usize)>,
    pub bin_width: usize,
}

/// Start of the length bin holding a reference of `len` words.
///
/// Bins are `[1, 1+w]`, `[2+w, 2+2w]`, ...: with `w = 4`, lengths 1-5 share
/// bin 1 and lengths 6-10 share bin 6.
pub fn bin_start(len: usize, bin_width: usize) -> usize {
    if len == 0 {
        return 0;
    }
    let span = bin_width + 1;
    1 + span * ((len - 1) / span)
}

/// Total WER overall and per reference-length bin.
pub fn binned_wer(pairs: &[EvalPair], bin_width: usize) -> Result<WerReport, MetricError> {
    if bin_width == 0 {
        return Err(MetricError::BinWidth);
    }
    let mut per_bin: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut total_edits = 0;
    let mut total_words = 0;
    for p in pairs {
        let e = p.word_edits();
        let slot = per_bin.entry(bin_start(p.reference.len(), bin_width)).or_default();
        slot.0 += e;
        slot.1 += p.reference.len();
        total_edits += e;
        total_words += p.reference.len();
    }
    Ok(WerReport {
        total_edits,
        total_reference_words: total_words,
        wer: ratio(total_edits, total_words)?,
        cer: char_error_rate(pairs)?,
        per_bin,
        bin_width,
    })
}

impl WerReport {
    /// WER of one bin, `None` when the bin has no reference words.
    pub fn bin_wer(&self, start: usize) -> Option<f64> {
        self.per_bin
            .get(&start)
            .and_then(|&(e, n)| (n > 0).then(|| e as f64 / n as f64))
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "total_edits={}", self.total_edits);
        let _ = writeln!(s, "total_reference_words={}", self.total_reference_words);
        let _ = writeln!(s, "wer={}", plain_sig(self.wer, 9));
        let _ = writeln!(s, "cer={}", plain_sig(self.cer, 9));
        let _ = writeln!(s, "bin_width={}", self.bin_width);
        s
    }

    /// CSV with header `bin_start,edits,words,wer`. Bins with no reference
    /// words report an empty WER field.
    pub fn bins_csv(&self) -> String {
        let mut s = String::from("bin_start,edits,words,wer\n");
        for (&start, &(e, n)) in &self.per_bin {
            let wer = if n > 0 {
                plain_sig(e as f64 / n as f64, 9)
            } else {
                String::new()
            };
            let _ = writeln!(s, "{start},{e},{n},{wer}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        crate::corpus::tokenize(s)
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(word_edit_distance(&w("a b c"), &w("a b c")), 0);
        assert_eq!(word_edit_distance(&w("a b c"), &w("a x c")), 1);
        assert_eq!(word_edit_distance(&w(""), &w("a b")), 2);
        assert_eq!(word_edit_distance(&w("a b"), &w("")), 2);
        assert_eq!(word_edit_distance(&w("a b c d"), &w("b c d e")), 2);
    }

    #[test]
    fn total_wer_examples() {
        let pairs = vec![EvalPair::from_strs("a b", "a b"), EvalPair::from_strs("c", "d")];
        assert_eq!(total_wer(&pairs).unwrap(), 1.0 / 3.0);
        let same = vec![EvalPair::from_strs("x y", "x y")];
        assert_eq!(total_wer(&same).unwrap(), 0.0);
        let mixed = vec![EvalPair::from_strs("a", "b"), EvalPair::from_strs("c d e f", "c d e f")];
        assert_eq!(total_wer(&mixed).unwrap(), 1.0 / 5.0);
        assert_eq!(
            total_wer(&[EvalPair::from_strs("", "a")]),
            Err(MetricError::ZeroReference)
        );
        assert_eq!(total_wer(&[]), Err(MetricError::ZeroReference));
    }

    #[test]
    fn cer_examples() {
        assert_eq!(char_error_rate(&[EvalPair::from_strs("ab", "ab")]).unwrap(), 0.0);
        assert_eq!(char_error_rate(&[EvalPair::from_strs("ab", "ac")]).unwrap(), 0.5);
        // "a b" has 3 characters including the space; "ab" drops it.
        assert_eq!(char_error_rate(&[EvalPair::from_strs("a b", "ab")]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn werr_examples() {
        let v = werr(23.39, 20.75, 16.30).unwrap() * 100.0;
        assert!((v - 37.24).abs() <= 0.01, "{v}");
        let v = werr(33.27, 32.80, 24.87).unwrap() * 100.0;
        assert!((v - 5.60).abs() <= 0.01, "{v}");
        assert_eq!(werr(30.0, 30.0, 20.0).unwrap(), 0.0);
        assert_eq!(werr(30.0, 20.0, 20.0).unwrap(), 1.0);
        assert!(matches!(
            werr(20.0, 19.0, 20.0),
            Err(MetricError::DegenerateBeam { .. })
        ));
    }

    #[test]
    fn bins() {
        assert_eq!(bin_start(0, 4), 0);
        for len in 1..=5 {
            assert_eq!(bin_start(len, 4), 1);
        }
        for len in 6..=10 {
            assert_eq!(bin_start(len, 4), 6);
        }
        assert_eq!(bin_start(11, 4), 11);
        assert_eq!(bin_start(3, 1), 3);

        let pairs = vec![EvalPair::from_strs("a b c", "a b c")];
        let r = binned_wer(&pairs, 4).unwrap();
        assert_eq!(r.bin_wer(1), Some(0.0));

        let pairs = vec![
            EvalPair::from_strs("a b c", "a x c"),
            EvalPair::from_strs("a b c d e f g", "a b c"),
            EvalPair::from_strs("q", "q r"),
        ];
        let r = binned_wer(&pairs, 4).unwrap();
        let bin_edits: usize = r.per_bin.values().map(|v| v.0).sum();
        assert_eq!(bin_edits, r.total_edits);
        assert_eq!(r.wer, total_wer(&pairs).unwrap());
        assert_eq!(r.per_bin[&1], (2, 4));
        assert_eq!(r.per_bin[&6], (4, 7));
        assert!(r
            .bins_csv()
            .starts_with("bin_start,edits,words,wer\n1,2,4,0.500000000\n"));
        assert!(binned_wer(&pairs, 0).is_err());
    }
}
