use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CorpusError;

/// Default spelling of the CTC blank symbol.
pub const DEFAULT_CTC_BLANK: &str = "_";

const MAGIC: &[u8; 5] = b"CTCL1";

/// Output symbols of an acoustic model.
///
/// Index 0 is always the CTC blank. Every other symbol is a single character;
/// `' '` separates words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    tokens: Vec<String>,
    chars: Vec<Option<char>>,
    index: HashMap<char, usize>,
}

impl Alphabet {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < 2 {
            return Err(CorpusError::InvalidAlphabet(format!(
                "need at least 2 symbols, got {}",
                tokens.len()
            )));
        }
        let mut chars = vec![None];
        let mut index = HashMap::new();
        for (i, tok) in tokens.iter().enumerate().skip(1) {
            let mut it = tok.chars();
            let ch = match (it.next(), it.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(CorpusError::InvalidAlphabet(format!(
                        "symbol {i} ({tok:?}) is not a single character"
                    )))
                }
            };
            if tokens[0].chars().count() == 1 && tokens[0].starts_with(ch) {
                return Err(CorpusError::InvalidAlphabet(format!(
                    "symbol {i} ({tok:?}) repeats the blank"
                )));
            }
            if index.insert(ch, i).is_some() {
                return Err(CorpusError::InvalidAlphabet(format!("duplicate symbol {tok:?}")));
            }
            chars.push(Some(ch));
        }
        Ok(Alphabet { tokens, chars, index })
    }

    /// Blank (spelled [`DEFAULT_CTC_BLANK`]) followed by `chars` in order.
    pub fn from_chars(chars: &str) -> Result<Self, CorpusError> {
        let mut tokens = vec![DEFAULT_CTC_BLANK.to_string()];
        tokens.extend(chars.chars().map(String::from));
        Self::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blank(&self) -> usize {
        0
    }

    pub fn space(&self) -> Option<usize> {
        self.index.get(&' ').copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Character of symbol `i`; `None` for the blank.
    pub fn char_of(&self, i: usize) -> Option<char> {
        self.chars[i]
    }

    pub fn char_index(&self, ch: char) -> Option<usize> {
        self.index.get(&ch).copied()
    }
}

/// Per-frame symbol probabilities for one utterance, `T x K`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMatrix {
    pub utterance_id: String,
    alphabet: Alphabet,
    frames: Vec<f32>,
}

impl LogitMatrix {
    pub fn new(utterance_id: impl Into<String>, alphabet: Alphabet, frames: Vec<f32>) -> Result<Self, CorpusError> {
        let k = alphabet.len();
        if frames.is_empty() || !frames.len().is_multiple_of(k) {
            return Err(CorpusError::InvalidLogits(format!(
                "{} values do not form rows of width {k}",
                frames.len()
            )));
        }
        for (t, row) in frames.chunks(k).enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(CorpusError::InvalidLogits(format!(
                    "frame {t} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().map(|&p| p as f64).sum();
            if (sum - 1.0).abs() > 1e-5 {
                return Err(CorpusError::InvalidLogits(format!("frame {t} sums to {sum}")));
            }
        }
        Ok(LogitMatrix {
            utterance_id: utterance_id.into(),
            alphabet,
            frames,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / self.alphabet.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        let k = self.alphabet.len();
        &self.frames[t * k..(t + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.frames.chunks(self.alphabet.len())
    }

    /// Serializes as `CTCL1`, `T`, `K` (u32 LE), `K` length-prefixed UTF-8
    /// symbols, then `T*K` f32 LE values.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.num_frames() as u32).to_le_bytes())?;
        w.write_all(&(self.num_symbols() as u32).to_le_bytes())?;
        for tok in self.alphabet.tokens() {
            w.write_all(&(tok.len() as u32).to_le_bytes())?;
            w.write_all(tok.as_bytes())?;
        }
        for &p in &self.frames {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, utterance_id: impl Into<String>) -> Result<Self, CorpusError> {
        let bad = |m: &str| CorpusError::InvalidLogits(m.to_string());
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let t = read_u32(&mut r)? as usize;
        let k = read_u32(&mut r)? as usize;
        if t == 0 || k < 2 {
            return Err(bad("header declares an empty matrix"));
        }
        let mut tokens = Vec::with_capacity(k);
        for _ in 0..k {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            tokens.push(String::from_utf8(buf).map_err(|_| bad("symbol is not UTF-8"))?);
        }
        let alphabet = Alphabet::new(tokens)?;
        let mut bytes = vec![0u8; t * k * 4];
        r.read_exact(&mut bytes)?;
        let frames = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        LogitMatrix::new(utterance_id, alphabet, frames)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut w = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a matrix; the utterance id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let r = io::BufReader::new(fs::File::open(path)?);
        Self::read_from(r, id)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Logit gap between the intended symbol and the rest of a clean frame.
const PEAK: f64 = 6.0;
/// Scale of the uniform jitter added to every logit at `noise = 1`.
const JITTER: f64 = 3.0;
/// Frames emitted per character.
const FRAMES_PER_CHAR: usize = 2;

/// Deterministic synthetic acoustic-model output for `text`.
///
/// The frame layout is a leading blank, then for every character two frames
/// of that character followed by a blank frame. With `noise = 0` every frame
/// peaks on its intended symbol, so greedy decoding returns `text` exactly.
/// With `noise > 0`, each character segment is, with probability `noise`,
/// shadowed by a random competing character whose logit may exceed the
/// intended one; every logit also receives uniform jitter proportional to
/// `noise`.
pub fn synth_logits(text: &str, alphabet: &Alphabet, noise: f64, seed: u64) -> Result<LogitMatrix, CorpusError> {
    synth_logits_with(text, alphabet, noise, seed, |_, _| None)
}

/// Like [`synth_logits`], with `confuse(target, rng)` picking the competing
/// symbol of a noisy segment. Returning `None` falls back to a uniformly
/// random non-blank symbol.
pub(crate) fn synth_logits_with<F>(
    text: &str,
    alphabet: &Alphabet,
    noise: f64,
    seed: u64,
    mut confuse: F,
) -> Result<LogitMatrix, CorpusError>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> Option<usize>,
{
    if !(0.0..1.0).contains(&noise) {
        return Err(CorpusError::InvalidLogits(format!("noise {noise} outside [0, 1)")));
    }
    let k = alphabet.len();
    let blank = alphabet.blank();
    let mut segments: Vec<(usize, usize)> = vec![(blank, 1)];
    for ch in text.chars() {
        let idx = alphabet.char_index(ch).ok_or(CorpusError::Alphabet { ch })?;
        segments.push((idx, FRAMES_PER_CHAR));
        segments.push((blank, 1));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(segments.iter().map(|s| s.1).sum::<usize>() * k);
    let mut logits = vec![0.0f64; k];
    for (target, len) in segments {
        // Blank segments are shadowed half as often: an inserted character.
        let p = if target == blank { noise / 2.0 } else { noise };
        let rival = if noise > 0.0 && rng.gen_bool(p) {
            let r = confuse(target, &mut rng).unwrap_or_else(|| loop {
                let r = rng.gen_range(1..k);
                if r != target || k == 2 {
                    break r;
                }
            });
            (r != target).then_some((r, rng.gen_range(-3.0..1.0)))
        } else {
            None
        };
        for _ in 0..len {
            for (i, l) in logits.iter_mut().enumerate() {
                *l = if i == target { PEAK } else { 0.0 };
                if noise > 0.0 {
                    *l += noise * JITTER * rng.gen_range(-1.0..1.0);
                }
            }
            if let Some((r, delta)) = rival {
                logits[r] = logits[target] + delta;
            }
            push_softmax(&logits, &mut frames);
        }
    }
    LogitMatrix::new(String::new(), alphabet.clone(), frames)
}

fn push_softmax(logits: &[f64], out: &mut Vec<f32>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    out.extend(logits.iter().map(|l| ((l - max).exp() / sum) as f32));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Alphabet {
        Alphabet::from_chars("ab ").unwrap()
    }

    fn argmax_collapse(m: &LogitMatrix) -> String {
        let mut out = String::new();
        let mut prev = None;
        for row in m.rows() {
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                .unwrap();
            if Some(best) != prev && best != 0 {
                out.push(m.alphabet().char_of(best).unwrap());
            }
            prev = Some(best);
        }
        out
    }

    #[test]
    fn alphabet_rules() {
        let a = abc();
        assert_eq!(a.len(), 4);
        assert_eq!(a.space(), Some(3));
        assert_eq!(a.char_index('b'), Some(2));
        assert_eq!(a.char_of(0), None);
        assert!(Alphabet::from_chars("").is_err());
        assert!(Alphabet::from_chars("aa").is_err());
        assert!(Alphabet::new(vec!["_".into(), "ab".into()]).is_err());
    }

    #[test]
    fn zero_noise_round_trip() {
        let m = synth_logits("ab", &abc(), 0.0, 7).unwrap();
        assert_eq!(argmax_collapse(&m), "ab");
        let m = synth_logits("", &abc(), 0.0, 7).unwrap();
        assert_eq!(m.num_frames(), 1);
        assert_eq!(argmax_collapse(&m), "");
        let m = synth_logits("aab ba", &abc(), 0.0, 7).unwrap();
        assert_eq!(argmax_collapse(&m), "aab ba");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_logits("a b", &abc(), 0.3, 7).unwrap();
        let b = synth_logits("a b", &abc(), 0.3, 7).unwrap();
        let c = synth_logits("a b", &abc(), 0.3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_foreign_characters() {
        assert!(matches!(
            synth_logits("abc", &abc(), 0.0, 1),
            Err(CorpusError::Alphabet { ch: 'c' })
        ));
        assert!(synth_logits("a", &abc(), 1.0, 1).is_err());
    }

    #[test]
    fn file_round_trip() {
        let m = synth_logits("ab a", &abc(), 0.2, 3).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"CTCL1");
        let back = LogitMatrix::read_from(buf.as_slice(), "").unwrap();
        assert_eq!(back, m);
        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(LogitMatrix::read_from(corrupt.as_slice(), "").is_err());
        assert!(LogitMatrix::read_from(&buf[..buf.len() - 3], "").is_err());
    }

    #[test]
    fn rows_must_normalize() {
        let a = abc();
        assert!(LogitMatrix::new("u", a.clone(), vec![0.5, 0.5, 0.0, 0.0]).is_ok());
        assert!(LogitMatrix::new("u", a.clone(), vec![0.5, 0.4, 0.0, 0.0]).is_err());
        assert!(LogitMatrix::new("u", a.clone(), vec![1.5, -0.5, 0.0, 0.0]).is_err());
        assert!(LogitMatrix::new("u", a, vec![]).is_err());
    }
}
