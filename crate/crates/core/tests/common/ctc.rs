//! Exhaustive enumeration of CTC alignments on tiny instances.

use std::collections::HashMap;

use ctc_rescore::corpus::{tokenize, Alphabet, LogitMatrix};
use ctc_rescore::decoder::BeamConfig;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Transcript probability by summing every alignment: collapse repeats,
/// drop blanks, split into words.
pub fn enumerate(z: &LogitMatrix) -> HashMap<Vec<String>, f64> {
    let (t, k) = (z.num_frames(), z.num_symbols());
    let alphabet = z.alphabet();
    let mut out = HashMap::new();
    let mut path = vec![0usize; t];
    loop {
        let mut p = 1.0f64;
        let mut text = String::new();
        let mut prev = None;
        for (f, &s) in path.iter().enumerate() {
            p *= z.row(f)[s] as f64;
            if Some(s) != prev && s != alphabet.blank() {
                text.push(alphabet.char_of(s).unwrap());
            }
            prev = Some(s);
        }
        *out.entry(tokenize(&text)).or_insert(0.0) += p;
        // Next path in lexicographic order.
        let mut i = t;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < k {
                break;
            }
            path[i] = 0;
        }
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> LogitMatrix {
    let t = rng.gen_range(1..=8);
    let k = rng.gen_range(2..=4);
    let symbols = match k {
        2 => "a",
        3 if rng.gen_bool(0.5) => "ab",
        3 => "a ",
        _ => "ab ",
    };
    let alphabet = Alphabet::from_chars(symbols).unwrap();
    // Peaked rows make some instances easy, flat rows make others close.
    let sharpness = rng.gen_range(0.5..4.0);
    let mut frames = Vec::with_capacity(t * k);
    for _ in 0..t {
        let raw: Vec<f64> = (0..k)
            .map(|_| (sharpness * rng.gen_range(-1.0..1.0f64)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        frames.extend(raw.iter().map(|x| (x / sum) as f32));
    }
    LogitMatrix::new("x", alphabet, frames).unwrap()
}

pub fn exact_config(z: &LogitMatrix) -> BeamConfig {
    BeamConfig {
        beam_width: z.num_symbols().pow(z.num_frames() as u32),
        mass_floor: None,
        ..BeamConfig::default()
    }
}
