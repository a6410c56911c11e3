//! A synthetic conversational corpus with simulated acoustic logits.
//!
//! Words are short letter strings, many of which come in minimal pairs
//! differing in one confusable letter (`b`/`p`, `d`/`t`, `a`/`e`, ...).
//! Every conversation follows one topic; a topic owns a fixed set of
//! phrases and each utterance strings together one or two of them. Inside a
//! phrase the next word is determined by the phrase so far, while a single
//! preceding word says little, so long-context models beat short ones.
//!
//! Logit matrices come from [`synth_logits`](super::synth_logits) with the
//! competing symbol of a noisy character drawn from its confusion partner,
//! which produces both non-word and real-word errors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::logits::synth_logits_with;
use super::{Alphabet, Conversation, CorpusError, LogitMatrix, Split, Utterance};

const CONSONANTS: &[char] = &[
    'b', 'p', 'd', 't', 'g', 'k', 'm', 'n', 's', 'z', 'f', 'v', 'l', 'r', 'h', 'w',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const PAIRS: &[(char, char)] = &[
    ('b', 'p'),
    ('d', 't'),
    ('g', 'k'),
    ('m', 'n'),
    ('s', 'z'),
    ('f', 'v'),
    ('a', 'e'),
    ('o', 'u'),
];

/// The letter most easily mistaken for `ch`, if any.
pub fn confusion_partner(ch: char) -> Option<char> {
    PAIRS.iter().find_map(|&(a, b)| {
        if ch == a {
            Some(b)
        } else if ch == b {
            Some(a)
        } else {
            None
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub topics: usize,
    pub phrases_per_topic: usize,
    /// Inclusive word-count range of a phrase.
    pub phrase_len: (usize, usize),
    /// Conversations in the train, eval and test splits.
    pub conversations: [usize; 3],
    /// Inclusive range of utterances per conversation.
    pub utterances: (usize, usize),
    /// Probability that an utterance holds two phrases instead of one.
    pub two_phrase_prob: f64,
    /// Acoustic noise level for [`SyntheticCorpus::logits`].
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            vocab_size: 150,
            topics: 16,
            phrases_per_topic: 16,
            phrase_len: (4, 7),
            conversations: [60, 20, 20],
            utterances: (8, 14),
            two_phrase_prob: 0.3,
            noise: 0.7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub alphabet: Alphabet,
    /// Sorted and distinct.
    pub vocabulary: Vec<String>,
    pub conversations: Vec<Conversation>,
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    const PATTERNS: &[&str] = &["cv", "cvc", "cvcv", "cvcvc", "vcv", "cvvc"];
    let pat = PATTERNS.choose(rng).unwrap();
    pat.chars()
        .map(|p| {
            let set = if p == 'c' { CONSONANTS } else { VOWELS };
            *set.choose(rng).unwrap()
        })
        .collect()
}

/// `word` with its first confusable letter swapped for its partner.
fn minimal_pair(word: &str) -> Option<String> {
    let pos = word.chars().position(|c| confusion_partner(c).is_some())?;
    Some(
        word.chars()
            .enumerate()
            .map(|(i, c)| if i == pos { confusion_partner(c).unwrap() } else { c })
            .collect(),
    )
}

/// FNV-1a; stable across platforms and releases.
fn stable_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

impl SyntheticCorpus {
    pub fn generate(config: SyntheticConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let mut vocab: Vec<String> = Vec::new();
        let mut guard = 0;
        while vocab.len() < config.vocab_size && guard < 100_000 {
            guard += 1;
            let w = random_word(&mut rng);
            if vocab.contains(&w) {
                continue;
            }
            let partner = minimal_pair(&w).filter(|p| !vocab.contains(p));
            vocab.push(w);
            if let Some(p) = partner {
                if vocab.len() < config.vocab_size {
                    vocab.push(p);
                }
            }
        }

        let topics: Vec<Vec<Vec<String>>> = (0..config.topics)
            .map(|_| {
                (0..config.phrases_per_topic)
                    .map(|_| {
                        let n = rng.gen_range(config.phrase_len.0..=config.phrase_len.1);
                        (0..n).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect()
                    })
                    .collect()
            })
            .collect();

        let mut conversations = Vec::new();
        for (split, &count) in Split::ALL.iter().zip(&config.conversations) {
            for c in 0..count {
                let id = format!("{}{c:03}", split.as_str());
                let topic = &topics[rng.gen_range(0..topics.len())];
                let n = rng.gen_range(config.utterances.0..=config.utterances.1);
                let utterances = (0..n)
                    .map(|i| {
                        let mut words = topic.choose(&mut rng).unwrap().clone();
                        if rng.gen_bool(config.two_phrase_prob) {
                            words.extend(topic.choose(&mut rng).unwrap().iter().cloned());
                        }
                        let mut u = Utterance::new(&id, i, words);
                        u.speaker = Some(if i % 2 == 0 { "A" } else { "B" }.to_string());
                        u
                    })
                    .collect();
                conversations.push(Conversation {
                    id,
                    split: *split,
                    utterances,
                });
            }
        }

        vocab.sort();
        SyntheticCorpus {
            alphabet: Alphabet::from_chars("abcdefghijklmnopqrstuvwxyz ").expect("valid alphabet"),
            vocabulary: vocab,
            conversations,
            config,
        }
    }

    pub fn split(&self, split: Split) -> Vec<Conversation> {
        self.conversations
            .iter()
            .filter(|c| c.split == split)
            .cloned()
            .collect()
    }

    /// Simulated acoustic model output for an utterance; deterministic in
    /// the corpus seed and the utterance id.
    pub fn logits(&self, utterance: &Utterance) -> Result<LogitMatrix, CorpusError> {
        let seed = self.config.seed ^ stable_hash(&utterance.id);
        let alphabet = &self.alphabet;
        let mut m = synth_logits_with(
            &utterance.text_string(),
            alphabet,
            self.config.noise,
            seed,
            |target, _| {
                let ch = alphabet.char_of(target)?;
                alphabet.char_index(confusion_partner(ch)?)
            },
        )?;
        m.utterance_id = utterance.id.clone();
        Ok(m)
    }
}
