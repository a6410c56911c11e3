//! The synthetic experiment: language models trained on the train split,
//! beams decoded on eval and test, reference scores from a 6-gram.

use std::collections::HashMap;
use std::sync::Arc;

use ctc_rescore::corpus::synthetic::{SyntheticConfig, SyntheticCorpus};
use ctc_rescore::corpus::{context_window, LogitMatrix, Split};
use ctc_rescore::decoder::{decode_all, BeamConfig, BeamDecoder, NBestList};
use ctc_rescore::metrics::{total_wer, EvalPair};
use ctc_rescore::ngram::{train, NGramModel, PruneConfig};
use ctc_rescore::rescore::{interpolate, unique_texts};
use ctc_rescore::scorer::NgramScorer;
use ctc_rescore::trie::PrefixTrie;
use ctc_rescore::tuning::{random_search_beam, BeamObjective, BeamRanges};

pub const CONTEXT: usize = 2;

pub struct Utt {
    pub logits: LogitMatrix,
    pub reference: Vec<String>,
    /// Ground-truth previous utterances.
    pub context: Vec<String>,
}

pub struct Pipeline {
    pub corpus: SyntheticCorpus,
    pub lm2: Arc<NGramModel>,
    pub lm6: Arc<NGramModel>,
    pub trie: Arc<PrefixTrie>,
    pub train: Vec<Utt>,
    pub eval: Vec<Utt>,
    pub test: Vec<Utt>,
}

impl Pipeline {
    pub fn build(config: SyntheticConfig) -> Self {
        let corpus = SyntheticCorpus::generate(config);
        let sentences: Vec<Vec<String>> = corpus
            .split(Split::Train)
            .iter()
            .flat_map(|c| c.utterances.iter().map(|u| u.text.clone()))
            .collect();
        let lm2 = Arc::new(train(&sentences, 2, &PruneConfig::singletons(2)).unwrap());
        let lm6 = Arc::new(train(&sentences, 6, &PruneConfig::singletons(6)).unwrap());
        let trie = Arc::new(PrefixTrie::build(corpus.vocabulary.iter()).unwrap());
        let load = |split| {
            corpus
                .split(split)
                .iter()
                .flat_map(|conv| {
                    conv.utterances.iter().enumerate().map(|(i, u)| Utt {
                        logits: corpus.logits(u).unwrap(),
                        reference: u.text.clone(),
                        context: context_window(conv, i, CONTEXT).unwrap().texts(),
                    })
                })
                .collect::<Vec<_>>()
        };
        Pipeline {
            train: load(Split::Train),
            eval: load(Split::Eval),
            test: load(Split::Test),
            corpus,
            lm2,
            lm6,
            trie,
        }
    }

    pub fn vocab_config(&self, width: usize) -> BeamConfig {
        BeamConfig {
            beam_width: width,
            trie: Some(self.trie.clone()),
            ..BeamConfig::default()
        }
    }

    pub fn fusion_config(&self, width: usize, (alpha, beta): (f64, f64)) -> BeamConfig {
        BeamConfig {
            alpha,
            beta,
            lm: Some(self.lm2.clone()),
            ..self.vocab_config(width)
        }
    }

    /// Fusion weights tuned on the eval split with a narrow beam.
    pub fn tune(&self, objective: BeamObjective, seed: u64) -> (f64, f64) {
        let eval: Vec<(LogitMatrix, Vec<String>)> = self
            .eval
            .iter()
            .map(|u| (u.logits.clone(), u.reference.clone()))
            .collect();
        let r = random_search_beam(
            &eval,
            &self.fusion_config(16, (0.0, 0.0)),
            objective,
            16,
            BeamRanges::default(),
            seed,
        )
        .unwrap();
        (r.best_params["alpha"], r.best_params["beta"])
    }

    pub fn decode(&self, config: &BeamConfig, utts: &[Utt]) -> Vec<NBestList> {
        let dec = BeamDecoder::new(config.clone()).unwrap();
        let mats: Vec<LogitMatrix> = utts.iter().map(|u| u.logits.clone()).collect();
        let by_id: HashMap<String, NBestList> = decode_all(&dec, &mats)
            .into_iter()
            .map(|r| {
                let nb = r.unwrap();
                (nb.utterance_id.clone(), nb)
            })
            .collect();
        mats.iter().map(|z| by_id[&z.utterance_id].clone()).collect()
    }

    /// The lists with 6-gram scores attached, in their original order.
    pub fn attach_scores(&self, lists: &[NBestList]) -> Vec<NBestList> {
        let scorer = NgramScorer::new(self.lm6.clone());
        lists
            .iter()
            .map(|nb| {
                let scores = unique_texts(nb).into_iter().map(|t| {
                    let s = scorer.score_text(&t);
                    (t, s)
                });
                interpolate(nb, &scores.collect(), 0.0, false).unwrap()
            })
            .collect()
    }
}

pub fn wer<'a>(hyps: impl IntoIterator<Item = &'a Vec<String>>, utts: &[Utt]) -> f64 {
    let pairs: Vec<EvalPair> = hyps
        .into_iter()
        .zip(utts)
        .map(|(h, u)| EvalPair::new(u.reference.clone(), h.clone()))
        .collect();
    assert_eq!(pairs.len(), utts.len());
    total_wer(&pairs).unwrap()
}
