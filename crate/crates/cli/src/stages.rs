//! Loading and building what the commands share: corpus, logits, models,
//! tuned parameters and the scorer.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ctc_rescore::corpus::{context_window, context_window_from, load_corpus, Conversation, LogitMatrix, Split};
use ctc_rescore::decoder::{char_tokens, read_nbest, write_nbest, BeamConfig, BonusPoint, NBestList};
use ctc_rescore::fmt::round_sig;
use ctc_rescore::ngram::{load_arpa, NGramModel};
use ctc_rescore::rescore::{interpolate, top_candidate};
use ctc_rescore::scorer::{score_nbest_lists, CachedScorer, Endpoint, NgramScorer, Scorer};
use ctc_rescore::trie::PrefixTrie;
use sha2::{Digest, Sha256};

use crate::config::{Config, Tunable, Unit};
use crate::manifest::{hash_file, Manifest};
use crate::UsageError;

pub const LOGIT_EXT: &str = "ctcl";

pub struct Ctx {
    pub cfg: Config,
    /// Set only by evaluation commands running on the test split.
    test_mode: bool,
}

/// Output file of a stage, with the command that produces it.
pub struct Artifact {
    pub stage: &'static str,
    pub file: String,
    pub producer: String,
}

impl Artifact {
    pub fn new(stage: &'static str, file: impl Into<String>, producer: impl Into<String>) -> Self {
        Artifact {
            stage,
            file: file.into(),
            producer: producer.into(),
        }
    }
}

impl Ctx {
    pub fn new(cfg: Config) -> Self {
        Ctx { cfg, test_mode: false }
    }

    pub fn enter_test_mode(&mut self) {
        self.test_mode = true;
    }

    pub fn out(&self) -> PathBuf {
        self.cfg.output_dir()
    }

    /// Creates (and empties) the output directory of a stage.
    pub fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.out().join(stage);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    pub fn manifest(&self, command: &str) -> Manifest {
        let config = self
            .cfg
            .effective()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Manifest::new(command, self.cfg.hash(), config)
    }

    /// Path of an artifact that must already exist.
    pub fn require(&self, a: &Artifact) -> Result<PathBuf> {
        let p = self.out().join(a.stage).join(&a.file);
        if !p.is_file() {
            bail!("missing {}; run `ctc-rescore {}` first", p.display(), a.producer);
        }
        Ok(p)
    }

    pub fn conversations(&self, split: Split) -> Result<Vec<Conversation>> {
        if split == Split::Test && !self.test_mode {
            bail!(UsageError(
                "the test split is only read by `eval` and `report` with --split test".into()
            ));
        }
        let path = self.cfg.corpus();
        let convs = load_corpus(&path, Some(split)).with_context(|| format!("reading corpus {}", path.display()))?;
        if convs.is_empty() {
            bail!("corpus {} has no {split} conversations", path.display());
        }
        Ok(convs)
    }

    pub fn logits(&self, convs: &[Conversation]) -> Result<Vec<LogitMatrix>> {
        let dir = self.cfg.logits_dir();
        convs
            .iter()
            .flat_map(|c| &c.utterances)
            .map(|u| {
                let p = dir.join(format!("{}.{LOGIT_EXT}", u.id));
                LogitMatrix::load(&p).with_context(|| format!("reading logits {}", p.display()))
            })
            .collect()
    }

    /// Logits paired with reference transcripts.
    pub fn labelled(&self, convs: &[Conversation]) -> Result<Vec<(LogitMatrix, Vec<String>)>> {
        let mats = self.logits(convs)?;
        Ok(mats
            .into_iter()
            .zip(convs.iter().flat_map(|c| &c.utterances))
            .map(|(z, u)| (z, u.text.clone()))
            .collect())
    }

    /// The vocabulary file, or every word of the training split.
    pub fn vocabulary(&self) -> Result<Vec<String>> {
        match self.cfg.vocabulary() {
            Some(p) => {
                let text = fs::read_to_string(&p).with_context(|| format!("reading vocabulary {}", p.display()))?;
                Ok(text.split_whitespace().map(str::to_string).collect())
            }
            None => {
                let mut words: Vec<String> = self
                    .conversations(Split::Train)?
                    .iter()
                    .flat_map(|c| &c.utterances)
                    .flat_map(|u| u.text.iter().cloned())
                    .collect();
                words.sort();
                words.dedup();
                Ok(words)
            }
        }
    }

    pub fn vocabulary_input(&self) -> PathBuf {
        self.cfg.vocabulary().unwrap_or_else(|| self.cfg.corpus())
    }

    /// Training sentences in the unit of the fusion LM.
    pub fn lm_sentences(&self, unit: Unit) -> Result<Vec<Vec<String>>> {
        Ok(self
            .conversations(Split::Train)?
            .iter()
            .flat_map(|c| &c.utterances)
            .map(|u| match unit {
                Unit::Word => u.text.clone(),
                Unit::Char => char_tokens(&u.text),
            })
            .collect())
    }

    fn load_lm(&self, file: &str) -> Result<Arc<NGramModel>> {
        let p = self.require(&Artifact::new("train-lm", file, "train-lm"))?;
        Ok(Arc::new(
            load_arpa(&p).with_context(|| format!("reading {}", p.display()))?,
        ))
    }

    pub fn fusion_lm_path(&self) -> Result<PathBuf> {
        self.require(&Artifact::new("train-lm", "lm.arpa", "train-lm"))
    }

    pub fn scorer_lm_path(&self) -> Result<PathBuf> {
        self.require(&Artifact::new("train-lm", "scorer_lm.arpa", "train-lm"))
    }

    /// Fusion weights from the config or from `tune-beam`.
    pub fn weights(&self) -> Result<(f64, f64)> {
        let tuned = || -> Result<HashMap<String, f64>> {
            read_key_values(&self.require(&Artifact::new("tune-beam", "best.txt", "tune-beam"))?)
        };
        let pick = |t: Tunable, key: &str| -> Result<f64> {
            match t {
                Tunable::Fixed(v) => Ok(v),
                Tunable::Tuned => tuned()?
                    .get(key)
                    .copied()
                    .with_context(|| format!("tune-beam result lacks {key}")),
            }
        };
        Ok((pick(self.cfg.alpha(), "alpha")?, pick(self.cfg.beta(), "beta")?))
    }

    /// Tuned-parameter files the weights came from, for manifests.
    pub fn weight_inputs(&self) -> Vec<PathBuf> {
        if self.cfg.alpha() == Tunable::Tuned || self.cfg.beta() == Tunable::Tuned {
            vec![self.out().join("tune-beam/best.txt")]
        } else {
            vec![]
        }
    }

    /// Interpolation weight from the config or from `tune-gamma`, which
    /// only ever tunes on the eval split.
    pub fn gamma(&self) -> Result<f64> {
        match self.cfg.gamma() {
            Tunable::Fixed(g) => Ok(g),
            Tunable::Tuned => {
                let p = self.require(&Artifact::new("tune-gamma", "best.txt", "tune-gamma"))?;
                read_key_values(&p)?
                    .get("gamma")
                    .copied()
                    .context("tune-gamma result lacks gamma")
            }
        }
    }

    pub fn gamma_inputs(&self) -> Vec<PathBuf> {
        if self.cfg.gamma() == Tunable::Tuned {
            vec![self.out().join("tune-gamma/best.txt")]
        } else {
            vec![]
        }
    }

    /// Beam configuration with the configured vocabulary and LM switches.
    pub fn beam_config(&self, width: usize, (alpha, beta): (f64, f64)) -> Result<BeamConfig> {
        let unit = self.cfg.lm_unit();
        let trie = if self.cfg.use_vocabulary() {
            Some(Arc::new(PrefixTrie::build(self.vocabulary()?.iter())?))
        } else {
            None
        };
        let lm = if self.cfg.use_lm() {
            Some(self.load_lm("lm.arpa")?)
        } else {
            None
        };
        if lm.is_some() && trie.is_none() && unit == Unit::Word {
            bail!(UsageError("a word-level LM needs beam.vocabulary = true".into()));
        }
        Ok(BeamConfig {
            beam_width: width,
            alpha,
            beta,
            lm,
            trie,
            bonus_point: match unit {
                Unit::Word => BonusPoint::WordBoundary,
                Unit::Char => BonusPoint::EveryCharacter,
            },
            mass_floor: self.cfg.mass_floor(),
        })
    }

    pub fn beam_inputs(&self) -> Result<Vec<PathBuf>> {
        let mut v = vec![self.vocabulary_input()];
        if self.cfg.use_lm() {
            v.push(self.fusion_lm_path()?);
        }
        Ok(v)
    }

    /// The configured scorer, cached when enabled. The cache file name
    /// depends on the endpoint, mode and, for the built-in scorer, the model.
    pub fn scorer(&self) -> Result<ScorerHandle> {
        let endpoint = self.cfg.scorer();
        let mut identity = Sha256::new();
        identity.update(self.cfg.scorer_spec());
        identity.update(self.cfg.scorer_mode().as_str());
        let inner: Box<dyn Scorer> = match endpoint.connect(self.cfg.scorer_timeout(), self.cfg.scorer_window())? {
            Some(remote) => Box::new(remote),
            None => {
                debug_assert_eq!(endpoint, Endpoint::Builtin);
                let p = self.scorer_lm_path()?;
                identity.update(hash_file(&p)?);
                Box::new(NgramScorer::new(self.load_lm("scorer_lm.arpa")?))
            }
        };
        let cached = CachedScorer::new(inner);
        let cache_path = if self.cfg.scorer_cache() {
            let dir = self.out().join("cache");
            fs::create_dir_all(&dir)?;
            let p = dir.join(format!("scores-{}.jsonl", &format!("{:x}", identity.finalize())[..16]));
            if p.is_file() {
                cached
                    .load(&p)
                    .with_context(|| format!("reading score cache {}", p.display()))?;
            }
            Some(p)
        } else {
            None
        };
        Ok(ScorerHandle { cached, cache_path })
    }

    pub fn scorer_inputs(&self) -> Result<Vec<PathBuf>> {
        Ok(match self.cfg.scorer() {
            Endpoint::Builtin => vec![self.scorer_lm_path()?],
            _ => vec![],
        })
    }

    /// Scorer context of every utterance, by utterance id.
    pub fn contexts(&self, convs: &[Conversation], lists: &[NBestList]) -> Result<HashMap<String, Vec<String>>> {
        let k = self.cfg.context_len();
        let decoded: HashMap<&str, &NBestList> = lists.iter().map(|l| (l.utterance_id.as_str(), l)).collect();
        let mut out = HashMap::new();
        for conv in convs {
            let hyps: Vec<Vec<String>> = if self.cfg.decoded_context() {
                conv.utterances
                    .iter()
                    .map(|u| {
                        decoded
                            .get(u.id.as_str())
                            .and_then(|l| top_candidate(l).ok())
                            .map(|c| c.text.clone())
                            .unwrap_or_default()
                    })
                    .collect()
            } else {
                vec![]
            };
            for (i, u) in conv.utterances.iter().enumerate() {
                let w = if self.cfg.decoded_context() {
                    context_window_from(&hyps, i, k)?
                } else {
                    context_window(conv, i, k)?
                };
                out.insert(u.id.clone(), w.texts());
            }
        }
        Ok(out)
    }

    /// The lists with scorer scores attached, original order kept.
    pub fn score(&self, scorer: &ScorerHandle, convs: &[Conversation], lists: &[NBestList]) -> Result<Vec<NBestList>> {
        let contexts = self.contexts(convs, lists)?;
        let items: Vec<(&NBestList, Vec<String>)> = lists
            .iter()
            .map(|l| {
                let ctx = contexts.get(&l.utterance_id).cloned().unwrap_or_default();
                (l, ctx)
            })
            .collect();
        let mut scores = score_nbest_lists(&scorer.cached, &items, self.cfg.scorer_mode())?;
        scorer.persist()?;
        // Remote scores arrive at wire precision; match it for the builtin.
        for s in scores.iter_mut().flat_map(|m| m.values_mut()) {
            *s = round_sig(*s, 9);
        }
        lists
            .iter()
            .zip(&scores)
            .map(|(l, s)| Ok(interpolate(l, s, 0.0, self.cfg.standardize())?))
            .collect()
    }
}

pub struct ScorerHandle {
    pub cached: CachedScorer<Box<dyn Scorer>>,
    cache_path: Option<PathBuf>,
}

impl ScorerHandle {
    fn persist(&self) -> Result<()> {
        if let Some(p) = &self.cache_path {
            self.cached
                .save(p)
                .with_context(|| format!("writing score cache {}", p.display()))?;
        }
        Ok(())
    }
}

/// `key=value` lines with numeric values.
pub fn read_key_values(path: &Path) -> Result<HashMap<String, f64>> {
    let f = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if let Some((k, v)) = line.split_once('=') {
            if let Ok(x) = v.trim().parse() {
                out.insert(k.trim().to_string(), x);
            }
        }
    }
    Ok(out)
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

pub fn save_nbest(path: &Path, lists: &[NBestList]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("writing {}", path.display()))?);
    write_nbest(&mut w, lists)?;
    w.flush()?;
    Ok(())
}

pub fn load_nbest(path: &Path) -> Result<Vec<NBestList>> {
    let f = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    read_nbest(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

/// Split names accepted by a stage command.
pub fn parse_split(s: &str, allowed: &[Split]) -> Result<Split> {
    let split: Split = s.parse().map_err(|e: String| UsageError(e))?;
    if !allowed.contains(&split) {
        let names: Vec<&str> = allowed.iter().map(|s| s.as_str()).collect();
        bail!(UsageError(format!(
            "split {split} is not allowed here; use one of {}",
            names.join(", ")
        )));
    }
    Ok(split)
}
