//! Plain-text `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected, every key except the seeds and paths has a default, and
//! relative paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ctc_rescore::scorer::{Endpoint, ScorerMode};
use ctc_rescore::taskgen::Target;
use ctc_rescore::tuning::BeamObjective;
use sha2::{Digest, Sha256};

/// Environment variable that replaces the `scorer` key.
pub const SCORER_ENV: &str = "CTC_RESCORE_SCORER";

/// `(key, default)`; `None` marks a mandatory key.
const KEYS: &[(&str, Option<&str>)] = &[
    ("corpus", None),
    ("logits_dir", None),
    ("output_dir", None),
    ("vocabulary", Some("")),
    ("seed.data", None),
    ("seed.tune", None),
    ("seed.tasks", None),
    ("workers", Some("0")),
    ("lm.order", Some("2")),
    ("lm.prune", Some("singletons")),
    ("lm.discounting", Some("modified")),
    ("lm.unit", Some("word")),
    ("beam.width", Some("256")),
    ("beam.alpha", Some("tuned")),
    ("beam.beta", Some("tuned")),
    ("beam.mass_floor", Some("30")),
    ("beam.vocabulary", Some("true")),
    ("beam.lm", Some("true")),
    ("tune.trials", Some("64")),
    ("tune.width", Some("16")),
    ("tune.alpha_range", Some("0,5")),
    ("tune.beta_range", Some("0,5")),
    ("tune.objective", Some("top1")),
    ("gamma.range", Some("0,0.5")),
    ("gamma.step", Some("0.001")),
    ("rescore.gamma", Some("tuned")),
    ("rescore.standardize", Some("false")),
    ("scorer", Some("builtin")),
    ("scorer.mode", Some("mlm_pll")),
    ("scorer.lm_order", Some("6")),
    ("scorer.timeout_ms", Some("60000")),
    ("scorer.window", Some("64")),
    ("scorer.cache", Some("true")),
    ("context", Some("short")),
    ("context.source", Some("reference")),
    ("tasks.cnsp_ratio", Some("0.5")),
    ("tasks.negatives", Some("2")),
    ("tasks.target", Some("oracle")),
    ("eval.bin_width", Some("4")),
    ("synth.vocab_size", Some("150")),
    ("synth.topics", Some("16")),
    ("synth.phrases_per_topic", Some("16")),
    ("synth.phrase_len", Some("4,7")),
    ("synth.conversations", Some("60,20,20")),
    ("synth.utterances", Some("8,14")),
    ("synth.two_phrase_prob", Some("0.3")),
    ("synth.noise", Some("0.7")),
];

const PATH_KEYS: &[&str] = &["corpus", "logits_dir", "output_dir", "vocabulary"];

#[derive(Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// A numeric setting that may instead come from a tuning stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tunable {
    Fixed(f64),
    Tuned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Word,
    Char,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prune {
    Singletons,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

fn parse_pair<T: FromStr>(s: &str) -> Option<(T, T)> {
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl Config {
    /// Parses `text`; `base` anchors relative paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigErrors> {
        let mut cfg = Config {
            values: BTreeMap::new(),
            base: base.to_path_buf(),
        };
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v.trim()) {
                        errors.push(format!("line {}: {e}", i + 1));
                    }
                }
                None => errors.push(format!("line {}: expected `key = value`", i + 1)),
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(format!("unknown key `{key}`"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), String> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("override `{kv}` is not key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(SCORER_ENV) {
            if !v.is_empty() {
                self.values.insert("scorer".into(), v);
            }
        }
    }

    fn raw(&self, key: &str) -> &str {
        if let Some(v) = self.values.get(key) {
            return v;
        }
        KEYS.iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, d)| *d)
            .unwrap_or_else(|| panic!("no value for `{key}`; validate first"))
    }

    fn get<T: FromStr>(&self, key: &str) -> T {
        self.raw(key)
            .parse()
            .unwrap_or_else(|_| panic!("bad `{key}`; validate first"))
    }

    /// Every key with its effective value, sorted. Paths appear as written.
    pub fn effective(&self) -> BTreeMap<&'static str, String> {
        KEYS.iter()
            .filter(|(k, d)| d.is_some() || self.values.contains_key(*k))
            .map(|(k, _)| (*k, self.raw(k).to_string()))
            .collect()
    }

    /// SHA-256 of the effective configuration, paths excluded so that a
    /// moved experiment keeps its hash.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.effective() {
            if !PATH_KEYS.contains(&k) {
                h.update(format!("{k}={v}\n"));
            }
        }
        format!("{:x}", h.finalize())
    }

    /// Checks every key and returns all problems at once.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errors = Vec::new();
        for (k, d) in KEYS {
            if d.is_none() && !self.values.contains_key(*k) {
                errors.push(format!("missing mandatory key `{k}`"));
            }
        }
        let mut check = |key: &str, ok: bool, what: &str| {
            if !ok {
                errors.push(format!("`{key}` = {:?}: expected {what}", self.raw(key)));
            }
        };
        let is = |key: &str, f: &dyn Fn(&str) -> bool| match self.values.get(key) {
            Some(v) => f(v),
            None => KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d).is_none_or(f),
        };
        let uint = |s: &str| s.parse::<usize>().is_ok();
        let pos = |s: &str| s.parse::<usize>().is_ok_and(|n| n > 0);
        let real = |s: &str| s.parse::<f64>().is_ok_and(f64::is_finite);
        let tunable = |s: &str| s == "tuned" || real(s);
        let range = |s: &str| parse_pair::<f64>(s).is_some_and(|(a, b)| a.is_finite() && b.is_finite() && a <= b);
        let unit_range = |s: &str| parse_pair::<f64>(s).is_some_and(|(a, b)| 0.0 <= a && a <= b && b <= 1.0);
        let urange = |s: &str| parse_pair::<usize>(s).is_some_and(|(a, b)| 0 < a && a <= b);

        for key in ["seed.data", "seed.tune", "seed.tasks"] {
            if self.values.contains_key(key) {
                check(key, is(key, &|s| s.parse::<u64>().is_ok()), "an unsigned integer");
            }
        }
        check("workers", is("workers", &uint), "an unsigned integer");
        check("lm.order", is("lm.order", &pos), "a positive integer");
        check(
            "lm.prune",
            is("lm.prune", &|s| matches!(s, "singletons" | "none")),
            "singletons or none",
        );
        check(
            "lm.discounting",
            is("lm.discounting", &|s| matches!(s, "modified" | "single")),
            "modified or single",
        );
        check(
            "lm.unit",
            is("lm.unit", &|s| matches!(s, "word" | "char")),
            "word or char",
        );
        check("beam.width", is("beam.width", &pos), "a positive integer");
        check("beam.alpha", is("beam.alpha", &tunable), "a number or `tuned`");
        check("beam.beta", is("beam.beta", &tunable), "a number or `tuned`");
        check(
            "beam.mass_floor",
            is("beam.mass_floor", &|s| {
                s == "none" || s.parse::<f64>().is_ok_and(|x| x > 0.0)
            }),
            "a positive number or `none`",
        );
        check(
            "beam.vocabulary",
            is("beam.vocabulary", &|s| parse_bool(s).is_some()),
            "true or false",
        );
        check("beam.lm", is("beam.lm", &|s| parse_bool(s).is_some()), "true or false");
        check("tune.trials", is("tune.trials", &pos), "a positive integer");
        check("tune.width", is("tune.width", &pos), "a positive integer");
        check(
            "tune.alpha_range",
            is("tune.alpha_range", &range),
            "`lo,hi` with lo <= hi",
        );
        check(
            "tune.beta_range",
            is("tune.beta_range", &range),
            "`lo,hi` with lo <= hi",
        );
        check(
            "tune.objective",
            is("tune.objective", &|s| matches!(s, "top1" | "oracle")),
            "top1 or oracle",
        );
        check("gamma.range", is("gamma.range", &unit_range), "`lo,hi` within [0, 1]");
        check(
            "gamma.step",
            is("gamma.step", &|s| s.parse::<f64>().is_ok_and(|x| x > 0.0)),
            "a positive number",
        );
        check(
            "rescore.gamma",
            is("rescore.gamma", &|s| {
                s == "tuned" || s.parse::<f64>().is_ok_and(|g| (0.0..=1.0).contains(&g))
            }),
            "a number in [0, 1] or `tuned`",
        );
        check(
            "rescore.standardize",
            is("rescore.standardize", &|s| parse_bool(s).is_some()),
            "true or false",
        );
        check(
            "scorer",
            is("scorer", &|s| Endpoint::parse(s).is_ok()),
            "builtin, cmd:<program args> or tcp:<host:port>",
        );
        check(
            "scorer.mode",
            is("scorer.mode", &|s| s.parse::<ScorerMode>().is_ok()),
            "mlm_pll, nsp or classifier",
        );
        check("scorer.lm_order", is("scorer.lm_order", &pos), "a positive integer");
        check("scorer.timeout_ms", is("scorer.timeout_ms", &pos), "a positive integer");
        check("scorer.window", is("scorer.window", &pos), "a positive integer");
        check(
            "scorer.cache",
            is("scorer.cache", &|s| parse_bool(s).is_some()),
            "true or false",
        );
        check(
            "context",
            is("context", &|s| matches!(s, "none" | "short" | "long") || uint(s)),
            "none, short, long or a number of utterances",
        );
        check(
            "context.source",
            is("context.source", &|s| matches!(s, "reference" | "decoded")),
            "reference or decoded",
        );
        check(
            "tasks.cnsp_ratio",
            is("tasks.cnsp_ratio", &|s| {
                s.parse::<f64>().is_ok_and(|r| (0.0..1.0).contains(&r))
            }),
            "a number in [0, 1)",
        );
        check("tasks.negatives", is("tasks.negatives", &pos), "a positive integer");
        check(
            "tasks.target",
            is("tasks.target", &|s| matches!(s, "oracle" | "reference")),
            "oracle or reference",
        );
        check("eval.bin_width", is("eval.bin_width", &pos), "a positive integer");
        check("synth.vocab_size", is("synth.vocab_size", &pos), "a positive integer");
        check("synth.topics", is("synth.topics", &pos), "a positive integer");
        check(
            "synth.phrases_per_topic",
            is("synth.phrases_per_topic", &pos),
            "a positive integer",
        );
        check(
            "synth.phrase_len",
            is("synth.phrase_len", &urange),
            "`lo,hi` with 0 < lo <= hi",
        );
        check(
            "synth.conversations",
            is("synth.conversations", &|s| {
                let v: Vec<_> = s.split(',').map(|x| x.trim().parse::<usize>()).collect();
                v.len() == 3 && v.iter().all(Result::is_ok)
            }),
            "three counts `train,eval,test`",
        );
        check(
            "synth.utterances",
            is("synth.utterances", &urange),
            "`lo,hi` with 0 < lo <= hi",
        );
        check(
            "synth.two_phrase_prob",
            is("synth.two_phrase_prob", &|s| {
                s.parse::<f64>().is_ok_and(|p| (0.0..=1.0).contains(&p))
            }),
            "a probability",
        );
        check(
            "synth.noise",
            is("synth.noise", &|s| {
                s.parse::<f64>().is_ok_and(|p| (0.0..1.0).contains(&p))
            }),
            "a number in [0, 1)",
        );
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }

    fn path(&self, key: &str) -> PathBuf {
        let p = Path::new(self.raw(key));
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn corpus(&self) -> PathBuf {
        self.path("corpus")
    }

    pub fn logits_dir(&self) -> PathBuf {
        self.path("logits_dir")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path("output_dir")
    }

    /// `None` when the vocabulary comes from the training split.
    pub fn vocabulary(&self) -> Option<PathBuf> {
        (!self.raw("vocabulary").is_empty()).then(|| self.path("vocabulary"))
    }

    pub fn seed(&self, stage: &str) -> u64 {
        self.get(&format!("seed.{stage}"))
    }

    pub fn workers(&self) -> usize {
        self.get("workers")
    }

    pub fn lm_order(&self) -> usize {
        self.get("lm.order")
    }

    pub fn lm_prune(&self) -> Prune {
        if self.raw("lm.prune") == "none" {
            Prune::None
        } else {
            Prune::Singletons
        }
    }

    pub fn lm_single_discount(&self) -> bool {
        self.raw("lm.discounting") == "single"
    }

    pub fn lm_unit(&self) -> Unit {
        if self.raw("lm.unit") == "char" {
            Unit::Char
        } else {
            Unit::Word
        }
    }

    pub fn beam_width(&self) -> usize {
        self.get("beam.width")
    }

    fn tunable(&self, key: &str) -> Tunable {
        match self.raw(key) {
            "tuned" => Tunable::Tuned,
            v => Tunable::Fixed(v.parse().expect("validated")),
        }
    }

    pub fn alpha(&self) -> Tunable {
        self.tunable("beam.alpha")
    }

    pub fn beta(&self) -> Tunable {
        self.tunable("beam.beta")
    }

    pub fn gamma(&self) -> Tunable {
        self.tunable("rescore.gamma")
    }

    pub fn mass_floor(&self) -> Option<f64> {
        match self.raw("beam.mass_floor") {
            "none" => None,
            v => Some(v.parse().expect("validated")),
        }
    }

    pub fn use_vocabulary(&self) -> bool {
        parse_bool(self.raw("beam.vocabulary")).expect("validated")
    }

    pub fn use_lm(&self) -> bool {
        parse_bool(self.raw("beam.lm")).expect("validated")
    }

    pub fn tune_trials(&self) -> usize {
        self.get("tune.trials")
    }

    pub fn tune_width(&self) -> usize {
        self.get("tune.width")
    }

    pub fn alpha_range(&self) -> (f64, f64) {
        parse_pair(self.raw("tune.alpha_range")).expect("validated")
    }

    pub fn beta_range(&self) -> (f64, f64) {
        parse_pair(self.raw("tune.beta_range")).expect("validated")
    }

    pub fn tune_objective(&self) -> BeamObjective {
        if self.raw("tune.objective") == "oracle" {
            BeamObjective::OracleWed
        } else {
            BeamObjective::Top1Wed
        }
    }

    pub fn gamma_range(&self) -> (f64, f64) {
        parse_pair(self.raw("gamma.range")).expect("validated")
    }

    pub fn gamma_step(&self) -> f64 {
        self.get("gamma.step")
    }

    pub fn standardize(&self) -> bool {
        parse_bool(self.raw("rescore.standardize")).expect("validated")
    }

    pub fn scorer(&self) -> Endpoint {
        Endpoint::parse(self.raw("scorer")).expect("validated")
    }

    pub fn scorer_spec(&self) -> &str {
        self.raw("scorer")
    }

    pub fn scorer_mode(&self) -> ScorerMode {
        self.get("scorer.mode")
    }

    pub fn scorer_lm_order(&self) -> usize {
        self.get("scorer.lm_order")
    }

    pub fn scorer_timeout(&self) -> std::time::Duration {
        std::time::Duration::from_millis(self.get("scorer.timeout_ms"))
    }

    pub fn scorer_window(&self) -> usize {
        self.get("scorer.window")
    }

    pub fn scorer_cache(&self) -> bool {
        parse_bool(self.raw("scorer.cache")).expect("validated")
    }

    /// Number of preceding utterances given to the scorer.
    pub fn context_len(&self) -> usize {
        match self.raw("context") {
            "none" => 0,
            "short" => 2,
            "long" => 5,
            v => v.parse().expect("validated"),
        }
    }

    pub fn decoded_context(&self) -> bool {
        self.raw("context.source") == "decoded"
    }

    pub fn cnsp_ratio(&self) -> f64 {
        self.get("tasks.cnsp_ratio")
    }

    pub fn task_negatives(&self) -> usize {
        self.get("tasks.negatives")
    }

    pub fn task_target(&self) -> Target {
        if self.raw("tasks.target") == "reference" {
            Target::GroundTruth
        } else {
            Target::Oracle
        }
    }

    pub fn bin_width(&self) -> usize {
        self.get("eval.bin_width")
    }

    pub fn synthetic(&self) -> ctc_rescore::corpus::synthetic::SyntheticConfig {
        let conv: Vec<usize> = self
            .raw("synth.conversations")
            .split(',')
            .map(|x| x.trim().parse().expect("validated"))
            .collect();
        ctc_rescore::corpus::synthetic::SyntheticConfig {
            seed: self.seed("data"),
            vocab_size: self.get("synth.vocab_size"),
            topics: self.get("synth.topics"),
            phrases_per_topic: self.get("synth.phrases_per_topic"),
            phrase_len: parse_pair(self.raw("synth.phrase_len")).expect("validated"),
            conversations: [conv[0], conv[1], conv[2]],
            utterances: parse_pair(self.raw("synth.utterances")).expect("validated"),
            two_phrase_prob: self.get("synth.two_phrase_prob"),
            noise: self.get("synth.noise"),
        }
    }
}

/// Commented listing of every key and its default, for `ctc-rescore config`.
pub fn template() -> String {
    let mut s = String::new();
    for (k, d) in KEYS {
        match d {
            Some(v) => s.push_str(&format!("# {k} = {v}\n")),
            None => s.push_str(&format!("{k} = \n")),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "corpus = c.tsv\nlogits_dir = logits\noutput_dir = out\nseed.data = 1\nseed.tune = 2\nseed.tasks = 3\n";

    #[test]
    fn defaults_and_overrides() {
        let mut c = Config::parse(MINIMAL, Path::new("/exp")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.beam_width(), 256);
        assert_eq!(c.corpus(), PathBuf::from("/exp/c.tsv"));
        assert_eq!(c.alpha(), Tunable::Tuned);
        assert_eq!(c.context_len(), 2);
        c.apply_override("beam.alpha=0.7").unwrap();
        c.apply_override("context = long").unwrap();
        assert_eq!(c.alpha(), Tunable::Fixed(0.7));
        assert_eq!(c.context_len(), 5);
        assert!(c.apply_override("beam.alpah=1").is_err());
        assert!(c.apply_override("novalue").is_err());
    }

    #[test]
    fn seeds_are_mandatory_and_errors_are_exhaustive() {
        let c = Config::parse(
            "corpus = c\nlogits_dir = l\noutput_dir = o\nbeam.width = 0\nscorer = ftp:x\n",
            Path::new("."),
        )
        .unwrap();
        let errs = c.validate().unwrap_err().0;
        assert!(errs.iter().any(|e| e.contains("seed.data")));
        assert!(errs.iter().any(|e| e.contains("seed.tune")));
        assert!(errs.iter().any(|e| e.contains("seed.tasks")));
        assert!(errs.iter().any(|e| e.contains("beam.width")));
        assert!(errs.iter().any(|e| e.contains("`scorer`")));
        assert_eq!(errs.len(), 5, "{errs:?}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = Config::parse("# comment\n\nbogus = 1\nno equals\n", Path::new(".")).unwrap_err();
        assert_eq!(
            e.0,
            vec![
                "line 3: unknown key `bogus`".to_string(),
                "line 4: expected `key = value`".to_string()
            ]
        );
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = Config::parse(MINIMAL, Path::new("/a")).unwrap();
        let mut b = Config::parse(&MINIMAL.replace("= out\n", "= elsewhere\n"), Path::new("/b")).unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("beam.width", "128").unwrap();
        assert_ne!(a.hash(), b.hash());
        // An explicit default hashes like an omitted one.
        let mut c = a.clone();
        c.set("beam.width", "256").unwrap();
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn template_lists_every_key() {
        let t = template();
        assert_eq!(t.lines().count(), KEYS.len());
        assert!(t.contains("seed.data = \n"));
    }
}
