//! Flat `key = value` experiment configuration.
//!
//! ```text
//! source.en = treebanks/en-train.conllu
//! target.xx = treebanks/xx-test.conllu
//! model.d_model = 64
//! ```
//!
//! Relative paths are resolved against the config file's directory. Every
//! key has a default except the treebank paths; [`ExperimentConfig::echo`]
//! writes the effective values of all of them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{IlpsConfig, MlmConfig, TrainConfig};
use crate::nn::AdamConfig;

pub const CONFIG_HEADER: &str = "# ilps-config v1";

const STAGE_SEEDS: [&str; 6] = ["parsers", "resample", "split", "pretrain", "init", "train"];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Source treebanks by language; parser ids follow this (sorted) order.
    pub sources: BTreeMap<String, PathBuf>,
    pub targets: BTreeMap<String, PathBuf>,
    /// Predicted parses supplied from outside, keyed by
    /// (parser language, treebank language).
    pub external: BTreeMap<(String, String), PathBuf>,
    pub vectors: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub parser_epochs: usize,
    pub dev_fraction: f64,
    pub resample: bool,
    pub model: IlpsConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    pub tau: f64,
    pub alpha: f64,
    pub include_punct: bool,
    pub reference: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sources: BTreeMap::new(),
            targets: BTreeMap::new(),
            external: BTreeMap::new(),
            vectors: None,
            out: None,
            seed: 1,
            seeds: BTreeMap::new(),
            parser_epochs: 10,
            dev_fraction: 0.05,
            resample: true,
            model: IlpsConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 16,
            max_epochs: 20,
            eval_every: 2000,
            patience: 3,
            pretrain_steps: 5000,
            pretrain_lr: 1e-4,
            tau: 0.9,
            alpha: 0.1,
            include_punct: true,
            reference: "kl-sbps".into(),
        }
    }
}

/// SplitMix64 finalizer over the master seed and a stage name.
fn derive_seed(master: u64, name: &str) -> u64 {
    let mut z = name
        .bytes()
        .fold(master ^ 0x9e37_79b9_7f4a_7c15, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        });
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = ExperimentConfig::parse(&text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without checking that files exist. All malformed lines are
    /// reported together.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut problems = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", n + 1));
                continue;
            };
            if let Err(m) = cfg.set(key.trim(), value.trim(), base) {
                problems.push(format!("line {}: {}", n + 1, m));
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems.join("\n")))
        }
    }

    /// Applies one setting; `base` anchors relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        let path = || base.join(value);
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("{}: `{}`: {}", key, v, e))
        }
        if let Some(lang) = key.strip_prefix("source.") {
            self.sources.insert(lang.to_owned(), path());
            return Ok(());
        }
        if let Some(lang) = key.strip_prefix("target.") {
            self.targets.insert(lang.to_owned(), path());
            return Ok(());
        }
        if let Some(pair) = key.strip_prefix("external.") {
            let (p, t) = pair
                .split_once('.')
                .ok_or_else(|| format!("{}: expected external.<parser>.<treebank>", key))?;
            self.external.insert((p.to_owned(), t.to_owned()), path());
            return Ok(());
        }
        if let Some(stage) = key.strip_prefix("seed.") {
            if !STAGE_SEEDS.contains(&stage) {
                return Err(format!("unknown seed `{}`; known: {}", stage, STAGE_SEEDS.join(", ")));
            }
            self.seeds.insert(stage.to_owned(), num(key, value)?);
            return Ok(());
        }
        if let Some(mkey) = key.strip_prefix("model.") {
            return self.model.set_entry(mkey, value);
        }
        match key {
            "vectors" => self.vectors = Some(path()),
            "out" => self.out = Some(path()),
            "seed" => self.seed = num(key, value)?,
            "parser.epochs" => self.parser_epochs = num(key, value)?,
            "labels.dev_fraction" => self.dev_fraction = num(key, value)?,
            "labels.resample" => self.resample = num(key, value)?,
            "adam.lr" => self.adam.lr = num(key, value)?,
            "adam.beta1" => self.adam.beta1 = num(key, value)?,
            "adam.beta2" => self.adam.beta2 = num(key, value)?,
            "adam.eps" => self.adam.eps = num(key, value)?,
            "train.batch_size" => self.batch_size = num(key, value)?,
            "train.max_epochs" => self.max_epochs = num(key, value)?,
            "train.eval_every" => self.eval_every = num(key, value)?,
            "train.patience" => self.patience = num(key, value)?,
            "pretrain.steps" => self.pretrain_steps = num(key, value)?,
            "pretrain.lr" => self.pretrain_lr = num(key, value)?,
            "select.tau" => self.tau = num(key, value)?,
            "baseline.alpha" => self.alpha = num(key, value)?,
            "eval.include_punct" => self.include_punct = num(key, value)?,
            "eval.reference" => self.reference = value.to_owned(),
            _ => return Err(format!("unknown key `{}`", key)),
        }
        Ok(())
    }

    /// Seed of a named stage: an explicit `seed.<stage>` or one derived
    /// from the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        self.seeds
            .get(stage)
            .copied()
            .unwrap_or_else(|| derive_seed(self.seed, stage))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: self.adam,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            eval_every: self.eval_every,
            patience: self.patience,
            seed: self.stage_seed("train"),
        }
    }

    pub fn mlm_config(&self) -> MlmConfig {
        MlmConfig {
            adam: AdamConfig {
                lr: self.pretrain_lr,
                ..self.adam
            },
            batch_size: self.batch_size,
            steps: self.pretrain_steps,
            seed: self.stage_seed("pretrain"),
        }
    }

    /// Every problem at once: missing files, out-of-range values,
    /// inconsistent languages.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.sources.len() < 2 {
            problems.push("at least two source treebanks are needed".to_owned());
        }
        if self.targets.is_empty() {
            problems.push("no target treebank configured".to_owned());
        }
        for (role, map) in [("source", &self.sources), ("target", &self.targets)] {
            for (lang, p) in map {
                if !p.is_file() {
                    problems.push(format!("{}.{}: no such file {}", role, lang, p.display()));
                }
            }
        }
        for lang in self.targets.keys() {
            if self.sources.contains_key(lang) {
                problems.push(format!("{} is both a source and a target", lang));
            }
        }
        for ((p, t), path) in &self.external {
            if !self.sources.contains_key(p) {
                problems.push(format!("external.{}.{}: {} is not a source", p, t, p));
            }
            if !self.sources.contains_key(t) && !self.targets.contains_key(t) {
                problems.push(format!("external.{}.{}: unknown treebank {}", p, t, t));
            }
            if !path.is_file() {
                problems.push(format!("external.{}.{}: no such file {}", p, t, path.display()));
            }
        }
        if let Some(v) = &self.vectors {
            if !v.is_file() {
                problems.push(format!("vectors: no such file {}", v.display()));
            }
        }
        if self.parser_epochs == 0 {
            problems.push("parser.epochs must be positive".to_owned());
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            problems.push(format!("labels.dev_fraction {} outside (0, 1)", self.dev_fraction));
        }
        if let Err(Error::Config(m)) = self.model.validate() {
            problems.push(format!("model: {}", m));
        }
        if !(self.adam.lr > 0.0 && self.pretrain_lr > 0.0) {
            problems.push("learning rates must be positive".to_owned());
        }
        if !((0.0..1.0).contains(&self.adam.beta1) && (0.0..1.0).contains(&self.adam.beta2)) {
            problems.push("adam betas must be in [0, 1)".to_owned());
        }
        if !(self.adam.eps > 0.0) {
            problems.push("adam.eps must be positive".to_owned());
        }
        for (name, v) in [
            ("train.batch_size", self.batch_size),
            ("train.max_epochs", self.max_epochs),
            ("train.eval_every", self.eval_every),
            ("train.patience", self.patience),
        ] {
            if v == 0 {
                problems.push(format!("{} must be positive", name));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            problems.push(format!("select.tau {} outside [0, 1]", self.tau));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            problems.push(format!("baseline.alpha {} must be positive", self.alpha));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("\n")))
        }
    }

    /// Effective configuration, every key included.
    pub fn echo(&self) -> String {
        let mut out = format!("{}\n", CONFIG_HEADER);
        let mut put = |k: &str, v: String| writeln!(out, "{} = {}", k, v).unwrap();
        for (l, p) in &self.sources {
            put(&format!("source.{}", l), p.display().to_string());
        }
        for (l, p) in &self.targets {
            put(&format!("target.{}", l), p.display().to_string());
        }
        for ((a, b), p) in &self.external {
            put(&format!("external.{}.{}", a, b), p.display().to_string());
        }
        if let Some(v) = &self.vectors {
            put("vectors", v.display().to_string());
        }
        put("seed", self.seed.to_string());
        for s in STAGE_SEEDS {
            put(&format!("seed.{}", s), self.stage_seed(s).to_string());
        }
        put("parser.epochs", self.parser_epochs.to_string());
        put("labels.dev_fraction", self.dev_fraction.to_string());
        put("labels.resample", self.resample.to_string());
        for (k, v) in self.model.entries() {
            put(&format!("model.{}", k), v);
        }
        put("adam.lr", self.adam.lr.to_string());
        put("adam.beta1", self.adam.beta1.to_string());
        put("adam.beta2", self.adam.beta2.to_string());
        put("adam.eps", self.adam.eps.to_string());
        put("train.batch_size", self.batch_size.to_string());
        put("train.max_epochs", self.max_epochs.to_string());
        put("train.eval_every", self.eval_every.to_string());
        put("train.patience", self.patience.to_string());
        put("pretrain.steps", self.pretrain_steps.to_string());
        put("pretrain.lr", self.pretrain_lr.to_string());
        put("select.tau", self.tau.to_string());
        put("baseline.alpha", self.alpha.to_string());
        put("eval.include_punct", self.include_punct.to_string());
        put("eval.reference", self.reference.clone());
        out
    }
}
