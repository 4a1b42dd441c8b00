//! The ILPS regressor: a Transformer encoder over UPOS sequences whose
//! `[ss]` output, joined with a parser embedding, feeds an MLP that predicts
//! the parser's normalized accuracy on the sentence. The same encoder is
//! pretrained as a masked tag model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crossparse::RegressionExample;
use crate::error::{Error, Result};
use crate::nn::layers::TransformerCache;
use crate::nn::{
    rmse_loss, sinusoidal_positions, softmax_cross_entropy, Activation, AdamConfig, Embedding, Linear, Mlp,
    ParameterStore, SeqLayout, Tensor2D, TransformerLayer,
};
use crate::parallel::parallel_map;
use crate::select::ScoreMatrix;
use crate::treebank::Upos;
use crate::ParserId;

pub const MASK: usize = Upos::COUNT;
pub const SS: usize = Upos::COUNT + 1;
pub const PAD: usize = Upos::COUNT + 2;
pub const VOCAB_SIZE: usize = Upos::COUNT + 3;

const MODEL_HEADER: &str = "# ilps-model v1";
const MLM_HEADER: &str = "# ilps-mlm v1";

/// Shared encoder parameters that move from pretraining into fine-tuning.
const ENCODER_PREFIXES: &[&str] = &["tag", "proj", "enc."];

pub fn vocab_entry(id: usize) -> &'static str {
    match id {
        MASK => "[MASK]",
        SS => "[ss]",
        PAD => "[PAD]",
        _ => Upos::ALL[id].as_str(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlpsConfig {
    pub d_model: usize,
    pub d_pos: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub mlp_hidden: usize,
    pub mlp_layers: usize,
    pub activation: Activation,
    /// Longest tag sequence encoded; longer inputs are truncated.
    pub max_len: usize,
}

impl Default for IlpsConfig {
    fn default() -> Self {
        IlpsConfig {
            d_model: 256,
            d_pos: 256,
            layers: 3,
            heads: 8,
            ff_dim: 256,
            mlp_hidden: 256,
            mlp_layers: 2,
            activation: Activation::Relu,
            max_len: 256,
        }
    }
}

impl IlpsConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("d_model", self.d_model),
            ("d_pos", self.d_pos),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                problems.push(format!("{} must be positive", name));
            }
        }
        if self.heads > 0 && self.d_model % self.heads != 0 {
            problems.push(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_model", self.d_model.to_string()),
            ("d_pos", self.d_pos.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("ff_dim", self.ff_dim.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("mlp_layers", self.mlp_layers.to_string()),
            ("activation", self.activation.as_str().to_owned()),
            ("max_len", self.max_len.to_string()),
        ]
    }

    pub fn set_entry(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = || value.parse::<usize>().map_err(|e| format!("{}: {}", key, e));
        match key {
            "d_model" => self.d_model = num()?,
            "d_pos" => self.d_pos = num()?,
            "layers" => self.layers = num()?,
            "heads" => self.heads = num()?,
            "ff_dim" => self.ff_dim = num()?,
            "mlp_hidden" => self.mlp_hidden = num()?,
            "mlp_layers" => self.mlp_layers = num()?,
            "activation" => self.activation = value.parse().map_err(|e: Error| e.to_string())?,
            "max_len" => self.max_len = num()?,
            _ => return Err(format!("unknown key `{}`", key)),
        }
        Ok(())
    }
}

/// Fine-tuning schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Dev RMSE is measured every this many optimizer steps.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 16,
            max_epochs: 20,
            eval_every: 2000,
            patience: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlmConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            adam: AdamConfig::default(),
            batch_size: 16,
            steps: 5000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
struct Encoder {
    tags: Embedding,
    proj: Linear,
    layers: Vec<TransformerLayer>,
    positions: Tensor2D,
    d_model: usize,
}

struct EncoderCache {
    ids: Vec<usize>,
    input: Tensor2D,
    layers: Vec<TransformerCache>,
}

impl Encoder {
    fn new<R: Rng>(ps: &mut ParameterStore, cfg: &IlpsConfig, rng: &mut R) -> Result<Self> {
        let tags = Embedding::new(ps, "tag", VOCAB_SIZE, cfg.d_model, rng);
        let proj = Linear::new(ps, "proj", cfg.d_model + cfg.d_pos, cfg.d_model, rng);
        let layers = (0..cfg.layers)
            .map(|i| {
                TransformerLayer::new(
                    ps,
                    &format!("enc.{}", i),
                    cfg.d_model,
                    cfg.heads,
                    cfg.ff_dim,
                    cfg.activation,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Encoder {
            tags,
            proj,
            layers,
            // room for the [ss] prefix
            positions: sinusoidal_positions(cfg.max_len + 1, cfg.d_pos),
            d_model: cfg.d_model,
        })
    }

    fn forward(&self, ps: &ParameterStore, seqs: &[Vec<usize>]) -> (Tensor2D, SeqLayout, EncoderCache) {
        let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let layout = SeqLayout::new(len, seqs.iter().map(Vec::len).collect());
        let mut ids = Vec::with_capacity(layout.rows());
        let mut pos = Vec::with_capacity(layout.rows());
        for s in seqs {
            for t in 0..len {
                ids.push(s.get(t).copied().unwrap_or(PAD));
                pos.push(t);
            }
        }
        let input = Tensor2D::hcat(&self.tags.forward(ps, &ids), &self.positions.gather_rows(&pos));
        let mut h = self.proj.forward(ps, &input);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(ps, &h, &layout);
            caches.push(c);
            h = y;
        }
        (
            h,
            layout,
            EncoderCache {
                ids,
                input,
                layers: caches,
            },
        )
    }

    fn backward(&self, ps: &mut ParameterStore, cache: &EncoderCache, layout: &SeqLayout, dy: &Tensor2D) {
        let mut d = dy.clone();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            d = layer.backward(ps, c, layout, &d);
        }
        let dinput = self.proj.backward(ps, &cache.input, &d);
        let (dtags, _) = dinput.hsplit(self.d_model);
        self.tags.backward(ps, &cache.ids, &dtags);
    }
}

fn tag_ids(tags: &[Upos], max_len: usize, prepend_ss: bool) -> Result<Vec<usize>> {
    if tags.is_empty() {
        return Err(Error::Empty("cannot encode an empty sentence".into()));
    }
    if tags.len() > max_len {
        log::warn!("truncating a {}-tag sentence to {} tags", tags.len(), max_len);
    }
    let mut ids = Vec::with_capacity(tags.len().min(max_len) + 1);
    if prepend_ss {
        ids.push(SS);
    }
    ids.extend(tags.iter().take(max_len).map(|t| t.index()));
    Ok(ids)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAction {
    Mask,
    Keep,
    Random(Upos),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskingPlan {
    /// Distinct positions in increasing order.
    pub positions: Vec<(usize, MaskAction)>,
}

/// Number of positions masked in a sentence of `len` tags.
pub fn mask_count(len: usize) -> usize {
    ((15 * len + 50) / 100).clamp(1, 20).min(len)
}

pub fn make_masking_plan(len: usize, seed: u64) -> MaskingPlan {
    sample_masking_plan(len, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sample_masking_plan<R: Rng>(len: usize, rng: &mut R) -> MaskingPlan {
    let mut chosen = sample(rng, len, mask_count(len)).into_vec();
    chosen.sort_unstable();
    let positions = chosen
        .into_iter()
        .map(|p| {
            let u: f64 = rng.gen();
            let action = if u < 0.8 {
                MaskAction::Mask
            } else if u < 0.9 {
                MaskAction::Keep
            } else {
                MaskAction::Random(Upos::ALL[rng.gen_range(0..Upos::COUNT)])
            };
            (p, action)
        })
        .collect();
    MaskingPlan { positions }
}

/// Masked-tag model used to pretrain the encoder.
#[derive(Clone, Debug)]
pub struct MlmModel {
    config: IlpsConfig,
    encoder: Encoder,
    head: Linear,
    params: ParameterStore,
}

/// Masked-tag loss and accuracy on held-out sentences.
#[derive(Clone, Debug, PartialEq)]
pub struct MlmEvaluation {
    pub loss: f64,
    pub accuracy: f64,
    /// Share of masked targets equal to the most frequent masked tag.
    pub majority_rate: f64,
    pub masked: usize,
}

struct MlmBatch {
    inputs: Vec<Vec<usize>>,
    rows: Vec<usize>,
    targets: Vec<usize>,
}

impl MlmModel {
    pub fn new(config: &IlpsConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let encoder = Encoder::new(&mut params, config, &mut rng)?;
        let head = Linear::new_normal(&mut params, "mlm_head", config.d_model, VOCAB_SIZE, 0.02, &mut rng);
        Ok(MlmModel {
            config: config.clone(),
            encoder,
            head,
            params,
        })
    }

    pub fn config(&self) -> &IlpsConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    fn batch<R: Rng>(&self, sentences: &[&[Upos]], rng: &mut R) -> Result<MlmBatch> {
        let mut batch = MlmBatch {
            inputs: Vec::with_capacity(sentences.len()),
            rows: Vec::new(),
            targets: Vec::new(),
        };
        let mut plans = Vec::with_capacity(sentences.len());
        for s in sentences {
            let ids = tag_ids(s, self.config.max_len, false)?;
            plans.push(sample_masking_plan(ids.len(), rng));
            batch.inputs.push(ids);
        }
        let len = batch.inputs.iter().map(Vec::len).max().unwrap_or(0);
        for (b, (ids, plan)) in batch.inputs.iter_mut().zip(&plans).enumerate() {
            for &(p, action) in &plan.positions {
                batch.rows.push(b * len + p);
                batch.targets.push(ids[p]);
                match action {
                    MaskAction::Mask => ids[p] = MASK,
                    MaskAction::Keep => {}
                    MaskAction::Random(t) => ids[p] = t.index(),
                }
            }
        }
        Ok(batch)
    }

    fn logits(&self, batch: &MlmBatch) -> (Tensor2D, Tensor2D, SeqLayout, EncoderCache) {
        let (h, layout, cache) = self.encoder.forward(&self.params, &batch.inputs);
        let picked = h.gather_rows(&batch.rows);
        let logits = self.head.forward(&self.params, &picked);
        (logits, picked, layout, cache)
    }

    /// Trains on batches drawn uniformly from `corpus`; returns the loss of
    /// every step, measured before that step's update.
    pub fn pretrain(&mut self, corpus: &[Vec<Upos>], cfg: &MlmConfig) -> Result<Vec<f64>> {
        if corpus.is_empty() {
            return Err(Error::Config("masked-tag pretraining needs a non-empty corpus".into()));
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut losses = Vec::with_capacity(cfg.steps);
        self.params.zero_grads();
        for step in 0..cfg.steps {
            let picks: Vec<&[Upos]> = (0..cfg.batch_size)
                .map(|_| corpus[rng.gen_range(0..corpus.len())].as_slice())
                .collect();
            let batch = self.batch(&picks, &mut rng)?;
            let (logits, picked, layout, cache) = self.logits(&batch);
            let (loss, dlogits) = softmax_cross_entropy(&logits, &batch.targets);
            let dpicked = self.head.backward(&mut self.params, &picked, &dlogits);
            let mut dh = Tensor2D::zeros(layout.rows(), self.config.d_model);
            for (i, &r) in batch.rows.iter().enumerate() {
                for (a, b) in dh.row_mut(r).iter_mut().zip(dpicked.row(i)) {
                    *a += b;
                }
            }
            self.encoder.backward(&mut self.params, &cache, &layout, &dh);
            self.params.adam_step(&cfg.adam);
            if step % 500 == 0 {
                log::debug!("mlm step {} loss {:.4}", step, loss);
            }
            losses.push(loss);
        }
        Ok(losses)
    }

    pub fn evaluate(&self, sentences: &[Vec<Upos>], seed: u64) -> Result<MlmEvaluation> {
        if sentences.is_empty() {
            return Err(Error::Empty("no sentences to evaluate".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total_loss = 0.0;
        let mut correct = 0;
        let mut counts = [0usize; VOCAB_SIZE];
        let mut masked = 0;
        for chunk in sentences.chunks(32) {
            let refs: Vec<&[Upos]> = chunk.iter().map(Vec::as_slice).collect();
            let batch = self.batch(&refs, &mut rng)?;
            let (logits, ..) = self.logits(&batch);
            let (loss, _) = softmax_cross_entropy(&logits, &batch.targets);
            total_loss += loss * batch.targets.len() as f64;
            for (i, &t) in batch.targets.iter().enumerate() {
                let row = logits.row(i);
                let best = (0..VOCAB_SIZE).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                correct += usize::from(best == t);
                counts[t] += 1;
            }
            masked += batch.targets.len();
        }
        let n = masked as f64;
        Ok(MlmEvaluation {
            loss: total_loss / n,
            accuracy: correct as f64 / n,
            majority_rate: *counts.iter().max().unwrap() as f64 / n,
            masked,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, "mlm", MLM_HEADER, &self.config, &[], &self.params)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (config, _, stored) = load_checkpoint(dir, "mlm", MLM_HEADER)?;
        let mut model = MlmModel::new(&config, 0)?;
        adopt(&mut model.params, &stored, &dir.join("mlm.params"))?;
        Ok(model)
    }
}

/// One source parser known to the regressor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParserEntry {
    pub id: ParserId,
    pub language: String,
}

#[derive(Clone, Debug)]
pub struct IlpsModel {
    config: IlpsConfig,
    parsers: Vec<ParserEntry>,
    encoder: Encoder,
    parser_embeddings: Embedding,
    mlp: Mlp,
    params: ParameterStore,
}

/// What happened during fine-tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTrace {
    pub train_losses: Vec<f64>,
    /// `(step, dev RMSE)` for every evaluation.
    pub dev_rmse: Vec<(usize, f64)>,
    pub best_step: usize,
    pub best_dev_rmse: f64,
}

impl IlpsModel {
    /// `languages[k]` is the language of parser `k + 1`.
    pub fn new(config: &IlpsConfig, languages: &[String], seed: u64) -> Result<Self> {
        config.validate()?;
        if languages.is_empty() {
            return Err(Error::Config("the regressor needs at least one source parser".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let encoder = Encoder::new(&mut params, config, &mut rng)?;
        let parser_embeddings = Embedding::new(&mut params, "parser", languages.len(), config.d_model, &mut rng);
        let mlp = Mlp::new(
            &mut params,
            "mlp",
            2 * config.d_model,
            config.mlp_hidden,
            config.mlp_layers,
            config.activation,
            &mut rng,
        );
        Ok(IlpsModel {
            config: config.clone(),
            parsers: languages
                .iter()
                .enumerate()
                .map(|(i, l)| ParserEntry {
                    id: ParserId::from_index(i),
                    language: l.clone(),
                })
                .collect(),
            encoder,
            parser_embeddings,
            mlp,
            params,
        })
    }

    /// Copies the pretrained tag embeddings, projection and encoder layers.
    pub fn load_pretrained(&mut self, mlm: &MlmModel) -> Result<()> {
        if mlm.config != self.config {
            return Err(Error::Config(
                "pretrained encoder was built with different hyperparameters".into(),
            ));
        }
        self.params.copy_values_from(&mlm.params, ENCODER_PREFIXES)?;
        Ok(())
    }

    pub fn config(&self) -> &IlpsConfig {
        &self.config
    }

    pub fn parsers(&self) -> &[ParserEntry] {
        &self.parsers
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    /// Sentence vector (the `[ss]` output) when `prepend_ss`, and the
    /// per-position outputs either way.
    pub fn encode_sentence(&self, tags: &[Upos], prepend_ss: bool) -> Result<(Option<Vec<f64>>, Tensor2D)> {
        let ids = tag_ids(tags, self.config.max_len, prepend_ss)?;
        let (h, ..) = self.encoder.forward(&self.params, &[ids]);
        let vector = prepend_ss.then(|| h.row(0).to_vec());
        Ok((vector, h))
    }

    fn check_parser(&self, id: ParserId) -> Result<usize> {
        if id.0 == 0 || id.index() >= self.parsers.len() {
            return Err(Error::DataIntegrity(format!(
                "parser id {} outside 1..={}",
                id,
                self.parsers.len()
            )));
        }
        Ok(id.index())
    }

    /// Mean RMSE on `batch`, with parameter gradients accumulated into the
    /// store.
    pub fn batch_gradient(&mut self, batch: &[&RegressionExample]) -> Result<f64> {
        let mut seqs = Vec::with_capacity(batch.len());
        let mut pids = Vec::with_capacity(batch.len());
        for ex in batch {
            pids.push(self.check_parser(ex.parser_id)?);
            seqs.push(tag_ids(&ex.upos, self.config.max_len, true)?);
        }
        let targets: Vec<f64> = batch.iter().map(|e| e.label).collect();
        let (h, layout, cache) = self.encoder.forward(&self.params, &seqs);
        let first: Vec<usize> = (0..batch.len()).map(|b| b * layout.len).collect();
        let sent = h.gather_rows(&first);
        let input = Tensor2D::hcat(&self.parser_embeddings.forward(&self.params, &pids), &sent);
        let (preds, mlp_cache) = self.mlp.forward(&self.params, &input);
        let (loss, dpred) = rmse_loss(&preds, &targets)?;
        let dinput = self.mlp.backward(&mut self.params, &mlp_cache, &dpred);
        let (dparser, dsent) = dinput.hsplit(self.config.d_model);
        self.parser_embeddings.backward(&mut self.params, &pids, &dparser);
        let mut dh = Tensor2D::zeros(layout.rows(), self.config.d_model);
        for (b, &r) in first.iter().enumerate() {
            dh.row_mut(r).copy_from_slice(dsent.row(b));
        }
        self.encoder.backward(&mut self.params, &cache, &layout, &dh);
        Ok(loss)
    }

    /// Predicted score of every parser, from one encoder pass.
    pub fn score_sentence(&self, tags: &[Upos]) -> Result<Vec<f64>> {
        let (vector, _) = self.encode_sentence(tags, true)?;
        let vector = vector.expect("sentence vector requested");
        let n = self.parsers.len();
        let all: Vec<usize> = (0..n).collect();
        let sent = Tensor2D::from_fn(n, self.config.d_model, |_, c| vector[c]);
        let input = Tensor2D::hcat(&self.parser_embeddings.forward(&self.params, &all), &sent);
        Ok(self.mlp.forward(&self.params, &input).0)
    }

    /// Prediction for individual examples.
    pub fn predict_examples(&self, examples: &[RegressionExample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(64) {
            let mut seqs = Vec::with_capacity(chunk.len());
            let mut pids = Vec::with_capacity(chunk.len());
            for ex in chunk {
                pids.push(self.check_parser(ex.parser_id)?);
                seqs.push(tag_ids(&ex.upos, self.config.max_len, true)?);
            }
            let (h, layout, _) = self.encoder.forward(&self.params, &seqs);
            let first: Vec<usize> = (0..chunk.len()).map(|b| b * layout.len).collect();
            let input = Tensor2D::hcat(
                &self.parser_embeddings.forward(&self.params, &pids),
                &h.gather_rows(&first),
            );
            out.extend(self.mlp.forward(&self.params, &input).0);
        }
        Ok(out)
    }

    pub fn rmse(&self, examples: &[RegressionExample]) -> Result<f64> {
        let preds = self.predict_examples(examples)?;
        let targets: Vec<f64> = examples.iter().map(|e| e.label).collect();
        Ok(rmse_loss(&preds, &targets)?.0)
    }

    /// Mini-batch Adam on RMSE with early stopping on dev RMSE. The model is
    /// left at the best dev checkpoint.
    pub fn train_regressor(
        &mut self,
        train: &[RegressionExample],
        dev: &[RegressionExample],
        cfg: &TrainConfig,
    ) -> Result<TrainingTrace> {
        if train.is_empty() || dev.is_empty() {
            return Err(Error::Config("regressor training needs non-empty train and dev sets".into()));
        }
        if cfg.batch_size == 0 || cfg.eval_every == 0 || cfg.max_epochs == 0 {
            return Err(Error::Config(
                "batch size, evaluation interval and epochs must be positive".into(),
            ));
        }
        for ex in train.iter().chain(dev) {
            self.check_parser(ex.parser_id)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        self.params.reset_optimizer();
        self.params.zero_grads();
        let mut trace = TrainingTrace {
            train_losses: Vec::new(),
            dev_rmse: Vec::new(),
            best_step: 0,
            best_dev_rmse: f64::INFINITY,
        };
        let mut best = self.params.snapshot();
        let mut stale = 0;
        let mut step = 0;
        let mut order: Vec<usize> = (0..train.len()).collect();
        'epochs: for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&RegressionExample> = chunk.iter().map(|&i| &train[i]).collect();
                let loss = self.batch_gradient(&batch)?;
                self.params.adam_step(&cfg.adam);
                trace.train_losses.push(loss);
                step += 1;
                if step % cfg.eval_every == 0 {
                    if self.evaluate_dev(dev, step, &mut trace, &mut best, &mut stale)? >= cfg.patience {
                        log::info!("early stop at step {} (epoch {})", step, epoch + 1);
                        break 'epochs;
                    }
                }
            }
        }
        if trace.dev_rmse.last().map(|&(s, _)| s) != Some(step) {
            self.evaluate_dev(dev, step, &mut trace, &mut best, &mut stale)?;
        }
        self.params.restore(&best);
        Ok(trace)
    }

    fn evaluate_dev(
        &mut self,
        dev: &[RegressionExample],
        step: usize,
        trace: &mut TrainingTrace,
        best: &mut Vec<Tensor2D>,
        stale: &mut usize,
    ) -> Result<usize> {
        let rmse = self.rmse(dev)?;
        log::info!("step {} dev rmse {:.5}", step, rmse);
        trace.dev_rmse.push((step, rmse));
        if rmse < trace.best_dev_rmse {
            trace.best_dev_rmse = rmse;
            trace.best_step = step;
            *best = self.params.snapshot();
            *stale = 0;
        } else {
            *stale += 1;
        }
        Ok(*stale)
    }

    /// Scores of every parser on every sentence, one column per sentence.
    pub fn predict_scores(&self, sentences: &[(String, Vec<Upos>)], jobs: usize) -> Result<ScoreMatrix> {
        let columns = parallel_map(sentences, jobs, |(_, tags)| self.score_sentence(tags))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let n = self.parsers.len();
        let scores = Tensor2D::from_fn(n, sentences.len(), |i, j| columns[j][i]);
        ScoreMatrix::new(
            self.parsers.iter().map(|p| p.id).collect(),
            sentences.iter().map(|(id, _)| id.clone()).collect(),
            scores,
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, "ilps", MODEL_HEADER, &self.config, &self.parsers, &self.params)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (config, parsers, stored) = load_checkpoint(dir, "ilps", MODEL_HEADER)?;
        let languages: Vec<String> = parsers.iter().map(|p| p.language.clone()).collect();
        let mut model = IlpsModel::new(&config, &languages, 0)?;
        adopt(&mut model.params, &stored, &dir.join("ilps.params"))?;
        Ok(model)
    }
}

/// Replaces every value in `target` with the same-named one in `stored`,
/// which must hold exactly the same parameters.
fn adopt(target: &mut ParameterStore, stored: &ParameterStore, origin: &Path) -> Result<()> {
    if stored.len() != target.len() {
        return Err(Error::format(
            origin,
            format!("expected {} parameters, found {}", target.len(), stored.len()),
        ));
    }
    target.copy_values_from(stored, &[""])?;
    Ok(())
}

fn save_checkpoint(
    dir: &Path,
    stem: &str,
    header: &str,
    config: &IlpsConfig,
    parsers: &[ParserEntry],
    params: &ParameterStore,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!("{}\n", header);
    let vocab: Vec<&str> = (0..VOCAB_SIZE).map(vocab_entry).collect();
    writeln!(manifest, "vocab = {}", vocab.join(" ")).unwrap();
    for (k, v) in config.entries() {
        writeln!(manifest, "{} = {}", k, v).unwrap();
    }
    for p in parsers {
        writeln!(manifest, "parser {} = {}", p.id, p.language).unwrap();
    }
    let path = dir.join(format!("{}.manifest", stem));
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    params.save(&dir.join(format!("{}.params", stem)))
}

fn load_checkpoint(dir: &Path, stem: &str, header: &str) -> Result<(IlpsConfig, Vec<ParserEntry>, ParameterStore)> {
    let path = dir.join(format!("{}.manifest", stem));
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path,
            stage: if stem == "mlm" { "pretrain" } else { "train-ilps" },
        });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::format(&path, format!("expected header `{}`", header)));
    }
    let mut config = IlpsConfig::default();
    let mut parsers = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once(" = ")
            .ok_or_else(|| Error::format(&path, format!("malformed line `{}`", line)))?;
        if key == "vocab" {
            let expected: Vec<&str> = (0..VOCAB_SIZE).map(vocab_entry).collect();
            if value.split(' ').collect::<Vec<_>>() != expected {
                return Err(Error::format(&path, "tag vocabulary differs from this build"));
            }
        } else if let Some(id) = key.strip_prefix("parser ") {
            let id: ParserId = id
                .parse()
                .map_err(|_| Error::format(&path, format!("bad parser id `{}`", id)))?;
            if id != ParserId::from_index(parsers.len()) {
                return Err(Error::format(&path, "parser ids must be consecutive from 1"));
            }
            parsers.push(ParserEntry {
                id,
                language: value.to_owned(),
            });
        } else {
            config.set_entry(key, value).map_err(|m| Error::format(&path, m))?;
        }
    }
    let params = ParameterStore::load(&dir.join(format!("{}.params", stem)))?;
    Ok((config, parsers, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{numeric_gradient, relative_error};

    fn tiny() -> IlpsConfig {
        IlpsConfig {
            d_model: 8,
            d_pos: 6,
            layers: 2,
            heads: 2,
            ff_dim: 10,
            mlp_hidden: 6,
            mlp_layers: 2,
            activation: Activation::Tanh,
            max_len: 12,
        }
    }

    fn tags(s: &str) -> Vec<Upos> {
        crate::treebank::parse_upos_sequence(s).unwrap()
    }

    fn example(pid: u32, s: &str, label: f64) -> RegressionExample {
        RegressionExample {
            parser_id: ParserId(pid),
            upos: tags(s),
            label,
            sentence_id: s.to_owned(),
        }
    }

    #[test]
    fn mask_counts() {
        assert_eq!(mask_count(10), 2);
        assert_eq!(mask_count(200), 20);
        assert_eq!(mask_count(1), 1);
        assert_eq!(mask_count(3), 1);
        let plan = make_masking_plan(10, 4);
        assert_eq!(plan.positions.len(), 2);
        assert!(plan.positions[0].0 < plan.positions[1].0);
    }

    #[test]
    fn sentence_vector_width_and_purity() {
        let m = IlpsModel::new(&tiny(), &["a".into(), "b".into()], 1).unwrap();
        let s = tags("DET NOUN VERB");
        let (v1, h) = m.encode_sentence(&s, true).unwrap();
        let (v2, _) = m.encode_sentence(&s, true).unwrap();
        assert_eq!(h.rows(), 4);
        assert_eq!(v1.as_ref().unwrap().len(), 8);
        assert_eq!(v1, v2);
        let (v3, _) = m.encode_sentence(&tags("DET ADJ VERB"), true).unwrap();
        assert_ne!(v1, v3);
        let (none, h) = m.encode_sentence(&s, false).unwrap();
        assert!(none.is_none());
        assert_eq!(h.rows(), 3);
        assert!(m.encode_sentence(&[], true).is_err());
    }

    #[test]
    fn end_to_end_gradient() {
        let mut m = IlpsModel::new(&tiny(), &["a".into(), "b".into()], 2).unwrap();
        let batch = [example(1, "DET NOUN VERB", 1.4), example(2, "PRON VERB ADV ADP NOUN", 0.6)];
        let refs: Vec<&RegressionExample> = batch.iter().collect();
        m.params.zero_grads();
        m.batch_gradient(&refs).unwrap();
        let ids: Vec<_> = m.params.ids().collect();
        for id in ids {
            let analytic = m.params.grad(id).data().to_vec();
            if analytic.iter().all(|g| *g == 0.0) {
                continue;
            }
            let shape = m.params.value(id).shape();
            let mut values = m.params.value(id).data().to_vec();
            let numeric = numeric_gradient(&mut values, 1e-5, |v| {
                let mut probe = m.clone();
                *probe.params.value_mut(id) = Tensor2D::from_vec(shape.0, shape.1, v.to_vec());
                probe.rmse(&batch).unwrap()
            });
            let err = relative_error(&analytic, &numeric);
            let abs = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-5 || abs < 1e-9, "{}: {}", m.params.name(id), err);
        }
    }

    #[test]
    fn constant_labels_are_learned() {
        let cfg = tiny();
        let mut m = IlpsModel::new(&cfg, &["a".into(), "b".into()], 3).unwrap();
        let sents = ["DET NOUN", "VERB ADV", "PRON VERB NOUN", "ADJ NOUN", "NUM NOUN VERB"];
        let mut train = Vec::new();
        for s in sents {
            train.push(example(1, s, 1.0));
            train.push(example(2, s, 1.0));
        }
        let dev = vec![example(1, "DET ADJ NOUN", 1.0), example(2, "VERB", 1.0)];
        let tc = TrainConfig {
            adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
            batch_size: 4,
            max_epochs: 60,
            eval_every: 20,
            patience: 3,
            seed: 5,
        };
        let trace = m.train_regressor(&train, &dev, &tc).unwrap();
        for p in m.predict_examples(&dev).unwrap() {
            assert!((p - 1.0).abs() < 0.05, "{}", p);
        }
        assert_eq!(m.rmse(&dev).unwrap(), trace.best_dev_rmse);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = IlpsModel::new(&tiny(), &["xx".into(), "yy".into(), "zz".into()], 4).unwrap();
        m.save(dir.path()).unwrap();
        let back = IlpsModel::load(dir.path()).unwrap();
        assert_eq!(back.parsers(), m.parsers());
        assert_eq!(back.config(), m.config());
        let s = tags("NOUN VERB PUNCT");
        assert_eq!(back.score_sentence(&s).unwrap(), m.score_sentence(&s).unwrap());
        let missing = IlpsModel::load(&dir.path().join("nope")).unwrap_err();
        assert!(missing.to_string().contains("train-ilps"));
    }

    #[test]
    fn pretrained_encoder_transfers() {
        let cfg = tiny();
        let mlm = MlmModel::new(&cfg, 7).unwrap();
        let mut m = IlpsModel::new(&cfg, &["a".into()], 8).unwrap();
        let s = tags("DET NOUN");
        let before = m.encode_sentence(&s, false).unwrap().1;
        m.load_pretrained(&mlm).unwrap();
        let after = m.encode_sentence(&s, false).unwrap().1;
        assert_ne!(before, after);
        let (h, ..) = mlm.encoder.forward(&mlm.params, &[tag_ids(&s, 12, false).unwrap()]);
        assert_eq!(after, h);
    }
}
