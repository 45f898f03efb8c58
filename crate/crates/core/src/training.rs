//! Mini-batch training with early stopping, and random hyperparameter search.

use std::time::Instant;

use mtm_autodiff::{adam_step, clip_grad_norm, global_grad_norm, AdamConfig, AdamState, Rng, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::eval::{aspect_switch_count, macro_f1, mask_labels, F1Variant};
use crate::model::{DocInput, LossParts, Model, ModelConfig, ModelKind};
use crate::params::Graph;
use crate::text::{Corpus, Split, Vocabulary, DEFAULT_MAX_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    /// Weight-decay factor on weight matrices.
    pub l2: f64,
    /// Epochs without improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    pub seed: u64,
    pub max_len: usize,
    /// Worker threads for per-document gradients; `None` uses all cores.
    pub threads: Option<usize>,
    /// Record zero wall time so logs are byte-reproducible.
    pub deterministic_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 50,
            clip_norm: 1.0,
            l2: 1e-6,
            patience: Some(5),
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            threads: None,
            deterministic_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(CoreError::Param(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return err("lr must be finite and non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_len == 0 {
            return err("batch_size, max_epochs and max_len must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return err("clip_norm must be positive");
        }
        if !(self.l2 >= 0.0) {
            return err("l2 must be non-negative");
        }
        if self.patience == Some(0) {
            return err("patience must be at least 1");
        }
        if self.threads == Some(0) {
            return err("threads must be at least 1");
        }
        Ok(())
    }
}

/// Encodes one split of a corpus, truncating to `max_len` tokens.
pub fn encode_split(corpus: &Corpus, vocab: &Vocabulary, split: Split, max_len: usize) -> Vec<DocInput> {
    corpus
        .split(split)
        .map(|d| {
            let mut ids = vocab.encode(&d.tokens);
            ids.truncate(max_len);
            DocInput::new(ids, Some(d.labels.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub macro_f1: f64,
    pub per_aspect_f1: Vec<f64>,
    /// Mean noise-free loss per document.
    pub loss: f64,
    /// Mean selection rate of the inference mask (mtm only).
    pub p_sel: Option<f64>,
    /// Mean aspect switches per document (mtm only).
    pub switches: Option<f64>,
}

/// Noise-free, dropout-free metrics over labeled documents.
pub fn evaluate_docs(model: &Model, docs: &[DocInput]) -> Result<ValidationStats> {
    if docs.is_empty() {
        return Err(CoreError::Empty("no documents to evaluate".into()));
    }
    let outs: Vec<(Vec<u8>, f64, Option<(f64, usize)>)> = docs
        .par_iter()
        .map(|d| {
            let out = model.infer(d)?;
            let m = out.mask.as_ref().map(|m| (m.selection_rate(), aspect_switch_count(&mask_labels(m))));
            Ok((out.predictions(), out.losses.total, m))
        })
        .collect::<Result<_>>()?;
    let labels: Vec<Vec<u8>> = docs
        .iter()
        .map(|d| d.labels.clone().ok_or_else(|| CoreError::Schema("evaluation document without labels".into())))
        .collect::<Result<_>>()?;
    let preds: Vec<Vec<u8>> = outs.iter().map(|o| o.0.clone()).collect();
    let f1 = macro_f1(&preds, &labels, F1Variant::ClassMacro)?;
    let n = docs.len() as f64;
    let loss = outs.iter().map(|o| o.1).sum::<f64>() / n;
    let masks: Vec<(f64, usize)> = outs.iter().filter_map(|o| o.2).collect();
    let (p_sel, switches) = if masks.is_empty() {
        (None, None)
    } else {
        (
            Some(masks.iter().map(|m| m.0).sum::<f64>() / n),
            Some(masks.iter().map(|m| m.1 as f64).sum::<f64>() / n),
        )
    };
    Ok(ValidationStats {
        macro_f1: f1.macro_f1,
        per_aspect_f1: f1.per_aspect,
        loss,
        p_sel,
        switches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training losses with noise and dropout active.
    pub train: LossParts,
    pub val_macro_f1: f64,
    pub val_loss: f64,
    pub val_p_sel: Option<f64>,
    pub val_switches: Option<f64>,
    /// Steps on which gradient clipping fired.
    pub clipped_steps: usize,
    /// Largest global gradient norm after clipping.
    pub max_clipped_norm: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Serialize)]
struct LogSummary {
    best_epoch: usize,
    best_val_macro_f1: f64,
    epochs: usize,
    stopped_early: bool,
}

impl TrainLog {
    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch - 1]
    }

    /// One JSON object per epoch followed by a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        let summary = LogSummary {
            best_epoch: self.best_epoch,
            best_val_macro_f1: self.best().val_macro_f1,
            epochs: self.records.len(),
            stopped_early: self.stopped_early,
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }
}

struct DocGrad {
    losses: LossParts,
    grads: Vec<(usize, Vec<f64>)>,
}

fn doc_gradient(model: &Model, doc: &DocInput, mut rng: Rng) -> Result<DocGrad> {
    let mut g = Graph::new(&model.params);
    let out = model.forward(&mut g, doc, &mut rng, true)?;
    let grads = g.tape.backward(out.loss)?;
    let grads = g
        .param_grads(&grads)
        .into_iter()
        .map(|(id, gr)| (id.0, gr.to_vec()))
        .collect();
    Ok(DocGrad {
        losses: out.losses,
        grads,
    })
}

/// Attaches frozen source-mask columns to documents of an mtm-c model.
pub fn attach_context(model: &Model, docs: &mut [DocInput]) -> Result<()> {
    let Some(src) = model.source.as_deref() else {
        return Ok(());
    };
    let ctx: Vec<Vec<f64>> = docs.par_iter().map(|d| src.contextualize(&d.ids)).collect::<Result<_>>()?;
    for (d, c) in docs.iter_mut().zip(ctx) {
        d.context = Some(c);
    }
    Ok(())
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(|e| CoreError::Param(format!("thread pool: {e}"))),
    }
}

/// Trains `model` in place and leaves it holding the best-validation weights.
pub fn train(model: &mut Model, train_docs: &[DocInput], valid_docs: &[DocInput], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if train_docs.is_empty() || valid_docs.is_empty() {
        return Err(CoreError::Empty("training needs non-empty train and valid splits".into()));
    }
    let threads = cfg.threads;
    with_pool(threads, || train_inner(model, train_docs, valid_docs, cfg))?
}

fn train_inner(model: &mut Model, train_docs: &[DocInput], valid_docs: &[DocInput], cfg: &TrainConfig) -> Result<TrainLog> {
    let mut train_docs = train_docs.to_vec();
    let mut valid_docs = valid_docs.to_vec();
    if model.kind == ModelKind::MtmC {
        attach_context(model, &mut train_docs)?;
        attach_context(model, &mut valid_docs)?;
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut states: Vec<AdamState> = model.params.iter().map(|p| AdamState::new(p.tensor.numel())).collect();
    let root = Rng::new(cfg.seed);
    let mut order_rng = root.fork(0x5EED);
    let start = Instant::now();

    let mut records = Vec::new();
    let mut best: Option<(f64, f64, usize, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut step: u64 = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_docs.len()).collect();
        order_rng.shuffle(&mut order);
        let mut sums = LossParts::default();
        let mut clipped_steps = 0;
        let mut max_clipped_norm: f64 = 0.0;

        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            step += 1;
            let model_ref: &Model = model;
            let per_doc: Vec<DocGrad> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| doc_gradient(model_ref, &train_docs[i], root.fork(step << 20 | k as u64)))
                .collect::<Result<_>>()?;

            let mut acc: Vec<Option<Vec<f64>>> = vec![None; model.params.len()];
            let mut batch_loss = LossParts::default();
            for dg in &per_doc {
                if !dg.losses.total.is_finite() {
                    return Err(CoreError::Divergence { epoch, batch: b + 1 });
                }
                batch_loss.add_assign(&dg.losses);
                for (id, gr) in &dg.grads {
                    match &mut acc[*id] {
                        Some(a) => a.iter_mut().zip(gr).for_each(|(x, y)| *x += y),
                        slot @ None => *slot = Some(gr.clone()),
                    }
                }
            }
            sums.add_assign(&batch_loss);

            let scale = 1.0 / batch.len() as f64;
            for (p, a) in model.params.iter_mut().zip(acc) {
                p.tensor.grad = a.map(|mut g| {
                    g.iter_mut().for_each(|v| *v *= scale);
                    if p.decay && cfg.l2 > 0.0 {
                        g.iter_mut().zip(&p.tensor.data).for_each(|(gv, w)| *gv += 2.0 * cfg.l2 * w);
                    }
                    g
                });
            }
            if model.params.iter().filter_map(|p| p.tensor.grad.as_ref()).flatten().any(|v| !v.is_finite()) {
                return Err(CoreError::Divergence { epoch, batch: b + 1 });
            }
            let mut tensors: Vec<&mut Tensor> = model.params.iter_mut().map(|p| &mut p.tensor).collect();
            if clip_grad_norm(&mut tensors, cfg.clip_norm) < 1.0 {
                clipped_steps += 1;
                max_clipped_norm = max_clipped_norm.max(global_grad_norm(tensors.iter().map(|t| &**t)));
            }
            for (t, s) in tensors.into_iter().zip(states.iter_mut()) {
                adam_step(t, s, &adam)?;
                t.grad = None;
            }
        }

        let val = evaluate_docs(model, &valid_docs)?;
        if !val.loss.is_finite() {
            return Err(CoreError::Divergence { epoch, batch: 0 });
        }
        records.push(EpochRecord {
            epoch,
            train: sums.scaled(1.0 / train_docs.len() as f64),
            val_macro_f1: val.macro_f1,
            val_loss: val.loss,
            val_p_sel: val.p_sel,
            val_switches: val.switches,
            clipped_steps,
            max_clipped_norm,
            wall_time: if cfg.deterministic_clock {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            },
        });
        log::info!(
            "epoch {epoch}: train loss {:.4}, val macro-F1 {:.2}, val loss {:.4}",
            records[epoch - 1].train.total,
            val.macro_f1,
            val.loss
        );

        let improved = match &best {
            None => true,
            Some((f1, loss, _, _)) => val.macro_f1 > *f1 || (val.macro_f1 == *f1 && val.loss < *loss),
        };
        if improved {
            let snapshot = model.params.iter().map(|p| p.tensor.clone()).collect();
            best = Some((val.macro_f1, val.loss, epoch, snapshot));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, _, best_epoch, snapshot) = best.expect("at least one epoch ran");
    for (p, t) in model.params.iter_mut().zip(snapshot) {
        p.tensor = t;
    }
    Ok(TrainLog {
        records,
        best_epoch,
        stopped_early,
    })
}

/// Candidate values for each searched hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub lr: Vec<f64>,
    pub hidden: Vec<usize>,
    pub filters: Vec<usize>,
    pub bidirectional: Vec<bool>,
    pub dropout: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub tau: Vec<f64>,
    pub lambda_sel: Vec<f64>,
    pub lambda_p: Vec<f64>,
    pub lambda_cont: Vec<f64>,
    pub trials: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lr: vec![0.001, 0.0005, 0.00075],
            hidden: vec![50, 100, 200],
            filters: vec![50, 100, 200],
            bidirectional: vec![true, false],
            dropout: vec![0.0, 0.1, 0.2],
            weight_decay: vec![0.0, 1e-6, 1e-8, 1e-10],
            tau: vec![0.5, 0.8, 1.0, 1.2],
            lambda_sel: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            lambda_p: vec![0.05, 0.06, 0.07, 0.08, 0.09, 0.1, 0.11, 0.12, 0.13, 0.14, 0.15],
            lambda_cont: vec![0.02, 0.04, 0.06, 0.08, 0.10],
            trials: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDraw {
    pub lr: f64,
    pub hidden: usize,
    pub filters: usize,
    pub bidirectional: bool,
    pub dropout: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub lambda_sel: f64,
    pub lambda_p: f64,
    pub lambda_cont: f64,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            self.lr.len(),
            self.hidden.len(),
            self.filters.len(),
            self.bidirectional.len(),
            self.dropout.len(),
            self.weight_decay.len(),
            self.tau.len(),
            self.lambda_sel.len(),
            self.lambda_p.len(),
            self.lambda_cont.len(),
        ];
        if lists.contains(&0) {
            return Err(CoreError::Param("every search list needs at least one candidate".into()));
        }
        if self.trials == 0 {
            return Err(CoreError::Param("trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut Rng) -> SearchDraw {
        SearchDraw {
            lr: *rng.choose(&self.lr),
            hidden: *rng.choose(&self.hidden),
            filters: *rng.choose(&self.filters),
            bidirectional: *rng.choose(&self.bidirectional),
            dropout: *rng.choose(&self.dropout),
            weight_decay: *rng.choose(&self.weight_decay),
            tau: *rng.choose(&self.tau),
            lambda_sel: *rng.choose(&self.lambda_sel),
            lambda_p: *rng.choose(&self.lambda_p),
            lambda_cont: *rng.choose(&self.lambda_cont),
        }
    }
}

impl SearchDraw {
    pub fn apply(&self, model: &ModelConfig, train: &TrainConfig) -> (ModelConfig, TrainConfig) {
        let m = ModelConfig {
            hidden: self.hidden,
            feature_maps: self.filters,
            bidirectional: self.bidirectional,
            dropout: self.dropout,
            tau: self.tau,
            lambda_sel: self.lambda_sel,
            lambda_p: self.lambda_p,
            lambda_cont: self.lambda_cont,
            ..model.clone()
        };
        let t = TrainConfig {
            lr: self.lr,
            l2: self.weight_decay,
            ..train.clone()
        };
        (m, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub draw: SearchDraw,
    pub val_macro_f1: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

/// What a search needs to build and train each trial's model.
pub struct SearchSetup<'a> {
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub embeddings: &'a Tensor,
    /// Frozen masker for mtm-c trials.
    pub source: Option<&'a Model>,
    pub train_docs: &'a [DocInput],
    pub valid_docs: &'a [DocInput],
}

fn run_trial(setup: &SearchSetup<'_>, draw: &SearchDraw, seed: u64) -> Result<(f64, usize)> {
    let (mcfg, mut tcfg) = draw.apply(&setup.model, &setup.train);
    tcfg.seed = seed;
    let mut model = match (setup.kind, setup.source) {
        (ModelKind::MtmC, Some(src)) => Model::contextualized(mcfg, setup.embeddings.clone(), src.clone(), seed)?,
        (ModelKind::MtmC, None) => return Err(CoreError::Contract("mtm-c search needs a source masker".into())),
        (kind, _) => Model::new(kind, mcfg, setup.embeddings.clone(), seed)?,
    };
    let log = train(&mut model, setup.train_docs, setup.valid_docs, &tcfg)?;
    Ok((log.best().val_macro_f1, log.best_epoch))
}

/// Runs `space.trials` seeded trials and ranks them by validation macro-F1,
/// failed trials last. Trial `i` uses seed `base seed + i`.
pub fn random_search(setup: &SearchSetup<'_>, space: &SearchSpace) -> Result<Vec<TrialResult>> {
    space.validate()?;
    let mut results: Vec<TrialResult> = (0..space.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = setup.train.seed.wrapping_add(trial as u64);
            let draw = space.sample(&mut Rng::new(seed).fork(0xD4A));
            let (val_macro_f1, best_epoch, error) = match run_trial(setup, &draw, seed) {
                Ok((f1, e)) => (Some(f1), Some(e), None),
                Err(e) => {
                    log::warn!("trial {trial} failed: {e}");
                    (None, None, Some(e.to_string()))
                }
            };
            TrialResult {
                trial,
                seed,
                draw,
                val_macro_f1,
                best_epoch,
                error,
            }
        })
        .collect();
    results.sort_by(|a, b| {
        let key = |r: &TrialResult| r.val_macro_f1.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then(a.trial.cmp(&b.trial))
    });
    Ok(results)
}
