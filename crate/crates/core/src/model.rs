//! The multi-target masker and its baselines behind one [`Model`] type.
//!
//! Every architecture embeds the document, encodes it, and feeds one
//! two-layer classifier head per target. They differ in what sits between the
//! embeddings and the heads:
//!
//! | kind     | between embeddings and heads                                   |
//! |----------|----------------------------------------------------------------|
//! | `base`   | shared CNN + max-over-time                                     |
//! | `saa-*`  | shared CNN or BiLSTM + one additive attention shared by heads  |
//! | `maa`    | per-target BiLSTM + additive attention                         |
//! | `masa`   | per-target BiLSTM + sparsemax attention                        |
//! | `mtm`    | BiLSTM masker → per-target masked embeddings → shared CNN      |
//! | `mtm-c`  | `base` over embeddings concatenated with frozen `mtm` masks    |

use std::fmt;
use std::str::FromStr;

use mtm_autodiff::{Rng, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::layers::{Attention, ConvEncoder, Head, Linear, Normalizer, Recurrent};
use crate::params::{Graph, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Base,
    SaaCnn,
    SaaLstm,
    Maa,
    Masa,
    Mtm,
    MtmC,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Base,
        ModelKind::SaaCnn,
        ModelKind::SaaLstm,
        ModelKind::Maa,
        ModelKind::Masa,
        ModelKind::Mtm,
        ModelKind::MtmC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Base => "base",
            ModelKind::SaaCnn => "saa-cnn",
            ModelKind::SaaLstm => "saa-lstm",
            ModelKind::Maa => "maa",
            ModelKind::Masa => "masa",
            ModelKind::Mtm => "mtm",
            ModelKind::MtmC => "mtm-c",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
                CoreError::Param(format!("unknown model kind '{s}'; valid kinds: {}", valid.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_targets: usize,
    pub embed_dim: usize,
    /// LSTM units per direction, for the masker and the recurrent baselines.
    pub hidden: usize,
    pub bidirectional: bool,
    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub classifier_hidden: usize,
    /// Attention scorer width; defaults to the encoder hidden size.
    pub attention_hidden: Option<usize>,
    pub tau: f64,
    pub lambda_sel: f64,
    pub lambda_cont: f64,
    pub lambda_p: f64,
    pub dropout: f64,
    /// Hard one-hot masks in the forward pass with soft gradients.
    pub straight_through: bool,
    pub train_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_targets: 4,
            embed_dim: 200,
            hidden: 50,
            bidirectional: true,
            filter_widths: vec![3, 5, 7],
            feature_maps: 50,
            classifier_hidden: 50,
            attention_hidden: None,
            tau: 0.8,
            lambda_sel: 0.03,
            lambda_cont: 0.03,
            lambda_p: 0.15,
            dropout: 0.1,
            straight_through: false,
            train_embeddings: false,
        }
    }
}

impl ModelConfig {
    /// Beer reviews: five rated aspects including Overall, 200-d embeddings.
    pub fn beer() -> Self {
        ModelConfig {
            num_targets: 5,
            ..ModelConfig::default()
        }
    }

    /// Beer reviews restricted to Appearance, Smell, Palate, Taste.
    pub fn beer_four_aspect() -> Self {
        ModelConfig::default()
    }

    /// Hotel reviews: five aspects, 300-d embeddings.
    pub fn hotel() -> Self {
        ModelConfig {
            num_targets: 5,
            embed_dim: 300,
            ..ModelConfig::default()
        }
    }

    /// Decorrelated beer subset with three aspects.
    pub fn beer_decorrelated() -> Self {
        ModelConfig {
            num_targets: 3,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CoreError::Param(m));
        if self.num_targets == 0 {
            return err("num_targets must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return err(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda_p > 0.0 && self.lambda_p < 1.0) {
            return err(format!("lambda_p must lie in (0, 1), got {}", self.lambda_p));
        }
        if !(self.lambda_sel >= 0.0 && self.lambda_cont >= 0.0) {
            return err("lambda_sel and lambda_cont must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.filter_widths.is_empty() || self.filter_widths.iter().any(|w| w % 2 == 0) {
            return err(format!("filter widths must be odd and non-empty, got {:?}", self.filter_widths));
        }
        if self.hidden == 0 || self.feature_maps == 0 || self.classifier_hidden == 0 || self.embed_dim == 0 {
            return err("layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// A document prepared for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct DocInput {
    pub ids: Vec<usize>,
    pub labels: Option<Vec<u8>>,
    /// Frozen `[L, T]` target probabilities appended to embeddings (mtm-c).
    pub context: Option<Vec<f64>>,
}

impl DocInput {
    pub fn new(ids: Vec<usize>, labels: Option<Vec<u8>>) -> Self {
        DocInput {
            ids,
            labels,
            context: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub pred: f64,
    pub sel: f64,
    pub cont: f64,
    pub total: f64,
}

impl LossParts {
    pub fn add_assign(&mut self, o: &LossParts) {
        self.pred += o.pred;
        self.sel += o.sel;
        self.cont += o.cont;
        self.total += o.total;
    }

    pub fn scaled(&self, s: f64) -> LossParts {
        LossParts {
            pred: self.pred * s,
            sel: self.sel * s,
            cont: self.cont * s,
            total: self.total * s,
        }
    }
}

/// Per-word distributions over the irrelevant target `t0` and the `T` targets,
/// stored row-major as `[L, T+1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiMask {
    pub len: usize,
    pub num_targets: usize,
    pub probs: Vec<f64>,
}

impl MultiMask {
    pub fn new(len: usize, num_targets: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != len * (num_targets + 1) {
            return Err(CoreError::Schema(format!(
                "mask of {} values cannot be [{len}, {}]",
                probs.len(),
                num_targets + 1
            )));
        }
        Ok(MultiMask {
            len,
            num_targets,
            probs,
        })
    }

    pub fn row(&self, l: usize) -> &[f64] {
        let w = self.num_targets + 1;
        &self.probs[l * w..(l + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.num_targets + 1)
    }

    /// Column `i` as a length-`L` vector; `0` is the irrelevant target.
    pub fn sub_mask(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }

    /// Target columns `1..=T` as `[L, T]`.
    pub fn target_scores(&self) -> Vec<f64> {
        self.rows().flat_map(|r| r[1..].iter().copied()).collect()
    }

    /// Largest deviation of a row sum from 1, or infinity if any entry leaves `[0, 1]`.
    pub fn distribution_error(&self) -> f64 {
        self.rows()
            .map(|r| {
                if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    f64::INFINITY
                } else {
                    (r.iter().sum::<f64>() - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// `p_sel = mean_l (1 − M[l, 0])`.
    pub fn selection_rate(&self) -> f64 {
        self.rows().map(|r| 1.0 - r[0]).sum::<f64>() / self.len as f64
    }

    /// `p_dis = Σ_{l≥2} ‖M[l] − M[l−1]‖₁ / ((L−1)(T+1))`, zero for `L = 1`.
    pub fn transition_rate(&self) -> f64 {
        if self.len < 2 {
            return 0.0;
        }
        let rows: Vec<&[f64]> = self.rows().collect();
        let total: f64 = rows
            .windows(2)
            .map(|w| w[0].iter().zip(w[1]).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .sum();
        total / ((self.len - 1) * (self.num_targets + 1)) as f64
    }
}

/// Scales each embedding row by the target-`i` probability of its word.
pub fn apply_mask(embeddings: &[f64], dim: usize, mask: &MultiMask, i: usize) -> Result<Vec<f64>> {
    if i == 0 || i > mask.num_targets {
        return Err(CoreError::Contract(format!(
            "target index {i} outside 1..={}",
            mask.num_targets
        )));
    }
    if embeddings.len() != mask.len * dim {
        return Err(CoreError::Schema("embedding rows differ from mask rows".into()));
    }
    Ok(embeddings
        .chunks(dim)
        .zip(mask.rows())
        .flat_map(|(e, r)| e.iter().map(move |v| v * r[i]))
        .collect())
}

/// Selection loss on a `[L, T+1]` mask node.
pub fn loss_sel(g: &mut Graph<'_>, mask: Var, lambda_p: f64) -> Result<Var> {
    let c0 = g.tape.column(mask, 0)?;
    let kept = g.tape.mean(c0);
    let p_sel = g.tape.affine(kept, -1.0, 1.0);
    let p_sel = clamp_unit(g, p_sel);
    Ok(g.tape.binary_cross_entropy(p_sel, lambda_p)?)
}

/// Continuity loss on a `[L, T+1]` mask node, `None` when `L < 2`.
pub fn loss_cont(g: &mut Graph<'_>, mask: Var) -> Result<Option<Var>> {
    let shape = g.tape.shape(mask).to_vec();
    let (l, w) = (shape[0], shape[1]);
    if l < 2 {
        return Ok(None);
    }
    let tr = g.tape.transitions(mask)?;
    let p_dis = g.tape.scale(tr, 1.0 / ((l - 1) * w) as f64);
    let p_dis = clamp_unit(g, p_dis);
    Ok(Some(g.tape.binary_cross_entropy(p_dis, 0.0)?))
}

pub struct ForwardOutput {
    pub loss: Var,
    pub losses: LossParts,
    /// Two logits per target.
    pub logits: Vec<[f64; 2]>,
    /// Mask over the document's positions, PAD rows included (mtm only).
    pub mask: Option<MultiMask>,
    /// One `[L]` weight vector per attention head.
    pub attention: Option<Vec<Vec<f64>>>,
}

impl ForwardOutput {
    pub fn predictions(&self) -> Vec<u8> {
        self.logits.iter().map(|l| u8::from(l[1] > l[0])).collect()
    }
}

#[derive(Debug, Clone)]
enum Arch {
    Base {
        enc: ConvEncoder,
        heads: Vec<Head>,
    },
    Saa {
        rnn: Option<Recurrent>,
        cnn: Option<ConvEncoder>,
        att: Attention,
        heads: Vec<Head>,
    },
    Aspectwise {
        towers: Vec<(Recurrent, Attention, Head)>,
    },
    Mtm {
        masker: Recurrent,
        proj: Linear,
        enc: ConvEncoder,
        heads: Vec<Head>,
    },
}

#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub params: ParamStore,
    embedding: ParamId,
    arch: Arch,
    /// Frozen masker that supplies the appended columns of an mtm-c model.
    pub source: Option<Box<Model>>,
}

impl Model {
    /// Builds a freshly initialized model around an embedding matrix `[V, d]`.
    pub fn new(kind: ModelKind, config: ModelConfig, embeddings: Tensor, seed: u64) -> Result<Self> {
        if kind == ModelKind::MtmC {
            return Err(CoreError::Contract("mtm-c models are built with Model::contextualized".into()));
        }
        Model::build(kind, config, embeddings, None, seed)
    }

    /// Builds an mtm-c classifier whose extra input columns come from `source`.
    pub fn contextualized(config: ModelConfig, embeddings: Tensor, source: Model, seed: u64) -> Result<Self> {
        if source.kind != ModelKind::Mtm {
            return Err(CoreError::Schema(format!("mtm-c needs an mtm source, got {}", source.kind)));
        }
        if source.config.num_targets != config.num_targets {
            return Err(CoreError::Schema(format!(
                "source masker has {} targets, config has {}",
                source.config.num_targets, config.num_targets
            )));
        }
        let mut source = source;
        for p in source.params.iter_mut() {
            p.tensor.requires_grad = false;
            p.tensor.grad = None;
        }
        Model::build(ModelKind::MtmC, config, embeddings, Some(Box::new(source)), seed)
    }

    pub(crate) fn build(
        kind: ModelKind,
        mut config: ModelConfig,
        mut embeddings: Tensor,
        source: Option<Box<Model>>,
        seed: u64,
    ) -> Result<Self> {
        if embeddings.shape.len() != 2 {
            return Err(CoreError::Schema(format!("embeddings must be a matrix, got {:?}", embeddings.shape)));
        }
        config.embed_dim = embeddings.shape[1];
        config.validate()?;
        let mut rng = Rng::new(seed).fork(0x30DE1);
        let mut store = ParamStore::new();
        embeddings.requires_grad = config.train_embeddings;
        embeddings.grad = None;
        let embedding = store.add("embedding", embeddings, false);
        let t = config.num_targets;
        let d = config.embed_dim;
        let heads = |store: &mut ParamStore, rng: &mut Rng, input: usize| -> Vec<Head> {
            (1..=t)
                .map(|i| Head::new(store, &format!("head{i}"), input, config.classifier_hidden, rng))
                .collect()
        };
        let arch = match kind {
            ModelKind::Base | ModelKind::MtmC => {
                let input = if kind == ModelKind::MtmC { d + t } else { d };
                let enc = ConvEncoder::new(&mut store, "encoder", input, &config.filter_widths, config.feature_maps, &mut rng);
                let heads = heads(&mut store, &mut rng, enc.output_dim());
                Arch::Base { enc, heads }
            }
            ModelKind::SaaCnn | ModelKind::SaaLstm => {
                let (rnn, cnn, dim, att_hidden) = if kind == ModelKind::SaaLstm {
                    let r = Recurrent::new(&mut store, "encoder", d, config.hidden, config.bidirectional, &mut rng);
                    (Some(r), None, r.output_dim(), config.hidden)
                } else {
                    let c = ConvEncoder::new(&mut store, "encoder", d, &config.filter_widths, config.feature_maps, &mut rng);
                    let dim = c.output_dim();
                    (None, Some(c), dim, config.feature_maps)
                };
                let a = config.attention_hidden.unwrap_or(att_hidden);
                let att = Attention::new(&mut store, "attention", dim, a, Normalizer::Softmax, &mut rng);
                let heads = heads(&mut store, &mut rng, dim);
                Arch::Saa { rnn, cnn, att, heads }
            }
            ModelKind::Maa | ModelKind::Masa => {
                let norm = if kind == ModelKind::Masa {
                    Normalizer::Sparsemax
                } else {
                    Normalizer::Softmax
                };
                let towers = (1..=t)
                    .map(|i| {
                        let r = Recurrent::new(&mut store, &format!("tower{i}.encoder"), d, config.hidden, config.bidirectional, &mut rng);
                        let a = config.attention_hidden.unwrap_or(config.hidden);
                        let att = Attention::new(&mut store, &format!("tower{i}.attention"), r.output_dim(), a, norm, &mut rng);
                        let head = Head::new(&mut store, &format!("head{i}"), r.output_dim(), config.classifier_hidden, &mut rng);
                        (r, att, head)
                    })
                    .collect();
                Arch::Aspectwise { towers }
            }
            ModelKind::Mtm => {
                let masker = Recurrent::new(&mut store, "masker.lstm", d, config.hidden, config.bidirectional, &mut rng);
                let proj = Linear::new(&mut store, "masker.proj", masker.output_dim(), t + 1, &mut rng);
                let enc = ConvEncoder::new(&mut store, "encoder", d, &config.filter_widths, config.feature_maps, &mut rng);
                let heads = heads(&mut store, &mut rng, enc.output_dim());
                Arch::Mtm {
                    masker,
                    proj,
                    enc,
                    heads,
                }
            }
        };
        Ok(Model {
            kind,
            config,
            params: store,
            embedding,
            arch,
            source,
        })
    }

    pub fn num_targets(&self) -> usize {
        self.config.num_targets
    }

    pub fn vocab_size(&self) -> usize {
        self.params.get(self.embedding).shape[0]
    }

    pub fn embedding(&self) -> &Tensor {
        self.params.get(self.embedding)
    }

    /// Trainable scalars, excluding frozen embeddings and frozen sources.
    pub fn count_params(&self) -> usize {
        self.params.trainable_count()
    }

    /// Parameter ids of the masker projection `(W, b)` (mtm only).
    pub fn masker_projection(&self) -> Option<(ParamId, ParamId)> {
        match &self.arch {
            Arch::Mtm { proj, .. } => Some((proj.w, proj.b)),
            _ => None,
        }
    }

    /// Whether the model yields per-word aspect scores.
    pub fn has_word_scores(&self) -> bool {
        !matches!(self.arch, Arch::Base { .. })
    }

    fn check_input(&self, doc: &DocInput) -> Result<()> {
        if doc.ids.is_empty() {
            return Err(CoreError::Empty("document has no tokens".into()));
        }
        if let Some(l) = &doc.labels {
            if l.len() != self.num_targets() {
                return Err(CoreError::Schema(format!(
                    "document has {} labels, model has {} targets",
                    l.len(),
                    self.num_targets()
                )));
            }
        }
        if let Some(&bad) = doc.ids.iter().find(|&&i| i >= self.vocab_size()) {
            return Err(CoreError::Schema(format!("token id {bad} outside vocabulary of {}", self.vocab_size())));
        }
        Ok(())
    }

    /// Records the forward pass on `g` and returns the loss node and outputs.
    /// Sampling and dropout are active only when `training`.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, doc: &DocInput, rng: &mut Rng, training: bool) -> Result<ForwardOutput> {
        self.check_input(doc)?;
        match &self.arch {
            Arch::Mtm { .. } => self.forward_mtm(g, doc, None, rng, training),
            Arch::Base { enc, heads } => {
                let x = self.embed(g, &doc.ids, rng, training)?;
                let x = if self.kind == ModelKind::MtmC {
                    let ctx = self.context_for(doc)?;
                    let c = g.tape.constant(ctx, &[doc.ids.len(), self.num_targets()])?;
                    g.tape.concat_cols(&[x, c])?
                } else {
                    x
                };
                let h = enc.forward(g, x, None)?;
                let h = g.tape.dropout(h, self.config.dropout, rng, training)?;
                let logits = heads.iter().map(|hd| hd.forward(g, h)).collect::<Result<Vec<_>>>()?;
                self.finish(g, doc, logits, None, None)
            }
            Arch::Saa { rnn, cnn, att, heads } => {
                let x = self.embed(g, &doc.ids, rng, training)?;
                let h = match (rnn, cnn) {
                    (Some(r), _) => r.forward(g, x)?,
                    (None, Some(c)) => c.features(g, x)?,
                    _ => unreachable!("saa has one encoder"),
                };
                let (ctx, w) = att.forward(g, h)?;
                let ctx = g.tape.dropout(ctx, self.config.dropout, rng, training)?;
                let logits = heads.iter().map(|hd| hd.forward(g, ctx)).collect::<Result<Vec<_>>>()?;
                let weights = g.tape.value(w).to_vec();
                self.finish(g, doc, logits, None, Some(vec![weights]))
            }
            Arch::Aspectwise { towers } => {
                let x = self.embed(g, &doc.ids, rng, training)?;
                let mut logits = Vec::new();
                let mut weights = Vec::new();
                for (r, att, head) in towers {
                    let h = r.forward(g, x)?;
                    let (ctx, w) = att.forward(g, h)?;
                    let ctx = g.tape.dropout(ctx, self.config.dropout, rng, training)?;
                    logits.push(head.forward(g, ctx)?);
                    weights.push(g.tape.value(w).to_vec());
                }
                self.finish(g, doc, logits, None, Some(weights))
            }
        }
    }

    /// Masker forward on a PAD-extended id sequence whose valid positions form
    /// a prefix. PAD rows of the mask are zero and never win the pooling.
    pub fn forward_padded<'a>(
        &'a self,
        g: &mut Graph<'a>,
        doc: &DocInput,
        valid: &[bool],
        rng: &mut Rng,
        training: bool,
    ) -> Result<ForwardOutput> {
        if self.kind != ModelKind::Mtm {
            return Err(CoreError::Contract("forward_padded is defined for mtm models".into()));
        }
        self.check_input(doc)?;
        self.forward_mtm(g, doc, Some(valid), rng, training)
    }

    fn embed(&self, g: &mut Graph<'_>, ids: &[usize], rng: &mut Rng, training: bool) -> Result<Var> {
        let table = g.p(self.embedding);
        let e = g.tape.gather_rows(table, ids)?;
        Ok(g.tape.dropout(e, self.config.dropout, rng, training)?)
    }

    fn context_for(&self, doc: &DocInput) -> Result<Vec<f64>> {
        let t = self.num_targets();
        match (&doc.context, &self.source) {
            (Some(c), _) if c.len() == doc.ids.len() * t => Ok(c.clone()),
            (Some(c), _) => Err(CoreError::Schema(format!(
                "context has {} values, expected {}",
                c.len(),
                doc.ids.len() * t
            ))),
            (None, Some(src)) => src.contextualize(&doc.ids),
            (None, None) => Err(CoreError::Contract("mtm-c model without a source masker".into())),
        }
    }

    /// Inference-mode target columns `1..=T` of the mask, `[L, T]`.
    pub fn contextualize(&self, ids: &[usize]) -> Result<Vec<f64>> {
        Ok(self.infer_mask(ids)?.target_scores())
    }

    /// Deterministic mask (mtm only).
    pub fn infer_mask(&self, ids: &[usize]) -> Result<MultiMask> {
        let out = self.infer(&DocInput::new(ids.to_vec(), None))?;
        out.mask
            .ok_or_else(|| CoreError::Contract(format!("{} models have no mask", self.kind)))
    }

    /// Noise-free, dropout-free forward pass.
    pub fn infer(&self, doc: &DocInput) -> Result<ForwardOutput> {
        let mut g = Graph::new(&self.params);
        let mut rng = Rng::new(0);
        self.forward(&mut g, doc, &mut rng, false)
    }

    /// Per-word aspect scores `[L, T]`: mask columns for mtm, attention
    /// weights for attention baselines (a shared head is repeated per target).
    pub fn word_scores(&self, doc: &DocInput) -> Result<Vec<f64>> {
        let t = self.num_targets();
        let out = self.infer(doc)?;
        let l = doc.ids.len();
        if let Some(mask) = out.mask {
            return Ok(mask.target_scores());
        }
        match out.attention {
            Some(heads) => {
                let mut s = vec![0.0; l * t];
                for pos in 0..l {
                    for a in 0..t {
                        let h = if heads.len() == 1 { &heads[0] } else { &heads[a] };
                        s[pos * t + a] = h[pos];
                    }
                }
                Ok(s)
            }
            None => Err(CoreError::Contract(format!("{} models produce no word scores", self.kind))),
        }
    }

    fn forward_mtm<'a>(
        &'a self,
        g: &mut Graph<'a>,
        doc: &DocInput,
        valid: Option<&[bool]>,
        rng: &mut Rng,
        training: bool,
    ) -> Result<ForwardOutput> {
        let Arch::Mtm { masker, proj, enc, heads } = &self.arch else {
            unreachable!("checked by caller")
        };
        let cfg = &self.config;
        let t = cfg.num_targets;
        let width = doc.ids.len();
        let n = match valid {
            None => width,
            Some(v) => {
                if v.len() != width {
                    return Err(CoreError::Schema("validity mask length differs from ids".into()));
                }
                let n = v.iter().take_while(|b| **b).count();
                if v[n..].iter().any(|b| *b) {
                    return Err(CoreError::Contract("valid positions must form a prefix".into()));
                }
                if n == 0 {
                    return Err(CoreError::Empty("document has no valid tokens".into()));
                }
                n
            }
        };

        let x_all = self.embed(g, &doc.ids, rng, training)?;
        let x = if n < width {
            self.embed(g, &doc.ids[..n], rng, training)?
        } else {
            x_all
        };
        let h = masker.forward(g, x)?;
        let z = proj.forward(g, h)?;
        let omega = g.tape.log_softmax(z, 1)?;
        let m = if training {
            g.tape.gumbel_softmax(omega, cfg.tau, rng, cfg.straight_through)?
        } else {
            g.tape.exp(omega)
        };

        let m_full = if n < width {
            let mt = g.tape.transpose(m)?;
            let zeros = g.tape.constant(vec![0.0; (t + 1) * (width - n)], &[t + 1, width - n])?;
            let padded = g.tape.concat_cols(&[mt, zeros])?;
            g.tape.transpose(padded)?
        } else {
            m
        };

        let mut logits = Vec::with_capacity(t);
        for (i, head) in heads.iter().enumerate() {
            let mi = g.tape.column(m_full, i + 1)?;
            let ei = g.tape.scale_rows(x_all, mi)?;
            let hi = enc.forward(g, ei, valid)?;
            let hi = g.tape.dropout(hi, cfg.dropout, rng, training)?;
            logits.push(head.forward(g, hi)?);
        }

        let sel = loss_sel(g, m, cfg.lambda_p)?;
        let cont = loss_cont(g, m)?;

        let mask = MultiMask::new(width, t, g.tape.value(m_full).to_vec())?;
        let mut out = self.finish(g, doc, logits, Some(mask), None)?;
        let pred = out.loss;
        let mut total = pred;
        if cfg.lambda_sel > 0.0 {
            let s = g.tape.scale(sel, cfg.lambda_sel);
            total = g.tape.add(total, s)?;
        }
        if let (Some(c), true) = (cont, cfg.lambda_cont > 0.0) {
            let s = g.tape.scale(c, cfg.lambda_cont);
            total = g.tape.add(total, s)?;
        }
        out.loss = total;
        out.losses.sel = g.tape.scalar(sel);
        out.losses.cont = cont.map_or(0.0, |c| g.tape.scalar(c));
        out.losses.total = g.tape.scalar(total);
        Ok(out)
    }

    /// Sums the per-target cross-entropies (zero without labels).
    fn finish(
        &self,
        g: &mut Graph<'_>,
        doc: &DocInput,
        logits: Vec<Var>,
        mask: Option<MultiMask>,
        attention: Option<Vec<Vec<f64>>>,
    ) -> Result<ForwardOutput> {
        let values: Vec<[f64; 2]> = logits
            .iter()
            .map(|l| {
                let v = g.tape.value(*l);
                [v[0], v[1]]
            })
            .collect();
        let pred = match &doc.labels {
            Some(labels) => {
                let mut acc: Option<Var> = None;
                for (l, &y) in logits.iter().zip(labels) {
                    let ce = g.tape.cross_entropy(*l, usize::from(y))?;
                    acc = Some(match acc {
                        None => ce,
                        Some(a) => g.tape.add(a, ce)?,
                    });
                }
                acc.expect("at least one target")
            }
            None => g.tape.constant(vec![0.0], &[1])?,
        };
        let p = g.tape.scalar(pred);
        Ok(ForwardOutput {
            loss: pred,
            losses: LossParts {
                pred: p,
                sel: 0.0,
                cont: 0.0,
                total: p,
            },
            logits: values,
            mask,
            attention,
        })
    }
}

/// Shifts a rate that rounding pushed just outside `[0, 1]` back inside,
/// keeping its gradient.
fn clamp_unit(g: &mut Graph<'_>, p: Var) -> Var {
    let v = g.tape.scalar(p);
    let c = v.clamp(0.0, 1.0);
    if c == v {
        p
    } else {
        g.tape.affine(p, 1.0, c - v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ModelKind) -> Model {
        let cfg = ModelConfig {
            num_targets: 3,
            hidden: 4,
            filter_widths: vec![1, 3],
            feature_maps: 3,
            classifier_hidden: 4,
            ..ModelConfig::default()
        };
        let mut rng = Rng::new(5);
        let emb = Tensor::uniform(&[12, 5], 0.5, &mut rng);
        Model::new(kind, cfg, emb, 1).unwrap()
    }

    fn doc() -> DocInput {
        DocInput::new(vec![2, 5, 7, 3, 11, 4], Some(vec![1, 0, 1]))
    }

    #[test]
    fn kinds_parse_and_list_valid_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        let err = "cnn".parse::<ModelKind>().unwrap_err().to_string();
        assert!(err.contains("mtm-c") && err.contains("saa-lstm"));
    }

    #[test]
    fn presets_match_published_sizes() {
        let count = |kind, cfg: ModelConfig| {
            let emb = Tensor::zeros(&[10, cfg.embed_dim]);
            Model::new(kind, cfg, emb, 0).unwrap().count_params()
        };
        assert_eq!(count(ModelKind::Base, ModelConfig::beer()), 188_410);
        assert_eq!(count(ModelKind::Mtm, ModelConfig::beer()), 289_416);
        assert_eq!(count(ModelKind::Base, ModelConfig::hotel()), 263_410);
        assert_eq!(count(ModelKind::Mtm, ModelConfig::hotel()), 404_416);
        assert_eq!(count(ModelKind::Base, ModelConfig::beer_decorrelated()), 173_106);
    }

    #[test]
    fn every_kind_runs_forward_and_backward() {
        for kind in ModelKind::ALL.into_iter().filter(|k| *k != ModelKind::MtmC) {
            let m = tiny(kind);
            let mut g = Graph::new(&m.params);
            let mut rng = Rng::new(3);
            let out = m.forward(&mut g, &doc(), &mut rng, true).unwrap();
            assert_eq!(out.logits.len(), 3);
            let grads = g.tape.backward(out.loss).unwrap();
            assert!(!g.param_grads(&grads).is_empty(), "{kind}");
        }
    }

    #[test]
    fn unlabeled_docs_have_zero_prediction_loss() {
        let m = tiny(ModelKind::Base);
        let out = m.infer(&DocInput::new(vec![2, 3], None)).unwrap();
        assert_eq!(out.losses.pred, 0.0);
    }

    #[test]
    fn input_checks() {
        let m = tiny(ModelKind::Mtm);
        assert!(matches!(m.infer(&DocInput::new(vec![], None)), Err(CoreError::Empty(_))));
        assert!(matches!(m.infer(&DocInput::new(vec![99], None)), Err(CoreError::Schema(_))));
        assert!(matches!(
            m.infer(&DocInput::new(vec![2], Some(vec![1]))),
            Err(CoreError::Schema(_))
        ));
    }

    #[test]
    fn contextualized_dimensions() {
        let src = tiny(ModelKind::Mtm);
        let emb = src.embedding().clone();
        let c = Model::contextualized(src.config.clone(), emb, src, 2).unwrap();
        assert_eq!(c.params.get(ParamId(1)).shape, vec![(5 + 3), 3]);
        let out = c.infer(&doc()).unwrap();
        assert_eq!(out.logits.len(), 3);
        assert!(c.source.as_ref().unwrap().count_params() == 0);
    }
}
