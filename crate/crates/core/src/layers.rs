//! Building blocks shared by the masker model and the baselines.

use mtm_autodiff::{ConvVars, LstmVars, Rng, Tensor, Var};

use crate::error::Result;
use crate::params::{Graph, ParamId, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let w = store.add(format!("{name}.w"), Tensor::xavier(input, output, rng).with_grad(), true);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[output]).with_grad(), false);
        Linear { w, b, input, output }
    }

    pub fn num_params(&self) -> usize {
        self.input * self.output + self.output
    }

    /// `x · W + b` for `x` of shape `[n]` or `[L, n]`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (w, b) = (g.p(self.w), g.p(self.b));
        let y = g.tape.matmul(x, w)?;
        Ok(g.tape.add_row(y, b)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmLayer {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
}

impl LstmLayer {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmLayer {
            wx: store.add(
                format!("{name}.wx"),
                Tensor::uniform(&[input, 4 * hidden], bound, rng).with_grad(),
                true,
            ),
            wh: store.add(
                format!("{name}.wh"),
                Tensor::uniform(&[hidden, 4 * hidden], bound, rng).with_grad(),
                true,
            ),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[4 * hidden]).with_grad(), false),
        }
    }

    fn vars(&self, g: &mut Graph<'_>) -> LstmVars {
        LstmVars {
            wx: g.p(self.wx),
            wh: g.p(self.wh),
            b: g.p(self.b),
        }
    }
}

/// LSTM over a `[L, d]` sequence; optionally bidirectional.
#[derive(Debug, Clone, Copy)]
pub struct Recurrent {
    pub fwd: LstmLayer,
    pub bwd: Option<LstmLayer>,
    pub hidden: usize,
}

impl Recurrent {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        bidirectional: bool,
        rng: &mut Rng,
    ) -> Self {
        let fwd = LstmLayer::new(store, &format!("{name}.fwd"), input, hidden, rng);
        let bwd = bidirectional.then(|| LstmLayer::new(store, &format!("{name}.bwd"), input, hidden, rng));
        Recurrent { fwd, bwd, hidden }
    }

    pub fn output_dim(&self) -> usize {
        if self.bwd.is_some() {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let f = self.fwd.vars(g);
        let b = self.bwd.map(|l| l.vars(g));
        Ok(g.tape.bilstm(x, f, b)?)
    }
}

/// Multi-width text CNN with same-length outputs.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub banks: Vec<(ParamId, ParamId, usize)>,
    pub feature_maps: usize,
}

impl ConvEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        widths: &[usize],
        feature_maps: usize,
        rng: &mut Rng,
    ) -> Self {
        let banks = widths
            .iter()
            .map(|&w| {
                let fan_in = w * input;
                let kernel = Tensor::xavier(fan_in, feature_maps, rng).with_grad();
                (
                    store.add(format!("{name}.w{w}"), kernel, true),
                    store.add(format!("{name}.b{w}"), Tensor::zeros(&[feature_maps]).with_grad(), false),
                    w,
                )
            })
            .collect();
        ConvEncoder { banks, feature_maps }
    }

    pub fn output_dim(&self) -> usize {
        self.banks.len() * self.feature_maps
    }

    /// Per-position features `[L, widths × feature_maps]`.
    pub fn features(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let banks: Vec<ConvVars> = self
            .banks
            .iter()
            .map(|&(w, b, width)| ConvVars {
                w: g.p(w),
                b: g.p(b),
                width,
            })
            .collect();
        Ok(g.tape.conv1d_bank(x, &banks)?)
    }

    /// Convolution followed by max-over-time pooling; rows with `valid[l] ==
    /// false` never win the maximum.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, valid: Option<&[bool]>) -> Result<Var> {
        let h = self.features(g, x)?;
        Ok(match valid {
            Some(v) => g.tape.max_over_time_masked(h, v)?,
            None => g.tape.max_over_time(h)?,
        })
    }
}

/// Two-layer feed-forward classifier with a ReLU, producing two logits.
#[derive(Debug, Clone, Copy)]
pub struct Head {
    pub hidden: Linear,
    pub out: Linear,
}

impl Head {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Head {
            hidden: Linear::new(store, &format!("{name}.fc1"), input, hidden, rng),
            out: Linear::new(store, &format!("{name}.fc2"), hidden, 2, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, x)?;
        let h = g.tape.relu(h);
        self.out.forward(g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalizer {
    Softmax,
    Sparsemax,
}

/// `score_l = vᵀ tanh(W h_l + b)`, normalized over positions.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub proj: Linear,
    pub v: ParamId,
    pub normalizer: Normalizer,
}

impl Attention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        normalizer: Normalizer,
        rng: &mut Rng,
    ) -> Self {
        Attention {
            proj: Linear::new(store, &format!("{name}.proj"), input, hidden, rng),
            v: store.add(format!("{name}.v"), Tensor::xavier(hidden, 1, rng).with_grad(), true),
            normalizer,
        }
    }

    /// Attention weights `[L]` over the rows of `h` (`[L, n]`).
    pub fn weights(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        let l = g.tape.shape(h)[0];
        let a = self.proj.forward(g, h)?;
        let a = g.tape.tanh(a);
        let v = g.p(self.v);
        let s = g.tape.matmul(a, v)?;
        let s = g.tape.reshape(s, &[l])?;
        Ok(match self.normalizer {
            Normalizer::Softmax => g.tape.softmax(s, 0)?,
            Normalizer::Sparsemax => g.tape.sparsemax(s)?,
        })
    }

    /// Returns `(context [n], weights [L])`.
    pub fn forward(&self, g: &mut Graph<'_>, h: Var) -> Result<(Var, Var)> {
        let w = self.weights(g, h)?;
        let ctx = g.tape.matmul(w, h)?;
        Ok((ctx, w))
    }
}
