use std::borrow::Cow;

use crate::error::{AutodiffError, Result};
use crate::rng::Rng;
use crate::tape::{Op, Tape, Var};
use crate::BCE_EPS;

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy)]
pub(crate) struct ConvDims {
    pub l: usize,
    pub d: usize,
    pub f: usize,
    pub width: usize,
}

/// Saved activations of one LSTM direction, indexed by sequence position.
pub(crate) struct LstmCache {
    l: usize,
    d: usize,
    h: usize,
    reverse: bool,
    /// Post-activation gates `[i | f | g | o]`, `[L, 4h]`.
    gates: Vec<f64>,
    cell: Vec<f64>,
    cell_tanh: Vec<f64>,
}

pub(crate) struct LstmGrads {
    pub dx: Vec<f64>,
    pub dwx: Vec<f64>,
    pub dwh: Vec<f64>,
    pub db: Vec<f64>,
}

/// Parameters of one LSTM direction as tape variables.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    /// Input weights `[d, 4h]`, gate order `[i | f | g | o]`.
    pub wx: Var,
    /// Recurrent weights `[h, 4h]`.
    pub wh: Var,
    /// Gate bias `[4h]`.
    pub b: Var,
}

/// One convolution filter bank of a given odd width.
#[derive(Debug, Clone, Copy)]
pub struct ConvVars {
    /// Kernel `[width * d, feature_maps]`; row `k * d + c` holds tap `k`, channel `c`.
    pub w: Var,
    pub b: Var,
    pub width: usize,
}

fn slice_dims(shape: &[usize], axis: usize) -> Option<(usize, usize, usize)> {
    if axis >= shape.len() {
        return None;
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Some((outer, shape[axis], inner))
}

pub(crate) fn log_softmax_backward(
    out: &[f64],
    g: &[f64],
    gx: &mut [f64],
    outer: usize,
    k: usize,
    inner: usize,
) {
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| o * k * inner + j * inner + i;
            let gsum: f64 = (0..k).map(|j| g[idx(j)]).sum();
            for j in 0..k {
                gx[idx(j)] += g[idx(j)] - out[idx(j)].exp() * gsum;
            }
        }
    }
}

/// Backward of `y = softmax(z / tau)` over rows of length `k`, given `y`.
pub(crate) fn tempered_softmax_backward(y: &[f64], g: &[f64], gx: &mut [f64], k: usize, tau: f64) {
    for r in 0..y.len() / k {
        let ys = &y[r * k..(r + 1) * k];
        let gs = &g[r * k..(r + 1) * k];
        let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
        for j in 0..k {
            gx[r * k + j] += ys[j] * (gs[j] - dot) / tau;
        }
    }
}

pub(crate) fn conv1d_backward_input(w: &[f64], g: &[f64], gx: &mut [f64], dims: ConvDims) {
    let ConvDims { l, d, f, width } = dims;
    let pad = (width - 1) / 2;
    for pos in 0..l {
        let grow = &g[pos * f..(pos + 1) * f];
        for k in 0..width {
            let src = pos + k;
            if src < pad || src - pad >= l {
                continue;
            }
            let src = src - pad;
            for c in 0..d {
                let wrow = &w[(k * d + c) * f..(k * d + c + 1) * f];
                let s: f64 = wrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                gx[src * d + c] += s;
            }
        }
    }
}

pub(crate) fn conv1d_backward_weight(x: &[f64], g: &[f64], gw: &mut [f64], dims: ConvDims) {
    let ConvDims { l, d, f, width } = dims;
    let pad = (width - 1) / 2;
    for pos in 0..l {
        let grow = &g[pos * f..(pos + 1) * f];
        for k in 0..width {
            let src = pos + k;
            if src < pad || src - pad >= l {
                continue;
            }
            let src = src - pad;
            for c in 0..d {
                let xv = x[src * d + c];
                if xv == 0.0 {
                    continue;
                }
                let wrow = &mut gw[(k * d + c) * f..(k * d + c + 1) * f];
                for j in 0..f {
                    wrow[j] += xv * grow[j];
                }
            }
        }
    }
}

pub(crate) fn lstm_backward(
    cache: &LstmCache,
    x: &[f64],
    wx: &[f64],
    wh: &[f64],
    out: &[f64],
    g: &[f64],
) -> LstmGrads {
    let LstmCache {
        l,
        d,
        h,
        reverse,
        ref gates,
        ref cell,
        ref cell_tanh,
    } = *cache;
    let h4 = 4 * h;
    let mut grads = LstmGrads {
        dx: vec![0.0; l * d],
        dwx: vec![0.0; d * h4],
        dwh: vec![0.0; h * h4],
        db: vec![0.0; h4],
    };
    let order: Vec<usize> = if reverse {
        (0..l).rev().collect()
    } else {
        (0..l).collect()
    };
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; h4];
    for step in (0..l).rev() {
        let pos = order[step];
        let prev = if step > 0 {
            Some(order[step - 1])
        } else {
            None
        };
        let gt = &gates[pos * h4..(pos + 1) * h4];
        for j in 0..h {
            let (ig, fg, gg, og) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
            let tc = cell_tanh[pos * h + j];
            let dh = g[pos * h + j] + dh_next[j];
            let c_prev = prev.map_or(0.0, |p| cell[p * h + j]);
            let dc = dh * og * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * ig * (1.0 - ig);
            dz[h + j] = dc * c_prev * fg * (1.0 - fg);
            dz[2 * h + j] = dc * ig * (1.0 - gg * gg);
            dz[3 * h + j] = dh * tc * og * (1.0 - og);
            dc_next[j] = dc * fg;
        }
        for (a, b) in grads.db.iter_mut().zip(&dz) {
            *a += b;
        }
        let xrow = &x[pos * d..(pos + 1) * d];
        for c in 0..d {
            let xv = xrow[c];
            let wrow = &wx[c * h4..(c + 1) * h4];
            let gwrow = &mut grads.dwx[c * h4..(c + 1) * h4];
            let mut s = 0.0;
            for j in 0..h4 {
                gwrow[j] += xv * dz[j];
                s += wrow[j] * dz[j];
            }
            grads.dx[pos * d + c] += s;
        }
        for r in 0..h {
            let hp = prev.map_or(0.0, |p| out[p * h + r]);
            let wrow = &wh[r * h4..(r + 1) * h4];
            let gwrow = &mut grads.dwh[r * h4..(r + 1) * h4];
            let mut s = 0.0;
            for j in 0..h4 {
                if hp != 0.0 {
                    gwrow[j] += hp * dz[j];
                }
                s += wrow[j] * dz[j];
            }
            dh_next[r] = s;
        }
    }
    grads
}

pub(crate) fn sparsemax_backward(p: &[f64], g: &[f64], gx: &mut [f64], k: usize) {
    for r in 0..p.len() / k {
        let ps = &p[r * k..(r + 1) * k];
        let gs = &g[r * k..(r + 1) * k];
        let (mut sum, mut count) = (0.0, 0usize);
        for j in 0..k {
            if ps[j] > 0.0 {
                sum += gs[j];
                count += 1;
            }
        }
        let mean = sum / count.max(1) as f64;
        for j in 0..k {
            if ps[j] > 0.0 {
                gx[r * k + j] += gs[j] - mean;
            }
        }
    }
}

/// Euclidean projection of `z` onto the probability simplex (sort and threshold).
pub fn sparsemax_slice(z: &[f64]) -> Vec<f64> {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support = 0;
    let mut support_sum = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if 1.0 + (i + 1) as f64 * v > cumsum {
            support = i + 1;
            support_sum = cumsum;
        }
    }
    let threshold = (support_sum - 1.0) / support as f64;
    z.iter().map(|v| (v - threshold).max(0.0)).collect()
}

impl<'a> Tape<'a> {
    /// Log-softmax along `axis`, stabilized by max subtraction.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, k, inner) = slice_dims(&shape, axis)
            .ok_or_else(|| AutodiffError::shape("log_softmax", &shape, &[axis]))?;
        if k == 0 {
            return Err(AutodiffError::param("log_softmax", "empty softmax axis"));
        }
        let xv = self.value(x);
        if xv.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: "log_softmax" });
        }
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * k * inner + j * inner + i;
                let max = (0..k).map(|j| xv[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = max + (0..k).map(|j| (xv[idx(j)] - max).exp()).sum::<f64>().ln();
                for j in 0..k {
                    out[idx(j)] = xv[idx(j)] - lse;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Cow::Owned(out),
            shape,
            rg,
            Op::LogSoftmax {
                x: x.0,
                outer,
                k,
                inner,
            },
        ))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let ls = self.log_softmax(x, axis)?;
        Ok(self.exp(ls))
    }

    /// Gumbel-Softmax sample over the last axis: `softmax((x + g) / tau)` with
    /// standard Gumbel noise `g` drawn from `rng`. With `hard`, the forward value
    /// is the one-hot argmax of the soft sample and the backward pass uses the
    /// soft sample's Jacobian (straight-through estimator).
    pub fn gumbel_softmax(&mut self, x: Var, tau: f64, rng: &mut Rng, hard: bool) -> Result<Var> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(AutodiffError::param(
                "gumbel_softmax",
                format!("tau must be positive, got {tau}"),
            ));
        }
        let shape = self.shape(x).to_vec();
        let k = *shape
            .last()
            .ok_or_else(|| AutodiffError::param("gumbel_softmax", "scalar input"))?;
        if k == 0 {
            return Err(AutodiffError::param(
                "gumbel_softmax",
                "empty category axis",
            ));
        }
        let xv = self.value(x);
        if xv.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite {
                op: "gumbel_softmax",
            });
        }
        let mut soft = vec![0.0; xv.len()];
        for r in 0..xv.len() / k {
            let row = &mut soft[r * k..(r + 1) * k];
            for j in 0..k {
                row[j] = (xv[r * k + j] + rng.gumbel()) / tau;
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let value = if hard {
            one_hot_rows(&soft, k)
        } else {
            soft.clone()
        };
        let rg = self.rg(x);
        Ok(self.push(
            Cow::Owned(value),
            shape,
            rg,
            Op::GumbelSoftmax {
                x: x.0,
                k,
                tau,
                soft,
            },
        ))
    }

    /// Same-length 1-D convolution over `x` (`[L, d]`), zero-padded by
    /// `(width - 1) / 2` on both sides. Output is `[L, feature_maps]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
        if width % 2 == 0 {
            return Err(AutodiffError::param(
                "conv1d",
                format!("filter width must be odd, got {width}"),
            ));
        }
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let (l, d) = match sx.as_slice() {
            [l, d] => (*l, *d),
            _ => return Err(AutodiffError::shape("conv1d", &sx, &sw)),
        };
        if l == 0 {
            return Err(AutodiffError::EmptySequence { op: "conv1d" });
        }
        let f = match sw.as_slice() {
            [rows, f] if *rows == width * d => *f,
            _ => return Err(AutodiffError::shape("conv1d", &sx, &sw)),
        };
        if self.shape(b) != [f] {
            return Err(AutodiffError::shape("conv1d", &sw, self.shape(b)));
        }
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let pad = (width - 1) / 2;
        let mut out = vec![0.0; l * f];
        for pos in 0..l {
            let orow = &mut out[pos * f..(pos + 1) * f];
            orow.copy_from_slice(bv);
            for k in 0..width {
                let src = pos + k;
                if src < pad || src - pad >= l {
                    continue;
                }
                let src = src - pad;
                for c in 0..d {
                    let v = xv[src * d + c];
                    if v == 0.0 {
                        continue;
                    }
                    let wrow = &wv[(k * d + c) * f..(k * d + c + 1) * f];
                    for j in 0..f {
                        orow[j] += v * wrow[j];
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            Cow::Owned(out),
            vec![l, f],
            rg,
            Op::Conv1d {
                x: x.0,
                w: w.0,
                b: b.0,
                l,
                d,
                f,
                width,
            },
        ))
    }

    /// Runs every filter bank over `x` and concatenates the feature maps.
    pub fn conv1d_bank(&mut self, x: Var, banks: &[ConvVars]) -> Result<Var> {
        let outs = banks
            .iter()
            .map(|bank| self.conv1d(x, bank.w, bank.b, bank.width))
            .collect::<Result<Vec<_>>>()?;
        if outs.len() == 1 {
            return Ok(outs[0]);
        }
        self.concat_cols(&outs)
    }

    /// Per-feature maximum over positions of `[L, F]`. Ties route the gradient
    /// to the lowest position.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let l = self.shape(x).first().copied().unwrap_or(0);
        self.max_over_time_masked(x, &vec![true; l])
    }

    /// Like [`Tape::max_over_time`] but only positions with `valid[l]` compete,
    /// which is equivalent to setting padded rows to −∞.
    pub fn max_over_time_masked(&mut self, x: Var, valid: &[bool]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (l, f) = match sx.as_slice() {
            [l, f] => (*l, *f),
            _ => return Err(AutodiffError::shape("max_over_time", &sx, &[])),
        };
        if valid.len() != l {
            return Err(AutodiffError::shape("max_over_time", &sx, &[valid.len()]));
        }
        if l == 0 || !valid.iter().any(|v| *v) {
            return Err(AutodiffError::EmptySequence {
                op: "max_over_time",
            });
        }
        let xv = self.value(x);
        let first = valid.iter().position(|v| *v).unwrap_or(0);
        let mut out = xv[first * f..(first + 1) * f].to_vec();
        let mut argmax = vec![first; f];
        for pos in (first + 1..l).filter(|p| valid[*p]) {
            for c in 0..f {
                let v = xv[pos * f + c];
                if v > out[c] {
                    out[c] = v;
                    argmax[c] = pos;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Cow::Owned(out),
            vec![f],
            rg,
            Op::MaxOverTime { x: x.0, argmax, f },
        ))
    }

    /// Unidirectional LSTM over `x` (`[L, d]`), returning hidden states `[L, h]`
    /// aligned with input positions. `reverse` runs right to left.
    pub fn lstm(&mut self, x: Var, params: LstmVars, reverse: bool) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let swx = self.shape(params.wx).to_vec();
        let (l, d) = match sx.as_slice() {
            [l, d] => (*l, *d),
            _ => return Err(AutodiffError::shape("lstm", &sx, &swx)),
        };
        if l == 0 {
            return Err(AutodiffError::EmptySequence { op: "lstm" });
        }
        let h4 = match swx.as_slice() {
            [rows, h4] if *rows == d && h4 % 4 == 0 => *h4,
            _ => return Err(AutodiffError::shape("lstm", &sx, &swx)),
        };
        let h = h4 / 4;
        if self.shape(params.wh) != [h, h4] {
            return Err(AutodiffError::shape("lstm", &swx, self.shape(params.wh)));
        }
        if self.shape(params.b) != [h4] {
            return Err(AutodiffError::shape("lstm", &swx, self.shape(params.b)));
        }
        let (xv, wx, wh, bv) = (
            self.value(x),
            self.value(params.wx),
            self.value(params.wh),
            self.value(params.b),
        );
        let mut out = vec![0.0; l * h];
        let mut gates = vec![0.0; l * h4];
        let mut cell = vec![0.0; l * h];
        let mut cell_tanh = vec![0.0; l * h];
        let order: Vec<usize> = if reverse {
            (0..l).rev().collect()
        } else {
            (0..l).collect()
        };
        let mut z = vec![0.0; h4];
        for (step, &pos) in order.iter().enumerate() {
            let prev = if step > 0 {
                Some(order[step - 1])
            } else {
                None
            };
            z.copy_from_slice(bv);
            for c in 0..d {
                let v = xv[pos * d + c];
                if v == 0.0 {
                    continue;
                }
                let wrow = &wx[c * h4..(c + 1) * h4];
                for j in 0..h4 {
                    z[j] += v * wrow[j];
                }
            }
            if let Some(p) = prev {
                for r in 0..h {
                    let hv = out[p * h + r];
                    if hv == 0.0 {
                        continue;
                    }
                    let wrow = &wh[r * h4..(r + 1) * h4];
                    for j in 0..h4 {
                        z[j] += hv * wrow[j];
                    }
                }
            }
            let gt = &mut gates[pos * h4..(pos + 1) * h4];
            for j in 0..h {
                let ig = sigmoid(z[j]);
                let fg = sigmoid(z[h + j]);
                let gg = z[2 * h + j].tanh();
                let og = sigmoid(z[3 * h + j]);
                gt[j] = ig;
                gt[h + j] = fg;
                gt[2 * h + j] = gg;
                gt[3 * h + j] = og;
                let c_prev = prev.map_or(0.0, |p| cell[p * h + j]);
                let c = fg * c_prev + ig * gg;
                let tc = c.tanh();
                cell[pos * h + j] = c;
                cell_tanh[pos * h + j] = tc;
                out[pos * h + j] = og * tc;
            }
        }
        let cache = Box::new(LstmCache {
            l,
            d,
            h,
            reverse,
            gates,
            cell,
            cell_tanh,
        });
        let rg = self.rg(x) || self.rg(params.wx) || self.rg(params.wh) || self.rg(params.b);
        Ok(self.push(
            Cow::Owned(out),
            vec![l, h],
            rg,
            Op::Lstm {
                x: x.0,
                wx: params.wx.0,
                wh: params.wh.0,
                b: params.b.0,
                cache,
            },
        ))
    }

    /// Bidirectional LSTM: forward states and right-to-left states concatenated
    /// per position, `[L, 2h]`. With `backward` absent it is unidirectional.
    pub fn bilstm(&mut self, x: Var, forward: LstmVars, backward: Option<LstmVars>) -> Result<Var> {
        let fwd = self.lstm(x, forward, false)?;
        match backward {
            Some(bw) => {
                let bwd = self.lstm(x, bw, true)?;
                self.concat_cols(&[fwd, bwd])
            }
            None => Ok(fwd),
        }
    }

    /// Inverted dropout. Identity when not training or when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::param(
                "dropout",
                format!("rate must be in [0, 1), got {rate}"),
            ));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
            .collect();
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Cow::Owned(out), shape, rg, Op::Dropout { x: x.0, mask }))
    }

    /// `-log_softmax(logits)[label]` for a `[C]` logit vector.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let c = match shape.as_slice() {
            [c] => *c,
            _ => return Err(AutodiffError::shape("cross_entropy", &shape, &[])),
        };
        if label >= c {
            return Err(AutodiffError::Index {
                op: "cross_entropy",
                index: label,
                size: c,
            });
        }
        let lv = self.value(logits);
        if lv.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite {
                op: "cross_entropy",
            });
        }
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let probs: Vec<f64> = lv.iter().map(|v| (v - lse).exp()).collect();
        let loss = lse - lv[label];
        let rg = self.rg(logits);
        Ok(self.push(
            Cow::Owned(vec![loss]),
            vec![1],
            rg,
            Op::CrossEntropy {
                logits: logits.0,
                label,
                probs,
            },
        ))
    }

    /// Cross-entropy between Bernoulli(`q`) and Bernoulli(`p`) for a scalar
    /// node `p`. `p` is clipped to `[1e-7, 1 - 1e-7]` before the logs; the
    /// target `q` may be fractional.
    pub fn binary_cross_entropy(&mut self, p: Var, q: f64) -> Result<Var> {
        if self.value(p).len() != 1 {
            return Err(AutodiffError::shape(
                "binary_cross_entropy",
                self.shape(p),
                &[1],
            ));
        }
        let pv = self.value(p)[0];
        if !(0.0..=1.0).contains(&pv) || !(0.0..=1.0).contains(&q) {
            return Err(AutodiffError::param(
                "binary_cross_entropy",
                format!("probabilities must lie in [0, 1], got p={pv}, q={q}"),
            ));
        }
        let pc = pv.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let clipped = pc != pv;
        let loss = -(q * pc.ln() + (1.0 - q) * (1.0 - pc).ln());
        let rg = self.rg(p);
        Ok(self.push(
            Cow::Owned(vec![loss]),
            vec![1],
            rg,
            Op::Bce { p: p.0, q, clipped },
        ))
    }

    /// `Σ_{l ≥ 1} ‖x[l] − x[l−1]‖₁` over the rows of a `[m, n]` matrix.
    pub fn transitions(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (m, n) = match sx.as_slice() {
            [m, n] => (*m, *n),
            _ => return Err(AutodiffError::shape("transitions", &sx, &[])),
        };
        let xv = self.value(x);
        let mut total = 0.0;
        for r in 1..m {
            for c in 0..n {
                total += (xv[r * n + c] - xv[(r - 1) * n + c]).abs();
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Cow::Owned(vec![total]),
            vec![1],
            rg,
            Op::Transitions { x: x.0, m, n },
        ))
    }

    /// Sparsemax over the last axis.
    pub fn sparsemax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let k = *shape
            .last()
            .ok_or_else(|| AutodiffError::param("sparsemax", "scalar input"))?;
        if k == 0 {
            return Err(AutodiffError::param("sparsemax", "empty axis"));
        }
        let xv = self.value(x);
        if xv.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: "sparsemax" });
        }
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.chunks(k) {
            out.extend(sparsemax_slice(row));
        }
        let rg = self.rg(x);
        Ok(self.push(Cow::Owned(out), shape, rg, Op::Sparsemax { x: x.0, k }))
    }
}

fn one_hot_rows(soft: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; soft.len()];
    for (r, row) in soft.chunks(k).enumerate() {
        let mut best = 0;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        out[r * k + best] = 1.0;
    }
    out
}
