use std::borrow::Cow;

use crate::error::{AutodiffError, Result};
use crate::nn::{self, LstmCache};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node<'a> {
    pub(crate) value: Cow<'a, [f64]>,
    pub(crate) shape: Vec<usize>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

pub(crate) enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    AddRow {
        a: usize,
        b: usize,
        n: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Affine {
        x: usize,
        scale: f64,
    },
    ScaleRows {
        x: usize,
        s: usize,
        n: usize,
    },
    Column {
        x: usize,
        j: usize,
        n: usize,
    },
    Row {
        x: usize,
        i: usize,
        n: usize,
    },
    ConcatCols {
        parts: Vec<(usize, usize)>,
        m: usize,
    },
    Gather {
        table: usize,
        ids: Vec<usize>,
        d: usize,
    },
    Relu {
        x: usize,
    },
    Tanh {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Exp {
        x: usize,
    },
    LogSoftmax {
        x: usize,
        outer: usize,
        k: usize,
        inner: usize,
    },
    GumbelSoftmax {
        x: usize,
        k: usize,
        tau: f64,
        soft: Vec<f64>,
    },
    Conv1d {
        x: usize,
        w: usize,
        b: usize,
        l: usize,
        d: usize,
        f: usize,
        width: usize,
    },
    MaxOverTime {
        x: usize,
        argmax: Vec<usize>,
        f: usize,
    },
    Lstm {
        x: usize,
        wx: usize,
        wh: usize,
        b: usize,
        cache: Box<LstmCache>,
    },
    Dropout {
        x: usize,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        label: usize,
        probs: Vec<f64>,
    },
    Bce {
        p: usize,
        q: f64,
        clipped: bool,
    },
    Sum {
        x: usize,
    },
    Transitions {
        x: usize,
        m: usize,
        n: usize,
    },
    Sparsemax {
        x: usize,
        k: usize,
    },
    Transpose {
        x: usize,
        m: usize,
        n: usize,
    },
    Reshape {
        x: usize,
    },
}

/// Wengert list of recorded operations.
///
/// A tape is confined to one thread; build one per document (or per batch)
/// and drop it after [`Tape::backward`].
#[derive(Default)]
pub struct Tape<'a> {
    pub(crate) nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar loss with respect to every node that required them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Moves the gradient of `var` out, leaving `None`.
    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

pub(crate) fn mat_dims(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [k] => Some((1, *k)),
        [m, k] => Some((*m, *k)),
        _ => None,
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(
        &mut self,
        value: Cow<'a, [f64]>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Op,
    ) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            value,
            shape,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a borrowed parameter. Gradients flow to it iff
    /// `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &'a Tensor) -> Var {
        self.push(
            Cow::Borrowed(&tensor.data),
            tensor.shape.clone(),
            tensor.requires_grad,
            Op::Leaf,
        )
    }

    /// Records an owned value that does not participate in differentiation.
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AutodiffError::shape("constant", shape, &[data.len()]));
        }
        Ok(self.push(Cow::Owned(data), shape.to_vec(), false, Op::Leaf))
    }

    /// Records an owned value that is a differentiable input.
    pub fn variable(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let v = self.constant(data, shape)?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// First element of `v`; intended for scalar nodes.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (m, k) = mat_dims(&sa).ok_or_else(|| AutodiffError::shape("matmul", &sa, &sb))?;
        let (k2, n) = match sb.as_slice() {
            [k2, n] => (*k2, *n),
            _ => return Err(AutodiffError::shape("matmul", &sa, &sb)),
        };
        if k != k2 {
            return Err(AutodiffError::shape("matmul", &sa, &sb));
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        let shape = if sa.len() == 1 { vec![n] } else { vec![m, n] };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Cow::Owned(out),
            shape,
            rg,
            Op::MatMul {
                a: a.0,
                b: b.0,
                m,
                k,
                n,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::shape("add", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), shape, rg, Op::Add { a: a.0, b: b.0 }))
    }

    /// `a[.., j] + b[j]`: adds a bias row to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let n = *sa.last().unwrap_or(&0);
        if sb != [n] {
            return Err(AutodiffError::shape("add_row", &sa, &sb));
        }
        let bv = self.value(b);
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv[i % n])
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), sa, rg, Op::AddRow { a: a.0, b: b.0, n }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::shape("mul", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Cow::Owned(out), shape, rg, Op::Mul { a: a.0, b: b.0 }))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|v| scale * v + shift).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Cow::Owned(out), shape, rg, Op::Affine { x: x.0, scale })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.affine(x, c, 0.0)
    }

    /// Multiplies row `l` of `x` (`[L, n]`) by `s[l]` (`s` is `[L]`).
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let ss = self.shape(s).to_vec();
        let (m, n) = match sx.as_slice() {
            [m, n] if ss == [*m] => (*m, *n),
            _ => return Err(AutodiffError::shape("scale_rows", &sx, &ss)),
        };
        let xv = self.value(x);
        let sv = self.value(s);
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                out[r * n + c] = xv[r * n + c] * sv[r];
            }
        }
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(Cow::Owned(out), sx, rg, Op::ScaleRows { x: x.0, s: s.0, n }))
    }

    /// Column `j` of a `[m, n]` matrix as a `[m]` vector.
    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (m, n) = match sx.as_slice() {
            [m, n] => (*m, *n),
            _ => return Err(AutodiffError::shape("column", &sx, &[j])),
        };
        if j >= n {
            return Err(AutodiffError::Index {
                op: "column",
                index: j,
                size: n,
            });
        }
        let xv = self.value(x);
        let out: Vec<f64> = (0..m).map(|r| xv[r * n + j]).collect();
        let rg = self.rg(x);
        Ok(self.push(Cow::Owned(out), vec![m], rg, Op::Column { x: x.0, j, n }))
    }

    /// Row `i` of a `[m, n]` matrix as a `[n]` vector.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (m, n) = match sx.as_slice() {
            [m, n] => (*m, *n),
            _ => return Err(AutodiffError::shape("row", &sx, &[i])),
        };
        if i >= m {
            return Err(AutodiffError::Index {
                op: "row",
                index: i,
                size: m,
            });
        }
        let out = self.value(x)[i * n..(i + 1) * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Cow::Owned(out), vec![n], rg, Op::Row { x: x.0, i, n }))
    }

    /// Concatenates `[m, n_i]` matrices along the feature axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| AutodiffError::param("concat_cols", "no inputs"))?;
        let m = self.shape(*first)[0];
        let mut dims = Vec::with_capacity(parts.len());
        for p in parts {
            match self.shape(*p) {
                [pm, pn] if *pm == m => dims.push((p.0, *pn)),
                other => {
                    return Err(AutodiffError::shape(
                        "concat_cols",
                        self.shape(*first),
                        other,
                    ))
                }
            }
        }
        let total: usize = dims.iter().map(|(_, n)| n).sum();
        let mut out = vec![0.0; m * total];
        let mut off = 0;
        for &(id, n) in &dims {
            let v = &self.nodes[id].value;
            for r in 0..m {
                out[r * total + off..r * total + off + n].copy_from_slice(&v[r * n..(r + 1) * n]);
            }
            off += n;
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(
            Cow::Owned(out),
            vec![m, total],
            rg,
            Op::ConcatCols { parts: dims, m },
        ))
    }

    /// Embedding lookup: rows `ids` of a `[V, d]` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let st = self.shape(table).to_vec();
        let (v, d) = match st.as_slice() {
            [v, d] => (*v, *d),
            _ => return Err(AutodiffError::shape("gather_rows", &st, &[ids.len()])),
        };
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(AutodiffError::Index {
                    op: "gather_rows",
                    index: id,
                    size: v,
                });
            }
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Cow::Owned(out),
            vec![ids.len(), d],
            rg,
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
                d,
            },
        ))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|v| f(*v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(Cow::Owned(out), shape, rg, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu { x: x.0 })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh { x: x.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, nn::sigmoid, Op::Sigmoid { x: x.0 })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp { x: x.0 })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(Cow::Owned(vec![s]), vec![1], rg, Op::Sum { x: x.0 })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (m, n) = match sx.as_slice() {
            [m, n] => (*m, *n),
            _ => return Err(AutodiffError::shape("transpose", &sx, &[])),
        };
        let xv = self.value(x);
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                out[c * m + r] = xv[r * n + c];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Cow::Owned(out),
            vec![n, m],
            rg,
            Op::Transpose { x: x.0, m, n },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).len() {
            return Err(AutodiffError::shape("reshape", self.shape(x), shape));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(Cow::Owned(out), shape.to_vec(), rg, Op::Reshape { x: x.0 }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NotScalar(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if self.nodes[id].requires_grad {
                self.propagate(id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let nodes = &self.nodes;
        // Runs `f` on the gradient buffer of parent `p`, allocating it lazily;
        // skipped when `p` is not differentiable.
        fn with(
            grads: &mut [Option<Vec<f64>>],
            nodes: &[Node<'_>],
            p: usize,
            f: impl FnOnce(&mut [f64]),
        ) {
            if !nodes[p].requires_grad {
                return;
            }
            let slot = grads[p].get_or_insert_with(|| vec![0.0; nodes[p].value.len()]);
            f(slot);
        }
        let val = |p: usize| -> &[f64] { &nodes[p].value };
        let out: &[f64] = &node.value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let bv = val(*b);
                with(grads, nodes, *a, |ga| {
                    // ga += g · bᵀ
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grow[j] * brow[j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                let av = val(*a);
                with(grads, nodes, *b, |gb| {
                    // gb += aᵀ · g
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let gbrow = &mut gb[p * n..(p + 1) * n];
                            for j in 0..n {
                                gbrow[j] += aip * grow[j];
                            }
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                with(grads, nodes, *a, |ga| add_into(ga, g));
                with(grads, nodes, *b, |gb| add_into(gb, g));
            }
            Op::AddRow { a, b, n } => {
                with(grads, nodes, *a, |ga| add_into(ga, g));
                with(grads, nodes, *b, |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % n] += gi;
                    }
                });
            }
            Op::Mul { a, b } => {
                let bv = val(*b);
                with(grads, nodes, *a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                let av = val(*a);
                with(grads, nodes, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Affine { x, scale } => {
                with(grads, nodes, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += scale * g[i];
                    }
                });
            }
            Op::ScaleRows { x, s, n } => {
                let n = *n;
                let sv = val(*s);
                with(grads, nodes, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * sv[i / n];
                    }
                });
                let xv = val(*x);
                with(grads, nodes, *s, |gs| {
                    for i in 0..g.len() {
                        gs[i / n] += g[i] * xv[i];
                    }
                });
            }
            Op::Column { x, j, n } => {
                with(grads, nodes, *x, |gx| {
                    for (r, gr) in g.iter().enumerate() {
                        gx[r * n + j] += gr;
                    }
                });
            }
            Op::Row { x, i, n } => {
                with(grads, nodes, *x, |gx| {
                    add_into(&mut gx[i * n..(i + 1) * n], g);
                });
            }
            Op::ConcatCols { parts, m } => {
                let total: usize = parts.iter().map(|(_, n)| n).sum();
                let mut off = 0;
                for &(p, n) in parts {
                    with(grads, nodes, p, |gp| {
                        for r in 0..*m {
                            add_into(
                                &mut gp[r * n..(r + 1) * n],
                                &g[r * total + off..r * total + off + n],
                            );
                        }
                    });
                    off += n;
                }
            }
            Op::Gather { table, ids, d } => {
                let d = *d;
                with(grads, nodes, *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::Relu { x } => {
                let xv = val(*x);
                with(grads, nodes, *x, |gx| {
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::Tanh { x } => {
                with(grads, nodes, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - out[i] * out[i]);
                    }
                });
            }
            Op::Sigmoid { x } => {
                with(grads, nodes, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * out[i] * (1.0 - out[i]);
                    }
                });
            }
            Op::Exp { x } => {
                with(grads, nodes, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * out[i];
                    }
                });
            }
            Op::LogSoftmax { x, outer, k, inner } => {
                with(grads, nodes, *x, |gx| {
                    nn::log_softmax_backward(out, g, gx, *outer, *k, *inner)
                });
            }
            Op::GumbelSoftmax { x, k, tau, soft } => {
                with(grads, nodes, *x, |gx| {
                    nn::tempered_softmax_backward(soft, g, gx, *k, *tau)
                });
            }
            Op::Conv1d {
                x,
                w,
                b,
                l,
                d,
                f,
                width,
            } => {
                let dims = nn::ConvDims {
                    l: *l,
                    d: *d,
                    f: *f,
                    width: *width,
                };
                let wv = val(*w);
                with(grads, nodes, *x, |gx| {
                    nn::conv1d_backward_input(wv, g, gx, dims)
                });
                let xv = val(*x);
                with(grads, nodes, *w, |gw| {
                    nn::conv1d_backward_weight(xv, g, gw, dims)
                });
                with(grads, nodes, *b, |gb| {
                    for i in 0..g.len() {
                        gb[i % dims.f] += g[i];
                    }
                });
            }
            Op::MaxOverTime { x, argmax, f } => {
                with(grads, nodes, *x, |gx| {
                    for (c, &r) in argmax.iter().enumerate() {
                        gx[r * f + c] += g[c];
                    }
                });
            }
            Op::Lstm {
                x,
                wx,
                wh,
                b,
                cache,
            } => {
                let grads_lstm = nn::lstm_backward(cache, val(*x), val(*wx), val(*wh), out, g);
                with(grads, nodes, *x, |gx| add_into(gx, &grads_lstm.dx));
                with(grads, nodes, *wx, |gw| add_into(gw, &grads_lstm.dwx));
                with(grads, nodes, *wh, |gw| add_into(gw, &grads_lstm.dwh));
                with(grads, nodes, *b, |gb| add_into(gb, &grads_lstm.db));
            }
            Op::Dropout { x, mask } => {
                with(grads, nodes, *x, |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * mask[i];
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                with(grads, nodes, *logits, |gl| {
                    for (i, p) in probs.iter().enumerate() {
                        let y = if i == *label { 1.0 } else { 0.0 };
                        gl[i] += g[0] * (p - y);
                    }
                });
            }
            Op::Bce { p, q, clipped } => {
                if !clipped {
                    let pv = val(*p)[0];
                    with(grads, nodes, *p, |gp| {
                        gp[0] += g[0] * (-q / pv + (1.0 - q) / (1.0 - pv));
                    });
                }
            }
            Op::Sum { x } => {
                with(grads, nodes, *x, |gx| {
                    gx.iter_mut().for_each(|v| *v += g[0])
                });
            }
            Op::Transitions { x, m, n } => {
                let (m, n) = (*m, *n);
                let xv = val(*x);
                with(grads, nodes, *x, |gx| {
                    for r in 1..m {
                        for c in 0..n {
                            let diff = xv[r * n + c] - xv[(r - 1) * n + c];
                            let s = if diff > 0.0 {
                                1.0
                            } else if diff < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            gx[r * n + c] += g[0] * s;
                            gx[(r - 1) * n + c] -= g[0] * s;
                        }
                    }
                });
            }
            Op::Sparsemax { x, k } => {
                with(grads, nodes, *x, |gx| {
                    nn::sparsemax_backward(out, g, gx, *k)
                });
            }
            Op::Transpose { x, m, n } => {
                let (m, n) = (*m, *n);
                with(grads, nodes, *x, |gx| {
                    for r in 0..m {
                        for c in 0..n {
                            gx[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Reshape { x } => {
                with(grads, nodes, *x, |gx| add_into(gx, g));
            }
        }
    }
}

pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let eye = t.constant(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let m = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let p = t.matmul(eye, m).unwrap();
        assert_eq!(t.value(p), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(vec![0.0; 6], &[2, 3]).unwrap();
        let b = t.constant(vec![0.0; 4], &[2, 2]).unwrap();
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::Shape {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 2]
            }
        );
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[2, 2]"));
    }

    #[test]
    fn linear_map_gradient_is_ones() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])
            .unwrap()
            .with_grad();
        let mut t = Tape::new();
        let xv = t.leaf(&x);
        let ones = t.constant(vec![1.0; 2], &[2, 1]).unwrap();
        let y = t.matmul(xv, ones).unwrap();
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(xv).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let a = t.variable(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(t.backward(a), Err(AutodiffError::NotScalar(_))));
    }

    #[test]
    fn every_reachable_grad_leaf_gets_a_gradient() {
        let a = Tensor::new(vec![3], vec![1.0, -2.0, 0.5])
            .unwrap()
            .with_grad();
        let b = Tensor::new(vec![3], vec![0.0, 0.0, 0.0])
            .unwrap()
            .with_grad();
        let frozen = Tensor::new(vec![3], vec![1.0, 1.0, 1.0]).unwrap();
        let mut t = Tape::new();
        let (va, vb, vf) = (t.leaf(&a), t.leaf(&b), t.leaf(&frozen));
        let s = t.add(va, vb).unwrap();
        let s = t.mul(s, vf).unwrap();
        let s = t.relu(s);
        let loss = t.sum(s);
        let g = t.backward(loss).unwrap();
        assert!(g.get(va).is_some());
        assert!(g.get(vb).is_some());
        assert!(g.get(vf).is_none());
    }
}
