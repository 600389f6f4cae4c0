//! Reverse-mode automatic differentiation over 2-D `f64` matrices.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Values are
//! computed eagerly on push; [`Tape::backward`] walks the record in reverse and
//! accumulates gradients into the parameters the graph read from a
//! [`ParamStore`].
//!
//! Batched sequence data is laid out as stacked rows: a batch of `B`
//! sequences with `T` frames and `C` channels is a `(B*T) x C` matrix, and the
//! sequence length is passed to the ops that care (convolution, attention).

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// A differentiable operation implemented outside this crate.
///
/// `backward` receives the same inputs `forward` saw plus the upstream
/// gradient, and must return one gradient per input with matching shape.
pub trait Function {
    fn forward(&self, inputs: &[&Mat]) -> Mat;
    fn backward(&self, inputs: &[&Mat], output: &Mat, grad: &Mat) -> Vec<Mat>;
}

struct GatherRows(Vec<usize>);

impl Function for GatherRows {
    fn forward(&self, inputs: &[&Mat]) -> Mat {
        let x = inputs[0];
        let mut out = Mat::zeros((self.0.len(), x.ncols()));
        for (i, &r) in self.0.iter().enumerate() {
            out.row_mut(i).assign(&x.row(r));
        }
        out
    }

    fn backward(&self, inputs: &[&Mat], _output: &Mat, grad: &Mat) -> Vec<Mat> {
        let mut g = Mat::zeros(inputs[0].dim());
        for (i, &r) in self.0.iter().enumerate() {
            let mut row = g.row_mut(r);
            row += &grad.row(i);
        }
        vec![g]
    }
}

enum Value {
    Owned(Mat),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Gelu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Tanh(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        rstd: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq: usize,
        probs: Vec<Mat>,
    },
    Conv1d {
        x: Var,
        w: Var,
        seq: usize,
        kernel: usize,
        cols: Mat,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    SelectRows {
        x: Var,
        fill: Var,
        mask: Vec<bool>,
    },
    RepeatRows(Var, usize),
    MeanSquare(Var),
    Sum(Var),
    Custom {
        f: Box<dyn Function>,
        inputs: Vec<Var>,
    },
}

struct Node {
    value: Value,
    op: Op,
}

pub struct Tape<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], keyed by parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_param: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.by_param.get(id.index()).and_then(|g| g.as_ref())
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.iter().all(Option::is_none)
    }

    /// Global L2 norm over every parameter gradient.
    pub fn norm(&self) -> f64 {
        self.by_param
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.by_param.iter_mut().flatten() {
            g.mapv_inplace(|x| x * factor);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

impl<'p> Tape<'p> {
    /// A tape that can read parameters from `params`.
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params: Some(params),
            nodes: Vec::new(),
        }
    }

    /// A tape without parameters; only [`Tape::input`] leaves are available.
    pub fn detached() -> Tape<'static> {
        Tape {
            params: None,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0].value {
            Value::Owned(m) => m,
            Value::Param(id) => self
                .params
                .expect("param node on a detached tape")
                .get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar() on a non-scalar node");
        m[[0, 0]]
    }

    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        assert!(self.params.is_some(), "param() on a detached tape");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `x + row`, broadcasting a `1 x C` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a single row");
        let v = self.value(x) + r;
        self.push(v, Op::AddRow(x, row))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x) * factor;
        self.push(v, Op::Scale(x, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(gelu);
        self.push(v, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(softplus);
        self.push(v, Op::Softplus(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    /// Row-wise layer normalization with a `1 x C` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut xhat = Mat::zeros((rows, cols));
        let mut rstd = Vec::with_capacity(rows);
        for (r, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|&a| (a - mean) * (a - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd.push(rs);
            for (c, &a) in row.iter().enumerate() {
                xhat[[r, c]] = (a - mean) * rs;
            }
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    /// Multi-head scaled dot-product attention without masking.
    ///
    /// `q`, `k`, `v` are `(B*seq) x W`; heads split the width evenly.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, seq: usize) -> Var {
        let (rows, width) = self.shape(q);
        assert_eq!(rows % seq, 0, "rows must be a multiple of seq");
        assert_eq!(width % heads, 0, "width must divide into heads");
        let hd = width / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let batch = rows / seq;
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = Mat::zeros((rows, width));
        let mut probs = Vec::with_capacity(batch * heads);
        for b in 0..batch {
            let r = b * seq..(b + 1) * seq;
            for h in 0..heads {
                let c = h * hd..(h + 1) * hd;
                let qs = qv.slice(s![r.clone(), c.clone()]);
                let ks = kv.slice(s![r.clone(), c.clone()]);
                let vs = vv.slice(s![r.clone(), c.clone()]);
                let mut scores = qs.dot(&ks.t()) * scale;
                for mut row in scores.rows_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
                    row.mapv_inplace(|x| (x - m).exp());
                    let z = row.sum();
                    row.mapv_inplace(|x| x / z);
                }
                out.slice_mut(s![r.clone(), c]).assign(&scores.dot(&vs));
                probs.push(scores);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq,
                probs,
            },
        )
    }

    /// Temporal 1-D convolution with zero "same" padding.
    ///
    /// `x` is `(B*seq) x Cin`, `w` is `(kernel*Cin) x Cout` with tap-major rows
    /// (row `j*Cin + c` holds tap `j` of input channel `c`). `kernel` must be
    /// odd. Add a bias with [`Tape::add_row`].
    pub fn conv1d(&mut self, x: Var, w: Var, seq: usize, kernel: usize) -> Var {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let xv = self.value(x);
        let (rows, cin) = xv.dim();
        assert_eq!(rows % seq, 0, "rows must be a multiple of seq");
        assert_eq!(self.shape(w).0, kernel * cin, "conv weight shape mismatch");
        let cols = im2col(xv.view(), seq, kernel);
        let out = cols.dot(self.value(w));
        self.push(
            out,
            Op::Conv1d {
                x,
                w,
                seq,
                kernel,
                cols,
            },
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(x, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows column mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(x);
        let flat: Vec<f64> = src.iter().copied().collect();
        let v = Mat::from_shape_vec((rows, cols), flat).expect("reshape size mismatch");
        self.push(v, Op::Reshape(x))
    }

    /// Row `i` of the result is `fill` (a single row) where `mask[i]`, else
    /// row `i` of `x`.
    pub fn select_rows(&mut self, x: Var, fill: Var, mask: &[bool]) -> Var {
        let xv = self.value(x);
        let fv = self.value(fill);
        assert_eq!(fv.nrows(), 1, "fill must be a single row");
        assert_eq!(mask.len(), xv.nrows(), "mask length mismatch");
        let mut v = xv.clone();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                v.row_mut(i).assign(&fv.row(0));
            }
        }
        self.push(
            v,
            Op::SelectRows {
                x,
                fill,
                mask: mask.to_vec(),
            },
        )
    }

    /// Row `i` of the result is row `index[i]` of `x`; rows may repeat.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Var {
        self.custom(Box::new(GatherRows(index.to_vec())), &[x])
    }

    /// Tile `x` vertically `times` times.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Var {
        let xv = self.value(x);
        let views: Vec<ArrayView2<f64>> = (0..times).map(|_| xv.view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("repeat_rows");
        self.push(v, Op::RepeatRows(x, times))
    }

    /// Mean of squared entries, as a `1 x 1` node.
    pub fn mean_square(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = xv.iter().map(|a| a * a).sum::<f64>() / xv.len() as f64;
        self.push(Mat::from_elem((1, 1), v), Op::MeanSquare(x))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        self.mean_square(d)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).sum();
        self.push(Mat::from_elem((1, 1), v), Op::Sum(x))
    }

    pub fn custom(&mut self, f: Box<dyn Function>, inputs: &[Var]) -> Var {
        let ins: Vec<&Mat> = inputs.iter().map(|&i| self.value(i)).collect();
        let v = f.forward(&ins);
        self.push(
            v,
            Op::Custom {
                f,
                inputs: inputs.to_vec(),
            },
        )
    }

    /// Back-propagate from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let n_params = self.params.map_or(0, ParamStore::len);
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Mat::from_elem((1, 1), 1.0));
        let mut by_param: Vec<Option<Mat>> = vec![None; n_params];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => accumulate(&mut by_param[id.index()], g),
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[b.0], -&g);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::AddRow(x, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[row.0], gr);
                    accumulate(&mut grads[x.0], g);
                }
                Op::Scale(x, f) => accumulate(&mut grads[x.0], g * *f),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Gelu(x) => {
                    let mut d = self.value(*x).mapv(gelu_grad);
                    d *= &g;
                    accumulate(&mut grads[x.0], d);
                }
                Op::Sigmoid(x) => {
                    let y = self.value(Var(i));
                    let d = &g * &y.mapv(|s| s * (1.0 - s));
                    accumulate(&mut grads[x.0], d);
                }
                Op::Softplus(x) => {
                    let d = &g * &self.value(*x).mapv(sigmoid);
                    accumulate(&mut grads[x.0], d);
                }
                Op::Tanh(x) => {
                    let y = self.value(Var(i));
                    let d = &g * &y.mapv(|t| 1.0 - t * t);
                    accumulate(&mut grads[x.0], d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gamma);
                    let dgamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * gv;
                    let cols = xhat.ncols() as f64;
                    let mut dx = Mat::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let m1 = dh.sum() / cols;
                        let m2 = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / cols;
                        for c in 0..xhat.ncols() {
                            dx[[r, c]] = rstd[r] * (dh[c] - m1 - xh[c] * m2);
                        }
                    }
                    accumulate(&mut grads[gamma.0], dgamma);
                    accumulate(&mut grads[beta.0], dbeta);
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    seq,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (rows, width) = qv.dim();
                    let hd = width / heads;
                    let scale = 1.0 / (hd as f64).sqrt();
                    let mut dq = Mat::zeros((rows, width));
                    let mut dk = Mat::zeros((rows, width));
                    let mut dv = Mat::zeros((rows, width));
                    for b in 0..rows / seq {
                        let r = b * seq..(b + 1) * seq;
                        for h in 0..*heads {
                            let c = h * hd..(h + 1) * hd;
                            let p = &probs[b * heads + h];
                            let go = g.slice(s![r.clone(), c.clone()]);
                            let qs = qv.slice(s![r.clone(), c.clone()]);
                            let ks = kv.slice(s![r.clone(), c.clone()]);
                            let vs = vv.slice(s![r.clone(), c.clone()]);
                            dv.slice_mut(s![r.clone(), c.clone()]).assign(&p.t().dot(&go));
                            let dp = go.dot(&vs.t());
                            let mut ds = Mat::zeros(p.dim());
                            for row in 0..p.nrows() {
                                let dot: f64 = dp.row(row).dot(&p.row(row));
                                for col in 0..p.ncols() {
                                    ds[[row, col]] = p[[row, col]] * (dp[[row, col]] - dot);
                                }
                            }
                            ds *= scale;
                            dq.slice_mut(s![r.clone(), c.clone()]).assign(&ds.dot(&ks));
                            dk.slice_mut(s![r.clone(), c]).assign(&ds.t().dot(&qs));
                        }
                    }
                    accumulate(&mut grads[q.0], dq);
                    accumulate(&mut grads[k.0], dk);
                    accumulate(&mut grads[v.0], dv);
                }
                Op::Conv1d {
                    x,
                    w,
                    seq,
                    kernel,
                    cols,
                } => {
                    let wv = self.value(*w);
                    let dw = cols.t().dot(&g);
                    let dcols = g.dot(&wv.t());
                    let cin = self.shape(*x).1;
                    let dx = col2im(dcols.view(), *seq, *kernel, cin);
                    accumulate(&mut grads[w.0], dw);
                    accumulate(&mut grads[x.0], dx);
                }
                Op::SliceCols(x, start) => {
                    let mut d = Mat::zeros(self.shape(*x));
                    let len = g.ncols();
                    d.slice_mut(s![.., *start..*start + len]).assign(&g);
                    accumulate(&mut grads[x.0], d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        let d = g.slice(s![.., off..off + w]).to_owned();
                        off += w;
                        accumulate(&mut grads[p.0], d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        let d = g.slice(s![off..off + h, ..]).to_owned();
                        off += h;
                        accumulate(&mut grads[p.0], d);
                    }
                }
                Op::Reshape(x) => {
                    let shape = self.shape(*x);
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let d = Mat::from_shape_vec(shape, flat).expect("reshape grad");
                    accumulate(&mut grads[x.0], d);
                }
                Op::SelectRows { x, fill, mask } => {
                    let mut dx = g.clone();
                    let mut dfill = Mat::zeros((1, g.ncols()));
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            dfill += &g.slice(s![r..r + 1, ..]);
                            dx.row_mut(r).fill(0.0);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                    accumulate(&mut grads[fill.0], dfill);
                }
                Op::RepeatRows(x, times) => {
                    let h = self.shape(*x).0;
                    let mut d = Mat::zeros(self.shape(*x));
                    for t in 0..*times {
                        d += &g.slice(s![t * h..(t + 1) * h, ..]);
                    }
                    accumulate(&mut grads[x.0], d);
                }
                Op::MeanSquare(x) => {
                    let xv = self.value(*x);
                    let f = 2.0 * g[[0, 0]] / xv.len() as f64;
                    accumulate(&mut grads[x.0], xv * f);
                }
                Op::Sum(x) => {
                    let d = Mat::from_elem(self.shape(*x), g[[0, 0]]);
                    accumulate(&mut grads[x.0], d);
                }
                Op::Custom { f, inputs } => {
                    let ins: Vec<&Mat> = inputs.iter().map(|&v| self.value(v)).collect();
                    let out = self.value(Var(i));
                    let gs = f.backward(&ins, out, &g);
                    assert_eq!(gs.len(), inputs.len(), "custom op gradient count");
                    for (inp, gi) in inputs.iter().zip(gs) {
                        debug_assert_eq!(gi.dim(), self.shape(*inp));
                        accumulate(&mut grads[inp.0], gi);
                    }
                }
            }
        }
        Gradients { by_param }
    }
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn im2col(x: ArrayView2<f64>, seq: usize, kernel: usize) -> Mat {
    let (rows, cin) = x.dim();
    let half = (kernel / 2) as isize;
    let mut cols = Mat::zeros((rows, kernel * cin));
    for b in 0..rows / seq {
        for t in 0..seq {
            let r = b * seq + t;
            for j in 0..kernel {
                let src = t as isize + j as isize - half;
                if src < 0 || src >= seq as isize {
                    continue;
                }
                let src_row = x.row(b * seq + src as usize);
                cols.slice_mut(s![r, j * cin..(j + 1) * cin]).assign(&src_row);
            }
        }
    }
    cols
}

fn col2im(dcols: ArrayView2<f64>, seq: usize, kernel: usize, cin: usize) -> Mat {
    let rows = dcols.nrows();
    let half = (kernel / 2) as isize;
    let mut dx = Mat::zeros((rows, cin));
    for b in 0..rows / seq {
        for t in 0..seq {
            let r = b * seq + t;
            for j in 0..kernel {
                let src = t as isize + j as isize - half;
                if src < 0 || src >= seq as isize {
                    continue;
                }
                let mut dst = dx.row_mut(b * seq + src as usize);
                dst += &dcols.slice(s![r, j * cin..(j + 1) * cin]);
            }
        }
    }
    dx
}
