use super::conv::{self, ConvGeom};
use super::{broadcast_map, invalid, numel, Tensor, TensorError};

/// Handle to a node on a [`Tape`]: shape, values and accumulated gradient
/// all live in the tape, addressed by this id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiffTensor(usize);

impl DiffTensor {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Elementwise scalar functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Scale(f64),
    Shift(f64),
    Recip,
    Exp,
    Ln,
    Sigmoid,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalise with the statistics of the current batch.
    Train,
    /// Normalise with externally supplied running statistics.
    Eval,
}

/// Per-channel batch statistics produced by a training-mode batch norm.
/// `var` is the unbiased estimate, the one folded into running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub(crate) const BN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv3d {
        x: usize,
        w: usize,
        geom: ConvGeom,
    },
    AvgPool3d {
        x: usize,
        kernel: [usize; 3],
    },
    Relu(usize),
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        // normalised input and 1/sqrt(var+eps) per channel
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Sum(usize),
    SumAxes {
        x: usize,
        map: Vec<usize>,
    },
    Square(usize),
    Sqrt(usize),
    Unary(usize, UnaryOp),
    Reshape(usize),
    Slice {
        x: usize,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Broadcast {
        x: usize,
        map: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Records operations in creation order; ids are therefore a topological
/// order and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), TensorError> {
    if a != b {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    Ok(())
}

fn acc_into(dst: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    dst.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> DiffTensor {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            requires_grad,
            op,
        });
        DiffTensor(self.nodes.len() - 1)
    }

    fn node(&self, t: DiffTensor) -> &Node {
        &self.nodes[t.0]
    }

    fn rg(&self, ids: &[DiffTensor]) -> bool {
        ids.iter().any(|t| self.nodes[t.0].requires_grad)
    }

    /// Trainable leaf: gradients are accumulated into it.
    pub fn param(&mut self, t: &Tensor) -> DiffTensor {
        self.push(t.shape().to_vec(), t.data().to_vec(), true, Op::Leaf)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, t: &Tensor) -> DiffTensor {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    pub fn constant_from(&mut self, shape: &[usize], data: Vec<f64>) -> Result<DiffTensor, TensorError> {
        if numel(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "constant",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(shape.to_vec(), data, false, Op::Leaf))
    }

    pub fn shape(&self, t: DiffTensor) -> &[usize] {
        &self.node(t).shape
    }

    pub fn value(&self, t: DiffTensor) -> &[f64] {
        &self.node(t).value
    }

    pub fn scalar_value(&self, t: DiffTensor) -> f64 {
        self.node(t).value[0]
    }

    pub fn to_tensor(&self, t: DiffTensor) -> Tensor {
        let n = self.node(t);
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
        }
    }

    /// Gradient accumulated by the last [`Tape::backward`]. Nodes that were
    /// not reached report zeros.
    pub fn grad(&self, t: DiffTensor) -> Vec<f64> {
        let n = self.node(t);
        n.grad.clone().unwrap_or_else(|| vec![0.0; n.value.len()])
    }

    pub fn requires_grad(&self, t: DiffTensor) -> bool {
        self.node(t).requires_grad
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: DiffTensor,
        b: DiffTensor,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<DiffTensor, TensorError> {
        same_shape(name, self.shape(a), self.shape(b))?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, value, rg, op))
    }

    pub fn add(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor, TensorError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor, TensorError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor, TensorError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = va[i * k + p];
                for j in 0..n {
                    out[i * n + j] += av * vb[p * n + j];
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, rg, Op::MatMul { a: a.0, b: b.0, m, k, n }))
    }

    /// Stride-1 convolution. `x: [N, Cin, T, H, W]`, `w: [Cout, Cin, kt, kh, kw]`,
    /// zero padding `pad` per spatio-temporal axis.
    pub fn conv3d(&mut self, x: DiffTensor, w: DiffTensor, pad: [usize; 3]) -> Result<DiffTensor, TensorError> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 5 || sw.len() != 5 || sx[1] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                lhs: sx,
                rhs: sw,
            });
        }
        let geom = ConvGeom {
            n: sx[0],
            cin: sx[1],
            cout: sw[0],
            t: sx[2],
            h: sx[3],
            w: sx[4],
            k: [sw[2], sw[3], sw[4]],
            pad,
        };
        let p = geom.padded();
        if (0..3).any(|i| p[i] < geom.k[i]) {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                lhs: sx,
                rhs: sw,
            });
        }
        let o = geom.out_dims();
        let value = conv::forward(self.value(x), self.value(w), &geom);
        let rg = self.rg(&[x, w]);
        Ok(self.push(
            vec![geom.n, geom.cout, o[0], o[1], o[2]],
            value,
            rg,
            Op::Conv3d { x: x.0, w: w.0, geom },
        ))
    }

    /// Non-overlapping average pooling (stride equals kernel) on `[N, C, T, H, W]`.
    pub fn avg_pool3d(&mut self, x: DiffTensor, kernel: [usize; 3]) -> Result<DiffTensor, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 5 || kernel.iter().any(|&k| k == 0) || (0..3).any(|i| s[2 + i] % kernel[i] != 0) {
            return Err(invalid("avg_pool3d", format!("kernel {kernel:?} does not tile input {s:?}")));
        }
        let (t, h, w) = (s[2] / kernel[0], s[3] / kernel[1], s[4] / kernel[2]);
        let scale = 1.0 / (kernel[0] * kernel[1] * kernel[2]) as f64;
        let xv = self.value(x);
        let mut out = vec![0.0; s[0] * s[1] * t * h * w];
        for nc in 0..s[0] * s[1] {
            for ti in 0..s[2] {
                for hi in 0..s[3] {
                    for wi in 0..s[4] {
                        let src = ((nc * s[2] + ti) * s[3] + hi) * s[4] + wi;
                        let dst = ((nc * t + ti / kernel[0]) * h + hi / kernel[1]) * w + wi / kernel[2];
                        out[dst] += xv[src] * scale;
                    }
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(vec![s[0], s[1], t, h, w], out, rg, Op::AvgPool3d { x: x.0, kernel }))
    }

    pub fn relu(&mut self, x: DiffTensor) -> Result<DiffTensor, TensorError> {
        let value = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, value, rg, Op::Relu(x.0)))
    }

    /// Per-channel batch normalisation over axis 1 of an `[N, C, ...]` input.
    ///
    /// In [`BatchNormMode::Train`] the batch statistics are used and returned;
    /// in [`BatchNormMode::Eval`] `running` must carry the statistics to use.
    pub fn batch_norm(
        &mut self,
        x: DiffTensor,
        gamma: DiffTensor,
        beta: DiffTensor,
        mode: BatchNormMode,
        running: Option<&BatchNormStats>,
    ) -> Result<(DiffTensor, Option<BatchNormStats>), TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(invalid("batch_norm", format!("input needs a channel axis, got {s:?}")));
        }
        let c = s[1];
        for p in [gamma, beta] {
            if self.shape(p) != [c] {
                return Err(TensorError::ShapeMismatch {
                    op: "batch_norm",
                    lhs: s.clone(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let inner: usize = s[2..].iter().product();
        let count = s[0] * inner;
        let xv = self.value(x);
        let (mean, var_biased, stats) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut acc = 0.0;
                    for n in 0..s[0] {
                        acc += xv[(n * c + ch) * inner..(n * c + ch + 1) * inner].iter().sum::<f64>();
                    }
                    mean[ch] = acc / count as f64;
                    let mut sq = 0.0;
                    for n in 0..s[0] {
                        sq += xv[(n * c + ch) * inner..(n * c + ch + 1) * inner]
                            .iter()
                            .map(|v| (v - mean[ch]).powi(2))
                            .sum::<f64>();
                    }
                    var[ch] = sq / count as f64;
                }
                let unbiased = if count > 1 {
                    var.iter().map(|v| v * count as f64 / (count - 1) as f64).collect()
                } else {
                    var.clone()
                };
                let stats = BatchNormStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval => {
                let r = running.ok_or_else(|| invalid("batch_norm", "eval mode needs running statistics"))?;
                if r.mean.len() != c || r.var.len() != c {
                    return Err(invalid("batch_norm", "running statistics have the wrong channel count"));
                }
                (r.mean.clone(), r.var.clone(), None)
            }
        };
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for n in 0..s[0] {
            for ch in 0..c {
                let base = (n * c + ch) * inner;
                for i in base..base + inner {
                    let xh = (xv[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        let id = self.push(
            s,
            out,
            rg,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
                batch_stats: mode == BatchNormMode::Train,
            },
        );
        Ok((id, stats))
    }

    /// Sum of all elements, as a scalar (shape `[]`).
    pub fn sum(&mut self, x: DiffTensor) -> Result<DiffTensor, TensorError> {
        let v = self.value(x).iter().sum();
        let rg = self.rg(&[x]);
        Ok(self.push(Vec::new(), vec![v], rg, Op::Sum(x.0)))
    }

    pub fn mean(&mut self, x: DiffTensor) -> Result<DiffTensor, TensorError> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.unary(s, UnaryOp::Scale(1.0 / n))
    }

    /// Sum over `axes`, keeping them as size-1 dimensions.
    pub fn sum_axes(&mut self, x: DiffTensor, axes: &[usize]) -> Result<DiffTensor, TensorError> {
        let s = self.shape(x).to_vec();
        if axes.iter().any(|&a| a >= s.len()) {
            return Err(invalid("sum_axes", format!("axes {axes:?} out of range for {s:?}")));
        }
        let mut out_shape = s.clone();
        for &a in axes {
            out_shape[a] = 1;
        }
        let map = broadcast_map(&out_shape, &s)?;
        let mut out = vec![0.0; numel(&out_shape)];
        for (v, &m) in self.value(x).iter().zip(&map) {
            out[m] += v;
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out_shape, out, rg, Op::SumAxes { x: x.0, map }))
    }

    pub fn mean_axes(&mut self, x: DiffTensor, axes: &[usize]) -> Result<DiffTensor, TensorError> {
        let s = self.shape(x);
        let count: usize = axes.iter().filter_map(|&a| s.get(a)).product();
        let summed = self.sum_axes(x, axes)?;
        self.unary(summed, UnaryOp::Scale(1.0 / count as f64))
    }

    pub fn square(&mut self, x: DiffTensor) -> Result<DiffTensor, TensorError> {
        let value = self.value(x).iter().map(|v| v * v).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, value, rg, Op::Square(x.0)))
    }

    pub fn sqrt(&mut self, x: DiffTensor) -> Result<DiffTensor, TensorError> {
        if let Some(v) = self.value(x).iter().find(|v| **v < 0.0) {
            return Err(invalid("sqrt", format!("negative input {v}")));
        }
        let value = self.value(x).iter().map(|v| v.sqrt()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, value, rg, Op::Sqrt(x.0)))
    }

    pub fn unary(&mut self, x: DiffTensor, op: UnaryOp) -> Result<DiffTensor, TensorError> {
        let f: Box<dyn Fn(f64) -> f64> = match op {
            UnaryOp::Scale(k) => Box::new(move |v| v * k),
            UnaryOp::Shift(k) => Box::new(move |v| v + k),
            UnaryOp::Recip => Box::new(|v| 1.0 / v),
            UnaryOp::Exp => Box::new(f64::exp),
            UnaryOp::Ln => Box::new(f64::ln),
            UnaryOp::Sigmoid => Box::new(|v| 1.0 / (1.0 + (-v).exp())),
            UnaryOp::Abs => Box::new(f64::abs),
        };
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape, value, rg, Op::Unary(x.0, op)))
    }

    pub fn reshape(&mut self, x: DiffTensor, shape: &[usize]) -> Result<DiffTensor, TensorError> {
        if numel(shape) != self.value(x).len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = self.value(x).to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(shape.to_vec(), value, rg, Op::Reshape(x.0)))
    }

    /// `x[.., start..start+len, ..]` along `axis`.
    pub fn slice(&mut self, x: DiffTensor, axis: usize, start: usize, len: usize) -> Result<DiffTensor, TensorError> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(invalid("slice", format!("range {start}..{} on axis {axis} of {s:?}", start + len)));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let xv = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            out.extend_from_slice(&xv[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(&[x]);
        Ok(self.push(shape, out, rg, Op::Slice { x: x.0, axis, start }))
    }

    pub fn concat(&mut self, xs: &[DiffTensor], axis: usize) -> Result<DiffTensor, TensorError> {
        let first = xs.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        let s0 = self.shape(*first).to_vec();
        if axis >= s0.len() {
            return Err(invalid("concat", format!("axis {axis} out of range for {s0:?}")));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != s0.len() || (0..s0.len()).any(|i| i != axis && s[i] != s0[i]) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: s0,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = s0[..axis].iter().product();
        let inner: usize = s0[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis] * inner;
                out.extend_from_slice(&self.value(x)[o * len..(o + 1) * len]);
            }
        }
        let mut shape = s0;
        shape[axis] = total;
        let rg = self.rg(xs);
        let inputs = xs.iter().map(|x| x.0).collect();
        Ok(self.push(shape, out, rg, Op::Concat { inputs, axis }))
    }

    /// Numpy-style broadcast to `shape`.
    pub fn broadcast(&mut self, x: DiffTensor, shape: &[usize]) -> Result<DiffTensor, TensorError> {
        let map = broadcast_map(self.shape(x), shape)?;
        let xv = self.value(x);
        let out = map.iter().map(|&m| xv[m]).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(shape.to_vec(), out, rg, Op::Broadcast { x: x.0, map }))
    }

    /// Reverse sweep from a scalar root. Gradients from any previous call
    /// are cleared first.
    pub fn backward(&mut self, root: DiffTensor) -> Result<(), TensorError> {
        let rs = self.shape(root).to_vec();
        if numel(&rs) != 1 {
            return Err(TensorError::NonScalarRoot(rs));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[root.0].grad = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = node.grad.as_ref() else { continue };
            propagate(before, node, g);
        }
        Ok(())
    }
}

fn propagate(before: &mut [Node], node: &Node, g: &[f64]) {
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if before[*a].requires_grad {
                let d = acc_into(&mut before[*a].grad, g.len());
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
            if before[*b].requires_grad {
                let d = acc_into(&mut before[*b].grad, g.len());
                d.iter_mut().zip(g).for_each(|(d, g)| *d += sign * g);
            }
        }
        Op::Mul(a, b) => {
            for (dst, other) in [(*a, *b), (*b, *a)] {
                if before[dst].requires_grad {
                    let ov = before[other].value.clone();
                    let d = acc_into(&mut before[dst].grad, g.len());
                    for i in 0..g.len() {
                        d[i] += g[i] * ov[i];
                    }
                }
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if before[*a].requires_grad {
                let bv = before[*b].value.clone();
                let d = acc_into(&mut before[*a].grad, m * k);
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bv[p * n + j];
                        }
                        d[i * k + p] += s;
                    }
                }
            }
            if before[*b].requires_grad {
                let av = before[*a].value.clone();
                let d = acc_into(&mut before[*b].grad, k * n);
                for i in 0..m {
                    for p in 0..k {
                        let aval = av[i * k + p];
                        for j in 0..n {
                            d[p * n + j] += aval * g[i * n + j];
                        }
                    }
                }
            }
        }
        Op::Conv3d { x, w, geom } => {
            let (nx, nw) = (before[*x].requires_grad, before[*w].requires_grad);
            let (gx, gw) = conv::backward(&before[*x].value, &before[*w].value, g, geom, nx, nw);
            if let Some(gx) = gx {
                let d = acc_into(&mut before[*x].grad, gx.len());
                d.iter_mut().zip(&gx).for_each(|(d, v)| *d += v);
            }
            if let Some(gw) = gw {
                let d = acc_into(&mut before[*w].grad, gw.len());
                d.iter_mut().zip(&gw).for_each(|(d, v)| *d += v);
            }
        }
        Op::AvgPool3d { x, kernel } => {
            if before[*x].requires_grad {
                let s = before[*x].shape.clone();
                let o = &node.shape;
                let scale = 1.0 / (kernel[0] * kernel[1] * kernel[2]) as f64;
                let d = acc_into(&mut before[*x].grad, numel(&s));
                for nc in 0..s[0] * s[1] {
                    for ti in 0..s[2] {
                        for hi in 0..s[3] {
                            for wi in 0..s[4] {
                                let src = ((nc * s[2] + ti) * s[3] + hi) * s[4] + wi;
                                let dst = ((nc * o[2] + ti / kernel[0]) * o[3] + hi / kernel[1]) * o[4] + wi / kernel[2];
                                d[src] += g[dst] * scale;
                            }
                        }
                    }
                }
            }
        }
        Op::Relu(x) => {
            let n = &mut before[*x];
            if n.requires_grad {
                let (xv, grad) = (&n.value, &mut n.grad);
                let d = acc_into(grad, g.len());
                for i in 0..g.len() {
                    if xv[i] > 0.0 {
                        d[i] += g[i];
                    }
                }
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => {
            let s = &node.shape;
            let c = s[1];
            let inner: usize = s[2..].iter().product();
            let count = (s[0] * inner) as f64;
            let mut sum_g = vec![0.0; c];
            let mut sum_gx = vec![0.0; c];
            for n in 0..s[0] {
                for ch in 0..c {
                    let base = (n * c + ch) * inner;
                    for i in base..base + inner {
                        sum_g[ch] += g[i];
                        sum_gx[ch] += g[i] * xhat[i];
                    }
                }
            }
            if before[*gamma].requires_grad {
                let d = acc_into(&mut before[*gamma].grad, c);
                d.iter_mut().zip(&sum_gx).for_each(|(d, v)| *d += v);
            }
            if before[*beta].requires_grad {
                let d = acc_into(&mut before[*beta].grad, c);
                d.iter_mut().zip(&sum_g).for_each(|(d, v)| *d += v);
            }
            if before[*x].requires_grad {
                let gv = before[*gamma].value.clone();
                let d = acc_into(&mut before[*x].grad, g.len());
                for n in 0..s[0] {
                    for ch in 0..c {
                        let base = (n * c + ch) * inner;
                        let k = gv[ch] * inv_std[ch];
                        for i in base..base + inner {
                            d[i] += if *batch_stats {
                                k * (g[i] - sum_g[ch] / count - xhat[i] * sum_gx[ch] / count)
                            } else {
                                k * g[i]
                            };
                        }
                    }
                }
            }
        }
        Op::Sum(x) => {
            if before[*x].requires_grad {
                let len = before[*x].value.len();
                let d = acc_into(&mut before[*x].grad, len);
                d.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::SumAxes { x, map } | Op::Broadcast { x, map } => {
            if before[*x].requires_grad {
                let len = before[*x].value.len();
                let d = acc_into(&mut before[*x].grad, len);
                if matches!(node.op, Op::SumAxes { .. }) {
                    for (i, &m) in map.iter().enumerate() {
                        d[i] += g[m];
                    }
                } else {
                    for (i, &m) in map.iter().enumerate() {
                        d[m] += g[i];
                    }
                }
            }
        }
        Op::Square(x) => {
            let n = &mut before[*x];
            if n.requires_grad {
                let (xv, grad) = (&n.value, &mut n.grad);
                let d = acc_into(grad, g.len());
                for i in 0..g.len() {
                    d[i] += 2.0 * xv[i] * g[i];
                }
            }
        }
        Op::Sqrt(x) => {
            if before[*x].requires_grad {
                let d = acc_into(&mut before[*x].grad, g.len());
                for i in 0..g.len() {
                    d[i] += g[i] * 0.5 / node.value[i];
                }
            }
        }
        Op::Unary(x, op) => {
            let n = &mut before[*x];
            if n.requires_grad {
                let (xv, grad) = (&n.value, &mut n.grad);
                let y = &node.value;
                let d = acc_into(grad, g.len());
                for i in 0..g.len() {
                    let local = match op {
                        UnaryOp::Scale(k) => *k,
                        UnaryOp::Shift(_) => 1.0,
                        UnaryOp::Recip => -y[i] * y[i],
                        UnaryOp::Exp => y[i],
                        UnaryOp::Ln => 1.0 / xv[i],
                        UnaryOp::Sigmoid => y[i] * (1.0 - y[i]),
                        UnaryOp::Abs => {
                            if xv[i] > 0.0 {
                                1.0
                            } else if xv[i] < 0.0 {
                                -1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    d[i] += g[i] * local;
                }
            }
        }
        Op::Reshape(x) => {
            if before[*x].requires_grad {
                let d = acc_into(&mut before[*x].grad, g.len());
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
        }
        Op::Slice { x, axis, start } => {
            if before[*x].requires_grad {
                let s = before[*x].shape.clone();
                let len = node.shape[*axis];
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[*axis + 1..].iter().product();
                let d = acc_into(&mut before[*x].grad, numel(&s));
                for o in 0..outer {
                    let base = (o * s[*axis] + start) * inner;
                    for j in 0..len * inner {
                        d[base + j] += g[o * len * inner + j];
                    }
                }
            }
        }
        Op::Concat { inputs, axis } => {
            let outer: usize = node.shape[..*axis].iter().product();
            let inner: usize = node.shape[*axis + 1..].iter().product();
            let total = node.shape[*axis] * inner;
            let mut offset = 0;
            for &x in inputs {
                let len = before[x].shape[*axis] * inner;
                if before[x].requires_grad {
                    let n = before[x].value.len();
                    let d = acc_into(&mut before[x].grad, n);
                    for o in 0..outer {
                        for j in 0..len {
                            d[o * len + j] += g[o * total + offset + j];
                        }
                    }
                }
                offset += len;
            }
        }
    }
}
