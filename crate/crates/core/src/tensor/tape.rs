use super::{inverse_permutation, permute_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for a user-supplied operation: given the input values, the
/// output value and the upstream gradient, returns one gradient buffer per
/// input (same length as that input).
pub type CustomBackward = Box<dyn Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv1dTime {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
    },
    Glu {
        x: Var,
        axis: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        a: Var,
        b: Var,
        axis: usize,
    },
    BroadcastTo(Var),
    LayerNorm {
        x: Var,
        group: usize,
        rstd: Vec<f64>,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Records operations in execution order so gradients can be replayed in
/// reverse. Inputs of an op always precede it on the tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
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

    /// Drops every recorded node so the tape can be reused for the next step.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backward_done = false;
    }

    /// Records an input value. Gradients are only accumulated for leaves
    /// created with `requires_grad` and for nodes derived from them.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` call with respect to `v`, if `v`
    /// participates in gradient tracking and was reached.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| Tensor {
            shape: node.value.shape().to_vec(),
            data: g.clone(),
        })
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Standard matrix product of `a: [m, k]` and `b: [k, p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(
                "matmul",
                format!("cannot multiply {sa:?} by {sb:?}"),
            ));
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, p);
        let value = Tensor {
            shape: vec![m, p],
            data: out,
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// Valid (unpadded) convolution along the time axis of `x: [B, C_in, T, n]`
    /// with `kernel: [C_out, C_in, K]` and optional `bias: [C_out]`.
    /// The node axis is untouched.
    pub fn conv1d_time(&mut self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != 4 || ks.len() != 3 || xs[1] != ks[1] {
            return Err(Error::dim(
                "conv1d_time",
                format!("input {xs:?} incompatible with kernel {ks:?}"),
            ));
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs != [ks[0]] {
                return Err(Error::dim(
                    "conv1d_time",
                    format!("bias {bs:?} does not match {} output channels", ks[0]),
                ));
            }
        }
        let (batch, c_in, t, n) = (xs[0], xs[1], xs[2], xs[3]);
        let (c_out, k_t) = (ks[0], ks[2]);
        if t < k_t {
            return Err(Error::Window {
                op: "conv1d_time",
                len: t,
                kernel: k_t,
            });
        }
        let t_out = t - k_t + 1;
        let block = t_out * n;
        let xd = self.value(x).data();
        let kd = self.value(kernel).data();
        let bd = bias.map(|b| self.value(b).data());
        let mut out = vec![0.0; batch * c_out * block];
        for bi in 0..batch {
            for o in 0..c_out {
                let dst = &mut out[(bi * c_out + o) * block..][..block];
                if let Some(bd) = bd {
                    dst.fill(bd[o]);
                }
                for i in 0..c_in {
                    let src = &xd[(bi * c_in + i) * t * n..][..t * n];
                    for kk in 0..k_t {
                        let w = kd[(o * c_in + i) * k_t + kk];
                        axpy(w, &src[kk * n..kk * n + block], dst);
                    }
                }
            }
        }
        let value = Tensor {
            shape: vec![batch, c_out, t_out, n],
            data: out,
        };
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        let rg = self.any_grad(&inputs);
        Ok(self.push(value, rg, Op::Conv1dTime { x, kernel, bias }))
    }

    /// Gated linear unit: splits `axis` into halves `P, Q` and returns
    /// `P ⊙ sigmoid(Q)`.
    pub fn glu(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] % 2 != 0 {
            return Err(Error::dim(
                "glu",
                format!("axis {axis} of {shape:?} must exist and have even size"),
            ));
        }
        let (outer, c, inner) = split_axis(&shape, axis);
        let half = c / 2;
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(outer * half * inner);
        for o in 0..outer {
            let base = o * c * inner;
            for k in 0..half * inner {
                let p = xd[base + k];
                let q = xd[base + half * inner + k];
                out.push(p * sigmoid(q));
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = half;
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor {
                shape: out_shape,
                data: out,
            },
            rg,
            Op::Glu { x, axis },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.map(x, |v| v.max(0.0));
        let rg = self.any_grad(&[x]);
        self.push(value, rg, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.map(x, sigmoid);
        let rg = self.any_grad(&[x]);
        self.push(value, rg, Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.map(x, |v| v * factor);
        let rg = self.any_grad(&[x]);
        self.push(value, rg, Op::Scale(x, factor))
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    fn binary(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(ta.shape(), tb.shape()).ok_or_else(|| {
            Error::dim(
                op,
                format!("shapes {:?} and {:?} do not broadcast", ta.shape(), tb.shape()),
            )
        })?;
        let (da, db) = (ta.data(), tb.data());
        let numel: usize = shape.iter().product();
        let data = if da.len() == db.len() {
            da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let (la, lb) = (da.len(), db.len());
            (0..numel).map(|i| f(da[i % la], db[i % lb])).collect()
        };
        Ok(Tensor { shape, data })
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::Reshape(x)))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let value = self.value(x).permute(axes)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, rg, Op::Permute(x, axes.to_vec())))
    }

    /// Slice `len` entries of `axis` starting at `start`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(
                "narrow",
                format!("range {start}..{} outside axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, c, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * c + start) * inner..][..len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor {
                shape: out_shape,
                data,
            },
            rg,
            Op::Narrow { x, axis, start },
        ))
    }

    /// Joins `a` and `b` along `axis`; all other axes must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa.iter().zip(&sb).enumerate().all(|(k, (x, y))| k == axis || x == y);
        if !compatible {
            return Err(Error::dim(
                "concat",
                format!("cannot join {sa:?} and {sb:?} along axis {axis}"),
            ));
        }
        let (outer, ca, inner) = split_axis(&sa, axis);
        let cb = sb[axis];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(da.len() + db.len());
        for o in 0..outer {
            data.extend_from_slice(&da[o * ca * inner..][..ca * inner]);
            data.extend_from_slice(&db[o * cb * inner..][..cb * inner]);
        }
        let mut shape = sa;
        shape[axis] = ca + cb;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor { shape, data }, rg, Op::Concat { a, b, axis }))
    }

    /// Repeats `x` over new or unit leading axes to reach `shape`.
    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if broadcast_shape(shape, &xs).as_deref() != Some(shape) {
            return Err(Error::dim(
                "broadcast_to",
                format!("{xs:?} cannot broadcast to {shape:?}"),
            ));
        }
        let src = self.value(x).data();
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|i| src[i % src.len()]).collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor {
                shape: shape.to_vec(),
                data,
            },
            rg,
            Op::BroadcastTo(x),
        ))
    }

    /// Normalises every group formed by the trailing `trailing_axes` axes to
    /// zero mean and unit (population) variance, with `eps` added to the
    /// variance.
    pub fn layer_norm(&mut self, x: Var, trailing_axes: usize, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if trailing_axes == 0 || trailing_axes > shape.len() {
            return Err(Error::dim(
                "layer_norm",
                format!("cannot normalise {trailing_axes} trailing axes of {shape:?}"),
            ));
        }
        let group: usize = shape[shape.len() - trailing_axes..].iter().product();
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(src.len());
        let mut rstd = Vec::with_capacity(src.len() / group);
        for chunk in src.chunks_exact(group) {
            let mean = chunk.iter().sum::<f64>() / group as f64;
            let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group as f64;
            let r = 1.0 / (var + eps).sqrt();
            data.extend(chunk.iter().map(|v| (v - mean) * r));
            rstd.push(r);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor { shape, data }, rg, Op::LayerNorm { x, group, rstd }))
    }

    /// Records an operation whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: CustomBackward) -> Var {
        let rg = self.any_grad(inputs);
        self.push(
            value,
            rg,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
        )
    }

    /// Reverse pass from a scalar `loss`. Every gradient-tracking node that
    /// contributes to `loss` ends up with a populated gradient. A second call
    /// without [`Tape::reset`] is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this tape; reset it first".into(),
            ));
        }
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let (lower, upper) = self.nodes.split_at_mut(i);
            let node = &mut upper[0];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = node.grad.take() else {
                continue;
            };
            let contributions = node_backward(lower, node, &g);
            node.grad = Some(g);
            for (v, d) in contributions {
                let target = &mut lower[v.0];
                if !target.requires_grad {
                    continue;
                }
                match &mut target.grad {
                    Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
                    None => target.grad = Some(d),
                }
            }
        }
        Ok(())
    }
}

fn node_backward(lower: &[Node], node: &Node, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let val = |v: Var| &lower[v.0].value;
    let wants = |v: Var| lower[v.0].requires_grad;
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k, p) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
            if wants(*a) {
                // dA = dZ · Bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let grow = &g[i * p..][..p];
                    for l in 0..k {
                        da[i * k + l] = dot(grow, &tb.data()[l * p..][..p]);
                    }
                }
                out.push((*a, da));
            }
            if wants(*b) {
                // dB = Aᵀ · dZ
                let mut db = vec![0.0; k * p];
                for i in 0..m {
                    let grow = &g[i * p..][..p];
                    for l in 0..k {
                        axpy(ta.data()[i * k + l], grow, &mut db[l * p..][..p]);
                    }
                }
                out.push((*b, db));
            }
        }
        Op::Conv1dTime { x, kernel, bias } => {
            let (tx, tk) = (val(*x), val(*kernel));
            let (batch, c_in, t, n) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
            let (c_out, k_t) = (tk.shape()[0], tk.shape()[2]);
            let block = (t - k_t + 1) * n;
            let (want_x, want_k) = (wants(*x), wants(*kernel));
            let mut dx = if want_x { vec![0.0; tx.numel()] } else { Vec::new() };
            let mut dk = if want_k { vec![0.0; tk.numel()] } else { Vec::new() };
            let mut dbias = vec![0.0; c_out];
            for bi in 0..batch {
                for o in 0..c_out {
                    let gblock = &g[(bi * c_out + o) * block..][..block];
                    dbias[o] += gblock.iter().sum::<f64>();
                    for i in 0..c_in {
                        let xoff = (bi * c_in + i) * t * n;
                        for kk in 0..k_t {
                            let widx = (o * c_in + i) * k_t + kk;
                            let range = xoff + kk * n..xoff + kk * n + block;
                            if want_k {
                                dk[widx] += dot(gblock, &tx.data()[range.clone()]);
                            }
                            if want_x {
                                axpy(tk.data()[widx], gblock, &mut dx[range]);
                            }
                        }
                    }
                }
            }
            if want_x {
                out.push((*x, dx));
            }
            if want_k {
                out.push((*kernel, dk));
            }
            if let Some(b) = bias {
                if wants(*b) {
                    out.push((*b, dbias));
                }
            }
        }
        Op::Glu { x, axis } => {
            let tx = val(*x);
            let (outer, c, inner) = split_axis(tx.shape(), *axis);
            let half = c / 2;
            let xd = tx.data();
            let mut dx = vec![0.0; tx.numel()];
            for o in 0..outer {
                let base = o * c * inner;
                for k in 0..half * inner {
                    let p = xd[base + k];
                    let s = sigmoid(xd[base + half * inner + k]);
                    let go = g[o * half * inner + k];
                    dx[base + k] = go * s;
                    dx[base + half * inner + k] = go * p * s * (1.0 - s);
                }
            }
            out.push((*x, dx));
        }
        Op::Relu(x) => {
            let d = val(*x)
                .data()
                .iter()
                .zip(g)
                .map(|(&v, &gi)| if v > 0.0 { gi } else { 0.0 })
                .collect();
            out.push((*x, d));
        }
        Op::Sigmoid(x) => {
            let d = node
                .value
                .data()
                .iter()
                .zip(g)
                .map(|(&s, &gi)| gi * s * (1.0 - s))
                .collect();
            out.push((*x, d));
        }
        Op::Scale(x, factor) => out.push((*x, g.iter().map(|v| v * factor).collect())),
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if wants(*a) {
                out.push((*a, reduce_broadcast(g, val(*a).numel(), 1.0)));
            }
            if wants(*b) {
                out.push((*b, reduce_broadcast(g, val(*b).numel(), sign)));
            }
        }
        Op::Mul(a, b) => {
            let (da, db) = (val(*a).data(), val(*b).data());
            let (la, lb) = (da.len(), db.len());
            if wants(*a) {
                let mut ga = vec![0.0; la];
                for (i, gi) in g.iter().enumerate() {
                    ga[i % la] += gi * db[i % lb];
                }
                out.push((*a, ga));
            }
            if wants(*b) {
                let mut gb = vec![0.0; lb];
                for (i, gi) in g.iter().enumerate() {
                    gb[i % lb] += gi * da[i % la];
                }
                out.push((*b, gb));
            }
        }
        Op::Sum(x) => out.push((*x, vec![g[0]; val(*x).numel()])),
        Op::Reshape(x) => out.push((*x, g.to_vec())),
        Op::Permute(x, axes) => {
            let gt = Tensor {
                shape: node.value.shape().to_vec(),
                data: g.to_vec(),
            };
            out.push((*x, permute_raw(&gt, &inverse_permutation(axes)).into_data()));
        }
        Op::Narrow { x, axis, start } => {
            let tx = val(*x);
            let (outer, c, inner) = split_axis(tx.shape(), *axis);
            let len = node.value.shape()[*axis];
            let mut dx = vec![0.0; tx.numel()];
            for o in 0..outer {
                dx[(o * c + start) * inner..][..len * inner]
                    .copy_from_slice(&g[o * len * inner..][..len * inner]);
            }
            out.push((*x, dx));
        }
        Op::Concat { a, b, axis } => {
            let (outer, ca, inner) = split_axis(val(*a).shape(), *axis);
            let cb = val(*b).shape()[*axis];
            let (mut ga, mut gb) = (Vec::new(), Vec::new());
            for o in 0..outer {
                let row = &g[o * (ca + cb) * inner..][..(ca + cb) * inner];
                ga.extend_from_slice(&row[..ca * inner]);
                gb.extend_from_slice(&row[ca * inner..]);
            }
            out.push((*a, ga));
            out.push((*b, gb));
        }
        Op::BroadcastTo(x) => out.push((*x, reduce_broadcast(g, val(*x).numel(), 1.0))),
        Op::LayerNorm { x, group, rstd } => {
            let y = node.value.data();
            let mut dx = Vec::with_capacity(y.len());
            let gsize = *group as f64;
            for ((ychunk, gchunk), r) in y.chunks_exact(*group).zip(g.chunks_exact(*group)).zip(rstd) {
                let mean_g = gchunk.iter().sum::<f64>() / gsize;
                let mean_gy = dot(gchunk, ychunk) / gsize;
                dx.extend(
                    ychunk
                        .iter()
                        .zip(gchunk)
                        .map(|(&yi, &gi)| r * (gi - mean_g - yi * mean_gy)),
                );
            }
            out.push((*x, dx));
        }
        Op::Custom { inputs, backward } => {
            let vals: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
            let grads = backward(&vals, &node.value, g);
            out.extend(inputs.iter().copied().zip(grads));
        }
    }
    out
}

/// Output shape when `a` and `b` combine elementwise: equal shapes, or one
/// operand whose shape (after dropping leading unit axes) is a trailing
/// suffix of the other.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a == b {
        return Some(a.to_vec());
    }
    let fits = |small: &[usize], big: &[usize]| {
        let first = small.iter().position(|&d| d != 1).unwrap_or(small.len());
        let core = &small[first..];
        small.len() <= big.len() && big.ends_with(core)
    };
    let (na, nb): (usize, usize) = (a.iter().product(), b.iter().product());
    if nb <= na && fits(b, a) {
        Some(a.to_vec())
    } else if na < nb && fits(a, b) {
        Some(b.to_vec())
    } else {
        None
    }
}

fn reduce_broadcast(g: &[f64], len: usize, sign: f64) -> Vec<f64> {
    if len == g.len() {
        return g.iter().map(|v| v * sign).collect();
    }
    let mut acc = vec![0.0; len];
    for chunk in g.chunks_exact(len) {
        acc.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
    }
    acc.iter_mut().for_each(|a| *a *= sign);
    acc
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        let row = &mut out[i * p..][..p];
        for l in 0..k {
            axpy(a[i * k + l], &b[l * p..][..p], row);
        }
    }
    out
}
