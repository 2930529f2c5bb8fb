use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Conv1x1(Var, Var),
    Conv3x3(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    GlobalAvgPool(Var),
    ChannelScale(Var, Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Concat(Vec<Var>),
    /// Mask already carries the `1/(1-p)` scaling.
    Dropout(Var, Vec<f64>),
    AvgPool2(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of tensor operations.
///
/// Every op appends a node holding its forward value; [`Tape::backward`]
/// walks the nodes in reverse insertion order, which is a valid reverse
/// topological order because parents always precede children.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable input; gradients are reported for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A fixed input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
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

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn binary_elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let plan = Broadcast::new(ta.shape(), tb.shape())
            .ok_or_else(|| Error::shape(name, &[ta.shape(), tb.shape()]))?;
        let mut out = vec![0.0; plan.out.iter().product()];
        let (da, db) = (ta.data(), tb.data());
        plan.visit(|o, ia, ib| out[o] = f(da[ia], db[ib]));
        Tensor::new(plan.out, out)
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary_elementwise("add", a, b, |x, y| x + y)?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary_elementwise("sub", a, b, |x, y| x - y)?;
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary_elementwise("mul", a, b, |x, y| x * y)?;
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect())?;
        self.push("scale", value, Op::Scale(x, c), &[x])
    }

    /// `(m, k) × (k, n)` matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = match (ta.shape(), tb.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            _ => return Err(Error::shape("matmul", &[ta.shape(), tb.shape()])),
        };
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    fn conv_dims(
        &self,
        name: &'static str,
        x: Var,
        w: Var,
        k: usize,
    ) -> Result<(usize, usize, usize, usize, usize)> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (n, ci, h, wd) = tx.dims4(name)?;
        match tw.shape() {
            &[co, ci2, k1, k2] if ci2 == ci && k1 == k && k2 == k && h > 0 && wd > 0 => {
                Ok((n, ci, co, h, wd))
            }
            _ => Err(Error::shape(name, &[tx.shape(), tw.shape()])),
        }
    }

    /// Pointwise convolution; `w` is `(out_ch, in_ch, 1, 1)`.
    pub fn conv2d_1x1(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, ci, co, h, wd) = self.conv_dims("conv2d_1x1", x, w, 1)?;
        let out = conv1x1_forward(self.value(x).data(), self.value(w).data(), n, ci, co, h * wd);
        let value = Tensor::new(vec![n, co, h, wd], out)?;
        self.push("conv2d_1x1", value, Op::Conv1x1(x, w), &[x, w])
    }

    /// 3×3 convolution, stride 1, zero padding 1; `w` is `(out_ch, in_ch, 3, 3)`.
    pub fn conv2d_3x3(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, ci, co, h, wd) = self.conv_dims("conv2d_3x3", x, w, 3)?;
        let out = conv3x3_forward(self.value(x).data(), self.value(w).data(), n, ci, co, h, wd);
        let value = Tensor::new(vec![n, co, h, wd], out)?;
        self.push("conv2d_3x3", value, Op::Conv3x3(x, w), &[x, w])
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())?;
        self.push(name, value, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary("softplus", x, softplus, Op::Softplus(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary("square", x, |v| v * v, Op::Square(x))
    }

    /// `(n, c, h, w)` → `(n, c, 1, 1)` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4("global_avg_pool")?;
        let hw = h * w;
        let out = t
            .data()
            .chunks_exact(hw)
            .map(|p| p.iter().sum::<f64>() / hw as f64)
            .collect();
        let value = Tensor::new(vec![n, c, 1, 1], out)?;
        self.push("global_avg_pool", value, Op::GlobalAvgPool(x), &[x])
    }

    /// Scales every channel plane of `x` `(n, c, h, w)` by `s` `(n, c, 1, 1)`.
    pub fn channel_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let (tx, ts) = (self.value(x), self.value(s));
        let (n, c, h, w) = tx.dims4("channel_scale")?;
        if ts.shape() != [n, c, 1, 1] {
            return Err(Error::shape("channel_scale", &[tx.shape(), ts.shape()]));
        }
        let hw = h * w;
        let out = tx
            .data()
            .chunks_exact(hw)
            .zip(ts.data())
            .flat_map(|(p, &k)| p.iter().map(move |v| v * k))
            .collect();
        let value = Tensor::new(vec![n, c, h, w], out)?;
        self.push("channel_scale", value, Op::ChannelScale(x, s), &[x, s])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::shape("mean", &[t.shape()]));
        }
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Tensor::scalar(mean), Op::Mean(x), &[x])
    }

    /// Concatenation of rank-4 tensors along the channel axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let (n, _, h, w) = self.value(first).dims4("concat")?;
        let mut channels = 0;
        for &v in xs {
            let (n2, c, h2, w2) = self.value(v).dims4("concat")?;
            if (n2, h2, w2) != (n, h, w) {
                let shapes: Vec<&[usize]> = xs.iter().map(|&v| self.shape(v)).collect();
                return Err(Error::shape("concat", &shapes));
            }
            channels += c;
        }
        let mut out = Vec::with_capacity(n * channels * h * w);
        for b in 0..n {
            for &v in xs {
                let t = self.value(v);
                let block = t.shape()[1] * h * w;
                out.extend_from_slice(&t.data()[b * block..(b + 1) * block]);
            }
        }
        let value = Tensor::new(vec![n, channels, h, w], out)?;
        self.push("concat", value, Op::Concat(xs.to_vec()), xs)
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1/(1-p)`. `p = 0` returns `x` itself.
    pub fn dropout(&mut self, x: Var, p: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::domain(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push("dropout", value, Op::Dropout(x, mask), &[x])
    }

    /// 2×2 mean pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn avg_pool_2x2(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4("avg_pool_2x2")?;
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::shape("avg_pool_2x2", &[t.shape()]));
        }
        let d = t.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in d.chunks_exact(h * w) {
            for y in 0..oh {
                for xx in 0..ow {
                    let at = 2 * y * w + 2 * xx;
                    out.push(0.25 * (plane[at] + plane[at + 1] + plane[at + w] + plane[at + w + 1]));
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        self.push("avg_pool_2x2", value, Op::AvgPool2(x), &[x])
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let seed = &self.nodes[loss.0].value;
        if seed.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                seed.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(seed.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.backprop_node(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc
                .data_mut()
                .iter_mut()
                .zip(delta.data())
                .for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let negate = matches!(node.op, Op::Sub(..));
                let plan = Broadcast::new(self.shape(a), self.shape(b)).expect("checked in forward");
                let mut ga = vec![0.0; self.value(a).len()];
                let mut gb = vec![0.0; self.value(b).len()];
                plan.visit(|o, ia, ib| {
                    ga[ia] += gd[o];
                    gb[ib] += gd[o];
                });
                if negate {
                    gb.iter_mut().for_each(|v| *v = -*v);
                }
                self.accumulate(grads, a, Tensor::new(self.shape(a).to_vec(), ga)?);
                self.accumulate(grads, b, Tensor::new(self.shape(b).to_vec(), gb)?);
            }
            &Op::Mul(a, b) => {
                let plan = Broadcast::new(self.shape(a), self.shape(b)).expect("checked in forward");
                let (da, db) = (self.value(a).data(), self.value(b).data());
                let mut ga = vec![0.0; da.len()];
                let mut gb = vec![0.0; db.len()];
                plan.visit(|o, ia, ib| {
                    ga[ia] += gd[o] * db[ib];
                    gb[ib] += gd[o] * da[ia];
                });
                self.accumulate(grads, a, Tensor::new(self.shape(a).to_vec(), ga)?);
                self.accumulate(grads, b, Tensor::new(self.shape(b).to_vec(), gb)?);
            }
            &Op::Scale(x, c) => {
                let gx = gd.iter().map(|v| v * c).collect();
                self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
            }
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(a) {
                    let bt = transpose(tb.data(), k, n);
                    let ga = matmul_raw(gd, &bt, m, n, k);
                    self.accumulate(grads, a, Tensor::new(vec![m, k], ga)?);
                }
                if self.wants(b) {
                    let at = transpose(ta.data(), m, k);
                    let gb = matmul_raw(&at, gd, k, m, n);
                    self.accumulate(grads, b, Tensor::new(vec![k, n], gb)?);
                }
            }
            &Op::Conv1x1(x, w) => {
                let (n, ci, h, wd) = self.value(x).dims4("conv2d_1x1")?;
                let co = self.shape(w)[0];
                let (dx, dw) = (self.value(x).data(), self.value(w).data());
                let hw = h * wd;
                if self.wants(x) {
                    let mut gx = vec![0.0; dx.len()];
                    for b in 0..n {
                        for o in 0..co {
                            let gp = &gd[(b * co + o) * hw..][..hw];
                            for i in 0..ci {
                                let k = dw[o * ci + i];
                                let out = &mut gx[(b * ci + i) * hw..][..hw];
                                axpy(out, k, gp);
                            }
                        }
                    }
                    self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
                }
                if self.wants(w) {
                    let mut gw = vec![0.0; dw.len()];
                    for b in 0..n {
                        for o in 0..co {
                            let gp = &gd[(b * co + o) * hw..][..hw];
                            for i in 0..ci {
                                gw[o * ci + i] += dot(gp, &dx[(b * ci + i) * hw..][..hw]);
                            }
                        }
                    }
                    self.accumulate(grads, w, Tensor::new(self.shape(w).to_vec(), gw)?);
                }
            }
            &Op::Conv3x3(x, w) => {
                let (n, ci, h, wd) = self.value(x).dims4("conv2d_3x3")?;
                let co = self.shape(w)[0];
                let (dx, dw) = (self.value(x).data(), self.value(w).data());
                if self.wants(x) {
                    let gx = conv3x3_backward_input(gd, dw, n, ci, co, h, wd);
                    self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
                }
                if self.wants(w) {
                    let gw = conv3x3_backward_weight(gd, dx, n, ci, co, h, wd);
                    self.accumulate(grads, w, Tensor::new(self.shape(w).to_vec(), gw)?);
                }
            }
            &Op::Relu(x) => {
                let gx = gd
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
            }
            &Op::Sigmoid(x) => {
                let gx = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
            }
            &Op::Softplus(x) => {
                let gx = gd
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(g, v)| g * sigmoid(*v))
                    .collect();
                self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
            }
            &Op::Square(x) => {
                let gx = gd
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(g, v)| 2.0 * v * g)
                    .collect();
                self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
            }
            &Op::GlobalAvgPool(x) => {
                let (_, _, h, w) = self.value(x).dims4("global_avg_pool")?;
                let hw = h * w;
                let gx = gd
                    .iter()
                    .flat_map(|g| std::iter::repeat(g / hw as f64).take(hw))
                    .collect();
                self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
            }
            &Op::ChannelScale(x, s) => {
                let (_, _, h, w) = self.value(x).dims4("channel_scale")?;
                let hw = h * w;
                let (dx, ds) = (self.value(x).data(), self.value(s).data());
                if self.wants(x) {
                    let gx = gd
                        .chunks_exact(hw)
                        .zip(ds)
                        .flat_map(|(gp, &k)| gp.iter().map(move |g| g * k))
                        .collect();
                    self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
                }
                if self.wants(s) {
                    let gs = gd
                        .chunks_exact(hw)
                        .zip(dx.chunks_exact(hw))
                        .map(|(gp, xp)| dot(gp, xp))
                        .collect();
                    self.accumulate(grads, s, Tensor::new(self.shape(s).to_vec(), gs)?);
                }
            }
            &Op::Sum(x) => {
                let gx = Tensor::full(self.shape(x), gd[0]);
                self.accumulate(grads, x, gx);
            }
            &Op::Mean(x) => {
                let n = self.value(x).len() as f64;
                let gx = Tensor::full(self.shape(x), gd[0] / n);
                self.accumulate(grads, x, gx);
            }
            Op::Concat(xs) => {
                let (n, _, h, w) = node.value.dims4("concat")?;
                let mut parts: Vec<Vec<f64>> = xs.iter().map(|v| Vec::with_capacity(self.value(*v).len())).collect();
                let mut at = 0;
                for _ in 0..n {
                    for (k, v) in xs.iter().enumerate() {
                        let block = self.shape(*v)[1] * h * w;
                        parts[k].extend_from_slice(&gd[at..at + block]);
                        at += block;
                    }
                }
                for (v, part) in xs.iter().zip(parts) {
                    self.accumulate(grads, *v, Tensor::new(self.shape(*v).to_vec(), part)?);
                }
            }
            Op::Dropout(x, mask) => {
                let gx = gd.iter().zip(mask).map(|(g, m)| g * m).collect();
                self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), gx)?);
            }
            &Op::Reshape(x) => {
                self.accumulate(grads, x, g.clone().reshape(self.shape(x))?);
            }
            &Op::AvgPool2(x) => {
                let (n, c, h, w) = self.value(x).dims4("avg_pool_2x2")?;
                let (oh, ow) = (h / 2, w / 2);
                let mut gx = vec![0.0; n * c * h * w];
                for (p, gp) in gd.chunks_exact(oh * ow).enumerate() {
                    let plane = &mut gx[p * h * w..(p + 1) * h * w];
                    for y in 0..oh {
                        for xx in 0..ow {
                            let g = 0.25 * gp[y * ow + xx];
                            let at = 2 * y * w + 2 * xx;
                            plane[at] += g;
                            plane[at + 1] += g;
                            plane[at + w] += g;
                            plane[at + w + 1] += g;
                        }
                    }
                }
                self.accumulate(grads, x, Tensor::new(self.shape(x).to_vec(), gx)?);
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for positive `y`.
pub(crate) fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

fn axpy(out: &mut [f64], k: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += k * v;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(row, a[i * k + p], &b[p * n..(p + 1) * n]);
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn conv1x1_forward(x: &[f64], w: &[f64], n: usize, ci: usize, co: usize, hw: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * co * hw];
    for b in 0..n {
        for o in 0..co {
            let plane = &mut out[(b * co + o) * hw..][..hw];
            for i in 0..ci {
                axpy(plane, w[o * ci + i], &x[(b * ci + i) * hw..][..hw]);
            }
        }
    }
    out
}

/// Row and column ranges of output positions whose 3×3 tap `(ky, kx)`
/// lands inside the input.
fn tap_ranges(ky: usize, kx: usize, h: usize, w: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let rows = (if ky == 0 { 1 } else { 0 })..(if ky == 2 { h - 1 } else { h });
    let cols = (if kx == 0 { 1 } else { 0 })..(if kx == 2 { w - 1 } else { w });
    (rows, cols)
}

fn conv3x3_forward(x: &[f64], wt: &[f64], n: usize, ci: usize, co: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; n * co * hw];
    for b in 0..n {
        for o in 0..co {
            let plane = &mut out[(b * co + o) * hw..][..hw];
            for i in 0..ci {
                let input = &x[(b * ci + i) * hw..][..hw];
                let kernel = &wt[(o * ci + i) * 9..][..9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = kernel[ky * 3 + kx];
                        let (rows, cols) = tap_ranges(ky, kx, h, w);
                        for y in rows {
                            let sy = y + ky - 1;
                            let dst = &mut plane[y * w + cols.start..y * w + cols.end];
                            let src = &input[sy * w + cols.start + kx - 1..sy * w + cols.end + kx - 1];
                            axpy(dst, k, src);
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv3x3_backward_input(g: &[f64], wt: &[f64], n: usize, ci: usize, co: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut gx = vec![0.0; n * ci * hw];
    for b in 0..n {
        for i in 0..ci {
            let plane = &mut gx[(b * ci + i) * hw..][..hw];
            for o in 0..co {
                let gp = &g[(b * co + o) * hw..][..hw];
                let kernel = &wt[(o * ci + i) * 9..][..9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = kernel[ky * 3 + kx];
                        let (rows, cols) = tap_ranges(ky, kx, h, w);
                        for y in rows {
                            let sy = y + ky - 1;
                            let dst = &mut plane[sy * w + cols.start + kx - 1..sy * w + cols.end + kx - 1];
                            let src = &gp[y * w + cols.start..y * w + cols.end];
                            axpy(dst, k, src);
                        }
                    }
                }
            }
        }
    }
    gx
}

fn conv3x3_backward_weight(g: &[f64], x: &[f64], n: usize, ci: usize, co: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut gw = vec![0.0; co * ci * 9];
    for b in 0..n {
        for o in 0..co {
            let gp = &g[(b * co + o) * hw..][..hw];
            for i in 0..ci {
                let input = &x[(b * ci + i) * hw..][..hw];
                let kernel = &mut gw[(o * ci + i) * 9..][..9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (rows, cols) = tap_ranges(ky, kx, h, w);
                        let mut acc = 0.0;
                        for y in rows {
                            let sy = y + ky - 1;
                            acc += dot(
                                &gp[y * w + cols.start..y * w + cols.end],
                                &input[sy * w + cols.start + kx - 1..sy * w + cols.end + kx - 1],
                            );
                        }
                        kernel[ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    gw
}

/// Index plan for numpy-style broadcasting of two operands.
struct Broadcast {
    out: Vec<usize>,
    strides_a: Vec<usize>,
    strides_b: Vec<usize>,
}

impl Broadcast {
    fn new(a: &[usize], b: &[usize]) -> Option<Self> {
        let rank = a.len().max(b.len());
        let pad = |s: &[usize]| -> Vec<usize> {
            let mut v = vec![1; rank - s.len()];
            v.extend_from_slice(s);
            v
        };
        let (pa, pb) = (pad(a), pad(b));
        let mut out = Vec::with_capacity(rank);
        for (&x, &y) in pa.iter().zip(&pb) {
            out.push(match (x, y) {
                _ if x == y => x,
                (1, _) => y,
                (_, 1) => x,
                _ => return None,
            });
        }
        let strides = |p: &[usize]| -> Vec<usize> {
            let mut s = vec![0; rank];
            let mut acc = 1;
            for d in (0..rank).rev() {
                s[d] = if p[d] == 1 && out[d] != 1 { 0 } else { acc };
                acc *= p[d];
            }
            s
        };
        let (strides_a, strides_b) = (strides(&pa), strides(&pb));
        Some(Broadcast {
            out,
            strides_a,
            strides_b,
        })
    }

    /// Calls `f(out_index, a_index, b_index)` for every output element in order.
    fn visit(&self, mut f: impl FnMut(usize, usize, usize)) {
        let rank = self.out.len();
        let total: usize = self.out.iter().product();
        if total == 0 {
            return;
        }
        if rank == 0 {
            f(0, 0, 0);
            return;
        }
        let inner = self.out[rank - 1];
        let (sa, sb) = (self.strides_a[rank - 1], self.strides_b[rank - 1]);
        let mut idx = vec![0usize; rank - 1];
        let mut o = 0;
        loop {
            let base_a: usize = idx.iter().zip(&self.strides_a).map(|(i, s)| i * s).sum();
            let base_b: usize = idx.iter().zip(&self.strides_b).map(|(i, s)| i * s).sum();
            for j in 0..inner {
                f(o, base_a + j * sa, base_b + j * sb);
                o += 1;
            }
            // Odometer increment over the outer dimensions.
            let mut d = rank - 1;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.out[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_plan_shapes() {
        let p = Broadcast::new(&[2, 3, 4, 5], &[1, 3, 1, 1]).unwrap();
        assert_eq!(p.out, vec![2, 3, 4, 5]);
        assert_eq!(p.strides_b, vec![0, 1, 0, 0]);
        assert!(Broadcast::new(&[2, 3], &[4, 3]).is_none());
        assert_eq!(Broadcast::new(&[3], &[2, 1]).unwrap().out, vec![2, 3]);
        assert_eq!(Broadcast::new(&[], &[2]).unwrap().out, vec![2]);
    }

    #[test]
    fn softplus_inverse_round_trips() {
        for y in [1e-4, 0.01, 0.3, 1.0, 5.0, 30.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn mean_square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let sq = tape.square(x).unwrap();
        let m = tape.mean(sq).unwrap();
        let g = tape.backward(m).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[4]));
        let s = tape.sigmoid(x).unwrap();
        let total = tape.sum(s).unwrap();
        let g = tape.backward(total).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|v| *v == 0.25));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[3]));
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[4, 3]));
        let err = tape.add(a, b).unwrap_err();
        assert!(err.to_string().contains("add"), "{err}");
        assert!(err.to_string().contains("[4, 3]"), "{err}");
        assert!(tape.matmul(a, b).is_err());
    }

    #[test]
    fn non_finite_values_are_reported() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![1e308]).unwrap());
        let err = tape.square(x).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref op) if op == "square"));
    }

    #[test]
    fn broadcast_gradient_reduces_to_operand_shape() {
        let mut tape = Tape::new();
        let small = tape.leaf(Tensor::new(vec![1, 2, 1, 1], vec![2.0, 3.0]).unwrap());
        let big = tape.leaf(Tensor::from_fn(&[2, 2, 2, 2], |i| i as f64));
        let y = tape.mul(small, big).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        let gs = g.get(small).unwrap();
        assert_eq!(gs.shape(), &[1, 2, 1, 1]);
        // Channel 0 holds 0..4 and 8..12, channel 1 holds 4..8 and 12..16.
        assert_eq!(gs.data(), &[(0..4).chain(8..12).sum::<usize>() as f64, (4..8).chain(12..16).sum::<usize>() as f64]);
        assert_eq!(g.get(big).unwrap().data()[5], 3.0);
    }

    #[test]
    fn shared_parent_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1], vec![3.0]).unwrap());
        let y = tape.mul(x, x).unwrap();
        let z = tape.add(y, x).unwrap();
        let s = tape.sum(z).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::full(&[2], 2.0));
        let x = tape.leaf(Tensor::full(&[2], 1.0));
        let y = tape.mul(c, x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn conv3x3_identity_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[1, 1, 3, 4], |i| i as f64));
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = tape.constant(Tensor::new(vec![1, 1, 3, 3], k).unwrap());
        let y = tape.conv2d_3x3(x, w).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn conv3x3_zero_padding() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let w = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let y = tape.conv2d_3x3(x, w).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn dropout_zero_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(&[3, 2], |i| i as f64));
        let y = tape.dropout(x, 0.0, 9).unwrap();
        assert_eq!(x, y);
        assert!(tape.dropout(x, 1.0, 9).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[20000], 1.0));
        let y = tape.dropout(x, 0.3, 4).unwrap();
        let mean = tape.value(y).data().iter().sum::<f64>() / 20000.0;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn avg_pool_drops_odd_tail() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[1, 1, 3, 3], |i| i as f64));
        let y = tape.avg_pool_2x2(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0]);
    }
}
