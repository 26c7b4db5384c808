//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends one node holding its output value and whatever
//! the backward rule needs. Nodes only reference earlier nodes, so the tape
//! order is already a topological order and `backward` is a single reverse
//! sweep. A tape is single-owner: build it for one step, differentiate, drop it.

use crate::tensor::ops::{self, BnBatch, ConvGeometry, RunningStats};
use crate::tensor::{Result, Scalar, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Scalar> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Square(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    Sigmoid(Var),
    Log { x: Var, floor: T },
    LeakyRelu { x: Var, slope: T },
    Prelu { x: Var, alpha: Var },
    PixelShuffle { x: Var, r: usize },
    Reshape(Var),
    GlobalAvgPool(Var),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeometry },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, saved: BnBatch<T> },
    BatchNormInfer { x: Var, gamma: Var, beta: Var, mean: Vec<T>, scale: Vec<T> },
    Dense { x: Var, w: Var, b: Var },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Batch statistics produced by a training-mode normalization node.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub count: usize,
}

pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    record: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
        }
    }

    /// A tape that evaluates values only; nothing on it is differentiable.
    pub fn no_grad() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input (parameter or variable of interest).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let rg = self.record;
        self.push_raw(value, Op::Leaf, rg)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Copies `v`'s value into a new constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let rg = self.record && inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        let op = if rg { op } else { Op::Leaf };
        self.push_raw(value, op, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::shape(op, sa, sb));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data).expect("shapes checked by caller")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, k), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, k: T) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.abs());
        self.push(v, Op::Abs(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Tensor::scalar(x.sum() / T::from_f64(x.numel() as f64));
        self.push(v, Op::Mean(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        self.push(v, Op::Sigmoid(a), &[a])
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, a: Var, floor: T) -> Var {
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(v, Op::Log { x: a, floor }, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = ops::leaky_relu(self.value(a), slope);
        self.push(v, Op::LeakyRelu { x: a, slope }, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        let v = ops::prelu(self.value(x), self.value(alpha))?;
        Ok(self.push(v, Op::Prelu { x, alpha }, &[x, alpha]))
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let v = ops::pixel_shuffle(self.value(x), r)?;
        Ok(self.push(v, Op::PixelShuffle { x, r }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// Flattens `[N, ...]` to `[N, rest]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape();
        let n = shape[0];
        let rest = shape[1..].iter().product::<usize>().max(1);
        self.reshape(x, &[n, rest])
    }

    /// Mean over the spatial axes: `[N, C, H, W]` to `[N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let plane = h * w;
        let inv = T::from_f64(1.0 / plane as f64);
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * inv)
            .collect();
        let v = Tensor::new(&[n, c], data)?;
        Ok(self.push(v, Op::GlobalAvgPool(x), &[x]))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeometry::resolve(self.value(x).shape(), self.value(w).shape(), stride, pad)?;
        let v = ops::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(v, Op::Conv2d { x, w, b, geom }, &[x, w, b]))
    }

    /// Training-mode batch normalization. Returns the normalized node and the
    /// batch statistics so the caller can fold them into its running stats.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
    ) -> Result<(Var, BatchStats<T>)> {
        let (v, saved) =
            ops::bn_train_forward(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let stats = BatchStats {
            mean: saved.mean.clone(),
            var: saved.var.clone(),
            count: saved.count,
        };
        let op = Op::BatchNormTrain {
            x,
            gamma,
            beta,
            saved,
        };
        Ok((self.push(v, op, &[x, gamma, beta]), stats))
    }

    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &RunningStats<T>,
        eps: T,
    ) -> Result<Var> {
        let v = ops::bn_infer_forward(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running,
            eps,
        )?;
        let op = Op::BatchNormInfer {
            x,
            gamma,
            beta,
            mean: running.mean.clone(),
            scale: ops::bn_infer_scale(running, eps),
        };
        Ok(self.push(v, op, &[x, gamma, beta]))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let v = ops::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(v, Op::Dense { x, w, b }, &[x, w, b]))
    }

    /// Reverse sweep from a scalar `loss`. Nodes that do not require a
    /// gradient are skipped; asking [`Gradients`] for them yields `None`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|g| Tensor::new(self.nodes[i].value.shape(), g).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &dyn Fn(usize) -> T| {
            if !self.wants(v) {
                return;
            }
            let n = self.nodes[v.0].value.numel();
            match &mut grads[v.0] {
                Some(buf) => buf.iter_mut().enumerate().for_each(|(i, b)| *b = *b + f(i)),
                slot @ None => *slot = Some((0..n).map(f).collect()),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &|i| g[i]);
                acc(*b, &|i| g[i]);
            }
            Op::Sub(a, b) => {
                acc(*a, &|i| g[i]);
                acc(*b, &|i| -g[i]);
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                acc(*a, &|i| g[i] * xb[i]);
                acc(*b, &|i| g[i] * xa[i]);
            }
            Op::Scale(a, k) => acc(*a, &|i| g[i] * *k),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &|i| g[i]),
            Op::Square(a) => {
                let x = val(*a);
                let two = T::from_f64(2.0);
                acc(*a, &|i| two * x[i] * g[i]);
            }
            Op::Abs(a) => {
                let x = val(*a);
                acc(*a, &|i| {
                    if x[i] > T::zero() {
                        g[i]
                    } else if x[i] < T::zero() {
                        -g[i]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::Sum(a) => acc(*a, &|_| g[0]),
            Op::Mean(a) => {
                let n = T::from_f64(self.nodes[a.0].value.numel() as f64);
                acc(*a, &|_| g[0] / n);
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(*a, &|i| g[i] * y[i] * (T::one() - y[i]));
            }
            Op::Log { x, floor } => {
                let xv = val(*x);
                acc(*x, &|i| if xv[i] > *floor { g[i] / xv[i] } else { T::zero() });
            }
            Op::LeakyRelu { x, slope } => {
                let xv = val(*x);
                acc(*x, &|i| if xv[i] >= T::zero() { g[i] } else { *slope * g[i] });
            }
            Op::Prelu { x, alpha } => {
                let (xv, av) = (val(*x), val(*alpha));
                let (n, c, plane) = ops::channel_layout(self.nodes[x.0].value.shape())
                    .expect("validated in forward");
                let ch = |i: usize| (i / plane) % c;
                acc(*x, &|i| if xv[i] >= T::zero() { g[i] } else { av[ch(i)] * g[i] });
                if self.wants(*alpha) {
                    let mut ga = vec![T::zero(); c];
                    for b in 0..n {
                        for (k, gk) in ga.iter_mut().enumerate() {
                            let off = (b * c + k) * plane;
                            for i in off..off + plane {
                                if xv[i] < T::zero() {
                                    *gk = *gk + g[i] * xv[i];
                                }
                            }
                        }
                    }
                    acc(*alpha, &|k| ga[k]);
                }
            }
            Op::PixelShuffle { x, r } => {
                let dx = ops::pixel_unshuffle(g, node.value.shape(), *r);
                acc(*x, &|i| dx[i]);
            }
            Op::GlobalAvgPool(x) => {
                let (_, _, h, w) = self.nodes[x.0].value.dims4().expect("rank 4");
                let plane = h * w;
                let inv = T::from_f64(1.0 / plane as f64);
                acc(*x, &|i| g[i / plane] * inv);
            }
            Op::Conv2d { x, w, b, geom } => {
                let (dx, dw, db) =
                    ops::conv2d_backward(geom, val(*x), val(*w), g, self.wants(*x), self.wants(*w));
                if let Some(dx) = dx {
                    acc(*x, &|i| dx[i]);
                }
                if let Some(dw) = dw {
                    acc(*w, &|i| dw[i]);
                }
                acc(*b, &|i| db[i]);
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                saved,
            } => {
                let (dx, dgamma, dbeta) =
                    ops::bn_train_backward(node.value.shape(), saved, val(*gamma), g);
                acc(*x, &|i| dx[i]);
                acc(*gamma, &|i| dgamma[i]);
                acc(*beta, &|i| dbeta[i]);
            }
            Op::BatchNormInfer {
                x,
                gamma,
                beta,
                mean,
                scale,
            } => {
                let (xv, gm) = (val(*x), val(*gamma));
                let (n, c, plane) =
                    ops::channel_layout(node.value.shape()).expect("validated in forward");
                let ch = |i: usize| (i / plane) % c;
                acc(*x, &|i| g[i] * gm[ch(i)] * scale[ch(i)]);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for k in 0..c {
                        let off = (b * c + k) * plane;
                        for i in off..off + plane {
                            dgamma[k] = dgamma[k] + g[i] * (xv[i] - mean[k]) * scale[k];
                            dbeta[k] = dbeta[k] + g[i];
                        }
                    }
                }
                acc(*gamma, &|k| dgamma[k]);
                acc(*beta, &|k| dbeta[k]);
            }
            Op::Dense { x, w, b } => {
                let (n, d) = self.nodes[x.0].value.dims2().expect("rank 2");
                let dout = node.value.shape()[1];
                let (dx, dw, db) = ops::dense_backward(
                    val(*x),
                    val(*w),
                    g,
                    (n, d, dout),
                    self.wants(*x),
                    self.wants(*w),
                );
                if let Some(dx) = dx {
                    acc(*x, &|i| dx[i]);
                }
                if let Some(dw) = dw {
                    acc(*w, &|i| dw[i]);
                }
                acc(*b, &|i| db[i]);
            }
        }
    }
}

/// Gradients from one [`Tape::backward`] call, indexed by node.
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `like`'s shape when `v` was not reached
    /// (a detached or frozen parameter).
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()).expect("non-empty shape"))
    }
}
