//! Recording tape and reverse-mode differentiation.
//!
//! Every differentiable primitive appends one node holding its output value
//! and the ids of its inputs. Because inputs always exist before the op that
//! consumes them, the node list is already in topological order and
//! `backward` simply walks it in reverse.

use super::conv::{conv2d_backward, conv2d_forward};
use super::{pixel_shuffle, pixel_unshuffle, ParamId, ParamStore, Real, Tensor};
use crate::error::{config_err, shape_err, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Real> {
    Constant,
    Input,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Option<Var> },
    LeakyRelu { x: Var, slope: T },
    PixelShuffle { x: Var, r: usize },
    Concat { xs: Vec<Var> },
    WeightedSum { terms: Vec<(Var, Var)> },
    Scale { x: Var, coeff: Var },
    Add { a: Var, b: Var },
    L1 { pred: Var, target: Var },
    Dot { x: Var, weights: Tensor<T> },
    Sum { x: Var },
}

struct Node<T: Real> {
    value: Option<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// A tape of recorded primitive applications.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of graph inputs created with [`Graph::input`].
pub struct Grads<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

impl<T: Real> Graph<T> {
    /// A graph that records everything needed for `backward`.
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: true }
    }

    /// Inference-only graph: nothing requires gradients and
    /// [`Graph::scoped`] releases intermediate values.
    pub fn no_grad() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: false }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.nodes[v.0].value.as_ref().expect("value released by an inference scope")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Some(value), op, requires_grad: requires_grad && self.grad_enabled });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.0].requires_grad)
    }

    /// A value that never receives gradients (data, targets).
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// A value whose gradient is reported by `backward`.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, true)
    }

    /// Records a parameter; its gradient accumulates into the store.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    /// Runs `f`; in inference mode every value it created except its result
    /// is released afterwards.
    pub fn scoped(&mut self, f: impl FnOnce(&mut Self) -> Result<Var>) -> Result<Var> {
        let start = self.nodes.len();
        let out = f(self)?;
        if !self.grad_enabled {
            for (i, node) in self.nodes.iter_mut().enumerate().skip(start) {
                if i != out.0 {
                    node.value = None;
                }
            }
        }
        Ok(out)
    }

    /// Stride-1 convolution with zero "same" padding of `(k - 1) / 2`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        if ws[2] != ws[3] {
            return Err(config_err!("conv kernel must be square, got {}×{}", ws[2], ws[3]));
        }
        if ws[2] % 2 == 0 {
            return Err(config_err!("conv kernel size must be odd, got {}", ws[2]));
        }
        if xs[1] != ws[1] {
            return Err(shape_err!("conv2d: input has {} channels, kernel expects {}", xs[1], ws[1]));
        }
        if let Some(b) = b {
            let bs = self.value(b).shape();
            if bs != [ws[0], 1, 1, 1] {
                return Err(shape_err!("conv2d: bias shape {:?} for {} outputs", bs, ws[0]));
            }
        }
        let out = conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)));
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(out, Op::Conv2d { x, w, b }, rg))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let out = self.value(x).map(|v| if v >= T::zero() { v } else { slope * v });
        let rg = self.any_grad(&[x]);
        self.push(out, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = pixel_shuffle(self.value(x), r)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::PixelShuffle { x, r }, rg))
    }

    /// Stacks channels in argument order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| shape_err!("concat of zero tensors"))?;
        let [n, _, h, w] = self.value(first).shape();
        let mut channels = 0;
        for &v in xs {
            let s = self.value(v).shape();
            if s[0] != n || s[2] != h || s[3] != w {
                return Err(shape_err!("concat: {:?} does not match batch/spatial dims of {:?}", s, [n, h, w]));
            }
            channels += s[1];
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * channels * hw);
        for b in 0..n {
            for &v in xs {
                let t = self.value(v);
                let len = t.c() * hw;
                data.extend_from_slice(&t.data()[b * len..(b + 1) * len]);
            }
        }
        let out = Tensor::from_vec([n, channels, h, w], data)?;
        let rg = self.any_grad(xs);
        Ok(self.push(out, Op::Concat { xs: xs.to_vec() }, rg))
    }

    /// `Σ coeffᵢ · tensorᵢ` with scalar coefficients.
    pub fn weighted_sum(&mut self, terms: &[(Var, Var)]) -> Result<Var> {
        let &(_, t0) = terms.first().ok_or_else(|| shape_err!("weighted_sum of zero terms"))?;
        let shape = self.value(t0).shape();
        let mut out = Tensor::zeros(shape);
        for (i, &(c, t)) in terms.iter().enumerate() {
            let coeff = self.value(c).item()?;
            let tv = self.value(t);
            if tv.shape() != shape {
                return Err(shape_err!("weighted_sum: term shape {:?} differs from {:?}", tv.shape(), shape));
            }
            if i == 0 {
                out = tv.map(|v| coeff * v);
            } else {
                for (o, &v) in out.data_mut().iter_mut().zip(tv.data()) {
                    *o += coeff * v;
                }
            }
        }
        let deps: Vec<Var> = terms.iter().flat_map(|&(c, t)| [c, t]).collect();
        let rg = self.any_grad(&deps);
        Ok(self.push(out, Op::WeightedSum { terms: terms.to_vec() }, rg))
    }

    /// Multiplies a tensor by a scalar variable.
    pub fn scale(&mut self, x: Var, coeff: Var) -> Result<Var> {
        let c = self.value(coeff).item()?;
        let out = self.value(x).map(|v| c * v);
        let rg = self.any_grad(&[x, coeff]);
        Ok(self.push(out, Op::Scale { x, coeff }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        p.same_shape(t)?;
        let total: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
        let out = Tensor::scalar(total / T::lit(p.numel() as f64));
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(out, Op::L1 { pred, target }, rg))
    }

    /// `Σ weights ⊙ x`, a smooth scalar probe used by gradient checks.
    pub fn dot(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        self.value(x).same_shape(&weights)?;
        let out = Tensor::scalar(dot(self.value(x).data(), weights.data()));
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Dot { x, weights }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Sum { x }, rg)
    }

    /// Back-propagates from a scalar `loss`. Parameter gradients are added
    /// to `store` (accumulation is additive; call `zero_grads` first for a
    /// fresh gradient). Gradients of [`Graph::input`] values are returned.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Grads<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got shape {:?}", lv.shape()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut kept: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Grads { grads: kept });
        }
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let rg = |v: Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Constant => {}
                Op::Input => kept[i] = Some(g),
                Op::Param(id) => store.accumulate_grad(*id, &g),
                Op::Conv2d { x, w, b } => {
                    let cg = conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        &g,
                        (rg(*x), rg(*w), b.is_some_and(rg)),
                    );
                    if let Some(dx) = cg.input {
                        accumulate(&mut grads[x.0], dx);
                    }
                    if let Some(dw) = cg.weight {
                        accumulate(&mut grads[w.0], dw);
                    }
                    if let (Some(b), Some(db)) = (b, cg.bias) {
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = self.value(*x);
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v < T::zero() {
                            *d *= *slope;
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::PixelShuffle { x, r } => {
                    accumulate(&mut grads[x.0], pixel_unshuffle(&g, *r)?);
                }
                Op::Concat { xs } => {
                    let [n, _, h, w] = g.shape();
                    let hw = h * w;
                    let total = g.c() * hw;
                    let mut offset = 0;
                    for &v in xs {
                        let c = self.value(v).c();
                        if rg(v) {
                            let mut data = Vec::with_capacity(n * c * hw);
                            for b in 0..n {
                                data.extend_from_slice(&g.data()[b * total + offset..][..c * hw]);
                            }
                            accumulate(&mut grads[v.0], Tensor::from_vec([n, c, h, w], data)?);
                        }
                        offset += c * hw;
                    }
                }
                Op::WeightedSum { terms } => {
                    for &(c, t) in terms {
                        if rg(c) {
                            let dc = dot(g.data(), self.value(t).data());
                            accumulate(&mut grads[c.0], Tensor::scalar(dc));
                        }
                        if rg(t) {
                            let cv = self.value(c).item()?;
                            accumulate(&mut grads[t.0], g.map(|v| cv * v));
                        }
                    }
                }
                Op::Scale { x, coeff } => {
                    if rg(*coeff) {
                        let dc = dot(g.data(), self.value(*x).data());
                        accumulate(&mut grads[coeff.0], Tensor::scalar(dc));
                    }
                    if rg(*x) {
                        let cv = self.value(*coeff).item()?;
                        accumulate(&mut grads[x.0], g.map(|v| cv * v));
                    }
                }
                Op::Add { a, b } => {
                    if rg(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if rg(*b) {
                        accumulate(&mut grads[b.0], g);
                    }
                }
                Op::L1 { pred, target } => {
                    let upstream = g.item()?;
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let scale = upstream / T::lit(p.numel() as f64);
                    let dp = Tensor::from_vec(
                        p.shape(),
                        p.data()
                            .iter()
                            .zip(t.data())
                            .map(|(&a, &b)| {
                                if a > b {
                                    scale
                                } else if a < b {
                                    -scale
                                } else {
                                    T::zero()
                                }
                            })
                            .collect(),
                    )?;
                    if rg(*target) {
                        accumulate(&mut grads[target.0], dp.map(|v| -v));
                    }
                    if rg(*pred) {
                        accumulate(&mut grads[pred.0], dp);
                    }
                }
                Op::Dot { x, weights } => {
                    let upstream = g.item()?;
                    accumulate(&mut grads[x.0], weights.map(|w| upstream * w));
                }
                Op::Sum { x } => {
                    let upstream = g.item()?;
                    accumulate(&mut grads[x.0], Tensor::full(self.value(*x).shape(), upstream));
                }
            }
        }
        Ok(Grads { grads: kept })
    }
}
