//! Reverse-mode differentiation over the model's fixed computation graph.
//!
//! A [`Graph`] is an eagerly evaluated tape: every builder method computes
//! the node's value as it is recorded, so after construction the forward
//! pass is already done. [`Graph::backward`] walks the tape in reverse and
//! returns one gradient per named parameter. The op set is exactly what the
//! model needs; this is not a general-purpose autodiff library.
//!
//! Shape mismatches and empty inputs are programmer errors and panic with a
//! message naming the op.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Handle to a named parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

/// Ordered set of named parameter tensors. Order is fixed at construction
/// time and shared by checkpoints, gradients, and optimizer state.
#[derive(Debug, Clone, Default)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name:?}"
        );
        let id = ParamId(self.names.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.values.iter())
    }
}

/// One gradient tensor per parameter, in [`Params`] order. Parameters that
/// do not participate in the loss get a zero gradient of matching shape.
#[derive(Debug, Clone)]
pub struct GradSet {
    grads: Vec<Tensor>,
}

impl GradSet {
    pub fn zeros(params: &Params) -> Self {
        GradSet {
            grads: params.ids().map(|id| Tensor::zeros(params.value(id).shape().to_vec())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn add_assign(&mut self, other: &GradSet) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.scale_in_place(factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.squared_norm())
            .sum::<f64>()
            .sqrt()
    }

    /// First parameter whose gradient contains a non-finite value, if any.
    pub fn first_non_finite(&self, params: &Params) -> Option<String> {
        for id in params.ids() {
            if !self.grads[id.0].is_finite() {
                return Some(params.name(id).to_string());
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param(ParamId),
    Const,
    /// Row `row` of a rank-2 node (embedding lookup).
    Row { matrix: NodeId, row: usize },
    MatVec { matrix: NodeId, vector: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// vector * scalar-node
    Scale { vector: NodeId, scalar: NodeId },
    ScaleConst { input: NodeId, factor: f64 },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax { input: NodeId, mask: Option<Vec<bool>> },
    Concat(NodeId, NodeId),
    /// sum_i weights[i] * vectors[i]
    LinComb { weights: NodeId, vectors: Vec<NodeId> },
    /// Pack scalar nodes into one vector node.
    Stack(Vec<NodeId>),
    Index { vector: NodeId, position: usize },
    Dot(NodeId, NodeId),
    /// ln(max(x, floor)), elementwise.
    LogFloored { input: NodeId, floor: f64 },
    Sum(NodeId),
}

/// Eagerly evaluated computation tape over a read-only parameter set.
pub struct Graph<'p> {
    params: &'p Params,
    ops: Vec<Op>,
    values: Vec<Tensor>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p Params) -> Self {
        Graph {
            params,
            ops: Vec::new(),
            values: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        match &self.ops[node.0] {
            Op::Param(p) => self.params.value(*p),
            _ => &self.values[node.0],
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite value out of {:?}", op);
        let id = NodeId(self.ops.len());
        self.ops.push(op);
        self.values.push(value);
        id
    }

    /// Leaf node for a parameter; one node per parameter per graph.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.0] {
            return node;
        }
        let node = self.push(Op::Param(id), Tensor::scalar(0.0));
        // The sentinel value above is never read; `value()` resolves params
        // from the shared store.
        self.param_nodes[id.0] = Some(node);
        node
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn row(&mut self, matrix: NodeId, row: usize) -> NodeId {
        let value = Tensor::vector(self.value(matrix).row(row).to_vec());
        self.push(Op::Row { matrix, row }, value)
    }

    pub fn matvec(&mut self, matrix: NodeId, vector: NodeId) -> NodeId {
        let value = Tensor::vector(self.value(matrix).matvec(self.value(vector).data()));
        self.push(Op::MatVec { matrix, vector }, value)
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, what: &str) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "{what}: shape mismatch");
        Tensor::new(
            va.shape().to_vec(),
            va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect(),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.elementwise(a, b, |x, y| x + y, "add");
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.elementwise(a, b, |x, y| x - y, "sub");
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.elementwise(a, b, |x, y| x * y, "mul");
        self.push(Op::Mul(a, b), value)
    }

    pub fn scale(&mut self, vector: NodeId, scalar: NodeId) -> NodeId {
        assert!(self.value(scalar).is_scalar(), "scale: scalar operand must have length 1");
        let s = self.value(scalar).item();
        let v = self.value(vector);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x * s).collect());
        self.push(Op::Scale { vector, scalar }, value)
    }

    pub fn scale_const(&mut self, input: NodeId, factor: f64) -> NodeId {
        let v = self.value(input);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x * factor).collect());
        self.push(Op::ScaleConst { input, factor }, value)
    }

    pub fn tanh(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x.tanh()).collect());
        self.push(Op::Tanh(input), value)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input);
        let value = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect(),
        );
        self.push(Op::Sigmoid(input), value)
    }

    /// Numerically safe softmax: subtracts the max before exponentiating.
    pub fn softmax(&mut self, input: NodeId) -> NodeId {
        let value = softmax_values(self.value(input).data(), None);
        self.push(Op::Softmax { input, mask: None }, Tensor::vector(value))
    }

    /// Softmax where masked-out positions get probability exactly 0.
    pub fn softmax_masked(&mut self, input: NodeId, mask: &[bool]) -> NodeId {
        assert_eq!(self.value(input).len(), mask.len(), "softmax mask length mismatch");
        let value = softmax_values(self.value(input).data(), Some(mask));
        self.push(
            Op::Softmax { input, mask: Some(mask.to_vec()) },
            Tensor::vector(value),
        )
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(Op::Concat(a, b), Tensor::vector(data))
    }

    pub fn lincomb(&mut self, weights: NodeId, vectors: &[NodeId]) -> NodeId {
        assert!(!vectors.is_empty(), "lincomb: empty vector list");
        assert_eq!(
            self.value(weights).len(),
            vectors.len(),
            "lincomb: weight count vs vector count"
        );
        let len = self.value(vectors[0]).len();
        let mut out = vec![0.0; len];
        for (i, &v) in vectors.iter().enumerate() {
            let w = self.value(weights).data()[i];
            let vv = self.value(v);
            assert_eq!(vv.len(), len, "lincomb: ragged vectors");
            for (o, x) in out.iter_mut().zip(vv.data()) {
                *o += w * x;
            }
        }
        self.push(
            Op::LinComb { weights, vectors: vectors.to_vec() },
            Tensor::vector(out),
        )
    }

    pub fn stack(&mut self, scalars: &[NodeId]) -> NodeId {
        assert!(!scalars.is_empty(), "stack: empty input");
        let data = scalars
            .iter()
            .map(|&s| {
                assert!(self.value(s).is_scalar(), "stack: non-scalar component");
                self.value(s).item()
            })
            .collect();
        self.push(Op::Stack(scalars.to_vec()), Tensor::vector(data))
    }

    pub fn index(&mut self, vector: NodeId, position: usize) -> NodeId {
        let v = self.value(vector);
        assert!(position < v.len(), "index {} out of bounds {}", position, v.len());
        let value = Tensor::scalar(v.data()[position]);
        self.push(Op::Index { vector, position }, value)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).dot(self.value(b)));
        self.push(Op::Dot(a, b), value)
    }

    pub fn log_floored(&mut self, input: NodeId, floor: f64) -> NodeId {
        let v = self.value(input);
        let value = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|x| x.max(floor).ln()).collect(),
        );
        self.push(Op::LogFloored { input, floor }, value)
    }

    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(input).data().iter().sum());
        self.push(Op::Sum(input), value)
    }

    /// Reverse pass from a scalar loss node. Returns one gradient tensor per
    /// parameter, shape-matched, zero where the parameter does not reach the
    /// loss.
    pub fn backward(&self, loss: NodeId) -> Result<GradSet> {
        if !self.value(loss).is_scalar() {
            return Err(Error::usage(format!(
                "backward requires a scalar loss node, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(grad) = grads[i].take() else { continue };
            self.propagate(i, &grad, &mut grads);
            grads[i] = Some(grad);
        }

        let mut out = GradSet::zeros(self.params);
        for (pid, node) in self.param_nodes.iter().enumerate() {
            if let Some(node) = node {
                if let Some(g) = grads[node.0].take() {
                    out.grads[pid] = g;
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], node: NodeId, update: impl FnOnce(&mut Tensor)) {
        let slot = &mut grads[node.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(node).shape().to_vec()));
        }
        update(slot.as_mut().unwrap());
    }

    fn propagate(&self, i: usize, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        let out_value = self.value(NodeId(i));
        match &self.ops[i] {
            Op::Param(_) | Op::Const => {}
            Op::Row { matrix, row } => {
                let cols = self.value(*matrix).dims2().1;
                self.accumulate(grads, *matrix, |g| {
                    for (k, gv) in grad.data().iter().enumerate() {
                        g.data_mut()[row * cols + k] += gv;
                    }
                });
            }
            Op::MatVec { matrix, vector } => {
                let x = self.value(*vector).data().to_vec();
                let m = self.value(*matrix);
                let (rows, cols) = m.dims2();
                self.accumulate(grads, *matrix, |g| {
                    for r in 0..rows {
                        let gr = grad.data()[r];
                        for (c, xv) in x.iter().enumerate() {
                            g.data_mut()[r * cols + c] += gr * xv;
                        }
                    }
                });
                let mut gx = vec![0.0; cols];
                for r in 0..rows {
                    let gr = grad.data()[r];
                    let row = m.row(r);
                    for (c, w) in row.iter().enumerate() {
                        gx[c] += gr * w;
                    }
                }
                self.accumulate(grads, *vector, |g| {
                    for (a, b) in g.data_mut().iter_mut().zip(&gx) {
                        *a += b;
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |g| g.add_assign(grad));
                self.accumulate(grads, *b, |g| g.add_assign(grad));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |g| g.add_assign(grad));
                self.accumulate(grads, *b, |g| {
                    for (gv, dv) in g.data_mut().iter_mut().zip(grad.data()) {
                        *gv -= dv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let vb = self.value(*b).data().to_vec();
                self.accumulate(grads, *a, |g| {
                    for ((gv, dv), bv) in g.data_mut().iter_mut().zip(grad.data()).zip(&vb) {
                        *gv += dv * bv;
                    }
                });
                let va = self.value(*a).data().to_vec();
                self.accumulate(grads, *b, |g| {
                    for ((gv, dv), av) in g.data_mut().iter_mut().zip(grad.data()).zip(&va) {
                        *gv += dv * av;
                    }
                });
            }
            Op::Scale { vector, scalar } => {
                let s = self.value(*scalar).item();
                self.accumulate(grads, *vector, |g| {
                    for (gv, dv) in g.data_mut().iter_mut().zip(grad.data()) {
                        *gv += dv * s;
                    }
                });
                let ds: f64 = grad.data().iter().zip(self.value(*vector).data()).map(|(d, v)| d * v).sum();
                self.accumulate(grads, *scalar, |g| g.data_mut()[0] += ds);
            }
            Op::ScaleConst { input, factor } => {
                let f = *factor;
                self.accumulate(grads, *input, |g| {
                    for (gv, dv) in g.data_mut().iter_mut().zip(grad.data()) {
                        *gv += dv * f;
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out_value.data().to_vec();
                self.accumulate(grads, *a, |g| {
                    for ((gv, dv), yv) in g.data_mut().iter_mut().zip(grad.data()).zip(&y) {
                        *gv += dv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out_value.data().to_vec();
                self.accumulate(grads, *a, |g| {
                    for ((gv, dv), yv) in g.data_mut().iter_mut().zip(grad.data()).zip(&y) {
                        *gv += dv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Softmax { input, mask } => {
                // dx = y ⊙ (g − <g, y>), zero on masked positions.
                let y = out_value.data();
                let inner: f64 = grad.data().iter().zip(y).map(|(g, yv)| g * yv).sum();
                let y = y.to_vec();
                let mask = mask.clone();
                self.accumulate(grads, *input, |g| {
                    for (k, gv) in g.data_mut().iter_mut().enumerate() {
                        if mask.as_ref().is_some_and(|m| !m[k]) {
                            continue;
                        }
                        *gv += y[k] * (grad.data()[k] - inner);
                    }
                });
            }
            Op::Concat(a, b) => {
                let la = self.value(*a).len();
                self.accumulate(grads, *a, |g| {
                    for (gv, dv) in g.data_mut().iter_mut().zip(&grad.data()[..la]) {
                        *gv += dv;
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for (gv, dv) in g.data_mut().iter_mut().zip(&grad.data()[la..]) {
                        *gv += dv;
                    }
                });
            }
            Op::LinComb { weights, vectors } => {
                let w = self.value(*weights).data().to_vec();
                for (k, &v) in vectors.iter().enumerate() {
                    let wk = w[k];
                    self.accumulate(grads, v, |g| {
                        for (gv, dv) in g.data_mut().iter_mut().zip(grad.data()) {
                            *gv += wk * dv;
                        }
                    });
                    let dk: f64 = grad.data().iter().zip(self.value(v).data()).map(|(d, x)| d * x).sum();
                    self.accumulate(grads, *weights, |g| g.data_mut()[k] += dk);
                }
            }
            Op::Stack(scalars) => {
                for (k, &s) in scalars.iter().enumerate() {
                    let dk = grad.data()[k];
                    self.accumulate(grads, s, |g| g.data_mut()[0] += dk);
                }
            }
            Op::Index { vector, position } => {
                let d = grad.item();
                let pos = *position;
                self.accumulate(grads, *vector, |g| g.data_mut()[pos] += d);
            }
            Op::Dot(a, b) => {
                let d = grad.item();
                let vb = self.value(*b).data().to_vec();
                self.accumulate(grads, *a, |g| {
                    for (gv, bv) in g.data_mut().iter_mut().zip(&vb) {
                        *gv += d * bv;
                    }
                });
                let va = self.value(*a).data().to_vec();
                self.accumulate(grads, *b, |g| {
                    for (gv, av) in g.data_mut().iter_mut().zip(&va) {
                        *gv += d * av;
                    }
                });
            }
            Op::LogFloored { input, floor } => {
                let x = self.value(*input).data().to_vec();
                let floor = *floor;
                self.accumulate(grads, *input, |g| {
                    for ((gv, dv), xv) in g.data_mut().iter_mut().zip(grad.data()).zip(&x) {
                        if *xv > floor {
                            *gv += dv / xv;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let d = grad.item();
                self.accumulate(grads, *a, |g| {
                    for gv in g.data_mut() {
                        *gv += d;
                    }
                });
            }
        }
    }
}

/// Max-subtracted softmax over `x`, with optional mask (masked entries get
/// probability exactly 0). Panics on empty or fully masked input.
pub fn softmax_values(x: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    assert!(!x.is_empty(), "softmax: empty input");
    let live = |k: usize| mask.is_none_or(|m| m[k]);
    let max = x
        .iter()
        .enumerate()
        .filter(|(k, _)| live(*k))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "softmax: all positions masked");
    let mut out = vec![0.0; x.len()];
    let mut denom = 0.0;
    for (k, v) in x.iter().enumerate() {
        if live(k) {
            out[k] = (v - max).exp();
            denom += out[k];
        }
    }
    for o in &mut out {
        *o /= denom;
    }
    out
}
