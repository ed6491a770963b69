//! Layer-granular reverse-mode differentiation.
//!
//! Every value on the tape is a `[batch, features]` matrix. Nodes are appended in
//! evaluation order, so the node list is a topological order and the backward pass
//! is a single reverse sweep.

use rand::Rng;

use super::tensor::{affine_rows, backprop_input, backprop_weights};
use super::{Grads, LrGroup, NumericsError, ParamId, ParamStore, Tensor};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Identity,
    LogSoftmax,
}

/// Initialization of a freshly created layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// U(-√(1/fan_in), √(1/fan_in)) for weights and biases.
    Uniform,
    Zeros,
}

/// Feed-forward layer `y = act(W x + b)` with `W: [outputs, inputs]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        init: Init,
        group: LrGroup,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let (w, b) = match init {
            Init::Uniform => (
                store.insert_uniform(format!("{name}.w"), &[outputs, inputs], inputs, group, rng)?,
                store.insert_uniform(format!("{name}.b"), &[outputs], inputs, group, rng)?,
            ),
            Init::Zeros => (
                store.insert_zeros(format!("{name}.w"), &[outputs, inputs], group)?,
                store.insert_zeros(format!("{name}.b"), &[outputs], group)?,
            ),
        };
        Ok(Self { w, b, inputs, outputs })
    }

    /// Re-binds a layer to parameters already present in `store`.
    pub fn lookup(store: &ParamStore, name: &str) -> Result<Self, NumericsError> {
        let w = store
            .id(&format!("{name}.w"))
            .ok_or_else(|| NumericsError::MissingParam(format!("{name}.w")))?;
        let b = store
            .id(&format!("{name}.b"))
            .ok_or_else(|| NumericsError::MissingParam(format!("{name}.b")))?;
        let shape = store.get(w).shape();
        if shape.len() != 2 || store.get(b).shape() != [shape[0]] {
            return Err(NumericsError::Shape {
                op: "linear lookup",
                expected: "w: [out, in], b: [out]".into(),
                got: format!("w: {:?}, b: {:?}", shape, store.get(b).shape()),
            });
        }
        Ok(Self {
            w,
            b,
            inputs: shape[1],
            outputs: shape[0],
        })
    }
}

/// Gated recurrent unit. Each gate weight is `[hidden, inputs + hidden]` and acts on
/// the concatenation `[x; h]` (`[x; r ⊙ h]` for the candidate).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub wz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub bh: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        group: LrGroup,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let fan_in = inputs + hidden;
        let mut gate = |g: &str, store: &mut ParamStore| -> Result<(ParamId, ParamId), NumericsError> {
            Ok((
                store.insert_uniform(format!("{name}.w{g}"), &[hidden, fan_in], fan_in, group, rng)?,
                store.insert_uniform(format!("{name}.b{g}"), &[hidden], fan_in, group, rng)?,
            ))
        };
        let (wz, bz) = gate("z", store)?;
        let (wr, br) = gate("r", store)?;
        let (wh, bh) = gate("h", store)?;
        Ok(Self {
            wz,
            bz,
            wr,
            br,
            wh,
            bh,
            inputs,
            hidden,
        })
    }

    pub fn lookup(store: &ParamStore, name: &str) -> Result<Self, NumericsError> {
        let id = |s: &str| {
            store
                .id(&format!("{name}.{s}"))
                .ok_or_else(|| NumericsError::MissingParam(format!("{name}.{s}")))
        };
        let wz = id("wz")?;
        let shape = store.get(wz).shape().to_vec();
        if shape.len() != 2 || shape[1] < shape[0] {
            return Err(NumericsError::Shape {
                op: "gru lookup",
                expected: "[hidden, inputs + hidden]".into(),
                got: format!("{shape:?}"),
            });
        }
        Ok(Self {
            wz,
            bz: id("bz")?,
            wr: id("wr")?,
            br: id("br")?,
            wh: id("wh")?,
            bh: id("bh")?,
            inputs: shape[1] - shape[0],
            hidden: shape[0],
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<(), NumericsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFiniteValue { op })
    }
}

/// `[batch, d]` view of a rank-1 or rank-2 tensor.
fn as_batch(t: &Tensor) -> Result<(usize, usize), NumericsError> {
    match t.shape() {
        [d] => Ok((1, *d)),
        [b, d] => Ok((*b, *d)),
        s => Err(NumericsError::Shape {
            op: "batch view",
            expected: "rank 1 or 2".into(),
            got: format!("{s:?}"),
        }),
    }
}

fn apply_activation(act: Activation, pre: &mut [f64], width: usize) {
    match act {
        Activation::Identity => {}
        Activation::LeakyRelu => pre.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= LEAKY_SLOPE
            }
        }),
        Activation::LogSoftmax => {
            for row in pre.chunks_mut(width) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                row.iter_mut().for_each(|v| *v -= lse);
            }
        }
    }
}

fn linear_values(
    x: &[f64],
    batch: usize,
    inputs: usize,
    w: &Tensor,
    b: &Tensor,
    act: Activation,
) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
    if w.shape().len() != 2 || w.shape()[1] != inputs || b.len() != w.shape()[0] {
        return Err(NumericsError::Shape {
            op: "ff_forward",
            expected: format!("W: [out, {inputs}], b: [out]"),
            got: format!("W: {:?}, b: {:?}", w.shape(), b.shape()),
        });
    }
    let outputs = w.shape()[0];
    let mut pre = vec![0.0; batch * outputs];
    affine_rows(x, inputs, w.data(), b.data(), &mut pre);
    let mut y = pre.clone();
    apply_activation(act, &mut y, outputs);
    check_finite("ff_forward", &y)?;
    Ok((pre, y))
}

/// Feed-forward layer on a vector `[in]` or a batch `[batch, in]`.
pub fn ff_forward(x: &Tensor, w: &Tensor, b: &Tensor, act: Activation) -> Result<Tensor, NumericsError> {
    let (batch, inputs) = as_batch(x)?;
    let (_, y) = linear_values(x.data(), batch, inputs, w, b, act)?;
    let outputs = b.len();
    if x.rank() == 1 {
        Ok(Tensor::vector(y))
    } else {
        Tensor::matrix(batch, outputs, y)
    }
}

struct GruCache {
    xh: Vec<f64>,
    xrh: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

struct GruWeights<'a> {
    wz: &'a Tensor,
    bz: &'a Tensor,
    wr: &'a Tensor,
    br: &'a Tensor,
    wh: &'a Tensor,
    bh: &'a Tensor,
}

fn gru_values(
    x: &[f64],
    h: &[f64],
    batch: usize,
    inputs: usize,
    hidden: usize,
    p: &GruWeights<'_>,
) -> Result<(Vec<f64>, GruCache), NumericsError> {
    let fan_in = inputs + hidden;
    for (w, b) in [(p.wz, p.bz), (p.wr, p.br), (p.wh, p.bh)] {
        if w.shape() != [hidden, fan_in] || b.shape() != [hidden] {
            return Err(NumericsError::Shape {
                op: "gru_forward",
                expected: format!("W: [{hidden}, {fan_in}], b: [{hidden}]"),
                got: format!("W: {:?}, b: {:?}", w.shape(), b.shape()),
            });
        }
    }
    let mut xh = vec![0.0; batch * fan_in];
    for bi in 0..batch {
        let row = &mut xh[bi * fan_in..(bi + 1) * fan_in];
        row[..inputs].copy_from_slice(&x[bi * inputs..(bi + 1) * inputs]);
        row[inputs..].copy_from_slice(&h[bi * hidden..(bi + 1) * hidden]);
    }
    let mut z = vec![0.0; batch * hidden];
    let mut r = vec![0.0; batch * hidden];
    affine_rows(&xh, fan_in, p.wz.data(), p.bz.data(), &mut z);
    affine_rows(&xh, fan_in, p.wr.data(), p.br.data(), &mut r);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));
    r.iter_mut().for_each(|v| *v = sigmoid(*v));
    let mut xrh = xh.clone();
    for bi in 0..batch {
        for j in 0..hidden {
            xrh[bi * fan_in + inputs + j] = r[bi * hidden + j] * h[bi * hidden + j];
        }
    }
    let mut cand = vec![0.0; batch * hidden];
    affine_rows(&xrh, fan_in, p.wh.data(), p.bh.data(), &mut cand);
    cand.iter_mut().for_each(|v| *v = v.tanh());
    let out: Vec<f64> = (0..batch * hidden)
        .map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i])
        .collect();
    check_finite("gru_forward", &out)?;
    Ok((out, GruCache { xh, xrh, z, r, cand }))
}

/// Single GRU step on a vector or batch. `h_prev` must match `x` in batch size.
#[allow(clippy::too_many_arguments)]
pub fn gru_forward(
    x: &Tensor,
    h_prev: &Tensor,
    wz: &Tensor,
    bz: &Tensor,
    wr: &Tensor,
    br: &Tensor,
    wh: &Tensor,
    bh: &Tensor,
) -> Result<Tensor, NumericsError> {
    let (batch, inputs) = as_batch(x)?;
    let (hb, hidden) = as_batch(h_prev)?;
    if hb != batch || bz.len() != hidden {
        return Err(NumericsError::Shape {
            op: "gru_forward",
            expected: format!("h_prev: [{batch}, {}]", bz.len()),
            got: format!("{:?}", h_prev.shape()),
        });
    }
    let weights = GruWeights { wz, bz, wr, br, wh, bh };
    let (out, _) = gru_values(x.data(), h_prev.data(), batch, inputs, hidden, &weights)?;
    if x.rank() == 1 {
        Ok(Tensor::vector(out))
    } else {
        Tensor::matrix(batch, hidden, out)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

enum Op {
    Input,
    Linear {
        x: NodeId,
        layer: Linear,
        act: Activation,
        pre: Vec<f64>,
    },
    Gru {
        x: NodeId,
        h: NodeId,
        cell: GruCell,
        cache: GruCache,
    },
    Concat(Vec<NodeId>),
    Gather {
        x: NodeId,
        index: Vec<usize>,
    },
    Sum(Vec<NodeId>),
    Offset(NodeId),
    Square(NodeId),
    SumAll(NodeId),
    Scale(NodeId, f64),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward sweep.
pub struct Backward {
    pub params: Grads,
    node_grads: Vec<Option<Vec<f64>>>,
}

impl Backward {
    /// Gradient of the loss with respect to a recorded value (zero if unreached).
    pub fn node_grad(&self, tape: &Tape, node: NodeId) -> Tensor {
        let shape = tape.value(node).shape().to_vec();
        match &self.node_grads[node.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("node gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }
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

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn batch_dims(&self, node: NodeId) -> (usize, usize) {
        let v = &self.nodes[node.0].value;
        (v.rows(), v.cols())
    }

    /// Records a constant. Vectors are treated as a batch of one.
    pub fn input(&mut self, value: Tensor) -> Result<NodeId, NumericsError> {
        let (batch, d) = as_batch(&value)?;
        check_finite("input", value.data())?;
        let value = Tensor::matrix(batch, d, value.into_data())?;
        Ok(self.push(value, Op::Input))
    }

    pub fn linear(&mut self, store: &ParamStore, x: NodeId, layer: &Linear, act: Activation) -> Result<NodeId, NumericsError> {
        let (batch, inputs) = self.batch_dims(x);
        if inputs != layer.inputs {
            return Err(NumericsError::Shape {
                op: "ff_forward",
                expected: format!("{} input features", layer.inputs),
                got: format!("{inputs}"),
            });
        }
        let (pre, y) = linear_values(
            self.value(x).data(),
            batch,
            inputs,
            store.get(layer.w),
            store.get(layer.b),
            act,
        )?;
        let value = Tensor::matrix(batch, layer.outputs, y)?;
        let pre = if act == Activation::LeakyRelu { pre } else { Vec::new() };
        Ok(self.push(
            value,
            Op::Linear {
                x,
                layer: *layer,
                act,
                pre,
            },
        ))
    }

    pub fn gru(&mut self, store: &ParamStore, x: NodeId, h: NodeId, cell: &GruCell) -> Result<NodeId, NumericsError> {
        let (batch, inputs) = self.batch_dims(x);
        let (hb, hidden) = self.batch_dims(h);
        if inputs != cell.inputs || hb != batch || hidden != cell.hidden {
            return Err(NumericsError::Shape {
                op: "gru_forward",
                expected: format!("x: [{batch}, {}], h: [{batch}, {}]", cell.inputs, cell.hidden),
                got: format!("x: [{batch}, {inputs}], h: [{hb}, {hidden}]"),
            });
        }
        let weights = GruWeights {
            wz: store.get(cell.wz),
            bz: store.get(cell.bz),
            wr: store.get(cell.wr),
            br: store.get(cell.br),
            wh: store.get(cell.wh),
            bh: store.get(cell.bh),
        };
        let (out, cache) = gru_values(
            self.value(x).data(),
            self.value(h).data(),
            batch,
            inputs,
            hidden,
            &weights,
        )?;
        let value = Tensor::matrix(batch, hidden, out)?;
        Ok(self.push(
            value,
            Op::Gru {
                x,
                h,
                cell: *cell,
                cache,
            },
        ))
    }

    /// Concatenates along the feature axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        let batch = self.batch_dims(parts[0]).0;
        let mut width = 0;
        for &p in parts {
            let (b, d) = self.batch_dims(p);
            if b != batch {
                return Err(NumericsError::Shape {
                    op: "concat",
                    expected: format!("batch {batch}"),
                    got: format!("batch {b}"),
                });
            }
            width += d;
        }
        let mut data = Vec::with_capacity(batch * width);
        for bi in 0..batch {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(bi));
            }
        }
        let value = Tensor::matrix(batch, width, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    /// Picks `x[b, index[b]]` for every row, giving `[batch, 1]`.
    pub fn gather(&mut self, x: NodeId, index: &[usize]) -> Result<NodeId, NumericsError> {
        let (batch, d) = self.batch_dims(x);
        if index.len() != batch || index.iter().any(|&i| i >= d) {
            return Err(NumericsError::Shape {
                op: "gather",
                expected: format!("{batch} indices below {d}"),
                got: format!("{index:?}"),
            });
        }
        let data = index.iter().enumerate().map(|(b, &i)| self.value(x).row(b)[i]).collect();
        let value = Tensor::matrix(batch, 1, data)?;
        Ok(self.push(
            value,
            Op::Gather {
                x,
                index: index.to_vec(),
            },
        ))
    }

    /// Element-wise sum, accumulated left to right.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        let shape = self.value(parts[0]).shape().to_vec();
        let mut acc = vec![0.0; self.value(parts[0]).len()];
        for &p in parts {
            let v = self.value(p);
            if v.shape() != shape.as_slice() {
                return Err(NumericsError::Shape {
                    op: "sum",
                    expected: format!("{shape:?}"),
                    got: format!("{:?}", v.shape()),
                });
            }
            acc.iter_mut().zip(v.data()).for_each(|(a, b)| *a += b);
        }
        check_finite("sum", &acc)?;
        Ok(self.push(Tensor::new(shape, acc)?, Op::Sum(parts.to_vec())))
    }

    /// `x + c` for a constant `c` of the same shape.
    pub fn offset(&mut self, x: NodeId, c: &[f64]) -> Result<NodeId, NumericsError> {
        let v = self.value(x);
        if v.len() != c.len() {
            return Err(NumericsError::Shape {
                op: "offset",
                expected: format!("{} constants", v.len()),
                got: format!("{}", c.len()),
            });
        }
        let data: Vec<f64> = v.data().iter().zip(c).map(|(a, b)| a + b).collect();
        check_finite("offset", &data)?;
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Offset(x)))
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(x);
        let data: Vec<f64> = v.data().iter().map(|a| a * a).collect();
        check_finite("square", &data)?;
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Square(x)))
    }

    /// Sum of every element, as a `[1, 1]` scalar.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let s: f64 = self.value(x).data().iter().sum();
        check_finite("sum_all", &[s])?;
        Ok(self.push(Tensor::matrix(1, 1, vec![s])?, Op::SumAll(x)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId, NumericsError> {
        let v = self.value(x);
        let data: Vec<f64> = v.data().iter().map(|a| a * c).collect();
        check_finite("scale", &data)?;
        let shape = v.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Scale(x, c)))
    }

    /// Reverse sweep from a scalar node. Parameters the tape never touched keep a
    /// zero gradient.
    pub fn backward(&self, loss: NodeId, store: &ParamStore) -> Result<Backward, NumericsError> {
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut params = Grads::zeros_like(store);
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Linear { x, layer, act, pre } => {
                    let y = node.value.data();
                    let outputs = layer.outputs;
                    let mut dpre = dy.clone();
                    match act {
                        Activation::Identity => {}
                        Activation::LeakyRelu => {
                            for (g, p) in dpre.iter_mut().zip(pre) {
                                if *p < 0.0 {
                                    *g *= LEAKY_SLOPE;
                                }
                            }
                        }
                        Activation::LogSoftmax => {
                            for (grow, yrow) in dpre.chunks_mut(outputs).zip(y.chunks(outputs)) {
                                let total: f64 = grow.iter().sum();
                                for (g, yv) in grow.iter_mut().zip(yrow) {
                                    *g -= yv.exp() * total;
                                }
                            }
                        }
                    }
                    let xv = self.value(*x).data();
                    let (dw, db) = params.pair_mut(layer.w, layer.b);
                    backprop_weights(&dpre, outputs, xv, dw.data_mut(), db.data_mut());
                    let dx = grads[x.0].get_or_insert_with(|| vec![0.0; xv.len()]);
                    backprop_input(&dpre, outputs, store.get(layer.w).data(), dx);
                }
                Op::Gru { x, h, cell, cache } => {
                    let hidden = cell.hidden;
                    let inputs = cell.inputs;
                    let fan_in = inputs + hidden;
                    let hv = self.value(*h).data();
                    let batch = hv.len() / hidden;
                    let n = batch * hidden;
                    let mut dh = vec![0.0; n];
                    let mut dz = vec![0.0; n];
                    let mut dcand_pre = vec![0.0; n];
                    for i in 0..n {
                        let (z, c) = (cache.z[i], cache.cand[i]);
                        dh[i] = dy[i] * (1.0 - z);
                        dz[i] = dy[i] * (c - hv[i]) * z * (1.0 - z);
                        dcand_pre[i] = dy[i] * z * (1.0 - c * c);
                    }
                    let mut dxrh = vec![0.0; batch * fan_in];
                    backprop_input(&dcand_pre, hidden, store.get(cell.wh).data(), &mut dxrh);
                    let mut dr = vec![0.0; n];
                    for bi in 0..batch {
                        for j in 0..hidden {
                            let i = bi * hidden + j;
                            let drh = dxrh[bi * fan_in + inputs + j];
                            dr[i] = drh * hv[i] * cache.r[i] * (1.0 - cache.r[i]);
                            dh[i] += drh * cache.r[i];
                        }
                    }
                    let mut dxh = vec![0.0; batch * fan_in];
                    backprop_input(&dz, hidden, store.get(cell.wz).data(), &mut dxh);
                    backprop_input(&dr, hidden, store.get(cell.wr).data(), &mut dxh);

                    for (w, b, d, input) in [
                        (cell.wz, cell.bz, &dz, &cache.xh),
                        (cell.wr, cell.br, &dr, &cache.xh),
                        (cell.wh, cell.bh, &dcand_pre, &cache.xrh),
                    ] {
                        let (dw, db) = params.pair_mut(w, b);
                        backprop_weights(d, hidden, input, dw.data_mut(), db.data_mut());
                    }

                    let gx = grads[x.0].get_or_insert_with(|| vec![0.0; batch * inputs]);
                    for bi in 0..batch {
                        for k in 0..inputs {
                            gx[bi * inputs + k] += dxrh[bi * fan_in + k] + dxh[bi * fan_in + k];
                        }
                    }
                    let gh = grads[h.0].get_or_insert_with(|| vec![0.0; n]);
                    for bi in 0..batch {
                        for j in 0..hidden {
                            gh[bi * hidden + j] += dh[bi * hidden + j] + dxh[bi * fan_in + inputs + j];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let batch = node.value.rows();
                    let width = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let d = self.value(p).cols();
                        let g = grads[p.0].get_or_insert_with(|| vec![0.0; batch * d]);
                        for bi in 0..batch {
                            for k in 0..d {
                                g[bi * d + k] += dy[bi * width + offset + k];
                            }
                        }
                        offset += d;
                    }
                }
                Op::Gather { x, index } => {
                    let d = self.value(*x).cols();
                    let len = self.value(*x).len();
                    let g = grads[x.0].get_or_insert_with(|| vec![0.0; len]);
                    for (bi, &i) in index.iter().enumerate() {
                        g[bi * d + i] += dy[bi];
                    }
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        let g = grads[p.0].get_or_insert_with(|| vec![0.0; dy.len()]);
                        g.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
                    }
                }
                Op::Offset(x) => {
                    let g = grads[x.0].get_or_insert_with(|| vec![0.0; dy.len()]);
                    g.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
                }
                Op::Square(x) => {
                    let xv = self.value(*x).data();
                    let g = grads[x.0].get_or_insert_with(|| vec![0.0; dy.len()]);
                    for ((a, b), v) in g.iter_mut().zip(&dy).zip(xv) {
                        *a += 2.0 * v * b;
                    }
                }
                Op::SumAll(x) => {
                    let len = self.value(*x).len();
                    let g = grads[x.0].get_or_insert_with(|| vec![0.0; len]);
                    g.iter_mut().for_each(|a| *a += dy[0]);
                }
                Op::Scale(x, c) => {
                    let g = grads[x.0].get_or_insert_with(|| vec![0.0; dy.len()]);
                    g.iter_mut().zip(&dy).for_each(|(a, b)| *a += c * b);
                }
            }
            grads[idx] = Some(dy);
        }
        for (id, g) in params.iter() {
            if !g.is_finite() {
                return Err(NumericsError::NonFinite {
                    param: store.param(id).name.clone(),
                });
            }
        }
        Ok(Backward {
            params,
            node_grads: grads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec())
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = ff_forward(&t(&[1.0, 0.0]), &w, &t(&[0.0, 0.0]), Activation::Identity).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }

    #[test]
    fn leaky_relu_scales_negative_input() {
        let w = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let y = ff_forward(&t(&[-1.0]), &w, &t(&[0.0]), Activation::LeakyRelu).unwrap();
        assert!((y.data()[0] + 0.01).abs() < 1e-15);
    }

    #[test]
    fn log_softmax_of_zeros_is_uniform() {
        let w = Tensor::zeros(&[2, 2]);
        let y = ff_forward(&t(&[0.0, 0.0]), &w, &t(&[0.0, 0.0]), Activation::LogSoftmax).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((y.data()[0] + ln2).abs() < 1e-15);
        assert!((y.data()[1] + ln2).abs() < 1e-15);
    }

    #[test]
    fn ff_dimension_mismatch_is_an_error() {
        let w = Tensor::zeros(&[2, 3]);
        let err = ff_forward(&t(&[1.0, 2.0]), &w, &t(&[0.0, 0.0]), Activation::Identity);
        assert!(matches!(err, Err(NumericsError::Shape { .. })));
    }

    #[test]
    fn zero_gru_is_a_fixed_point() {
        let z = |r, c| Tensor::zeros(&[r, c]);
        let b = Tensor::zeros(&[4]);
        let h = gru_forward(&t(&[0.3, -0.2]), &Tensor::zeros(&[4]), &z(4, 6), &b, &z(4, 6), &b, &z(4, 6), &b).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_update_gate_returns_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 2, 3, LrGroup::Policy, &mut rng).unwrap();
        store.get_mut(cell.bz).fill(1e3);
        let x = t(&[0.4, -0.9]);
        let h = t(&[0.5, -0.5, 0.1]);
        let out = gru_forward(
            &x,
            &h,
            store.get(cell.wz),
            store.get(cell.bz),
            store.get(cell.wr),
            store.get(cell.br),
            store.get(cell.wh),
            store.get(cell.bh),
        )
        .unwrap();
        // candidate computed by hand
        let wr = store.get(cell.wr).data();
        let wh = store.get(cell.wh).data();
        let xh = [0.4, -0.9, 0.5, -0.5, 0.1];
        for j in 0..3 {
            let r: Vec<f64> = (0..3)
                .map(|i| sigmoid(store.get(cell.br).data()[i] + (0..5).map(|k| wr[i * 5 + k] * xh[k]).sum::<f64>()))
                .collect();
            let xrh = [0.4, -0.9, r[0] * 0.5, r[1] * -0.5, r[2] * 0.1];
            let cand = (store.get(cell.bh).data()[j] + (0..5).map(|k| wh[j * 5 + k] * xrh[k]).sum::<f64>()).tanh();
            assert!((out.data()[j] - cand).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_weight_gradient_is_input() {
        // loss = w * x with x = 3
        let mut store = ParamStore::new();
        let w = store.insert(String::from("l.w"), Tensor::matrix(1, 1, vec![0.7]).unwrap(), LrGroup::Policy).unwrap();
        let b = store.insert_zeros("l.b", &[1], LrGroup::Policy).unwrap();
        let unused = store.insert_zeros("unused", &[2], LrGroup::Policy).unwrap();
        let layer = Linear { w, b, inputs: 1, outputs: 1 };
        let mut tape = Tape::new();
        let x = tape.input(t(&[3.0])).unwrap();
        let y = tape.linear(&store, x, &layer, Activation::Identity).unwrap();
        let loss = tape.sum_all(y).unwrap();
        let back = tape.backward(loss, &store).unwrap();
        assert_eq!(back.params.get(w).data(), &[3.0]);
        assert_eq!(back.params.get(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.input(t(&[1.0, 2.0])).unwrap();
        assert!(matches!(tape.backward(x, &store), Err(NumericsError::NonScalarLoss(_))));
    }
}
