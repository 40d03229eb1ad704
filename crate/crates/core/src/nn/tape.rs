//! Eager reverse-mode differentiation tape.
//!
//! Each op computes its forward value when pushed, so callers can interleave
//! graph construction with sampling decisions. `backward` replays the tape in
//! reverse and returns per-parameter gradients.

use crate::error::{Error, Result};
use crate::nn::store::{Gradients, ParamStore};
use crate::nn::tensor::Tensor;

pub type NodeId = usize;

#[derive(Clone, Debug)]
enum Op {
    /// Constant leaf; no gradient.
    Constant,
    /// Leaf bound to a named parameter in a `ParamStore`.
    Param(String),
    /// Single row of a matrix-valued node.
    Row { table: NodeId, index: usize },
    /// x^T W + b for vector x, matrix W (in x out), vector b.
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// M v for matrix M (r x c) and vector v (c).
    MatVec { m: NodeId, v: NodeId },
    Concat { parts: Vec<NodeId> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    /// Identity forward, zero gradient to the input.
    StopGrad { _input: NodeId },
    /// log softmax_T(logits)[index], computed with max subtraction.
    LogSoftmaxPick {
        logits: NodeId,
        temperature: f64,
        index: usize,
    },
    /// weight * BCE(sigmoid(logit), label) for a scalar logit.
    LogisticLoss {
        logit: NodeId,
        label: f64,
        weight: f64,
    },
    /// Scalar linear combination sum_i coeff_i * x_i.
    LinComb { terms: Vec<(NodeId, f64)> },
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id].value.data[0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> NodeId {
        let value = store.value(name).clone();
        self.push(Op::Param(name.to_string()), value)
    }

    pub fn row(&mut self, table: NodeId, index: usize) -> NodeId {
        let value = Tensor::vector(self.nodes[table].value.row(index).to_vec());
        self.push(Op::Row { table, index }, value)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (
            &self.nodes[x].value,
            &self.nodes[w].value,
            &self.nodes[b].value,
        );
        let (rows, cols) = (wv.rows(), wv.cols());
        if xv.len() != rows || bv.len() != cols {
            return Err(Error::Config(format!(
                "affine shape mismatch: x={} W={}x{} b={}",
                xv.len(),
                rows,
                cols,
                bv.len()
            )));
        }
        let mut out = bv.data.clone();
        for i in 0..rows {
            let xi = xv.data[i];
            let wrow = wv.row(i);
            for j in 0..cols {
                out[j] += xi * wrow[j];
            }
        }
        Ok(self.push(Op::Affine { x, w, b }, Tensor::vector(out)))
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (mv, vv) = (&self.nodes[m].value, &self.nodes[v].value);
        if mv.cols() != vv.len() {
            return Err(Error::Config(format!(
                "matvec shape mismatch: M={}x{} v={}",
                mv.rows(),
                mv.cols(),
                vv.len()
            )));
        }
        let out: Vec<f64> = (0..mv.rows())
            .map(|r| {
                mv.row(r)
                    .iter()
                    .zip(&vv.data)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect();
        Ok(self.push(Op::MatVec { m, v }, Tensor::vector(out)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(&self.nodes[p].value.data);
        }
        self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            Tensor::vector(data),
        )
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        debug_assert_eq!(av.len(), bv.len());
        av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.elementwise(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), Tensor::vector(v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.elementwise(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), Tensor::vector(v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.elementwise(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), Tensor::vector(v))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[x].value.data.iter().map(|&z| sigmoid(z)).collect();
        self.push(Op::Sigmoid(x), Tensor::vector(v))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[x].value.data.iter().map(|z| z.tanh()).collect();
        self.push(Op::Tanh(x), Tensor::vector(v))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[x].value.data.iter().map(|z| z.max(0.0)).collect();
        self.push(Op::Relu(x), Tensor::vector(v))
    }

    pub fn stop_grad(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].value.clone();
        self.push(Op::StopGrad { _input: x }, v)
    }

    /// log pi(index) under softmax with temperature over `logits`.
    pub fn log_softmax_pick(
        &mut self,
        logits: NodeId,
        temperature: f64,
        index: usize,
    ) -> Result<NodeId> {
        if temperature <= 0.0 {
            return Err(Error::Config(format!(
                "softmax temperature must be positive, got {temperature}"
            )));
        }
        let lv = &self.nodes[logits].value;
        if index >= lv.len() {
            return Err(Error::Config(format!(
                "softmax pick index {index} out of range {}",
                lv.len()
            )));
        }
        let max = lv.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse: f64 = lv
            .data
            .iter()
            .map(|&l| ((l - max) / temperature).exp())
            .sum::<f64>()
            .ln()
            + max / temperature;
        let logp = lv.data[index] / temperature - lse;
        Ok(self.push(
            Op::LogSoftmaxPick {
                logits,
                temperature,
                index,
            },
            Tensor::scalar(logp),
        ))
    }

    /// Stable weighted binary cross-entropy on a scalar logit.
    pub fn logistic_loss(&mut self, logit: NodeId, label: f64, weight: f64) -> NodeId {
        let z = self.nodes[logit].value.data[0];
        let bce = z.max(0.0) - z * label + (-z.abs()).exp().ln_1p();
        self.push(
            Op::LogisticLoss {
                logit,
                label,
                weight,
            },
            Tensor::scalar(weight * bce),
        )
    }

    pub fn lin_comb(&mut self, terms: Vec<(NodeId, f64)>) -> NodeId {
        let v: f64 = terms
            .iter()
            .map(|&(id, c)| self.nodes[id].value.data[0] * c)
            .sum();
        self.push(Op::LinComb { terms }, Tensor::scalar(v))
    }

    /// Reverse pass from a scalar root. Returns gradients keyed by parameter
    /// name; `StopGrad` nodes propagate nothing to their inputs.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[root] = Some(vec![1.0]);
        let mut grads = Gradients::default();

        for id in (0..=root).rev() {
            let g = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Constant => {}
                Op::Param(name) => {
                    grads.accumulate(name, &g, &self.nodes[id].value.shape);
                }
                Op::Row { table, index } => {
                    let cols = self.nodes[*table].value.cols();
                    let slot = adj[*table].get_or_insert_with(|| {
                        vec![0.0; self.nodes[*table].value.len()]
                    });
                    for (j, gj) in g.iter().enumerate() {
                        slot[index * cols + j] += gj;
                    }
                }
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let (rows, cols) = (wv.rows(), wv.cols());
                    {
                        let gx = adj[*x].get_or_insert_with(|| vec![0.0; rows]);
                        for i in 0..rows {
                            let wrow = wv.row(i);
                            gx[i] += wrow.iter().zip(&g).map(|(w, gy)| w * gy).sum::<f64>();
                        }
                    }
                    {
                        let gw = adj[*w].get_or_insert_with(|| vec![0.0; rows * cols]);
                        for i in 0..rows {
                            let xi = xv.data[i];
                            for j in 0..cols {
                                gw[i * cols + j] += xi * g[j];
                            }
                        }
                    }
                    let gb = adj[*b].get_or_insert_with(|| vec![0.0; cols]);
                    for j in 0..cols {
                        gb[j] += g[j];
                    }
                }
                Op::MatVec { m, v } => {
                    let mv = &self.nodes[*m].value;
                    let vv = &self.nodes[*v].value;
                    let (rows, cols) = (mv.rows(), mv.cols());
                    {
                        let gm = adj[*m].get_or_insert_with(|| vec![0.0; rows * cols]);
                        for r in 0..rows {
                            let gr = g[r];
                            if gr == 0.0 {
                                continue;
                            }
                            for c in 0..cols {
                                gm[r * cols + c] += gr * vv.data[c];
                            }
                        }
                    }
                    let gv = adj[*v].get_or_insert_with(|| vec![0.0; cols]);
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let mrow = mv.row(r);
                        for c in 0..cols {
                            gv[c] += gr * mrow[c];
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        let gp = adj[p].get_or_insert_with(|| vec![0.0; len]);
                        for j in 0..len {
                            gp[j] += g[offset + j];
                        }
                        offset += len;
                    }
                }
                Op::Add(a, b) => {
                    for &src in &[*a, *b] {
                        let ga = adj[src].get_or_insert_with(|| vec![0.0; g.len()]);
                        for (x, gy) in ga.iter_mut().zip(&g) {
                            *x += gy;
                        }
                    }
                }
                Op::Sub(a, b) => {
                    {
                        let ga = adj[*a].get_or_insert_with(|| vec![0.0; g.len()]);
                        for (x, gy) in ga.iter_mut().zip(&g) {
                            *x += gy;
                        }
                    }
                    let gb = adj[*b].get_or_insert_with(|| vec![0.0; g.len()]);
                    for (x, gy) in gb.iter_mut().zip(&g) {
                        *x -= gy;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[*a].value.data.clone();
                    let bv = self.nodes[*b].value.data.clone();
                    {
                        let ga = adj[*a].get_or_insert_with(|| vec![0.0; g.len()]);
                        for i in 0..g.len() {
                            ga[i] += g[i] * bv[i];
                        }
                    }
                    let gb = adj[*b].get_or_insert_with(|| vec![0.0; g.len()]);
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::Sigmoid(x) => {
                    let yv = &self.nodes[id].value.data;
                    let gx = adj[*x].get_or_insert_with(|| vec![0.0; g.len()]);
                    for i in 0..g.len() {
                        gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
                    }
                }
                Op::Tanh(x) => {
                    let yv = &self.nodes[id].value.data;
                    let gx = adj[*x].get_or_insert_with(|| vec![0.0; g.len()]);
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value.data;
                    let gx = adj[*x].get_or_insert_with(|| vec![0.0; g.len()]);
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                }
                Op::StopGrad { .. } => {}
                Op::LogSoftmaxPick {
                    logits,
                    temperature,
                    index,
                } => {
                    let lv = &self.nodes[*logits].value;
                    let max = lv.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = lv
                        .data
                        .iter()
                        .map(|&l| ((l - max) / temperature).exp())
                        .collect();
                    let sum: f64 = exps.iter().sum();
                    let gl = adj[*logits].get_or_insert_with(|| vec![0.0; lv.len()]);
                    let g0 = g[0];
                    for j in 0..lv.len() {
                        let p = exps[j] / sum;
                        let indicator = if j == *index { 1.0 } else { 0.0 };
                        gl[j] += g0 * (indicator - p) / temperature;
                    }
                }
                Op::LogisticLoss {
                    logit,
                    label,
                    weight,
                } => {
                    let z = self.nodes[*logit].value.data[0];
                    let gz = adj[*logit].get_or_insert_with(|| vec![0.0; 1]);
                    gz[0] += g[0] * weight * (sigmoid(z) - label);
                }
                Op::LinComb { terms } => {
                    for &(t, c) in terms {
                        let gt = adj[t].get_or_insert_with(|| vec![0.0; 1]);
                        gt[0] += g[0] * c;
                    }
                }
            }
        }
        grads
    }
}

/// Numerically stable softmax with temperature; free function used for
/// inference (the tape only ever needs the log-prob of one index).
pub fn softmax_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if temperature <= 0.0 {
        return Err(Error::Config(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Config("softmax logits must be finite".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, 0.0]));
        let w = t.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = t.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data, vec![1.0, 0.0]);
    }

    #[test]
    fn affine_hand_case() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let w = t.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let b = t.constant(Tensor::vector(vec![0.5]));
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data, vec![3.5]);
    }

    #[test]
    fn affine_shape_mismatch_is_config_error() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0]));
        let w = t.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let b = t.constant(Tensor::vector(vec![0.0]));
        assert!(t.affine(x, w, b).is_err());
    }

    #[test]
    fn softmax_symmetry() {
        let p = softmax_temperature(&[1.0, 1.0, 1.0], 1.0).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_direct_value() {
        let p = softmax_temperature(&[2.0, 0.0], 1.0).unwrap();
        let e2 = 2.0f64.exp();
        assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-12);
        assert!((p[1] - 1.0 / (e2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_sharpens_at_low_temperature() {
        let p = softmax_temperature(&[2.0, 0.0], 0.1).unwrap();
        assert!(p[0] > 1.0 - 1e-8);
    }

    #[test]
    fn softmax_rejects_nonpositive_temperature() {
        assert!(softmax_temperature(&[0.0], 0.0).is_err());
        assert!(softmax_temperature(&[0.0], -1.0).is_err());
    }

    #[test]
    fn stop_grad_blocks_everything_upstream() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![2.0]));
        let mut t = Tape::new();
        let w = t.param(&store, "w");
        let s = t.stop_grad(w);
        let y = t.mul(s, s);
        let root = t.lin_comb(vec![(y, 1.0)]);
        let grads = t.backward(root);
        assert!(grads.by_name.is_empty());
    }

    #[test]
    fn log_softmax_pick_matches_softmax() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::vector(vec![2.0, 0.0, -1.0]));
        let lp = t.log_softmax_pick(l, 1.0, 0).unwrap();
        let probs = softmax_temperature(&[2.0, 0.0, -1.0], 1.0).unwrap();
        assert!((t.scalar_value(lp) - probs[0].ln()).abs() < 1e-12);
    }

    #[test]
    fn logistic_loss_at_zero_logit_is_ln2() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::scalar(0.0));
        let l = t.logistic_loss(z, 1.0, 1.0);
        assert!((t.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);
        let lw = t.logistic_loss(z, 0.0, 3.0);
        assert!((t.scalar_value(lw) - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }
}
