//! Recording tape for one forward pass plus its reverse sweep.

use std::fmt;

use super::{ParamId, ParamStore, Tensor};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    LeafParam { store: u64, param: ParamId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    // k * a + c, entrywise
    Affine { a: NodeId, k: f64, c: f64 },
    MatMul { a: NodeId, b: NodeId },
    // rows of `a` plus a bias vector
    AddBias { a: NodeId, bias: NodeId },
    Tanh { a: NodeId },
    Sigmoid { a: NodeId },
    Relu { a: NodeId },
    // per-row standardization with learned gain and bias
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    ConcatCols { a: NodeId, b: NodeId, a_cols: usize },
    SumAll { a: NodeId },
    MeanAll { a: NodeId },
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
}

/// Errors surfaced by the reverse sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum DiffError {
    /// `backward` was called on a node that is not a single element.
    NonScalarLoss { shape: Vec<usize> },
    /// A non-finite value appeared in the forward pass.
    NonFiniteForward { op: &'static str },
}

impl fmt::Display for DiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            DiffError::NonFiniteForward { op } => {
                write!(f, "non-finite value produced by `{op}` in the forward pass")
            }
        }
    }
}

impl std::error::Error for DiffError {}

/// Records a computation over tensors so it can be differentiated once.
///
/// A tape is built per forward pass and dropped after the reverse sweep; it
/// never outlives the training step that created it.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            grad: Vec::new(),
            value,
            op,
        });
        id
    }

    /// A constant input; no gradient is routed anywhere from it.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// A parameter leaf. After `backward`, `accumulate_grads` adds this
    /// node's gradient into the owning store's parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let value = store.get(id).value.clone();
        self.push(
            value,
            Op::LeafParam {
                store: store.token(),
                param: id,
            },
        )
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. node `id`.
    pub fn grad_of(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    // ---- forward ops -------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(shape, data), Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape(), vb.shape(), "sub: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(shape, data), Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape(), vb.shape(), "mul: shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(shape, data), Op::Mul { a, b })
    }

    /// Entrywise `k * a + c`.
    pub fn affine(&mut self, a: NodeId, k: f64, c: f64) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| k * x + c).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(shape, data), Op::Affine { a, k, c })
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.affine(a, k, 0.0)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -1.0, 0.0)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape().len(), 2, "matmul: lhs must be 2-D");
        assert_eq!(vb.shape().len(), 2, "matmul: rhs must be 2-D");
        let (m, k) = (va.shape()[0], va.shape()[1]);
        let (k2, n) = (vb.shape()[0], vb.shape()[1]);
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let data = matmul_raw(va.data(), vb.data(), m, k, n);
        self.push(Tensor::from_vec(vec![m, n], data), Op::MatMul { a, b })
    }

    /// Adds a bias vector to every row of a matrix.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        assert_eq!(va.shape().len(), 2, "add_bias: input must be 2-D");
        assert_eq!(vb.shape().len(), 1, "add_bias: bias must be 1-D");
        let (rows, cols) = (va.shape()[0], va.shape()[1]);
        assert_eq!(cols, vb.shape()[0], "add_bias: width mismatch");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(va.data()[r * cols + c] + vb.data()[c]);
            }
        }
        self.push(Tensor::from_vec(vec![rows, cols], data), Op::AddBias { a, bias })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| x.tanh()).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(shape, data), Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(shape, data), Op::Sigmoid { a })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| x.max(0.0)).collect();
        let shape = va.shape().to_vec();
        self.push(Tensor::from_vec(shape, data), Op::Relu { a })
    }

    /// Per-row layer normalization: `gain * (x - mean) / sqrt(var + eps) + bias`.
    ///
    /// `x` is `[B,D]` (or `[D]`, treated as one row); `gain` and `bias` are `[D]`.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        assert!(eps > 0.0, "layer_norm: eps must be positive");
        let (vx, vg, vb) = (
            &self.nodes[x.0].value,
            &self.nodes[gain.0].value,
            &self.nodes[bias.0].value,
        );
        let d = vx.cols();
        assert_eq!(vg.shape(), &[d], "layer_norm: gain length mismatch");
        assert_eq!(vb.shape(), &[d], "layer_norm: bias length mismatch");
        let rows = vx.rows();
        let mut data = vec![0.0; rows * d];
        for r in 0..rows {
            let xs = &vx.data()[r * d..(r + 1) * d];
            let mean = xs.iter().sum::<f64>() / d as f64;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for c in 0..d {
                data[r * d + c] = vg.data()[c] * (xs[c] - mean) * inv_std + vb.data()[c];
            }
        }
        let shape = vx.shape().to_vec();
        self.push(
            Tensor::from_vec(shape, data),
            Op::LayerNorm { x, gain, bias, eps },
        )
    }

    /// Concatenates two matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape().len(), 2, "concat_cols: lhs must be 2-D");
        assert_eq!(vb.shape().len(), 2, "concat_cols: rhs must be 2-D");
        let rows = va.shape()[0];
        assert_eq!(rows, vb.shape()[0], "concat_cols: row count mismatch");
        let (ca, cb) = (va.shape()[1], vb.shape()[1]);
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&va.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&vb.data()[r * cb..(r + 1) * cb]);
        }
        self.push(
            Tensor::from_vec(vec![rows, ca + cb], data),
            Op::ConcatCols { a, b, a_cols: ca },
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll { a })
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value;
        let s: f64 = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll { a })
    }

    // ---- reverse sweep -----------------------------------------------

    /// Runs the reverse sweep from a scalar loss node.
    ///
    /// Node gradients are available through [`Tape::grad_of`] afterwards and
    /// are routed to parameters with [`Tape::accumulate_grads`].
    pub fn backward(&mut self, loss: NodeId) -> Result<(), DiffError> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(DiffError::NonScalarLoss {
                shape: lv.shape().to_vec(),
            });
        }
        for node in &self.nodes {
            if !node.value.all_finite() {
                return Err(DiffError::NonFiniteForward {
                    op: op_name(&node.op),
                });
            }
        }

        for node in &mut self.nodes {
            node.grad = vec![0.0; node.value.numel()];
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            // Split off the current node so its parents can be borrowed mutably.
            let (front, back) = self.nodes.split_at_mut(i);
            let node = &back[0];
            let g = &node.grad;
            match node.op {
                Op::Leaf | Op::LeafParam { .. } => {}
                Op::Add { a, b } => {
                    axpy(&mut front[a.0].grad, g, 1.0);
                    axpy(&mut front[b.0].grad, g, 1.0);
                }
                Op::Sub { a, b } => {
                    axpy(&mut front[a.0].grad, g, 1.0);
                    axpy(&mut front[b.0].grad, g, -1.0);
                }
                Op::Mul { a, b } => {
                    if a.0 == b.0 {
                        // x*x: both sides contribute g * x
                        let xs: Vec<f64> = front[a.0].value.data().to_vec();
                        for (ga, (gi, xi)) in front[a.0].grad.iter_mut().zip(g.iter().zip(&xs)) {
                            *ga += 2.0 * gi * xi;
                        }
                    } else {
                        let (lo, hi) = if a.0 < b.0 { (a.0, b.0) } else { (b.0, a.0) };
                        let (la, lb) = front.split_at_mut(hi);
                        let (na, nb) = if a.0 < b.0 {
                            (&mut la[lo], &mut lb[0])
                        } else {
                            (&mut lb[0], &mut la[lo])
                        };
                        for k in 0..g.len() {
                            na.grad[k] += g[k] * nb.value.data()[k];
                            nb.grad[k] += g[k] * na.value.data()[k];
                        }
                    }
                }
                Op::Affine { a, k, .. } => {
                    axpy(&mut front[a.0].grad, g, k);
                }
                Op::MatMul { a, b } => {
                    let m = front[a.0].value.shape()[0];
                    let k = front[a.0].value.shape()[1];
                    let n = front[b.0].value.shape()[1];
                    // dA = g . B^T
                    let bt = transpose(front[b.0].value.data(), k, n);
                    let da = matmul_raw(g, &bt, m, n, k);
                    // dB = A^T . g
                    let at = transpose(front[a.0].value.data(), m, k);
                    let db = matmul_raw(&at, g, k, m, n);
                    axpy(&mut front[a.0].grad, &da, 1.0);
                    axpy(&mut front[b.0].grad, &db, 1.0);
                }
                Op::AddBias { a, bias } => {
                    axpy(&mut front[a.0].grad, g, 1.0);
                    let cols = front[bias.0].value.numel();
                    let rows = g.len() / cols;
                    for r in 0..rows {
                        for c in 0..cols {
                            front[bias.0].grad[c] += g[r * cols + c];
                        }
                    }
                }
                Op::Tanh { a } => {
                    let ys = node.value.data();
                    for (ga, (gi, yi)) in front[a.0].grad.iter_mut().zip(g.iter().zip(ys)) {
                        *ga += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid { a } => {
                    let ys = node.value.data();
                    for (ga, (gi, yi)) in front[a.0].grad.iter_mut().zip(g.iter().zip(ys)) {
                        *ga += gi * yi * (1.0 - yi);
                    }
                }
                Op::Relu { a } => {
                    let xs: Vec<f64> = front[a.0].value.data().to_vec();
                    for (ga, (gi, xi)) in front[a.0].grad.iter_mut().zip(g.iter().zip(&xs)) {
                        if *xi > 0.0 {
                            *ga += gi;
                        }
                    }
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let d = front[x.0].value.cols();
                    let rows = front[x.0].value.rows();
                    let gain_vals: Vec<f64> = front[gain.0].value.data().to_vec();
                    let x_vals: Vec<f64> = front[x.0].value.data().to_vec();
                    let mut dx = vec![0.0; x_vals.len()];
                    let mut dgain = vec![0.0; d];
                    let mut dbias = vec![0.0; d];
                    for r in 0..rows {
                        let xs = &x_vals[r * d..(r + 1) * d];
                        let gs = &g[r * d..(r + 1) * d];
                        let mean = xs.iter().sum::<f64>() / d as f64;
                        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = xs.iter().map(|v| (v - mean) * inv_std).collect();
                        let dxhat: Vec<f64> =
                            gs.iter().zip(&gain_vals).map(|(gi, ga)| gi * ga).collect();
                        let sum_dxhat: f64 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f64 =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                        let df = d as f64;
                        for c in 0..d {
                            dgain[c] += gs[c] * xhat[c];
                            dbias[c] += gs[c];
                            dx[r * d + c] += inv_std / df
                                * (df * dxhat[c] - sum_dxhat - xhat[c] * sum_dxhat_xhat);
                        }
                    }
                    axpy(&mut front[x.0].grad, &dx, 1.0);
                    axpy(&mut front[gain.0].grad, &dgain, 1.0);
                    axpy(&mut front[bias.0].grad, &dbias, 1.0);
                }
                Op::ConcatCols { a, b, a_cols } => {
                    let total = node.value.cols();
                    let rows = node.value.rows();
                    let b_cols = total - a_cols;
                    for r in 0..rows {
                        for c in 0..a_cols {
                            front[a.0].grad[r * a_cols + c] += g[r * total + c];
                        }
                        for c in 0..b_cols {
                            front[b.0].grad[r * b_cols + c] += g[r * total + a_cols + c];
                        }
                    }
                }
                Op::SumAll { a } => {
                    let gi = g[0];
                    for ga in front[a.0].grad.iter_mut() {
                        *ga += gi;
                    }
                }
                Op::MeanAll { a } => {
                    let gi = g[0] / front[a.0].value.numel() as f64;
                    for ga in front[a.0].grad.iter_mut() {
                        *ga += gi;
                    }
                }
            }
        }
        Ok(())
    }

    /// Adds every parameter leaf's gradient into its parameter in `store`.
    ///
    /// Leaves bound from other stores are skipped, which is how the policy
    /// loss avoids touching critic parameters even though the critic sits on
    /// the same tape.
    pub fn accumulate_grads(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let Op::LeafParam { store: tok, param } = node.op {
                if tok == store.token() && !node.grad.is_empty() {
                    let p = store.get_mut(param);
                    for (g, n) in p.grad.data_mut().iter_mut().zip(&node.grad) {
                        *g += n;
                    }
                }
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Backward plus gradient routing in one call: differentiates `loss` and
/// accumulates into every parameter of `store` that the tape touched.
pub fn grad(tape: &mut Tape, loss: NodeId, store: &mut ParamStore) -> Result<(), DiffError> {
    tape.backward(loss)?;
    tape.accumulate_grads(store);
    Ok(())
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::LeafParam { .. } => "param",
        Op::Add { .. } => "add",
        Op::Sub { .. } => "sub",
        Op::Mul { .. } => "mul",
        Op::Affine { .. } => "affine",
        Op::MatMul { .. } => "matmul",
        Op::AddBias { .. } => "add_bias",
        Op::Tanh { .. } => "tanh",
        Op::Sigmoid { .. } => "sigmoid",
        Op::Relu { .. } => "relu",
        Op::LayerNorm { .. } => "layer_norm",
        Op::ConcatCols { .. } => "concat_cols",
        Op::SumAll { .. } => "sum_all",
        Op::MeanAll { .. } => "mean_all",
    }
}

fn axpy(dst: &mut [f64], src: &[f64], k: f64) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        // f(x) = x*x at x = 3 -> df/dx = 6
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let xn = tape.param(&store, x);
        let y = tape.mul(xn, xn);
        grad(&mut tape, y, &mut store).unwrap();
        assert_eq!(store.get(x).grad.item(), 6.0);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::from_vec(vec![2, 3], vec![0.5; 6]));
        let mut tape = Tape::new();
        let xn = tape.param(&store, x);
        let s = tape.sum_all(xn);
        grad(&mut tape, s, &mut store).unwrap();
        assert_eq!(store.get(x).grad.data(), &[1.0; 6]);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(2.0));
        for _ in 0..2 {
            let mut tape = Tape::new();
            let xn = tape.param(&store, x);
            let y = tape.mul(xn, xn);
            grad(&mut tape, y, &mut store).unwrap();
        }
        assert_eq!(store.get(x).grad.item(), 8.0);
        store.zero_grad();
        assert_eq!(store.get(x).grad.item(), 0.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let err = tape.backward(a).unwrap_err();
        assert!(matches!(err, DiffError::NonScalarLoss { .. }));
    }

    #[test]
    fn nan_forward_is_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(f64::NAN));
        let b = tape.affine(a, 1.0, 0.0);
        let s = tape.sum_all(b);
        let err = tape.backward(s).unwrap_err();
        assert!(matches!(err, DiffError::NonFiniteForward { .. }));
    }

    #[test]
    fn layer_norm_zero_variance_is_guarded() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_matrix(vec![2.0, 2.0, 2.0]));
        let gain = tape.leaf(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let bias = tape.leaf(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = tape.layer_norm(x, gain, bias, 1e-5);
        for v in tape.value(y).data() {
            assert!(v.abs() < 1e-9, "constant row should normalize to ~0, got {v}");
        }
    }

    #[test]
    fn layer_norm_already_normalized() {
        // x = [1,-1] has mean 0 and variance 1; with eps -> 0 output is x.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_matrix(vec![1.0, -1.0]));
        let gain = tape.leaf(Tensor::vector(vec![1.0, 1.0]));
        let bias = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.layer_norm(x, gain, bias, 1e-12);
        let out = tape.value(y).data();
        assert!((out[0] - 1.0).abs() < 1e-6);
        assert!((out[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn matmul_against_hand_value() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = tape.leaf(Tensor::from_vec(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]));
        let c = tape.matmul(a, b);
        assert_eq!(tape.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn grad_is_linear_in_the_loss() {
        // grad(a*f + b*g) == a*grad(f) + b*grad(g) on shared parameters.
        let xs = vec![0.3, -0.7, 0.2];
        let (a, b) = (2.5, -1.25);

        let grad_of = |build: &dyn Fn(&mut Tape, NodeId) -> NodeId| -> Vec<f64> {
            let mut store = ParamStore::new();
            let x = store.add("x", Tensor::vector(xs.clone()));
            let mut tape = Tape::new();
            let xn = tape.param(&store, x);
            let loss = build(&mut tape, xn);
            grad(&mut tape, loss, &mut store).unwrap();
            store.get(x).grad.data().to_vec()
        };

        // f = sum(tanh(x)), g = mean(x*x)
        let f = |t: &mut Tape, x: NodeId| {
            let y = t.tanh(x);
            t.sum_all(y)
        };
        let g = |t: &mut Tape, x: NodeId| {
            let y = t.mul(x, x);
            t.mean_all(y)
        };
        let gf = grad_of(&f);
        let gg = grad_of(&g);
        let combined = grad_of(&|t: &mut Tape, x: NodeId| {
            let lf = f(t, x);
            let lg = g(t, x);
            let slf = t.scale(lf, a);
            let slg = t.scale(lg, b);
            t.add(slf, slg)
        });
        for i in 0..xs.len() {
            assert!((combined[i] - (a * gf[i] + b * gg[i])).abs() < 1e-12);
        }
    }
}
