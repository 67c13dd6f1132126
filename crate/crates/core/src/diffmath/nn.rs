//! Network building blocks: linear layers, an MLP, and a GRU cell.
//!
//! Each block allocates its parameters into a [`ParamStore`] at construction
//! and is "bound" onto a [`Tape`] per forward pass, which turns the stored
//! values into parameter leaves that the reverse sweep can reach.

use rand::Rng;

use super::{NodeId, ParamId, ParamStore, Tape, Tensor};

/// Activation applied after a dense layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

fn uniform_init<R: Rng>(rng: &mut R, shape: Vec<usize>, bound: f64) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data)
}

/// Dense layer `y = x W + b` with fan-in-scaled uniform initialization.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = store.add(format!("{prefix}/w"), uniform_init(rng, vec![in_dim, out_dim], bound));
        let b = store.add(format!("{prefix}/b"), uniform_init(rng, vec![out_dim], bound));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn bind(&self, store: &ParamStore, tape: &mut Tape) -> BoundLinear {
        BoundLinear {
            w: tape.param(store, self.w),
            b: tape.param(store, self.b),
        }
    }
}

/// Tape-bound view of a [`Linear`].
#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub w: NodeId,
    pub b: NodeId,
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let xw = tape.matmul(x, self.w);
        tape.add_bias(xw, self.b)
    }
}

/// Dense layer followed by layer normalization (the critic's hidden layers).
#[derive(Clone, Debug)]
pub struct NormedLinear {
    pub linear: Linear,
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl NormedLinear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        eps: f64,
        rng: &mut R,
    ) -> Self {
        let linear = Linear::new(store, prefix, in_dim, out_dim, rng);
        let gain = store.add(format!("{prefix}/ln_gain"), Tensor::from_vec(vec![out_dim], vec![1.0; out_dim]));
        let bias = store.add(format!("{prefix}/ln_bias"), Tensor::zeros(vec![out_dim]));
        NormedLinear { linear, gain, bias, eps }
    }
}

/// One MLP layer: dense, optional layer norm, then activation.
#[derive(Clone, Debug)]
pub enum MlpLayer {
    Plain(Linear, Activation),
    Normed(NormedLinear, Activation),
}

/// A stack of dense layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<MlpLayer>,
}

impl Mlp {
    /// Plain MLP with the given hidden sizes, ReLU between, identity on top.
    pub fn relu_stack<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        dims: &[usize],
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let act = if i + 2 == dims.len() { Activation::Identity } else { Activation::Relu };
            layers.push(MlpLayer::Plain(
                Linear::new(store, &format!("{prefix}/l{i}"), dims[i], dims[i + 1], rng),
                act,
            ));
        }
        Mlp { layers }
    }

    /// MLP whose hidden layers are layer-normalized before the ReLU. The
    /// output layer stays plain.
    pub fn normed_relu_stack<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        dims: &[usize],
        eps: f64,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            if i + 2 == dims.len() {
                layers.push(MlpLayer::Plain(
                    Linear::new(store, &format!("{prefix}/l{i}"), dims[i], dims[i + 1], rng),
                    Activation::Identity,
                ));
            } else {
                layers.push(MlpLayer::Normed(
                    NormedLinear::new(store, &format!("{prefix}/l{i}"), dims[i], dims[i + 1], eps, rng),
                    Activation::Relu,
                ));
            }
        }
        Mlp { layers }
    }

    pub fn bind(&self, store: &ParamStore, tape: &mut Tape) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                MlpLayer::Plain(lin, act) => BoundMlpLayer {
                    linear: lin.bind(store, tape),
                    norm: None,
                    act: *act,
                },
                MlpLayer::Normed(nl, act) => BoundMlpLayer {
                    linear: nl.linear.bind(store, tape),
                    norm: Some((tape.param(store, nl.gain), tape.param(store, nl.bias), nl.eps)),
                    act: *act,
                },
            })
            .collect();
        BoundMlp { layers }
    }
}

#[derive(Clone, Copy, Debug)]
struct BoundMlpLayer {
    linear: BoundLinear,
    norm: Option<(NodeId, NodeId, f64)>,
    act: Activation,
}

/// Tape-bound view of an [`Mlp`].
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<BoundMlpLayer>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        mlp_forward(tape, self, x)
    }
}

/// Runs an MLP: composition of affine maps, optional layer norms, and
/// activations, all recorded on the tape.
pub fn mlp_forward(tape: &mut Tape, mlp: &BoundMlp, x: NodeId) -> NodeId {
    let mut h = x;
    for layer in &mlp.layers {
        h = layer.linear.forward(tape, h);
        if let Some((gain, bias, eps)) = layer.norm {
            h = tape.layer_norm(h, gain, bias, eps);
        }
        h = layer.act.apply(tape, h);
    }
    h
}

/// Gated recurrent unit cell.
///
/// Update rule:
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   c = tanh(x Wh + (r . h) Uh + bh)
///   h' = (1 - z) . h + z . c
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
    pub in_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut mat = |name: &str, r: usize, c: usize, rng: &mut R| {
            store.add(format!("{prefix}/{name}"), uniform_init(rng, vec![r, c], bound))
        };
        let wz = mat("wz", in_dim, hidden_dim, rng);
        let uz = mat("uz", hidden_dim, hidden_dim, rng);
        let wr = mat("wr", in_dim, hidden_dim, rng);
        let ur = mat("ur", hidden_dim, hidden_dim, rng);
        let wh = mat("wh", in_dim, hidden_dim, rng);
        let uh = mat("uh", hidden_dim, hidden_dim, rng);
        let bz = store.add(format!("{prefix}/bz"), uniform_init(rng, vec![hidden_dim], bound));
        let br = store.add(format!("{prefix}/br"), uniform_init(rng, vec![hidden_dim], bound));
        let bh = store.add(format!("{prefix}/bh"), uniform_init(rng, vec![hidden_dim], bound));
        GruCell { wz, uz, bz, wr, ur, br, wh, uh, bh, in_dim, hidden_dim }
    }

    pub fn bind(&self, store: &ParamStore, tape: &mut Tape) -> BoundGru {
        BoundGru {
            wz: tape.param(store, self.wz),
            uz: tape.param(store, self.uz),
            bz: tape.param(store, self.bz),
            wr: tape.param(store, self.wr),
            ur: tape.param(store, self.ur),
            br: tape.param(store, self.br),
            wh: tape.param(store, self.wh),
            uh: tape.param(store, self.uh),
            bh: tape.param(store, self.bh),
        }
    }
}

/// Tape-bound view of a [`GruCell`].
#[derive(Clone, Copy, Debug)]
pub struct BoundGru {
    pub wz: NodeId,
    pub uz: NodeId,
    pub bz: NodeId,
    pub wr: NodeId,
    pub ur: NodeId,
    pub br: NodeId,
    pub wh: NodeId,
    pub uh: NodeId,
    pub bh: NodeId,
}

impl BoundGru {
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId) -> NodeId {
        gru_step(tape, x, h, self)
    }
}

/// One GRU update on the tape. `x` is `[B, in]`, `h` is `[B, hidden]`.
pub fn gru_step(tape: &mut Tape, x: NodeId, h: NodeId, w: &BoundGru) -> NodeId {
    let xz = tape.matmul(x, w.wz);
    let hz = tape.matmul(h, w.uz);
    let z_pre = tape.add(xz, hz);
    let z_pre = tape.add_bias(z_pre, w.bz);
    let z = tape.sigmoid(z_pre);

    let xr = tape.matmul(x, w.wr);
    let hr = tape.matmul(h, w.ur);
    let r_pre = tape.add(xr, hr);
    let r_pre = tape.add_bias(r_pre, w.br);
    let r = tape.sigmoid(r_pre);

    let rh = tape.mul(r, h);
    let xc = tape.matmul(x, w.wh);
    let hc = tape.matmul(rh, w.uh);
    let c_pre = tape.add(xc, hc);
    let c_pre = tape.add_bias(c_pre, w.bh);
    let c = tape.tanh(c_pre);

    let keep = tape.affine(z, -1.0, 1.0); // 1 - z
    let kept = tape.mul(keep, h);
    let new = tape.mul(z, c);
    tape.add(kept, new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences of a scalar function of a parameter store.
    pub(crate) fn finite_diff_grads(
        store: &ParamStore,
        h: f64,
        mut f: impl FnMut(&ParamStore) -> f64,
    ) -> Vec<Vec<f64>> {
        let mut grads = Vec::new();
        for id in store.ids().collect::<Vec<_>>() {
            let n = store.get(id).value.numel();
            let mut g = vec![0.0; n];
            for k in 0..n {
                let mut plus = store.clone();
                plus.get_mut(id).value.data_mut()[k] += h;
                let mut minus = store.clone();
                minus.get_mut(id).value.data_mut()[k] -= h;
                g[k] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
            grads.push(g);
        }
        grads
    }

    pub(crate) fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn mlp_identity_passthrough() {
        // Identity weights, zero bias, linear activation -> output == input.
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let b = store.add("b", Tensor::zeros(vec![2]));
        let lin = Linear { w, b, in_dim: 2, out_dim: 2 };
        let mut tape = Tape::new();
        let bound = lin.bind(&store, &mut tape);
        let x = tape.leaf(Tensor::row_matrix(vec![0.3, -0.8]));
        let y = bound.forward(&mut tape, x);
        assert_eq!(tape.value(y).data(), &[0.3, -0.8]);
    }

    #[test]
    fn single_layer_hand_value() {
        // weight=2 (1x1), bias=1, x=3 -> 7
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_vec(vec![1, 1], vec![2.0]));
        let b = store.add("b", Tensor::vector(vec![1.0]));
        let lin = Linear { w, b, in_dim: 1, out_dim: 1 };
        let mut tape = Tape::new();
        let bound = lin.bind(&store, &mut tape);
        let x = tape.leaf(Tensor::row_matrix(vec![3.0]));
        let y = bound.forward(&mut tape, x);
        assert_eq!(tape.value(y).item(), 7.0);
    }

    #[test]
    fn two_layer_tanh_network_matches_finite_differences() {
        // loss = mean-square of the output of a random 2-layer tanh net
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let l1 = Linear::new(&mut store, "l1", 3, 4, &mut rng);
        let l2 = Linear::new(&mut store, "l2", 4, 2, &mut rng);
        let xs = vec![0.2, -0.4, 0.9, -0.1, 0.5, 0.3];

        let eval = |s: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let b1 = l1.bind(s, &mut tape);
            let b2 = l2.bind(s, &mut tape);
            let x = tape.leaf(Tensor::from_vec(vec![2, 3], xs.clone()));
            let h = b1.forward(&mut tape, x);
            let h = tape.tanh(h);
            let y = b2.forward(&mut tape, h);
            let y = tape.tanh(y);
            let sq = tape.mul(y, y);
            let loss = tape.mean_all(sq);
            tape.value(loss).item()
        };

        let mut tape = Tape::new();
        let b1 = l1.bind(&store, &mut tape);
        let b2 = l2.bind(&store, &mut tape);
        let x = tape.leaf(Tensor::from_vec(vec![2, 3], xs.clone()));
        let h = b1.forward(&mut tape, x);
        let h = tape.tanh(h);
        let y = b2.forward(&mut tape, h);
        let y = tape.tanh(y);
        let sq = tape.mul(y, y);
        let loss = tape.mean_all(sq);
        grad(&mut tape, loss, &mut store).unwrap();

        let numeric = finite_diff_grads(&store, 1e-5, eval);
        for (id, num) in store.ids().zip(&numeric) {
            let err = max_rel_err(store.get(id).grad.data(), num);
            assert!(err < 1e-5, "param {} rel err {err}", store.get(id).name);
        }
    }

    #[test]
    fn layer_norm_gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::row_matrix(vec![0.4, -0.2, 0.7, 0.1]));
        let gain = store.add("gain", Tensor::vector(vec![1.1, 0.9, 1.0, 1.2]));
        let bias = store.add("bias", Tensor::vector(vec![0.1, -0.1, 0.0, 0.2]));

        let eval = |s: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let xn = tape.param(s, x);
            let g = tape.param(s, gain);
            let b = tape.param(s, bias);
            let y = tape.layer_norm(xn, g, b, 1e-5);
            let loss = tape.sum_all(y);
            tape.value(loss).item()
        };

        let mut tape = Tape::new();
        let xn = tape.param(&store, x);
        let g = tape.param(&store, gain);
        let b = tape.param(&store, bias);
        let y = tape.layer_norm(xn, g, b, 1e-5);
        let loss = tape.sum_all(y);
        grad(&mut tape, loss, &mut store).unwrap();

        let numeric = finite_diff_grads(&store, 1e-5, eval);
        for (id, num) in store.ids().zip(&numeric) {
            let err = max_rel_err(store.get(id).grad.data(), num);
            assert!(err < 1e-5, "param {} rel err {err}", store.get(id).name);
        }
    }

    #[test]
    fn layer_norm_standardizes_mean_and_variance() {
        // For inputs with large variance the output mean/variance come out at
        // the bias/gain within 1e-8 (eps = 1e-5 biases variance by eps/var).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 64;
        let xs: Vec<f64> = (0..d).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_matrix(xs));
        let gain = tape.leaf(Tensor::vector(vec![1.0; d]));
        let bias = tape.leaf(Tensor::vector(vec![0.0; d]));
        let y = tape.layer_norm(x, gain, bias, 1e-5);
        let out = tape.value(y).data();
        let mean = out.iter().sum::<f64>() / d as f64;
        let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        assert!(mean.abs() < 1e-8, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-8, "var {var}");
    }

    #[test]
    fn gru_zero_weights_zero_hidden_stays_zero() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gru = GruCell::new(&mut store, "g", 2, 3, &mut rng);
        for id in [gru.wz, gru.uz, gru.bz, gru.wr, gru.ur, gru.br, gru.wh, gru.uh, gru.bh] {
            for v in store.get_mut(id).value.data_mut() {
                *v = 0.0;
            }
        }
        gru.in_dim = 2;
        let mut tape = Tape::new();
        let bound = gru.bind(&store, &mut tape);
        let x = tape.leaf(Tensor::row_matrix(vec![0.5, -0.5]));
        let h = tape.leaf(Tensor::row_matrix(vec![0.0, 0.0, 0.0]));
        let h2 = bound.step(&mut tape, x, h);
        assert_eq!(tape.value(h2).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gru_saturated_update_gate_carries_hidden() {
        // x = 0 and a large negative update-gate bias make z ~ 0, so h' ~ h.
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gru = GruCell::new(&mut store, "g", 2, 3, &mut rng);
        for v in store.get_mut(gru.bz).value.data_mut() {
            *v = -30.0;
        }
        let mut tape = Tape::new();
        let bound = gru.bind(&store, &mut tape);
        let x = tape.leaf(Tensor::row_matrix(vec![0.0, 0.0]));
        let h_vals = vec![0.3, -0.6, 0.9];
        let h = tape.leaf(Tensor::row_matrix(h_vals.clone()));
        let h2 = bound.step(&mut tape, x, h);
        for (out, orig) in tape.value(h2).data().iter().zip(&h_vals) {
            assert!((out - orig).abs() < 1e-9, "carry gate leaked: {out} vs {orig}");
        }
    }

    #[test]
    fn gru_three_chained_steps_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let gru = GruCell::new(&mut store, "g", 2, 3, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();

        let eval = |s: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let bound = gru.bind(s, &mut tape);
            let mut h = tape.leaf(Tensor::row_matrix(vec![0.0; 3]));
            for x in &inputs {
                let xn = tape.leaf(Tensor::row_matrix(x.clone()));
                h = bound.step(&mut tape, xn, h);
            }
            let sq = tape.mul(h, h);
            let loss = tape.sum_all(sq);
            tape.value(loss).item()
        };

        let mut tape = Tape::new();
        let bound = gru.bind(&store, &mut tape);
        let mut h = tape.leaf(Tensor::row_matrix(vec![0.0; 3]));
        for x in &inputs {
            let xn = tape.leaf(Tensor::row_matrix(x.clone()));
            h = bound.step(&mut tape, xn, h);
        }
        let sq = tape.mul(h, h);
        let loss = tape.sum_all(sq);
        grad(&mut tape, loss, &mut store).unwrap();

        let numeric = finite_diff_grads(&store, 1e-5, eval);
        for (id, num) in store.ids().zip(&numeric) {
            let err = max_rel_err(store.get(id).grad.data(), num);
            assert!(err < 1e-5, "param {} rel err {err}", store.get(id).name);
        }
    }

    #[test]
    fn normed_mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let mlp = Mlp::normed_relu_stack(&mut store, "critic", &[4, 6, 1], 1e-5, &mut rng);
        let xs: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let eval = |s: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let bound = mlp.bind(s, &mut tape);
            let x = tape.leaf(Tensor::from_vec(vec![2, 4], xs.clone()));
            let y = bound.forward(&mut tape, x);
            let loss = tape.mean_all(y);
            tape.value(loss).item()
        };

        let mut tape = Tape::new();
        let bound = mlp.bind(&store, &mut tape);
        let x = tape.leaf(Tensor::from_vec(vec![2, 4], xs.clone()));
        let y = bound.forward(&mut tape, x);
        let loss = tape.mean_all(y);
        grad(&mut tape, loss, &mut store).unwrap();

        let numeric = finite_diff_grads(&store, 1e-5, eval);
        for (id, num) in store.ids().zip(&numeric) {
            let err = max_rel_err(store.get(id).grad.data(), num);
            assert!(err < 1e-4, "param {} rel err {err}", store.get(id).name);
        }
    }
}
