//! Independent recurrent DDPG agent.
//!
//! Each agent owns a deterministic policy and a critic, both conditioned on
//! the agent's own observation history through a GRU, plus slowly-tracking
//! target copies of each. The critic applies layer norm after its hidden
//! dense layers to curb value extrapolation on out-of-distribution actions.
//! Training consumes fixed-length sequence windows with hidden state rebuilt
//! from zeros at each window start.

mod qlambda;

pub use qlambda::peng_lambda_targets;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diffmath::{
    gru_step, BoundGru, BoundMlp, GruCell, Mlp, NodeId, ParamStore, Tape, Tensor,
};
use crate::replay::SequenceWindow;

/// Architecture knobs shared by policy and critic.
#[derive(Clone, Copy, Debug)]
pub struct ArchConfig {
    pub gru_hidden: usize,
    pub mlp_hidden: usize,
    pub layer_norm_eps: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            gru_hidden: 64,
            mlp_hidden: 64,
            layer_norm_eps: 1e-5,
        }
    }
}

/// GRU encoder plus MLP head, the shape both networks share.
#[derive(Clone, Debug)]
struct RecurrentNet {
    store: ParamStore,
    gru: GruCell,
    head: Mlp,
}

struct BoundNet {
    gru: BoundGru,
    head: BoundMlp,
}

impl RecurrentNet {
    fn policy<R: Rng>(obs_dim: usize, act_dim: usize, arch: &ArchConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let gru = GruCell::new(&mut store, "policy/gru", obs_dim, arch.gru_hidden, rng);
        let head = Mlp::relu_stack(
            &mut store,
            "policy/head",
            &[arch.gru_hidden, arch.mlp_hidden, act_dim],
            rng,
        );
        RecurrentNet { store, gru, head }
    }

    fn critic<R: Rng>(obs_dim: usize, act_dim: usize, arch: &ArchConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let gru = GruCell::new(&mut store, "critic/gru", obs_dim, arch.gru_hidden, rng);
        let head = Mlp::normed_relu_stack(
            &mut store,
            "critic/head",
            &[arch.gru_hidden + act_dim, arch.mlp_hidden, 1],
            arch.layer_norm_eps,
            rng,
        );
        RecurrentNet { store, gru, head }
    }

    fn target_copy(&self) -> Self {
        RecurrentNet {
            store: self.store.clone_with_new_token(),
            gru: self.gru.clone(),
            head: self.head.clone(),
        }
    }

    fn bind(&self, tape: &mut Tape) -> BoundNet {
        BoundNet {
            gru: self.gru.bind(&self.store, tape),
            head: self.head.bind(&self.store, tape),
        }
    }
}

/// Recurrent state carried across one episode, reset to zeros at its start.
#[derive(Clone, Debug)]
pub struct HiddenState {
    pub policy_hidden: Tensor,
    pub critic_hidden: Tensor,
}

/// One agent's networks: online policy and critic plus their target copies.
#[derive(Clone, Debug)]
pub struct AgentNets {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub arch: ArchConfig,
    policy: RecurrentNet,
    critic: RecurrentNet,
    target_policy: RecurrentNet,
    target_critic: RecurrentNet,
}

impl AgentNets {
    pub fn new<R: Rng>(
        obs_dim: usize,
        act_dim: usize,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        arch: ArchConfig,
        rng: &mut R,
    ) -> Self {
        assert_eq!(action_low.len(), act_dim);
        assert_eq!(action_high.len(), act_dim);
        let policy = RecurrentNet::policy(obs_dim, act_dim, &arch, rng);
        let critic = RecurrentNet::critic(obs_dim, act_dim, &arch, rng);
        let target_policy = policy.target_copy();
        let target_critic = critic.target_copy();
        AgentNets {
            obs_dim,
            act_dim,
            action_low,
            action_high,
            arch,
            policy,
            critic,
            target_policy,
            target_critic,
        }
    }

    pub fn init_hidden(&self) -> HiddenState {
        HiddenState {
            policy_hidden: Tensor::zeros(vec![1, self.arch.gru_hidden]),
            critic_hidden: Tensor::zeros(vec![1, self.arch.gru_hidden]),
        }
    }

    pub fn policy_store(&self) -> &ParamStore {
        &self.policy.store
    }

    pub fn policy_store_mut(&mut self) -> &mut ParamStore {
        &mut self.policy.store
    }

    pub fn critic_store(&self) -> &ParamStore {
        &self.critic.store
    }

    pub fn critic_store_mut(&mut self) -> &mut ParamStore {
        &mut self.critic.store
    }

    /// Polyak step of both target networks toward their online twins.
    pub fn soft_update(&mut self, tau: f64) {
        self.target_policy.store.soft_update_from(&self.policy.store, tau);
        self.target_critic.store.soft_update_from(&self.critic.store, tau);
    }

    /// Largest absolute difference between online and target weights.
    pub fn target_gap(&self) -> f64 {
        let gap = |a: &ParamStore, b: &ParamStore| -> f64 {
            a.iter()
                .zip(b.iter())
                .flat_map(|(x, y)| {
                    x.value
                        .data()
                        .iter()
                        .zip(y.value.data())
                        .map(|(u, v)| (u - v).abs())
                })
                .fold(0.0, f64::max)
        };
        gap(&self.policy.store, &self.target_policy.store)
            .max(gap(&self.critic.store, &self.target_critic.store))
    }

    /// Flat named weight arrays of the online networks, for checkpoints.
    pub fn export_weights(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = self.policy.store.export();
        out.extend(self.critic.store.export());
        out
    }

    /// Squashes raw head outputs into the action box.
    fn squash(&self, tape: &mut Tape, raw: NodeId) -> NodeId {
        let rows = tape.value(raw).rows();
        let t = tape.tanh(raw);
        let half_range: Vec<f64> = self
            .action_low
            .iter()
            .zip(&self.action_high)
            .map(|(lo, hi)| 0.5 * (hi - lo))
            .collect();
        let mid: Vec<f64> = self
            .action_low
            .iter()
            .zip(&self.action_high)
            .map(|(lo, hi)| 0.5 * (hi + lo))
            .collect();
        let scale = tape.leaf(Tensor::from_rows(&vec![half_range; rows]));
        let mid = tape.leaf(Tensor::from_rows(&vec![mid; rows]));
        let scaled = tape.mul(t, scale);
        tape.add(scaled, mid)
    }

    /// Deterministic policy action for a single observation, before noise.
    /// Advances the policy hidden state by one GRU step.
    fn policy_step(&self, obs: &[f64], hidden: &HiddenState) -> (Vec<f64>, Tensor) {
        let mut tape = Tape::new();
        let bound = self.policy.bind(&mut tape);
        let x = tape.leaf(Tensor::row_matrix(obs.to_vec()));
        let h = tape.leaf(hidden.policy_hidden.clone());
        let h_next = gru_step(&mut tape, x, h, &bound.gru);
        let raw = bound.head.forward(&mut tape, h_next);
        let action = self.squash(&mut tape, raw);
        (
            tape.value(action).data().to_vec(),
            tape.value(h_next).clone(),
        )
    }
}

/// Exploration action: squashed policy output plus Gaussian noise, clipped to
/// the action box. Deterministic given the RNG state.
pub fn select_action<R: Rng>(
    nets: &AgentNets,
    obs: &[f64],
    hidden: &HiddenState,
    noise_scale: f64,
    rng: &mut R,
) -> (Vec<f64>, HiddenState) {
    assert_eq!(obs.len(), nets.obs_dim, "observation width mismatch");
    assert!(noise_scale >= 0.0, "noise scale must be nonnegative");
    let (mut action, policy_hidden) = nets.policy_step(obs, hidden);
    let normal = Normal::new(0.0, noise_scale).expect("valid noise scale");
    for (a, (lo, hi)) in action
        .iter_mut()
        .zip(nets.action_low.iter().zip(&nets.action_high))
    {
        *a += normal.sample(rng);
        *a = a.max(*lo).min(*hi);
    }
    (
        action,
        HiddenState {
            policy_hidden,
            critic_hidden: hidden.critic_hidden.clone(),
        },
    )
}

fn obs_matrix(batch: &[SequenceWindow], t: usize) -> Tensor {
    let rows: Vec<Vec<f64>> = batch
        .iter()
        .map(|w| w.observations[t].iter().map(|&v| v as f64).collect())
        .collect();
    Tensor::from_rows(&rows)
}

fn act_matrix(batch: &[SequenceWindow], t: usize) -> Tensor {
    let rows: Vec<Vec<f64>> = batch
        .iter()
        .map(|w| w.actions[t].iter().map(|&v| v as f64).collect())
        .collect();
    Tensor::from_rows(&rows)
}

/// Q(lambda) targets for a batch of windows, computed with the target
/// networks and detached from gradient flow.
///
/// Returns `targets[b][t]` for every window `b` and in-window step `t`. The
/// per-step bootstrap is the target critic evaluated at the target policy's
/// action on the observation after step `t`; a done flag masks it.
pub fn critic_targets(
    nets: &AgentNets,
    batch: &[SequenceWindow],
    gamma: f64,
    lambda: f64,
) -> Vec<Vec<f64>> {
    assert!(!batch.is_empty());
    let window = batch[0].len();
    assert!(batch.iter().all(|w| w.len() == window), "ragged batch");
    let b = batch.len();

    // One throwaway tape evaluates the target networks over the whole batch.
    let mut tape = Tape::new();
    let tp = nets.target_policy.bind(&mut tape);
    let tc = nets.target_critic.bind(&mut tape);
    let mut hp = tape.leaf(Tensor::zeros(vec![b, nets.arch.gru_hidden]));
    let mut hc = tape.leaf(Tensor::zeros(vec![b, nets.arch.gru_hidden]));

    // next_values[b][t] = Q_target(o_{0:t+1}, mu_target(o_{0:t+1}))
    let mut next_values = vec![vec![0.0; window]; b];
    for t in 0..=window {
        let x = tape.leaf(obs_matrix(batch, t));
        hp = gru_step(&mut tape, x, hp, &tp.gru);
        hc = gru_step(&mut tape, x, hc, &tc.gru);
        if t >= 1 {
            let raw = tp.head.forward(&mut tape, hp);
            let action = nets.squash(&mut tape, raw);
            let joined = tape.concat_cols(hc, action);
            let q = tc.head.forward(&mut tape, joined);
            let qv = tape.value(q);
            for (row, nv) in next_values.iter_mut().enumerate() {
                nv[t - 1] = qv.data()[row];
            }
        }
    }

    batch
        .iter()
        .zip(&next_values)
        .map(|(w, nv)| {
            let rewards: Vec<f64> = w.rewards.iter().map(|&r| r as f64).collect();
            peng_lambda_targets(&rewards, &w.dones, nv, gamma, lambda)
        })
        .collect()
}

/// Mean-squared TD error of the online critic against fixed targets,
/// unrolled over each window. Returns the tape and the scalar loss node.
pub fn critic_loss(
    nets: &AgentNets,
    batch: &[SequenceWindow],
    targets: &[Vec<f64>],
) -> (Tape, NodeId) {
    assert_eq!(batch.len(), targets.len());
    let window = batch[0].len();
    let b = batch.len();

    let mut tape = Tape::new();
    let critic = nets.critic.bind(&mut tape);
    let mut h = tape.leaf(Tensor::zeros(vec![b, nets.arch.gru_hidden]));
    let mut sq_sum: Option<NodeId> = None;
    for t in 0..window {
        let x = tape.leaf(obs_matrix(batch, t));
        h = gru_step(&mut tape, x, h, &critic.gru);
        let a = tape.leaf(act_matrix(batch, t));
        let joined = tape.concat_cols(h, a);
        let q = critic.head.forward(&mut tape, joined);
        let tgt_col: Vec<Vec<f64>> = targets.iter().map(|seq| vec![seq[t]]).collect();
        let tgt = tape.leaf(Tensor::from_rows(&tgt_col));
        let diff = tape.sub(q, tgt);
        let sq = tape.mul(diff, diff);
        let s = tape.sum_all(sq);
        sq_sum = Some(match sq_sum {
            None => s,
            Some(acc) => tape.add(acc, s),
        });
    }
    let total = sq_sum.expect("non-empty window");
    let loss = tape.scale(total, 1.0 / (b * window) as f64);
    (tape, loss)
}

/// Deterministic-policy-gradient loss: the negated mean of the online critic
/// evaluated at the online policy's actions along each window.
///
/// The critic participates in the forward pass but its parameters live in a
/// different store, so routing gradients into the policy store alone leaves
/// the critic untouched.
pub fn policy_loss(nets: &AgentNets, batch: &[SequenceWindow]) -> (Tape, NodeId) {
    assert!(!batch.is_empty());
    let window = batch[0].len();
    let b = batch.len();

    let mut tape = Tape::new();
    let policy = nets.policy.bind(&mut tape);
    let critic = nets.critic.bind(&mut tape);
    let mut hp = tape.leaf(Tensor::zeros(vec![b, nets.arch.gru_hidden]));
    let mut hc = tape.leaf(Tensor::zeros(vec![b, nets.arch.gru_hidden]));
    let mut q_sum: Option<NodeId> = None;
    for t in 0..window {
        let x = tape.leaf(obs_matrix(batch, t));
        hp = gru_step(&mut tape, x, hp, &policy.gru);
        hc = gru_step(&mut tape, x, hc, &critic.gru);
        let raw = policy.head.forward(&mut tape, hp);
        let action = nets.squash(&mut tape, raw);
        let joined = tape.concat_cols(hc, action);
        let q = critic.head.forward(&mut tape, joined);
        let s = tape.sum_all(q);
        q_sum = Some(match q_sum {
            None => s,
            Some(acc) => tape.add(acc, s),
        });
    }
    let total = q_sum.expect("non-empty window");
    let loss = tape.scale(total, -1.0 / (b * window) as f64);
    (tape, loss)
}

/// Polyak averaging of a target parameter store toward its online twin.
pub fn soft_update(online: &ParamStore, target: &mut ParamStore, tau: f64) {
    target.soft_update_from(online, tau);
}
