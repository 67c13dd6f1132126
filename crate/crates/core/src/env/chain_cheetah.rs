//! Planar chain locomotion surrogate.
//!
//! A chain of `n + 1` rigid segments linked by `n` torque-actuated rotational
//! joints slides over ground with viscous drag. Each joint is one agent. The
//! shared reward is forward head velocity minus a small control cost, so the
//! agents must coordinate to make the chain "walk". Front joints contribute
//! more to head velocity than back joints, which gives the agents
//! heterogeneous roles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip, EnvSpec, Environment, StepResult};

const DT: f64 = 0.05;
const DRAG: f64 = 0.5; // viscous joint drag k_d
const COUPLING: f64 = 0.3; // neighbor coupling k_c
const HEAD_GAIN: f64 = 1.0; // k_p
const INERTIA: f64 = 1.0;
const CONTROL_COST: f64 = 0.01;
const BACK_WEIGHT: f64 = 0.8;
const FRONT_WEIGHT: f64 = 1.2;

pub(super) fn default_episode_length() -> usize {
    200
}

/// Names for the 6-joint chain, in array-index order.
const SIX_JOINT_NAMES: [&str; 6] = ["BA", "BK", "BH", "FA", "FK", "FH"];

pub struct ChainCheetah {
    spec: EnvSpec,
    angles: Vec<f64>,
    velocities: Vec<f64>,
    head_velocity: f64,
    t: usize,
    done: bool,
    perturb_scale: f64,
}

impl ChainCheetah {
    pub fn new(n_agents: usize, episode_length: usize) -> Self {
        Self::with_perturbation(n_agents, episode_length, 0.1)
    }

    /// `perturb_scale` controls the seeded initial angle perturbation in
    /// radians; zero starts the chain in exact equilibrium, which is useful
    /// for diagnostics.
    pub fn with_perturbation(n_agents: usize, episode_length: usize, perturb_scale: f64) -> Self {
        let names: Vec<String> = if n_agents == 6 {
            SIX_JOINT_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..n_agents).map(|i| format!("J{i}")).collect()
        };
        let spec = EnvSpec {
            env_id: format!("chain-cheetah-{n_agents}"),
            n_agents,
            obs_dims: vec![4; n_agents],
            act_dims: vec![1; n_agents],
            action_low: vec![-1.0; n_agents],
            action_high: vec![1.0; n_agents],
            episode_length,
            agent_names: names,
        };
        spec.validate();
        ChainCheetah {
            spec,
            angles: vec![0.0; n_agents],
            velocities: vec![0.0; n_agents],
            head_velocity: 0.0,
            t: 0,
            done: false,
            perturb_scale,
        }
    }

    /// Joint weight in the head-velocity sum: front half pulls harder.
    fn joint_weight(&self, i: usize) -> f64 {
        if i < self.spec.n_agents / 2 {
            BACK_WEIGHT
        } else {
            FRONT_WEIGHT
        }
    }

    fn neighbor_mean(&self, i: usize) -> f64 {
        let n = self.spec.n_agents;
        if n == 1 {
            return self.angles[0];
        }
        if i == 0 {
            self.angles[1]
        } else if i == n - 1 {
            self.angles[n - 2]
        } else {
            0.5 * (self.angles[i - 1] + self.angles[i + 1])
        }
    }

    fn compute_head_velocity(&self) -> f64 {
        HEAD_GAIN
            * self
                .velocities
                .iter()
                .zip(&self.angles)
                .enumerate()
                .map(|(i, (vel, ang))| self.joint_weight(i) * vel * ang.cos())
                .sum::<f64>()
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        (0..self.spec.n_agents)
            .map(|i| {
                vec![
                    self.angles[i].sin(),
                    self.angles[i].cos(),
                    self.velocities[i],
                    self.head_velocity,
                ]
            })
            .collect()
    }
}

impl Environment for ChainCheetah {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in &mut self.angles {
            *a = if self.perturb_scale > 0.0 {
                rng.gen_range(-self.perturb_scale..self.perturb_scale)
            } else {
                0.0
            };
        }
        self.velocities.iter_mut().for_each(|v| *v = 0.0);
        self.head_velocity = 0.0;
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, joint_action: &[Vec<f64>]) -> StepResult {
        assert!(!self.done, "step called on a finished episode");
        assert_eq!(joint_action.len(), self.spec.n_agents, "joint action arity");
        let n = self.spec.n_agents;
        let mut torques = vec![0.0; n];
        let mut control_cost = 0.0;
        for (i, a) in joint_action.iter().enumerate() {
            assert_eq!(a.len(), 1, "agent {i} action must be one torque");
            let torque = clip(a[0], -1.0, 1.0);
            torques[i] = torque;
            control_cost += torque * torque;
        }

        // Semi-implicit Euler: velocities first, then angles.
        let accels: Vec<f64> = (0..n)
            .map(|i| {
                (torques[i] - DRAG * self.velocities[i]
                    - COUPLING * (self.angles[i] - self.neighbor_mean(i)))
                    / INERTIA
            })
            .collect();
        for i in 0..n {
            self.velocities[i] += DT * accels[i];
        }
        for i in 0..n {
            self.angles[i] += DT * self.velocities[i];
        }
        self.head_velocity = self.compute_head_velocity();

        self.t += 1;
        self.done = self.t == self.spec.episode_length;
        let reward = self.head_velocity - CONTROL_COST * control_cost / n as f64;
        StepResult {
            observations: self.observe(),
            reward,
            done: self.done,
        }
    }

    fn timestep(&self) -> usize {
        self.t
    }
}
