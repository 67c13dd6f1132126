//! Analytically solvable diagnostic task.
//!
//! Each agent moves a scalar coordinate toward a per-episode goal at a capped
//! speed; the shared reward is the negative mean absolute distance to the
//! goals. Because the best achievable return has a closed form, learning
//! outcomes can be checked against an exact optimum instead of against other
//! stochastic runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip, EnvSpec, Environment, StepResult};

const SPEED: f64 = 0.1; // coordinate change per unit action

pub(super) fn default_episode_length() -> usize {
    20
}

pub struct JointReacher {
    spec: EnvSpec,
    /// Canonical joint index controlled by each agent slot. Identity unless
    /// relabeled for symmetry diagnostics.
    slot_to_joint: Vec<usize>,
    positions: Vec<f64>,
    goals: Vec<f64>,
    t: usize,
    done: bool,
}

impl JointReacher {
    pub fn new(n_agents: usize, episode_length: usize) -> Self {
        Self::with_labels(n_agents, episode_length, (0..n_agents).collect())
    }

    /// Relabels the agent slots: slot `i` controls canonical joint
    /// `slot_to_joint[i]` and is named after it. Goals are drawn in canonical
    /// joint order from the seed, so two instances with different labelings
    /// simulate the same system with permuted agent indices.
    pub fn with_labels(n_agents: usize, episode_length: usize, slot_to_joint: Vec<usize>) -> Self {
        assert_eq!(slot_to_joint.len(), n_agents);
        let mut seen = vec![false; n_agents];
        for &j in &slot_to_joint {
            assert!(j < n_agents && !seen[j], "labels must be a permutation");
            seen[j] = true;
        }
        let names = slot_to_joint.iter().map(|j| format!("J{j}")).collect();
        let spec = EnvSpec {
            env_id: format!("joint-reacher-{n_agents}"),
            n_agents,
            obs_dims: vec![2; n_agents],
            act_dims: vec![1; n_agents],
            action_low: vec![-1.0; n_agents],
            action_high: vec![1.0; n_agents],
            episode_length,
            agent_names: names,
        };
        spec.validate();
        JointReacher {
            spec,
            slot_to_joint,
            positions: vec![0.0; n_agents],
            goals: vec![0.0; n_agents],
            t: 0,
            done: false,
        }
    }

    fn draw_goals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        self.slot_to_joint
            .iter()
            .map(|&j| vec![self.positions[j], self.goals[j]])
            .collect()
    }

    /// Closed-form best return for a set of goals: each step the distance to
    /// a goal shrinks by at most `SPEED`, and the post-move distances are
    /// what the reward sums.
    fn best_return(goals: &[f64], episode_length: usize) -> f64 {
        let n = goals.len() as f64;
        let mut total = 0.0;
        for &g in goals {
            let mut d = g.abs();
            for _ in 0..episode_length {
                d = (d - SPEED).max(0.0);
                total -= d / n;
            }
        }
        total
    }
}

impl Environment for JointReacher {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        self.goals = Self::draw_goals(self.spec.n_agents, seed);
        self.positions.iter_mut().for_each(|p| *p = 0.0);
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, joint_action: &[Vec<f64>]) -> StepResult {
        assert!(!self.done, "step called on a finished episode");
        assert_eq!(joint_action.len(), self.spec.n_agents, "joint action arity");
        for (slot, a) in joint_action.iter().enumerate() {
            assert_eq!(a.len(), 1, "agent {slot} action must be scalar");
            let j = self.slot_to_joint[slot];
            self.positions[j] += SPEED * clip(a[0], -1.0, 1.0);
        }
        let n = self.spec.n_agents as f64;
        let reward = -self
            .positions
            .iter()
            .zip(&self.goals)
            .map(|(p, g)| (p - g).abs())
            .sum::<f64>()
            / n;
        self.t += 1;
        self.done = self.t == self.spec.episode_length;
        StepResult {
            observations: self.observe(),
            reward,
            done: self.done,
        }
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn optimal_return(&self, seed: u64) -> Option<f64> {
        let goals = Self::draw_goals(self.spec.n_agents, seed);
        Some(Self::best_return(&goals, self.spec.episode_length))
    }

    fn current_episode_optimal_return(&self) -> Option<f64> {
        Some(Self::best_return(&self.goals, self.spec.episode_length))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn reset_zeroes_positions_and_draws_goals_in_range() {
        let mut env = JointReacher::new(3, 20);
        let obs = env.reset(123);
        for o in &obs {
            assert_eq!(o[0], 0.0);
            assert!((-1.0..1.0).contains(&o[1]));
        }
    }

    #[test]
    fn at_goal_with_zero_action_reward_is_zero() {
        let mut env = JointReacher::new(2, 20);
        env.reset(0);
        env.goals = vec![0.0, 0.0];
        let r = env.step(&vec![vec![0.0], vec![0.0]]);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn closed_form_example_single_goal() {
        // One joint at distance 0.5 with speed 0.1 and T = 20: post-move
        // distances are 0.4, 0.3, 0.2, 0.1, then zero, so the optimum is -1.
        assert!((JointReacher::best_return(&[0.5], 20) - (-1.0)).abs() < 1e-12);
        assert_eq!(JointReacher::best_return(&[0.0], 20), 0.0);
    }

    #[test]
    fn optimum_dominates_random_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut env = JointReacher::new(2, 20);
        let seed = 5;
        let optimal = env.optimal_return(seed).unwrap();
        for _ in 0..1000 {
            env.reset(seed);
            let mut ret = 0.0;
            loop {
                let action: Vec<Vec<f64>> = (0..2)
                    .map(|_| vec![rng.gen_range(-1.0_f64..1.0)])
                    .collect();
                let r = env.step(&action);
                ret += r.reward;
                if r.done {
                    break;
                }
            }
            assert!(
                ret <= optimal + 1e-12,
                "random rollout {ret} beat the supposed optimum {optimal}"
            );
        }
    }

    #[test]
    fn greedy_policy_attains_the_optimum() {
        let mut env = JointReacher::new(3, 20);
        for seed in 0..20 {
            env.reset(seed);
            let optimal = env.current_episode_optimal_return().unwrap();
            let mut ret = 0.0;
            loop {
                let obs = env.observe();
                let action: Vec<Vec<f64>> = obs
                    .iter()
                    .map(|o| vec![clip((o[1] - o[0]) / SPEED, -1.0, 1.0)])
                    .collect();
                let r = env.step(&action);
                ret += r.reward;
                if r.done {
                    break;
                }
            }
            assert!(
                (ret - optimal).abs() < 1e-12,
                "greedy policy return {ret} != optimum {optimal} (seed {seed})"
            );
        }
    }

    #[test]
    fn relabeled_instance_permutes_observations() {
        let mut id_env = JointReacher::new(3, 20);
        let mut sw_env = JointReacher::with_labels(3, 20, vec![2, 0, 1]);
        let a = id_env.reset(9);
        let b = sw_env.reset(9);
        assert_eq!(b[0], a[2]);
        assert_eq!(b[1], a[0]);
        assert_eq!(b[2], a[1]);
        assert_eq!(sw_env.agent_names(), &["J2", "J0", "J1"]);
    }
}
