//! Selective reincarnation experiments for cooperative multi-agent RL.
//!
//! The crate wires together everything needed to study which subset of agents
//! in a shared-reward system should be given access to offline teacher data
//! (rehearsal) while the rest train from scratch:
//!
//! - [`diffmath`]: dense f64 tensors with tape-based reverse-mode autodiff and
//!   the network blocks the agents need (linear, tanh, layer norm, GRU, Adam).
//! - [`env`]: a Dec-POMDP environment interface with two built-in tasks, a
//!   multi-joint locomotion surrogate and an analytically solvable reacher.
//! - [`agents`]: independent recurrent DDPG - deterministic policy, layer-norm
//!   critic, target networks, and Peng-style Q(lambda) targets.
//! - [`replay`]: per-agent sequence buffers, teacher datasets with quality
//!   slicing, the 50/50 rehearsal sampler, and the dataset file format.
//! - [`learner`]: the full training loop for one run, including the
//!   teacher-removal schedule and return logging.
//! - [`harness`]: subset enumeration, seeded sweep execution with resume, and
//!   the maximum/average return metrics.
//! - [`evalstats`]: performance profiles, probability of improvement, and
//!   aggregate scores with bootstrap confidence intervals.
//! - [`plotting`]: static SVG renderings of curves, profiles, and intervals.

pub mod agents;
pub mod diffmath;
pub mod env;
pub mod evalstats;
pub mod harness;
pub mod learner;
pub mod plotting;
pub mod replay;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::env::EnvKind;
    use crate::replay::{EpisodeSequence, Source, TeacherDataset};

    /// Rolls the closed-form greedy policy on a JointReacher to build a
    /// near-optimal teacher dataset.
    pub fn scripted_reacher_dataset(
        n_agents: usize,
        episode_length: usize,
        episodes: usize,
        seed_base: u64,
    ) -> TeacherDataset {
        let mut env = EnvKind::JointReacher { n_agents, episode_length }.build();
        let names = env.agent_names().to_vec();
        let mut per_agent: Vec<Vec<EpisodeSequence>> = vec![Vec::new(); n_agents];
        for e in 0..episodes {
            let mut obs = env.reset(seed_base + e as u64);
            let mut ep_obs: Vec<Vec<Vec<f32>>> = obs
                .iter()
                .map(|o| vec![o.iter().map(|&v| v as f32).collect()])
                .collect();
            let mut ep_act: Vec<Vec<Vec<f32>>> = vec![Vec::new(); n_agents];
            let mut rewards = Vec::new();
            loop {
                let action: Vec<Vec<f64>> = obs
                    .iter()
                    .map(|o| vec![((o[1] - o[0]) / 0.1).clamp(-1.0, 1.0)])
                    .collect();
                let r = env.step(&action);
                for slot in 0..n_agents {
                    ep_obs[slot].push(r.observations[slot].iter().map(|&v| v as f32).collect());
                    ep_act[slot].push(action[slot].iter().map(|&v| v as f32).collect());
                }
                rewards.push(r.reward as f32);
                obs = r.observations;
                if r.done {
                    break;
                }
            }
            let t = rewards.len();
            for slot in 0..n_agents {
                per_agent[slot].push(EpisodeSequence {
                    agent_id: names[slot].clone(),
                    observations: ep_obs[slot].clone(),
                    actions: ep_act[slot].clone(),
                    rewards: rewards.clone(),
                    dones: (0..t).map(|k| k == t - 1).collect(),
                    source: Source::Teacher,
                });
            }
        }
        TeacherDataset::new(
            format!("joint-reacher-{n_agents}"),
            vec![2; n_agents],
            vec![1; n_agents],
            episode_length,
            "custom",
            "scripted",
            per_agent,
        )
    }
}
