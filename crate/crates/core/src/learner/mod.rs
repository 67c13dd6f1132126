//! The full training loop for one run.
//!
//! Given a [`TrainingConfig`] and a [`ReincarnationPlan`], `run_training`
//! steps the environment for the configured budget, trains every agent
//! independently (with 50/50 teacher rehearsal for reincarnated agents while
//! the teacher phase lasts), and logs one return-curve point per completed
//! episode. Runs are fully deterministic functions of (config, plan, seed):
//! every random draw comes from a named ChaCha stream derived from the run
//! seed and the agent name, so relabeling agents relabels outcomes exactly.

mod config;
mod plan;

pub use config::{
    ArchSettings, NoiseConfig, OptimConfig, ReplaySettings, ScheduleConfig, TeacherConfig,
    TrainingConfig,
};
pub use plan::ReincarnationPlan;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{critic_loss, critic_targets, policy_loss, select_action, AgentNets, ArchConfig};
use crate::diffmath::{grad, Adam, DiffError};
use crate::replay::{
    load_dataset, sample_mixed, DatasetError, EpisodeSequence, ReplayBuffer, Source, TeacherDataset,
};

/// Training-episode returns over one run: one `(env_step, return)` point per
/// completed episode, with the run's provenance attached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnCurve {
    pub points: Vec<(u64, f64)>,
    pub plan: ReincarnationPlan,
    pub seed: u64,
    pub dataset_quality: Option<String>,
}

/// Everything a finished run reports besides the curve: rehearsal
/// instrumentation, dataset provenance, and final network weights.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub curve: ReturnCurve,
    /// Closed-form best return per logged episode, for environments that
    /// know it (index-aligned with `curve.points`).
    pub episode_optima: Option<Vec<f64>>,
    /// Teacher windows sampled while the teacher phase was active.
    pub teacher_sequences_in_phase: u64,
    /// Teacher windows sampled at or past the boundary; must be zero.
    pub teacher_sequences_after_phase: u64,
    /// Which agents read which teacher file. Tabula rasa agents never appear.
    pub teacher_files: BTreeMap<String, PathBuf>,
    /// SHA-256 of each teacher file actually read, keyed by path.
    pub dataset_hashes: BTreeMap<PathBuf, String>,
    /// Full per-agent experience stream, canonical agent order, when asked
    /// for via [`RunOptions::record_experience`].
    pub experience: Option<Vec<Vec<EpisodeSequence>>>,
    /// Flat named weight arrays per agent, for checkpointing.
    pub final_weights: Vec<(String, Vec<(String, Vec<f64>)>)>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Keep every episode of every agent in memory (the experience stream a
    /// teacher run is sliced from).
    pub record_experience: bool,
}

/// Failures surfaced before or during a run.
#[derive(Debug)]
pub enum RunError {
    InvalidConfig(String),
    /// A reincarnated agent has no dataset path.
    MissingDataset { agent: String },
    /// A dataset file failed to load.
    Dataset { path: PathBuf, source: DatasetError },
    /// A dataset disagrees with the run's environment.
    DatasetMismatch { path: PathBuf, detail: String },
    /// The dataset does not carry episodes for this agent.
    AgentNotInDataset { agent: String, path: PathBuf },
    /// A non-finite value appeared during training.
    Numeric { agent: String, env_step: u64, source: DiffError },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            RunError::MissingDataset { agent } => {
                write!(f, "reincarnated agent {agent} has no teacher dataset configured")
            }
            RunError::Dataset { path, source } => {
                write!(f, "failed to load {}: {source}", path.display())
            }
            RunError::DatasetMismatch { path, detail } => {
                write!(f, "dataset {} does not match the environment: {detail}", path.display())
            }
            RunError::AgentNotInDataset { agent, path } => {
                write!(f, "dataset {} has no episodes for agent {agent}", path.display())
            }
            RunError::Numeric { agent, env_step, source } => {
                write!(f, "numeric failure for agent {agent} at step {env_step}: {source}")
            }
        }
    }
}

impl std::error::Error for RunError {}

/// Discounted episode return `sum_t gamma^t r_t`.
pub fn episode_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut g = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        g += discount * r;
        discount *= gamma;
    }
    g
}

pub(crate) fn fnv1a64(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

const STREAM_ENV: u64 = 0x01;
const STREAM_INIT: u64 = 0x02;
const STREAM_NOISE: u64 = 0x03;
const STREAM_SAMPLE: u64 = 0x04;

/// Independent deterministic stream for one purpose. Agent streams are keyed
/// by the agent's *name*, not its index, so a consistently relabeled system
/// reproduces the same draws.
fn stream(seed: u64, name: &str, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ fnv1a64(name).rotate_left(17) ^ purpose.wrapping_mul(0x9e3779b97f4a7c15),
    ))
}

fn sha256_file(path: &PathBuf) -> std::io::Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

struct AgentRuntime {
    name: String,
    nets: AgentNets,
    critic_opt: Adam,
    policy_opt: Adam,
    buffer: ReplayBuffer,
    noise_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    teacher: Option<Vec<EpisodeSequence>>,
}

/// Runs one training run to completion. See the module docs for the loop
/// structure; the returned [`RunResult`] carries the curve plus the
/// instrumentation the invariants are checked against.
pub fn run_training(
    config: &TrainingConfig,
    plan: &ReincarnationPlan,
) -> Result<RunResult, RunError> {
    run_training_with_options(config, plan, RunOptions::default())
}

pub fn run_training_with_options(
    config: &TrainingConfig,
    plan: &ReincarnationPlan,
    options: RunOptions,
) -> Result<RunResult, RunError> {
    run_training_on_env(config, plan, config.env.build(), options)
}

/// Same as [`run_training_with_options`] but on a caller-supplied environment
/// instance (for relabeled or otherwise customized environments). The
/// config's own `env` field is ignored except for validation defaults.
pub fn run_training_on_env(
    config: &TrainingConfig,
    plan: &ReincarnationPlan,
    mut env: Box<dyn crate::env::Environment>,
    options: RunOptions,
) -> Result<RunResult, RunError> {
    config.validate().map_err(RunError::InvalidConfig)?;

    let spec = env.spec().clone();
    let names: Vec<String> = spec.agent_names.to_vec();
    if plan.n() != names.len() || !names.iter().all(|n| {
        plan.is_reincarnated(n) || plan.tabula_rasa().iter().any(|t| t == n)
    }) {
        return Err(RunError::InvalidConfig(format!(
            "plan agents {:?}+{:?} do not match environment agents {names:?}",
            plan.reincarnated(),
            plan.tabula_rasa()
        )));
    }

    // Load teacher datasets before any stepping; only agents in X get one.
    let mut dataset_cache: BTreeMap<PathBuf, TeacherDataset> = BTreeMap::new();
    let mut teacher_files = BTreeMap::new();
    let mut dataset_hashes = BTreeMap::new();
    let mut quality_tags: Vec<String> = Vec::new();
    for name in plan.reincarnated() {
        let path = config
            .teacher
            .path_for(name)
            .cloned()
            .ok_or_else(|| RunError::MissingDataset { agent: name.clone() })?;
        if !dataset_cache.contains_key(&path) {
            let ds = load_dataset(&path).map_err(|source| RunError::Dataset {
                path: path.clone(),
                source,
            })?;
            let mismatch = |detail: String| RunError::DatasetMismatch {
                path: path.clone(),
                detail,
            };
            if ds.env_id != spec.env_id {
                return Err(mismatch(format!("env_id {} vs {}", ds.env_id, spec.env_id)));
            }
            if ds.n_agents != spec.n_agents {
                return Err(mismatch(format!("n_agents {} vs {}", ds.n_agents, spec.n_agents)));
            }
            if ds.episode_length != spec.episode_length {
                return Err(mismatch(format!(
                    "episode_length {} vs {}",
                    ds.episode_length, spec.episode_length
                )));
            }
            let hash = sha256_file(&path).map_err(|e| RunError::Dataset {
                path: path.clone(),
                source: DatasetError::Io(e),
            })?;
            dataset_hashes.insert(path.clone(), hash);
            if !quality_tags.contains(&ds.quality_tag) {
                quality_tags.push(ds.quality_tag.clone());
            }
            dataset_cache.insert(path.clone(), ds);
        }
        teacher_files.insert(name.clone(), path);
    }

    let arch = ArchConfig {
        gru_hidden: config.arch.gru_hidden,
        mlp_hidden: config.arch.mlp_hidden,
        layer_norm_eps: 1e-5,
    };

    let mut agents: Vec<AgentRuntime> = Vec::with_capacity(names.len());
    for (slot, name) in names.iter().enumerate() {
        let (low, high) = spec.action_bounds(slot);
        let mut init_rng = stream(config.seed, name, STREAM_INIT);
        let nets = AgentNets::new(
            spec.obs_dims[slot],
            spec.act_dims[slot],
            low.to_vec(),
            high.to_vec(),
            arch,
            &mut init_rng,
        );
        let teacher = if let Some(path) = teacher_files.get(name) {
            let ds = &dataset_cache[path];
            let eps = ds
                .episodes_for(name)
                .ok_or_else(|| RunError::AgentNotInDataset {
                    agent: name.clone(),
                    path: path.clone(),
                })?;
            if eps.is_empty() {
                return Err(RunError::DatasetMismatch {
                    path: path.clone(),
                    detail: format!("no episodes for agent {name}"),
                });
            }
            let (obs_w, act_w) = (eps[0].observations[0].len(), eps[0].actions[0].len());
            if obs_w != spec.obs_dims[slot] || act_w != spec.act_dims[slot] {
                return Err(RunError::DatasetMismatch {
                    path: path.clone(),
                    detail: format!(
                        "agent {name} dims ({obs_w},{act_w}) vs env ({},{})",
                        spec.obs_dims[slot], spec.act_dims[slot]
                    ),
                });
            }
            Some(eps.to_vec())
        } else {
            None
        };
        agents.push(AgentRuntime {
            name: name.clone(),
            critic_opt: Adam::new(nets.critic_store(), config.optim.critic_lr),
            policy_opt: Adam::new(nets.policy_store(), config.optim.policy_lr),
            buffer: ReplayBuffer::new(config.replay.capacity, spec.obs_dims[slot], spec.act_dims[slot]),
            noise_rng: stream(config.seed, name, STREAM_NOISE),
            sample_rng: stream(config.seed, name, STREAM_SAMPLE),
            nets,
            teacher,
        });
    }

    let mut env_rng = stream(config.seed, "env", STREAM_ENV);
    let n = names.len();
    let total = config.schedule.total_env_steps;
    let warmup = config.schedule.warmup_steps;
    let teacher_phase = config.schedule.teacher_phase_steps;

    let mut points = Vec::new();
    let mut optima: Vec<f64> = Vec::new();
    let mut optima_known = true;
    let mut experience: Vec<Vec<EpisodeSequence>> = vec![Vec::new(); n];
    let mut teacher_in_phase = 0u64;
    let mut teacher_after_phase = 0u64;

    let mut obs: Vec<Vec<f64>> = Vec::new();
    let mut hiddens = Vec::new();
    let mut ep_obs: Vec<Vec<Vec<f32>>> = vec![Vec::new(); n];
    let mut ep_act: Vec<Vec<Vec<f32>>> = vec![Vec::new(); n];
    let mut ep_rew: Vec<f32> = Vec::new();
    let mut ep_return = 0.0f64;
    let mut ep_random = false;
    let mut ep_optimum: Option<f64> = None;
    let mut in_episode = false;

    for step0 in 0..total {
        if !in_episode {
            let ep_seed = env_rng.next_u64();
            obs = env.reset(ep_seed);
            hiddens = agents.iter().map(|a| a.nets.init_hidden()).collect();
            for slot in 0..n {
                ep_obs[slot].clear();
                ep_obs[slot].push(obs[slot].iter().map(|&v| v as f32).collect());
                ep_act[slot].clear();
            }
            ep_rew.clear();
            ep_return = 0.0;
            ep_random = step0 < warmup;
            ep_optimum = env.current_episode_optimal_return();
            in_episode = true;
        }

        let sigma = config.noise.scale_at(step0, total);
        let mut joint: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (slot, agent) in agents.iter_mut().enumerate() {
            let (low, high) = spec.action_bounds(slot);
            let action = if ep_random {
                (0..spec.act_dims[slot])
                    .map(|d| agent.noise_rng.gen_range(low[d]..high[d]))
                    .collect()
            } else {
                let (a, h) =
                    select_action(&agent.nets, &obs[slot], &hiddens[slot], sigma, &mut agent.noise_rng);
                hiddens[slot] = h;
                a
            };
            joint.push(action);
        }

        let result = env.step(&joint);
        for slot in 0..n {
            ep_obs[slot].push(result.observations[slot].iter().map(|&v| v as f32).collect());
            ep_act[slot].push(joint[slot].iter().map(|&v| v as f32).collect());
        }
        ep_rew.push(result.reward as f32);
        ep_return += result.reward;
        obs = result.observations;

        if result.done {
            for (slot, agent) in agents.iter_mut().enumerate() {
                let episode = EpisodeSequence {
                    agent_id: agent.name.clone(),
                    observations: ep_obs[slot].clone(),
                    actions: ep_act[slot].clone(),
                    rewards: ep_rew.clone(),
                    dones: (0..ep_rew.len()).map(|k| k == ep_rew.len() - 1).collect(),
                    source: Source::Student,
                };
                if options.record_experience {
                    experience[slot].push(episode.clone());
                }
                agent.buffer.add_episode(episode);
            }
            points.push((step0 + 1, ep_return));
            match ep_optimum {
                Some(v) => optima.push(v),
                None => optima_known = false,
            }
            in_episode = false;
        }

        // One gradient step per agent after warmup, every train_every steps.
        if step0 + 1 > warmup && (step0 + 1) % config.schedule.train_every == 0 {
            let in_teacher_phase = step0 < teacher_phase;
            for agent in agents.iter_mut() {
                let use_teacher = in_teacher_phase && plan.is_reincarnated(&agent.name);
                let teacher_eps = if use_teacher {
                    agent.teacher.as_deref()
                } else {
                    None
                };
                let batch = match sample_mixed(
                    &agent.buffer,
                    teacher_eps,
                    config.optim.batch_size,
                    config.optim.window,
                    &mut agent.sample_rng,
                ) {
                    Ok(b) => b,
                    Err(_) => continue, // nothing stored yet
                };
                if in_teacher_phase {
                    teacher_in_phase += batch.teacher_count as u64;
                } else {
                    teacher_after_phase += batch.teacher_count as u64;
                }

                let targets =
                    critic_targets(&agent.nets, &batch.sequences, config.optim.gamma, config.optim.lambda);
                let (mut tape, loss) = critic_loss(&agent.nets, &batch.sequences, &targets);
                grad(&mut tape, loss, agent.nets.critic_store_mut()).map_err(|source| {
                    RunError::Numeric { agent: agent.name.clone(), env_step: step0, source }
                })?;
                agent.critic_opt.step(agent.nets.critic_store_mut());

                let (mut tape, loss) = policy_loss(&agent.nets, &batch.sequences);
                grad(&mut tape, loss, agent.nets.policy_store_mut()).map_err(|source| {
                    RunError::Numeric { agent: agent.name.clone(), env_step: step0, source }
                })?;
                agent.policy_opt.step(agent.nets.policy_store_mut());

                agent.nets.soft_update(config.optim.tau);
            }
        }
    }

    let final_weights = agents
        .iter()
        .map(|a| (a.name.clone(), a.nets.export_weights()))
        .collect();

    Ok(RunResult {
        curve: ReturnCurve {
            points,
            plan: plan.clone(),
            seed: config.seed,
            dataset_quality: if quality_tags.is_empty() {
                None
            } else {
                Some(quality_tags.join("+"))
            },
        },
        episode_optima: if optima_known && !optima.is_empty() {
            Some(optima)
        } else {
            None
        },
        teacher_sequences_in_phase: teacher_in_phase,
        teacher_sequences_after_phase: teacher_after_phase,
        teacher_files,
        dataset_hashes,
        experience: options.record_experience.then_some(experience),
        final_weights,
    })
}
