//! All hyperparameters and schedule cut-points for one run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::env::EnvKind;

/// Step budget and cut-points. The default keeps the published 4:1 ratio of
/// with-teacher to without-teacher steps at desk scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Environment steps to execute in total.
    pub total_env_steps: u64,
    /// Steps during which reincarnated agents may rehearse teacher data;
    /// afterwards every batch is student-only.
    pub teacher_phase_steps: u64,
    /// Episodes starting before this step use uniform random actions and no
    /// gradient steps happen.
    pub warmup_steps: u64,
    /// One gradient step per agent every this many environment steps.
    pub train_every: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            total_env_steps: 25_000,
            teacher_phase_steps: 20_000,
            warmup_steps: 1_000,
            train_every: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    /// Sequence window length for recurrent training.
    pub window: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            gamma: 0.99,
            lambda: 0.8,
            tau: 0.005,
            policy_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 32,
            window: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSettings {
    pub gru_hidden: usize,
    pub mlp_hidden: usize,
}

impl Default for ArchSettings {
    fn default() -> Self {
        ArchSettings {
            gru_hidden: 64,
            mlp_hidden: 64,
        }
    }
}

/// Gaussian exploration noise, decayed linearly from `start` to `end` over
/// the first `decay_fraction` of training, then held at `end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            start: 0.1,
            end: 0.02,
            decay_fraction: 0.5,
        }
    }
}

impl NoiseConfig {
    pub fn scale_at(&self, env_step: u64, total_steps: u64) -> f64 {
        let decay_steps = (self.decay_fraction * total_steps as f64).round() as u64;
        if decay_steps == 0 || env_step >= decay_steps {
            self.end
        } else {
            let frac = env_step as f64 / decay_steps as f64;
            self.start + (self.end - self.start) * frac
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaySettings {
    /// Maximum stored episodes per agent.
    pub capacity: usize,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        ReplaySettings { capacity: 5_000 }
    }
}

/// Where reincarnated agents find their teacher data. `dataset` applies to
/// every reincarnated agent unless overridden per agent in `datasets`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub dataset: Option<PathBuf>,
    pub datasets: BTreeMap<String, PathBuf>,
}

impl TeacherConfig {
    pub fn path_for(&self, agent: &str) -> Option<&PathBuf> {
        self.datasets.get(agent).or(self.dataset.as_ref())
    }
}

/// Everything one run needs besides the reincarnation plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub env: EnvKind,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub arch: ArchSettings,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub replay: ReplaySettings,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub seed: u64,
}

impl TrainingConfig {
    pub fn new(env: EnvKind) -> Self {
        TrainingConfig {
            env,
            schedule: ScheduleConfig::default(),
            optim: OptimConfig::default(),
            arch: ArchSettings::default(),
            noise: NoiseConfig::default(),
            replay: ReplaySettings::default(),
            teacher: TeacherConfig::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Field-level sanity checks, run before any environment stepping.
    pub fn validate(&self) -> Result<(), String> {
        let s = &self.schedule;
        if s.teacher_phase_steps > s.total_env_steps {
            return Err(format!(
                "schedule.teacher_phase_steps ({}) exceeds total_env_steps ({})",
                s.teacher_phase_steps, s.total_env_steps
            ));
        }
        let o = &self.optim;
        if !(o.gamma > 0.0 && o.gamma <= 1.0) {
            return Err(format!("optim.gamma must be in (0,1], got {}", o.gamma));
        }
        if !(0.0..=1.0).contains(&o.lambda) {
            return Err(format!("optim.lambda must be in [0,1], got {}", o.lambda));
        }
        if !(0.0..=1.0).contains(&o.tau) {
            return Err(format!("optim.tau must be in [0,1], got {}", o.tau));
        }
        if o.batch_size == 0 || o.window == 0 {
            return Err("optim.batch_size and optim.window must be positive".to_string());
        }
        let spec = self.env.spec();
        if o.window > spec.episode_length {
            return Err(format!(
                "optim.window ({}) exceeds episode length ({})",
                o.window, spec.episode_length
            ));
        }
        if self.noise.start < 0.0 || self.noise.end < 0.0 {
            return Err("noise scales must be nonnegative".to_string());
        }
        if !(0.0..=1.0).contains(&self.noise.decay_fraction) {
            return Err("noise.decay_fraction must be in [0,1]".to_string());
        }
        if self.replay.capacity == 0 {
            return Err("replay.capacity must be positive".to_string());
        }
        Ok(())
    }
}
