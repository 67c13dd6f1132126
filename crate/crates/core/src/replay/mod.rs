//! Sequence replay buffers, teacher datasets, and the rehearsal sampler.
//!
//! Experience is stored as whole-episode sequences because the agents are
//! recurrent: training consumes fixed-length windows cut from episodes, with
//! hidden state rebuilt from zeros at each window start. Payloads are f32,
//! matching the on-disk dataset format exactly so save/load round-trips are
//! bit-identical.

mod format;

pub use format::{load_dataset, save_dataset, DatasetError, DatasetHeader, FORMAT_VERSION, MAGIC};

use std::collections::VecDeque;

use rand::Rng;

use crate::env::agent_names_for;

/// Where a stored sequence came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Student,
    Teacher,
}

/// One agent's view of one episode: `T + 1` observations bracketing `T`
/// actions, rewards, and done flags.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSequence {
    pub agent_id: String,
    pub observations: Vec<Vec<f32>>,
    pub actions: Vec<Vec<f32>>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    pub source: Source,
}

impl EpisodeSequence {
    /// Episode length `T`.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted return of the (shared) rewards.
    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().map(|&r| r as f64).sum()
    }

    /// Checks the length and termination invariants.
    pub fn validate(&self) {
        let t = self.len();
        assert!(t >= 1, "empty episode");
        assert_eq!(self.observations.len(), t + 1, "need T+1 observations");
        assert_eq!(self.actions.len(), t, "need T actions");
        assert_eq!(self.dones.len(), t, "need T done flags");
        assert!(self.rewards.iter().all(|r| r.is_finite()), "non-finite reward");
        let trues = self.dones.iter().filter(|&&d| d).count();
        assert!(
            trues == 1 && self.dones[t - 1],
            "exactly one done flag, at the final index"
        );
    }
}

/// A fixed-length window cut from an episode, the unit a training batch is
/// made of. Carries `window + 1` observations so the final step can
/// bootstrap.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceWindow {
    pub observations: Vec<Vec<f32>>,
    pub actions: Vec<Vec<f32>>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    pub source: Source,
}

impl SequenceWindow {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn cut(episode: &EpisodeSequence, start: usize, window: usize) -> Self {
        SequenceWindow {
            observations: episode.observations[start..start + window + 1].to_vec(),
            actions: episode.actions[start..start + window].to_vec(),
            rewards: episode.rewards[start..start + window].to_vec(),
            dones: episode.dones[start..start + window].to_vec(),
            source: episode.source,
        }
    }
}

/// A rehearsal mini-batch: teacher windows first, then student windows.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub sequences: Vec<SequenceWindow>,
    pub teacher_count: usize,
    pub student_count: usize,
}

/// Raised by the sampler when the student buffer has nothing to offer yet;
/// the caller skips the training step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NotReady;

impl std::fmt::Display for NotReady {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "replay buffer is empty")
    }
}

impl std::error::Error for NotReady {}

/// FIFO episode store for one agent.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    ring: VecDeque<EpisodeSequence>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity >= 1);
        ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            ring: VecDeque::new(),
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    /// Total episodes ever added, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeSequence> {
        self.ring.iter()
    }

    /// Stores an episode, evicting the oldest when over capacity.
    pub fn add_episode(&mut self, episode: EpisodeSequence) {
        episode.validate();
        assert!(
            episode.observations.iter().all(|o| o.len() == self.obs_dim),
            "observation width {} expected {}",
            episode.observations[0].len(),
            self.obs_dim
        );
        assert!(
            episode.actions.iter().all(|a| a.len() == self.act_dim),
            "action width mismatch"
        );
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(episode);
        self.inserted += 1;
    }

    fn sample_window<R: Rng>(&self, window: usize, rng: &mut R) -> SequenceWindow {
        let idx = rng.gen_range(0..self.ring.len());
        let ep = &self.ring[idx];
        assert!(window <= ep.len(), "window {} > episode length {}", window, ep.len());
        let start = rng.gen_range(0..=ep.len() - window);
        SequenceWindow::cut(ep, start, window)
    }
}

fn sample_teacher_window<R: Rng>(
    episodes: &[EpisodeSequence],
    window: usize,
    rng: &mut R,
) -> SequenceWindow {
    let idx = rng.gen_range(0..episodes.len());
    let ep = &episodes[idx];
    assert!(window <= ep.len(), "window {} > episode length {}", window, ep.len());
    let start = rng.gen_range(0..=ep.len() - window);
    let mut w = SequenceWindow::cut(ep, start, window);
    w.source = Source::Teacher;
    w
}

/// Draws a rehearsal batch: exactly `floor(batch_size / 2)` teacher windows
/// when teacher episodes are available, the rest from the student buffer.
/// Without a teacher the whole batch is student data. Sampling is uniform
/// with replacement at both the episode and window level.
pub fn sample_mixed<R: Rng>(
    buffer: &ReplayBuffer,
    teacher: Option<&[EpisodeSequence]>,
    batch_size: usize,
    window: usize,
    rng: &mut R,
) -> Result<MixedBatch, NotReady> {
    assert!(batch_size >= 1);
    if buffer.is_empty() {
        return Err(NotReady);
    }
    let teacher_episodes = teacher.filter(|eps| !eps.is_empty());
    let teacher_count = match teacher_episodes {
        Some(_) => batch_size / 2,
        None => 0,
    };
    let student_count = batch_size - teacher_count;
    let mut sequences = Vec::with_capacity(batch_size);
    if let Some(eps) = teacher_episodes {
        for _ in 0..teacher_count {
            sequences.push(sample_teacher_window(eps, window, rng));
        }
    }
    for _ in 0..student_count {
        sequences.push(buffer.sample_window(window, rng));
    }
    Ok(MixedBatch {
        sequences,
        teacher_count,
        student_count,
    })
}

/// Offline teacher episodes for all agents of one environment, with
/// provenance. `episodes[i]` is the list for agent index `i`; lists are
/// index-aligned and equal length (episodes are synchronized across agents).
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherDataset {
    pub env_id: String,
    pub n_agents: usize,
    pub obs_dims: Vec<usize>,
    pub act_dims: Vec<usize>,
    pub episode_length: usize,
    pub quality_tag: String,
    pub source_run_id: String,
    pub episodes: Vec<Vec<EpisodeSequence>>,
}

impl TeacherDataset {
    pub fn new(
        env_id: impl Into<String>,
        obs_dims: Vec<usize>,
        act_dims: Vec<usize>,
        episode_length: usize,
        quality_tag: impl Into<String>,
        source_run_id: impl Into<String>,
        episodes: Vec<Vec<EpisodeSequence>>,
    ) -> Self {
        let d = TeacherDataset {
            env_id: env_id.into(),
            n_agents: episodes.len(),
            obs_dims,
            act_dims,
            episode_length,
            quality_tag: quality_tag.into(),
            source_run_id: source_run_id.into(),
            episodes,
        };
        d.validate();
        d
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.first().map_or(0, |e| e.len())
    }

    pub fn validate(&self) {
        assert_eq!(self.n_agents, self.episodes.len());
        assert_eq!(self.obs_dims.len(), self.n_agents);
        assert_eq!(self.act_dims.len(), self.n_agents);
        let count = self.episode_count();
        for (i, eps) in self.episodes.iter().enumerate() {
            assert_eq!(eps.len(), count, "agent {i} episode count out of sync");
            for ep in eps {
                ep.validate();
                assert_eq!(ep.len(), self.episode_length, "episode length mismatch");
                assert!(ep.observations.iter().all(|o| o.len() == self.obs_dims[i]));
                assert!(ep.actions.iter().all(|a| a.len() == self.act_dims[i]));
            }
        }
    }

    /// Episode list for the agent with a given canonical name, resolved
    /// through the environment registry.
    pub fn episodes_for(&self, agent_name: &str) -> Option<&[EpisodeSequence]> {
        let names = agent_names_for(&self.env_id, self.n_agents);
        let idx = names.iter().position(|n| n == agent_name)?;
        Some(&self.episodes[idx])
    }
}

/// Errors from quality slicing.
#[derive(Clone, Debug, PartialEq)]
pub enum SliceError {
    EmptyLog,
}

impl std::fmt::Display for SliceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SliceError::EmptyLog => write!(f, "cannot slice an empty experience log"),
        }
    }
}

impl std::error::Error for SliceError {}

/// Keeps the trailing `ceil(fraction * count)` episodes of an ordered
/// experience log, preserving order. Fraction 0.2 is tagged `good`, 0.4 is
/// tagged `good-medium`, anything else `custom`.
pub fn slice_by_quality(
    log: &TeacherDataset,
    trailing_fraction: f64,
) -> Result<TeacherDataset, SliceError> {
    assert!(
        trailing_fraction > 0.0 && trailing_fraction <= 1.0,
        "fraction must be in (0, 1], got {trailing_fraction}"
    );
    let count = log.episode_count();
    if count == 0 {
        return Err(SliceError::EmptyLog);
    }
    let keep = ((trailing_fraction * count as f64).ceil() as usize).clamp(1, count);
    let tag = if trailing_fraction == 0.2 {
        "good"
    } else if trailing_fraction == 0.4 {
        "good-medium"
    } else {
        "custom"
    };
    let episodes = log
        .episodes
        .iter()
        .map(|eps| {
            eps[count - keep..]
                .iter()
                .cloned()
                .map(|mut ep| {
                    ep.source = Source::Teacher;
                    ep
                })
                .collect()
        })
        .collect();
    Ok(TeacherDataset {
        env_id: log.env_id.clone(),
        n_agents: log.n_agents,
        obs_dims: log.obs_dims.clone(),
        act_dims: log.act_dims.clone(),
        episode_length: log.episode_length,
        quality_tag: tag.to_string(),
        source_run_id: log.source_run_id.clone(),
        episodes,
    })
}

/// Equal-width histogram of undiscounted episode returns. Returns the
/// `bin_count + 1` edges and per-bin counts; counts sum to the episode count.
pub fn dataset_return_histogram(
    dataset: &TeacherDataset,
    bin_count: usize,
) -> (Vec<f64>, Vec<usize>) {
    assert!(bin_count >= 1);
    assert!(dataset.episode_count() > 0, "histogram of an empty dataset");
    let returns: Vec<f64> = dataset.episodes[0]
        .iter()
        .map(|ep| ep.undiscounted_return())
        .collect();
    let min = returns.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bin_count as f64;
    let edges: Vec<f64> = (0..=bin_count).map(|i| min + width * i as f64).collect();
    let mut counts = vec![0usize; bin_count];
    for r in &returns {
        let idx = if width == 0.0 {
            0
        } else {
            (((r - min) / width) as usize).min(bin_count - 1)
        };
        counts[idx] += 1;
    }
    (edges, counts)
}

#[cfg(test)]
pub(crate) fn test_episode(
    agent_id: &str,
    t: usize,
    obs_dim: usize,
    act_dim: usize,
    fill: f32,
) -> EpisodeSequence {
    EpisodeSequence {
        agent_id: agent_id.to_string(),
        observations: (0..=t).map(|k| vec![fill + k as f32; obs_dim]).collect(),
        actions: (0..t).map(|k| vec![fill * 0.5 - k as f32; act_dim]).collect(),
        rewards: (0..t).map(|k| fill + 0.1 * k as f32).collect(),
        dones: (0..t).map(|k| k == t - 1).collect(),
        source: Source::Student,
    }
}
