//! Sweep harness: enumerate reincarnation subsets, execute (plan x seed)
//! runs with idempotent resume, and summarize the results.

mod metrics;
mod store;

pub use metrics::{
    aggregate_by_x, average_return_metric, default_eval_grid, max_return_metric, metrics_csv,
    rank_plans, summarize_plans, MaxReturn, MetricError, MetricValue, MetricsSummary, XAggregate,
};
pub use store::{config_hash, run_id, CurveRecord, ManifestNotes, ResultsStore, RunManifest, StoreError};

use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};

use crate::learner::{run_training, ReincarnationPlan, TrainingConfig};

/// Bitmasks of all agent subsets, ascending; with `x` given, only subsets of
/// that size (there are `C(n, x)` of them).
pub fn enumerate_masks(n: usize, x: Option<usize>) -> Vec<u64> {
    assert!(n <= 20, "subset enumeration beyond 20 agents is not sensible");
    if let Some(x) = x {
        assert!(x <= n, "cannot reincarnate {x} of {n} agents");
    }
    (0..(1u64 << n))
        .filter(|m| x.map_or(true, |x| m.count_ones() as usize == x))
        .collect()
}

/// All reincarnation plans over the given agents, in ascending bitmask
/// order; bit `i` of the mask selects `agents[i]`.
pub fn enumerate_subsets(agents: &[String], x: Option<usize>) -> Vec<ReincarnationPlan> {
    enumerate_masks(agents.len(), x)
        .into_iter()
        .map(|m| ReincarnationPlan::from_bitmask(agents, m))
        .collect()
}

/// Which subsets a sweep covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetFilter {
    /// All `2^n` subsets.
    All,
    /// Only subsets with exactly `x` reincarnated agents.
    FixedX(usize),
    /// Explicit plan bitmasks.
    Explicit(Vec<u64>),
}

/// A full sweep: base config, subset filter, seed list, parallelism cap.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: TrainingConfig,
    pub subsets: SubsetFilter,
    pub seeds: Vec<u64>,
    pub parallelism: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("seed list must not be empty".to_string());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err("seed list must not repeat seeds".to_string());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".to_string());
        }
        Ok(())
    }

    pub fn plans(&self) -> Vec<ReincarnationPlan> {
        let names = self.base.env.spec().agent_names;
        match &self.subsets {
            SubsetFilter::All => enumerate_subsets(&names, None),
            SubsetFilter::FixedX(x) => enumerate_subsets(&names, Some(*x)),
            SubsetFilter::Explicit(masks) => masks
                .iter()
                .map(|m| ReincarnationPlan::from_bitmask(&names, *m))
                .collect(),
        }
    }
}

/// What a sweep invocation did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Runs every (plan, seed) pair into the store. Pairs whose manifest already
/// exists are skipped, so re-invoking after an interruption completes the
/// sweep without redoing finished work. Individual run failures are recorded
/// under `failures/` and never abort the sweep.
pub fn run_sweep(spec: &SweepSpec, store: &ResultsStore) -> Result<SweepSummary, StoreError> {
    spec.validate().map_err(|e| StoreError::Corrupt {
        path: store.root().to_path_buf(),
        detail: e,
    })?;
    let names = spec.base.env.spec().agent_names;
    let plans = spec.plans();

    let mut jobs = Vec::new();
    let mut skipped = 0usize;
    for plan in &plans {
        for &seed in &spec.seeds {
            let id = run_id(plan.bitmask(&names), seed);
            if store.is_completed(&id) {
                skipped += 1;
            } else {
                jobs.push((plan.clone(), seed, id));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.min(jobs.len().max(1)))
        .build()
        .expect("thread pool");

    let results: Vec<Result<(), String>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|(plan, seed, id)| {
                let config = spec.base.clone().with_seed(*seed);
                let outcome = catch_unwind(AssertUnwindSafe(|| run_training(&config, plan)));
                match outcome {
                    Ok(Ok(result)) => match store.write_run(&config, plan, *seed, &result) {
                        Ok(_) => Ok(()),
                        Err(e) => {
                            let _ = store.write_failure(id, &e.to_string());
                            Err(e.to_string())
                        }
                    },
                    Ok(Err(e)) => {
                        let _ = store.write_failure(id, &e.to_string());
                        Err(e.to_string())
                    }
                    Err(panic) => {
                        let msg = panic
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".to_string());
                        let _ = store.write_failure(id, &msg);
                        Err(msg)
                    }
                }
            })
            .collect()
    });

    let failed = results.iter().filter(|r| r.is_err()).count();
    Ok(SweepSummary {
        executed: results.len() - failed,
        skipped,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvKind;

    fn factorial(k: u128) -> u128 {
        (1..=k).product::<u128>().max(1)
    }

    fn binomial(n: usize, x: usize) -> u128 {
        factorial(n as u128) / (factorial(x as u128) * factorial((n - x) as u128))
    }

    #[test]
    fn two_to_the_six_subsets() {
        assert_eq!(enumerate_masks(6, None).len(), 64);
    }

    #[test]
    fn twenty_ways_to_pick_three_of_six() {
        assert_eq!(enumerate_masks(6, Some(3)).len(), 20);
    }

    #[test]
    fn one_agent_has_two_plans() {
        let names = vec!["A0".to_string()];
        let plans = enumerate_subsets(&names, None);
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[0].x(), 0);
        assert_eq!(plans[1].x(), 1);
    }

    #[test]
    fn counts_match_factorial_oracle_up_to_ten() {
        for n in 0..=10 {
            assert_eq!(enumerate_masks(n, None).len() as u128, 1u128 << n);
            let mut total = 0usize;
            for x in 0..=n {
                let count = enumerate_masks(n, Some(x)).len();
                assert_eq!(count as u128, binomial(n, x), "C({n},{x})");
                total += count;
            }
            assert_eq!(total as u128, 1u128 << n, "per-x subsets partition 2^n");
        }
    }

    #[test]
    fn masks_are_ascending_and_unique() {
        let masks = enumerate_masks(5, None);
        for w in masks.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    fn tiny_sweep(dir: &std::path::Path, seeds: Vec<u64>) -> (SweepSpec, ResultsStore) {
        let ds_path = dir.join("teacher.marlds");
        tiny_sweep_with_dataset(dir, seeds, ds_path)
    }

    fn tiny_sweep_with_dataset(
        dir: &std::path::Path,
        seeds: Vec<u64>,
        ds_path: std::path::PathBuf,
    ) -> (SweepSpec, ResultsStore) {
        if !ds_path.exists() {
            let ds = crate::testutil::scripted_reacher_dataset(2, 10, 3, 500);
            crate::replay::save_dataset(&ds, &ds_path).unwrap();
        }

        let mut base = TrainingConfig::new(EnvKind::JointReacher {
            n_agents: 2,
            episode_length: 10,
        });
        base.schedule.total_env_steps = 60;
        base.schedule.teacher_phase_steps = 30;
        base.schedule.warmup_steps = 20;
        base.schedule.train_every = 10;
        base.optim.window = 5;
        base.optim.batch_size = 4;
        base.arch.gru_hidden = 3;
        base.arch.mlp_hidden = 3;
        base.teacher.dataset = Some(ds_path);
        let spec = SweepSpec {
            base,
            subsets: SubsetFilter::Explicit(vec![0]),
            seeds,
            parallelism: 2,
        };
        let store = ResultsStore::open(dir).unwrap();
        (spec, store)
    }

    #[test]
    fn sweep_writes_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let (mut spec, store) = tiny_sweep(dir.path(), vec![0, 1]);
        spec.subsets = SubsetFilter::All; // 4 plans x 2 seeds = 8 runs
        let s1 = run_sweep(&spec, &store).unwrap();
        assert_eq!(s1, SweepSummary { executed: 8, skipped: 0, failed: 0 });
        assert_eq!(store.manifests().unwrap().len(), 8);

        let s2 = run_sweep(&spec, &store).unwrap();
        assert_eq!(s2, SweepSummary { executed: 0, skipped: 8, failed: 0 });
    }

    #[test]
    fn interrupted_sweep_resumes_to_identical_store() {
        let shared = tempfile::tempdir().unwrap();
        let ds_path = shared.path().join("teacher.marlds");
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let (spec_a, store_a) =
            tiny_sweep_with_dataset(dir_a.path(), vec![0, 1, 2], ds_path.clone());
        run_sweep(&spec_a, &store_a).unwrap();

        // Simulate an interruption: run the same sweep elsewhere, then delete
        // one run's manifest and truncate its curve before resuming.
        let (spec_b, store_b) =
            tiny_sweep_with_dataset(dir_b.path(), vec![0, 1, 2], ds_path.clone());
        run_sweep(&spec_b, &store_b).unwrap();
        let victim = run_id(0, 1);
        std::fs::remove_file(store_b.manifest_path(&victim)).unwrap();
        std::fs::write(store_b.curve_path(&victim), b"{\"run_id\":\"trunc").unwrap();
        let resumed = run_sweep(&spec_b, &store_b).unwrap();
        assert_eq!(resumed.executed, 1);
        assert_eq!(resumed.skipped, 2);

        // Byte-for-byte identical stores.
        for sub in ["manifests", "curves", "checkpoints"] {
            let mut names: Vec<String> = std::fs::read_dir(dir_a.path().join(sub))
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .collect();
            names.sort();
            for name in names {
                let a = std::fs::read(dir_a.path().join(sub).join(&name)).unwrap();
                let b = std::fs::read(dir_b.path().join(sub).join(&name)).unwrap();
                assert_eq!(a, b, "{sub}/{name} differs after resume");
            }
        }
    }

    #[test]
    fn failures_are_recorded_and_do_not_abort() {
        let dir = tempfile::tempdir().unwrap();
        let (mut spec, store) = tiny_sweep(dir.path(), vec![0]);
        // Point the reincarnated plan at a missing dataset file: the run
        // fails its preflight, but the sweep itself succeeds.
        spec.base.teacher.dataset = Some(dir.path().join("no-such-file.marlds"));
        spec.subsets = SubsetFilter::Explicit(vec![0b11]);
        let s = run_sweep(&spec, &store).unwrap();
        assert_eq!(s, SweepSummary { executed: 0, skipped: 0, failed: 1 });
        assert!(store.failure_path(&run_id(0b11, 0)).exists());
        assert!(!store.is_completed(&run_id(0b11, 0)));
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (mut spec, store) = tiny_sweep(dir.path(), vec![1, 1]);
        spec.seeds = vec![1, 1];
        assert!(run_sweep(&spec, &store).is_err());
    }
}
