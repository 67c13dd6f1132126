//! Filesystem results store.
//!
//! One directory per sweep:
//!
//! ```text
//! <root>/manifests/<run_id>.json     full provenance, written last
//! <root>/curves/<run_id>.jsonl       {"run_id", "step", "return"} records
//! <root>/checkpoints/<run_id>.json   flat named weight arrays per agent
//! <root>/failures/<run_id>.json      error record for runs that failed
//! <root>/metrics.csv                 summary table, written by `metrics`
//! ```
//!
//! A run counts as completed exactly when its manifest exists; the curve and
//! checkpoint are written (via temp file + rename) before the manifest, so
//! an interrupted run is retried wholesale on resume.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::learner::{ReincarnationPlan, RunResult, TrainingConfig};

#[derive(Debug)]
pub enum StoreError {
    Io(io::Error),
    Json { path: PathBuf, detail: String },
    Corrupt { path: PathBuf, detail: String },
}

impl fmt::Display for StoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreError::Io(e) => write!(f, "store i/o error: {e}"),
            StoreError::Json { path, detail } => {
                write!(f, "bad JSON in {}: {detail}", path.display())
            }
            StoreError::Corrupt { path, detail } => {
                write!(f, "corrupt store entry {}: {detail}", path.display())
            }
        }
    }
}

impl std::error::Error for StoreError {}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e)
    }
}

/// Deterministic run identifier for a (plan, seed) pair.
pub fn run_id(plan_bitmask: u64, seed: u64) -> String {
    format!("m{plan_bitmask}_s{seed}")
}

/// One line of a curve file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveRecord {
    pub run_id: String,
    pub step: u64,
    #[serde(rename = "return")]
    pub ret: f64,
}

/// Full provenance for one run: everything needed to reproduce it bit for
/// bit. Deliberately carries no wall-clock data so that a resumed sweep's
/// store is byte-identical to an uninterrupted one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub plan_bitmask: u64,
    pub x: usize,
    pub seed: u64,
    pub plan: ReincarnationPlan,
    pub config: TrainingConfig,
    pub config_hash: String,
    pub dataset_hashes: BTreeMap<String, String>,
    pub teacher_files: BTreeMap<String, String>,
    pub dataset_quality: Option<String>,
    pub episode_count: usize,
    pub notes: ManifestNotes,
}

/// Choices that affect interpretation of the numbers but are not visible in
/// the config itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestNotes {
    pub teacher_sampling: String,
    pub return_logging: String,
}

impl Default for ManifestNotes {
    fn default() -> Self {
        ManifestNotes {
            teacher_sampling: "teacher episodes sampled independently per agent".to_string(),
            return_logging: "training-episode returns, undiscounted".to_string(),
        }
    }
}

/// Handle to a sweep's store directory.
#[derive(Clone, Debug)]
pub struct ResultsStore {
    root: PathBuf,
}

impl ResultsStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["manifests", "curves", "checkpoints", "failures"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(ResultsStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{run_id}.json"))
    }

    pub fn curve_path(&self, run_id: &str) -> PathBuf {
        self.root.join("curves").join(format!("{run_id}.jsonl"))
    }

    pub fn checkpoint_path(&self, run_id: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{run_id}.json"))
    }

    pub fn failure_path(&self, run_id: &str) -> PathBuf {
        self.root.join("failures").join(format!("{run_id}.json"))
    }

    pub fn metrics_csv_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn is_completed(&self, run_id: &str) -> bool {
        self.manifest_path(run_id).exists()
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Persists a completed run: curve, checkpoint, then manifest.
    pub fn write_run(
        &self,
        config: &TrainingConfig,
        plan: &ReincarnationPlan,
        seed: u64,
        result: &RunResult,
    ) -> Result<String, StoreError> {
        let names = config.env.spec().agent_names;
        let mask = plan.bitmask(&names);
        let id = run_id(mask, seed);

        let mut curve_bytes = Vec::new();
        for (step, ret) in &result.curve.points {
            let record = CurveRecord {
                run_id: id.clone(),
                step: *step,
                ret: *ret,
            };
            serde_json::to_writer(&mut curve_bytes, &record).map_err(|e| StoreError::Json {
                path: self.curve_path(&id),
                detail: e.to_string(),
            })?;
            curve_bytes.push(b'\n');
        }
        self.write_atomic(&self.curve_path(&id), &curve_bytes)?;

        let checkpoint = serde_json::to_vec_pretty(&result.final_weights).map_err(|e| {
            StoreError::Json {
                path: self.checkpoint_path(&id),
                detail: e.to_string(),
            }
        })?;
        self.write_atomic(&self.checkpoint_path(&id), &checkpoint)?;

        let manifest = RunManifest {
            run_id: id.clone(),
            plan_bitmask: mask,
            x: plan.x(),
            seed,
            plan: plan.clone(),
            config: config.clone(),
            config_hash: config_hash(config),
            dataset_hashes: result
                .dataset_hashes
                .iter()
                .map(|(p, h)| (p.display().to_string(), h.clone()))
                .collect(),
            teacher_files: result
                .teacher_files
                .iter()
                .map(|(a, p)| (a.clone(), p.display().to_string()))
                .collect(),
            dataset_quality: result.curve.dataset_quality.clone(),
            episode_count: result.curve.points.len(),
            notes: ManifestNotes::default(),
        };
        let manifest_bytes =
            serde_json::to_vec_pretty(&manifest).map_err(|e| StoreError::Json {
                path: self.manifest_path(&id),
                detail: e.to_string(),
            })?;
        self.write_atomic(&self.manifest_path(&id), &manifest_bytes)?;
        Ok(id)
    }

    /// Records a failed run without aborting the sweep.
    pub fn write_failure(&self, run_id: &str, error: &str) -> Result<(), StoreError> {
        let body = serde_json::json!({ "run_id": run_id, "error": error });
        self.write_atomic(&self.failure_path(run_id), body.to_string().as_bytes())?;
        Ok(())
    }

    pub fn read_manifest(&self, run_id: &str) -> Result<RunManifest, StoreError> {
        let path = self.manifest_path(run_id);
        let bytes = fs::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Json {
            path,
            detail: e.to_string(),
        })
    }

    /// All completed manifests, ordered by run id.
    pub fn manifests(&self) -> Result<Vec<RunManifest>, StoreError> {
        let dir = self.root.join("manifests");
        let mut ids: Vec<String> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().map_or(false, |e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        ids.iter().map(|id| self.read_manifest(id)).collect()
    }

    pub fn read_curve(&self, run_id: &str) -> Result<Vec<(u64, f64)>, StoreError> {
        let path = self.curve_path(run_id);
        let text = fs::read_to_string(&path)?;
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CurveRecord =
                serde_json::from_str(line).map_err(|e| StoreError::Json {
                    path: path.clone(),
                    detail: format!("line {}: {e}", lineno + 1),
                })?;
            points.push((record.step, record.ret));
        }
        Ok(points)
    }

    /// Curves of all completed runs grouped by plan bitmask, seeds in
    /// ascending order within each plan.
    pub fn curves_by_plan(&self) -> Result<BTreeMap<u64, Vec<(u64, Vec<(u64, f64)>)>>, StoreError> {
        let mut out: BTreeMap<u64, Vec<(u64, Vec<(u64, f64)>)>> = BTreeMap::new();
        for m in self.manifests()? {
            let curve = self.read_curve(&m.run_id)?;
            out.entry(m.plan_bitmask).or_default().push((m.seed, curve));
        }
        for group in out.values_mut() {
            group.sort_by_key(|(seed, _)| *seed);
        }
        Ok(out)
    }
}

/// SHA-256 of the canonical JSON serialization of a config.
pub fn config_hash(config: &TrainingConfig) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&json);
    format!("{:x}", hasher.finalize())
}
