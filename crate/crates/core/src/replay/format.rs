//! On-disk dataset format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            8 bytes  "MARLDS1\0"
//! header_len       u32
//! header           UTF-8 JSON, header_len bytes
//! episodes         episode_count records
//! ```
//!
//! Each episode record holds, for each agent in index order, four arrays in
//! the order observations, actions, rewards, dones. An array is a u32
//! element count followed by that many f32 values (dones encoded 0.0/1.0).
//! Observations flatten `(T+1) * obs_dim` values; actions `T * act_dim`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpisodeSequence, Source, TeacherDataset};
use crate::env::agent_names_for;

pub const MAGIC: &[u8; 8] = b"MARLDS1\0";
pub const FORMAT_VERSION: u32 = 1;

/// The self-describing JSON header at the front of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub env_id: String,
    pub n_agents: usize,
    pub obs_dims: Vec<usize>,
    pub act_dims: Vec<usize>,
    pub episode_length: usize,
    pub quality_tag: String,
    pub source_run_id: String,
    pub episode_count: usize,
}

/// Typed load/save failures. Corrupt files report what went wrong instead of
/// crashing.
#[derive(Debug)]
pub enum DatasetError {
    Io(io::Error),
    /// The file does not start with the dataset magic bytes.
    BadMagic { got: Vec<u8> },
    /// The file ended before the promised content.
    Truncated { while_reading: &'static str },
    /// The JSON header did not parse.
    HeaderParse(String),
    /// Header declares an unsupported format version.
    UnsupportedVersion { got: u32 },
    /// Header's agent count disagrees with its dimension lists or the body.
    AgentCountMismatch { expected: usize, got: usize },
    /// An array in the body has the wrong element count for the header dims.
    DimensionMismatch {
        agent: usize,
        field: &'static str,
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Io(e) => write!(f, "i/o error: {e}"),
            DatasetError::BadMagic { got } => write!(f, "bad magic bytes {got:?}"),
            DatasetError::Truncated { while_reading } => {
                write!(f, "file truncated while reading {while_reading}")
            }
            DatasetError::HeaderParse(msg) => write!(f, "malformed header: {msg}"),
            DatasetError::UnsupportedVersion { got } => {
                write!(f, "unsupported format version {got}")
            }
            DatasetError::AgentCountMismatch { expected, got } => {
                write!(f, "agent count mismatch: header says {expected}, body has {got}")
            }
            DatasetError::DimensionMismatch { agent, field, expected, got } => write!(
                f,
                "agent {agent} {field}: expected {expected} elements, got {got}"
            ),
        }
    }
}

impl std::error::Error for DatasetError {}

impl From<io::Error> for DatasetError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DatasetError::Truncated { while_reading: "data" }
        } else {
            DatasetError::Io(e)
        }
    }
}

fn write_array<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    w.write_all(&(values.len() as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<(), DatasetError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            DatasetError::Truncated { while_reading: what }
        } else {
            DatasetError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32, DatasetError> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_array(r: &mut impl Read, what: &'static str) -> Result<Vec<f32>, DatasetError> {
    let len = read_u32(r, what)? as usize;
    let mut bytes = vec![0u8; len * 4];
    read_exact_or(r, &mut bytes, what)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Serializes a dataset. The written bytes are platform-independent.
pub fn save_dataset(dataset: &TeacherDataset, path: &Path) -> Result<(), DatasetError> {
    dataset.validate();
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        env_id: dataset.env_id.clone(),
        n_agents: dataset.n_agents,
        obs_dims: dataset.obs_dims.clone(),
        act_dims: dataset.act_dims.clone(),
        episode_length: dataset.episode_length,
        quality_tag: dataset.quality_tag.clone(),
        source_run_id: dataset.source_run_id.clone(),
        episode_count: dataset.episode_count(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| DatasetError::HeaderParse(e.to_string()))?;

    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;

    for e in 0..header.episode_count {
        for agent in 0..dataset.n_agents {
            let ep = &dataset.episodes[agent][e];
            let obs_flat: Vec<f32> = ep.observations.iter().flatten().copied().collect();
            let act_flat: Vec<f32> = ep.actions.iter().flatten().copied().collect();
            let done_flat: Vec<f32> = ep.dones.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
            write_array(&mut w, &obs_flat)?;
            write_array(&mut w, &act_flat)?;
            write_array(&mut w, &ep.rewards)?;
            write_array(&mut w, &done_flat)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset back, validating magic, header, and per-array dimensions.
pub fn load_dataset(path: &Path) -> Result<TeacherDataset, DatasetError> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(DatasetError::BadMagic { got: magic.to_vec() });
    }

    let header_len = read_u32(&mut r, "header length")? as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_exact_or(&mut r, &mut header_bytes, "header")?;
    let header: DatasetHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| DatasetError::HeaderParse(e.to_string()))?;

    if header.format_version != FORMAT_VERSION {
        return Err(DatasetError::UnsupportedVersion { got: header.format_version });
    }
    if header.obs_dims.len() != header.n_agents {
        return Err(DatasetError::AgentCountMismatch {
            expected: header.n_agents,
            got: header.obs_dims.len(),
        });
    }
    if header.act_dims.len() != header.n_agents {
        return Err(DatasetError::AgentCountMismatch {
            expected: header.n_agents,
            got: header.act_dims.len(),
        });
    }

    let t = header.episode_length;
    let names = agent_names_for(&header.env_id, header.n_agents);
    let mut episodes: Vec<Vec<EpisodeSequence>> = vec![Vec::new(); header.n_agents];
    for _ in 0..header.episode_count {
        for agent in 0..header.n_agents {
            let obs_dim = header.obs_dims[agent];
            let act_dim = header.act_dims[agent];

            let obs_flat = read_array(&mut r, "observations")?;
            if obs_flat.len() != (t + 1) * obs_dim {
                return Err(DatasetError::DimensionMismatch {
                    agent,
                    field: "observations",
                    expected: (t + 1) * obs_dim,
                    got: obs_flat.len(),
                });
            }
            let act_flat = read_array(&mut r, "actions")?;
            if act_flat.len() != t * act_dim {
                return Err(DatasetError::DimensionMismatch {
                    agent,
                    field: "actions",
                    expected: t * act_dim,
                    got: act_flat.len(),
                });
            }
            let rewards = read_array(&mut r, "rewards")?;
            if rewards.len() != t {
                return Err(DatasetError::DimensionMismatch {
                    agent,
                    field: "rewards",
                    expected: t,
                    got: rewards.len(),
                });
            }
            let done_flat = read_array(&mut r, "dones")?;
            if done_flat.len() != t {
                return Err(DatasetError::DimensionMismatch {
                    agent,
                    field: "dones",
                    expected: t,
                    got: done_flat.len(),
                });
            }

            episodes[agent].push(EpisodeSequence {
                agent_id: names[agent].clone(),
                observations: obs_flat.chunks_exact(obs_dim).map(|c| c.to_vec()).collect(),
                actions: act_flat.chunks_exact(act_dim).map(|c| c.to_vec()).collect(),
                rewards,
                dones: done_flat.iter().map(|&d| d != 0.0).collect(),
                source: Source::Teacher,
            });
        }
    }

    // A trailing-garbage check: the body must end exactly at EOF.
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => {
            return Err(DatasetError::HeaderParse(
                "trailing bytes after declared episodes".to_string(),
            ))
        }
        Err(e) => return Err(DatasetError::Io(e)),
    }

    Ok(TeacherDataset {
        env_id: header.env_id,
        n_agents: header.n_agents,
        obs_dims: header.obs_dims,
        act_dims: header.act_dims,
        episode_length: header.episode_length,
        quality_tag: header.quality_tag,
        source_run_id: header.source_run_id,
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng) -> TeacherDataset {
        let n_agents = rng.gen_range(2..=4);
        let t = rng.gen_range(2..=6);
        let count = rng.gen_range(1..=5);
        let obs_dims: Vec<usize> = (0..n_agents).map(|_| rng.gen_range(1..=4)).collect();
        let act_dims: Vec<usize> = (0..n_agents).map(|_| rng.gen_range(1..=2)).collect();
        let names = agent_names_for("test-env", n_agents);
        let episodes = (0..n_agents)
            .map(|a| {
                (0..count)
                    .map(|_| EpisodeSequence {
                        agent_id: names[a].clone(),
                        observations: (0..=t)
                            .map(|_| (0..obs_dims[a]).map(|_| rng.gen_range(-5.0..5.0)).collect())
                            .collect(),
                        actions: (0..t)
                            .map(|_| (0..act_dims[a]).map(|_| rng.gen_range(-1.0..1.0)).collect())
                            .collect(),
                        rewards: (0..t).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                        dones: (0..t).map(|k| k == t - 1).collect(),
                        source: Source::Teacher,
                    })
                    .collect()
            })
            .collect();
        TeacherDataset::new(
            "test-env",
            obs_dims,
            act_dims,
            t,
            "custom",
            "seed-run",
            episodes,
        )
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..50 {
            let d = random_dataset(&mut rng);
            let path = dir.path().join(format!("d{i}.marlds"));
            save_dataset(&d, &path).unwrap();
            let loaded = load_dataset(&path).unwrap();
            assert_eq!(loaded, d);

            // Stability of the byte stream itself: re-saving the loaded copy
            // produces the same file.
            let path2 = dir.path().join(format!("d{i}b.marlds"));
            save_dataset(&loaded, &path2).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }

    #[test]
    fn golden_byte_prefix() {
        // Pins the on-disk layout: magic, LE header length, JSON header text.
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_dataset(&mut rng);
        let path = dir.path().join("golden.marlds");
        save_dataset(&d, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"MARLDS1\0");
        let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        let header = std::str::from_utf8(&bytes[12..12 + header_len]).unwrap();
        assert!(header.starts_with("{\"format_version\":1,\"env_id\":\"test-env\""));
    }

    #[test]
    fn bad_magic_is_a_typed_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dataset(&mut rng);
        let path = dir.path().join("x.marlds");
        save_dataset(&d, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        match load_dataset(&path) {
            Err(DatasetError::BadMagic { .. }) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_a_typed_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_dataset(&mut rng);
        let path = dir.path().join("x.marlds");
        save_dataset(&d, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match load_dataset(&path) {
            Err(DatasetError::Truncated { .. }) => {}
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn header_body_agent_count_mismatch_is_reported() {
        // Claim six agents in the header while the body carries two: the
        // loader hits the end of the file mid-record or a dim mismatch, never
        // a crash.
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_dataset(&mut rng);
        let path = dir.path().join("x.marlds");
        save_dataset(&d, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        let header: DatasetHeader = serde_json::from_slice(&bytes[12..12 + header_len]).unwrap();

        let mut forged = header.clone();
        forged.n_agents = 6;
        let forged_json = serde_json::to_vec(&forged).unwrap();
        let mut out = Vec::new();
        out.extend_from_slice(&bytes[..8]);
        out.extend_from_slice(&(forged_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&forged_json);
        out.extend_from_slice(&bytes[12 + header_len..]);
        std::fs::write(&path, &out).unwrap();
        match load_dataset(&path) {
            Err(
                DatasetError::AgentCountMismatch { .. }
                | DatasetError::Truncated { .. }
                | DatasetError::DimensionMismatch { .. },
            ) => {}
            other => panic!("expected a typed mismatch error, got {other:?}"),
        }
    }

    #[test]
    fn header_garbage_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.marlds");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&5u32.to_le_bytes());
        out.extend_from_slice(b"notjs");
        std::fs::write(&path, &out).unwrap();
        match load_dataset(&path) {
            Err(DatasetError::HeaderParse(_)) => {}
            other => panic!("expected HeaderParse, got {other:?}"),
        }
    }
}
