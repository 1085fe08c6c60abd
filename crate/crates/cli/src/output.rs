//! On-disk artifacts: per-horizon stats and blocks, trajectories, manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cookielab_core::estimators::{BlockSample, SampleBlock};
use cookielab_core::trajectory::StatsRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::runner::ReplicaRun;

pub fn stats_json_name(h: u64) -> String {
    format!("stats_h{h}.json")
}

pub fn stats_csv_name(h: u64) -> String {
    format!("stats_h{h}.csv")
}

pub fn blocks_name(h: u64) -> String {
    format!("blocks_h{h}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub replica: u64,
    #[serde(flatten)]
    pub record: StatsRecord,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects files in memory, then writes them and records their hashes.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.files
            .iter()
            .map(|(k, v)| (k.clone(), sha256_hex(v)))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    /// Writes every file under `dir`; on failure the files written so far
    /// are removed.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(CliError::io(parent))?;
            }
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(CliError::io(&path)(e));
            }
            written.push(path);
        }
        Ok(written)
    }
}

pub fn stats_json(runs: &[ReplicaRun], h: u64) -> Vec<u8> {
    let rows: Vec<StatsRow> = runs
        .iter()
        .map(|r| StatsRow {
            replica: r.replica,
            record: r.at(h).record.clone(),
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&rows).expect("rows serialize");
    out.push(b'\n');
    out
}

pub fn stats_csv(runs: &[ReplicaRun], h: u64, d: usize) -> Vec<u8> {
    let mut w = Vec::new();
    write!(
        w,
        "replica,n,range,proj,min_proj,max_proj,max_local_time,max_visit_count,stayed_ahead"
    )
    .unwrap();
    for i in 1..=d {
        write!(w, ",x_{i}").unwrap();
    }
    writeln!(w).unwrap();
    for r in runs {
        let s = &r.at(h).record;
        write!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.replica,
            s.n,
            s.range,
            s.proj,
            s.min_proj,
            s.max_proj,
            s.max_local_time,
            s.max_visit_count,
            u8::from(s.stayed_ahead)
        )
        .unwrap();
        for x in &s.position {
            write!(w, ",{x}").unwrap();
        }
        writeln!(w).unwrap();
    }
    w
}

pub fn blocks_csv(runs: &[ReplicaRun], h: u64, d: usize) -> Vec<u8> {
    let mut w = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        if let Some(seq) = &r.at(h).regen {
            seq.write_blocks_csv(&mut w, d, Some(("replica", r.replica)), i == 0)
                .expect("writing to memory");
        } else if i == 0 {
            break;
        }
    }
    w
}

/// Artifacts of `cmd_simulate` for the given formats.
pub fn simulation_artifacts(cfg: &RunConfig, runs: &[ReplicaRun], formats: &[Format]) -> Artifacts {
    let d = cfg.model.d;
    let mut art = Artifacts::default();
    for h in cfg.run.horizon.checkpoints() {
        if formats.contains(&Format::Json) {
            art.add(stats_json_name(h), stats_json(runs, h));
        }
        if formats.contains(&Format::Csv) {
            art.add(stats_csv_name(h), stats_csv(runs, h, d));
        }
        art.add(blocks_name(h), blocks_csv(runs, h, d));
    }
    for r in runs {
        if let Some(p) = &r.path_csv {
            art.add(format!("trajectories/replica_{}.csv", r.replica), p.clone());
        }
    }
    art
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HostInfo {
    pub os: String,
    pub arch: String,
    pub hostname: Option<String>,
    pub available_threads: usize,
}

impl HostInfo {
    pub fn current() -> Self {
        HostInfo {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            hostname: fs::read_to_string("/etc/hostname")
                .ok()
                .map(|s| s.trim().to_string()),
            available_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub rng_algorithm: String,
    /// Replica `i` draws from the stream `(master_seed, i)`.
    pub master_seed: u64,
    pub replicas: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment_seeds: Option<Vec<u64>>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub host: HostInfo,
    pub outputs: BTreeMap<String, String>,
    pub config: RunConfig,
}

/// Reads the stats of one horizon (JSON preferred, CSV otherwise).
pub fn read_stats(dir: &Path, h: u64, d: usize) -> Result<Option<Vec<StatsRow>>, CliError> {
    let json = dir.join(stats_json_name(h));
    if json.exists() {
        let text = fs::read_to_string(&json).map_err(CliError::io(&json))?;
        let rows = serde_json::from_str(&text).map_err(|e| {
            CliError::MissingInput(format!("{} is unreadable: {e}", json.display()))
        })?;
        return Ok(Some(rows));
    }
    let csv = dir.join(stats_csv_name(h));
    if !csv.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&csv).map_err(CliError::io(&csv))?;
    let bad =
        |line: usize| CliError::MissingInput(format!("{}: malformed line {line}", csv.display()));
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 + d {
            return Err(bad(i + 1));
        }
        let u = |k: usize| f[k].parse::<u64>().map_err(|_| bad(i + 1));
        let x = |k: usize| f[k].parse::<f64>().map_err(|_| bad(i + 1));
        rows.push(StatsRow {
            replica: u(0)?,
            record: StatsRecord {
                n: u(1)?,
                range: u(2)?,
                proj: x(3)?,
                min_proj: x(4)?,
                max_proj: x(5)?,
                max_local_time: u(6)?,
                max_visit_count: u(7)? as u32,
                stayed_ahead: f[8] == "1",
                position: f[9..]
                    .iter()
                    .map(|s| s.parse::<i32>().map_err(|_| bad(i + 1)))
                    .collect::<Result<_, _>>()?,
                local_time: None,
            },
        });
    }
    Ok(Some(rows))
}

/// Rebuilds the block sample of one horizon: per replica, the last
/// confirmed block is dropped, as is any block ending within
/// `safety_window` of the horizon.
pub fn read_blocks(
    dir: &Path,
    h: u64,
    d: usize,
    safety_window: u64,
) -> Result<Option<BlockSample>, CliError> {
    let path = dir.join(blocks_name(h));
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    let bad =
        |line: usize| CliError::MissingInput(format!("{}: malformed line {line}", path.display()));
    let mut all: Vec<SampleBlock> = Vec::new();
    let mut ends: Vec<u64> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 + d {
            return Err(bad(i + 1));
        }
        let u = |k: usize| f[k].parse::<u64>().map_err(|_| bad(i + 1));
        let tau_k = u(2)?;
        let dtau = u(3)?;
        all.push(SampleBlock {
            replica: u(0)?,
            k: u(1)? as usize,
            dtau,
            dx: f[4..4 + d]
                .iter()
                .map(|s| s.parse::<i32>().map_err(|_| bad(i + 1)))
                .collect::<Result<_, _>>()?,
            dproj: f[4 + d].parse::<f64>().map_err(|_| bad(i + 1))?,
        });
        ends.push(tau_k + dtau);
    }
    let mut sample = BlockSample::new(d);
    let mut replicas = Vec::new();
    let limit = h.saturating_sub(safety_window);
    for (i, b) in all.iter().enumerate() {
        if replicas.last() != Some(&b.replica) {
            replicas.push(b.replica);
        }
        let last_of_replica = all.get(i + 1).is_none_or(|n| n.replica != b.replica);
        if last_of_replica {
            sample.dropped_last += 1;
            continue;
        }
        if safety_window > 0 && ends[i] > limit {
            sample.dropped_window += 1;
            continue;
        }
        sample.blocks.push(b.clone());
    }
    sample.replicas = replicas.len();
    Ok(Some(sample))
}
