//! Subcommand bodies. Each returns the text to print; errors carry their
//! exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cookielab_core::model::{
    validate_condition_b, validate_condition_c_plus, validate_condition_e, KernelKind,
};

use crate::analyze::{analyze, AnalysisInput};
use crate::checks::{run_checks, ChecksOutcome, SuiteSizes};
use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::output::{simulation_artifacts, Artifacts, HostInfo, RunManifest};
use crate::runner::{pool, run_ensemble, EnsembleSpec};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const CHECKS_NAME: &str = "checks.json";
const PROBE_COUNT: usize = 64;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Loads the config (defaults when `path` is `None`) and applies overrides.
pub fn resolve_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = ov.seed {
        cfg.run.master_seed = s;
    }
    if let Some(t) = ov.threads {
        cfg.run.threads = t;
    }
    if let Some(o) = &ov.out {
        cfg.output.dir = o.clone();
    }
    if let Some(f) = ov.format {
        cfg.output.formats = vec![f];
    }
    cfg.normalize()?;
    Ok(cfg)
}

pub fn cmd_print_defaults() -> String {
    RunConfig::default().to_toml()
}

/// Prints `K`, `lambda`, `(h, r)` and, for random environments, `kappa`.
/// Any violated condition is an error.
pub fn cmd_validate(cfg: &RunConfig) -> Result<String, CliError> {
    let kernel = cfg.kernel()?;
    let dir = cfg.direction()?;
    let mut out = String::new();
    let k = validate_condition_b(&kernel)?;
    let _ = writeln!(out, "K = {k}");
    let drift = validate_condition_c_plus(&kernel, &dir)?;
    match drift.lambda {
        Some(l) => {
            let _ = writeln!(out, "lambda = {l}");
        }
        None => {
            let _ = writeln!(out, "lambda = none (no cookies reachable)");
        }
    }
    if let KernelKind::Erwre(env) = kernel.kind() {
        let (kappa, lambda) = env.validate(&dir)?;
        let _ = writeln!(out, "kappa = {kappa}");
        let _ = writeln!(out, "environment lambda = {lambda}");
    }
    let e = validate_condition_e(&kernel, &dir, PROBE_COUNT)?;
    let _ = writeln!(out, "(h, r) = ({}, {})", e.h, e.r);
    if !drift.c_plus {
        return Err(CliError::Condition(format!(
            "{out}first-visit drift along ell is {}, not positive",
            drift.lambda.unwrap_or(0.0)
        )));
    }
    let _ = writeln!(out, "all conditions hold");
    Ok(out)
}

pub struct SimulateOutcome {
    pub manifest: RunManifest,
    pub written: Vec<PathBuf>,
}

/// Runs the ensemble, writes data files and the manifest.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutcome, CliError> {
    let start = Instant::now();
    let kernel = cfg.kernel()?;
    let dir = cfg.direction()?;
    let mut spec = EnsembleSpec::new(
        kernel,
        dir,
        cfg.run.horizon.checkpoints(),
        cfg.run.replicas,
        cfg.run.master_seed,
    );
    spec.confirm_margin = cfg.analysis.confirm_margin;
    spec.keep_paths = cfg.run.trajectories;
    let pool = pool(cfg.run.threads)?;
    let runs = run_ensemble(&spec, &pool)?;
    let art = simulation_artifacts(cfg, &runs, &cfg.output.formats);
    drop(runs);
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        rng_algorithm: "counter-based splitmix64 stream".into(),
        master_seed: cfg.run.master_seed,
        replicas: cfg.run.replicas,
        environment_seeds: spec.environment_seeds(),
        threads: pool.current_num_threads(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        host: HostInfo::current(),
        outputs: art.hashes(),
        config: cfg.clone(),
    };
    let mut written = art.write_all(&cfg.output.dir)?;
    let path = cfg.output.dir.join(MANIFEST_NAME);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    if let Err(e) = std::fs::write(&path, bytes) {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(CliError::Io {
            path: path.display().to_string(),
            source: e,
        });
    }
    written.push(path);
    Ok(SimulateOutcome { manifest, written })
}

/// Reads the outputs of `cmd_simulate` from `dir` and writes reports and
/// plot data next to them.
pub fn cmd_analyze(cfg: &RunConfig, dir: &Path) -> Result<Artifacts, CliError> {
    if !dir.is_dir() {
        return Err(CliError::MissingInput(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let input = AnalysisInput::load(cfg, dir)?;
    let art = analyze(cfg, &input)?;
    art.write_all(dir)?;
    Ok(art)
}

/// Runs the check suite and writes `checks.json` under `dir`.
pub fn cmd_checks(
    seed: u64,
    threads: usize,
    sizes: &SuiteSizes,
    dir: &Path,
) -> Result<ChecksOutcome, CliError> {
    let pool = pool(threads)?;
    let outcome = run_checks(sizes, seed, &pool)?;
    let mut art = Artifacts::default();
    art.add(CHECKS_NAME, outcome.to_bytes());
    art.write_all(dir)?;
    Ok(outcome)
}

pub fn checks_summary(outcome: &ChecksOutcome) -> String {
    let mut s = String::new();
    for r in &outcome.results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "[{tag}] {:>15}  {}: {}", r.id, r.title, r.summary);
    }
    s
}
