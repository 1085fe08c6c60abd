//! Run configuration: four TOML sections, every default explicit.

use std::path::{Path, PathBuf};

use cookielab_core::environment::{EnvironmentModel, SiteBias};
use cookielab_core::estimators::Grouping;
use cookielab_core::model::{ContextTable, TableEntry};
use cookielab_core::{CookieSet, Direction, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const KNOWN_ESTIMATORS: &[&str] = &[
    "speed",
    "covariance",
    "direct_speed",
    "regen_tail",
    "range_exponent",
    "local_time",
    "site_local_time",
    "escape",
    "clt",
    "autocorrelation",
    "azuma",
    "submartingale",
    "advance",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    StandardErw,
    Symmetric,
    Generalized,
    Martingale,
    Erwre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: KernelChoice,
    pub d: usize,
    /// Direction `ell`; normalized on load.
    pub ell: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<TableEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_k: Option<f64>,
    #[serde(default)]
    pub cookie_set: CookieSet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: KernelChoice::StandardErw,
            d: 2,
            ell: vec![1.0, 0.0],
            p: Some(0.75),
            p_lo: None,
            p_hi: None,
            table: None,
            declared_k: None,
            cookie_set: CookieSet::All,
        }
    }
}

/// A single horizon or a grid of checkpoint horizons along the same runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    One(u64),
    Grid(Vec<u64>),
}

impl Horizon {
    /// Sorted, de-duplicated checkpoints.
    pub fn checkpoints(&self) -> Vec<u64> {
        let mut v = match self {
            Horizon::One(h) => vec![*h],
            Horizon::Grid(g) => g.clone(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub horizon: Horizon,
    pub replicas: u64,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    /// Number of leading replicas whose full trajectories are written.
    pub trajectories: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            horizon: Horizon::One(10_000),
            replicas: 200,
            master_seed: 1,
            threads: 0,
            trajectories: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub estimators: Vec<String>,
    pub ci_level: f64,
    pub alpha0: f64,
    pub delta: f64,
    pub b_grid: Vec<f64>,
    pub confirm_margin: f64,
    /// Blocks ending within this many steps of the horizon are dropped.
    pub safety_window: u64,
    pub batch_size: usize,
    pub ks_alpha: f64,
    pub radius_max: f64,
    /// Azuma levels as multiples of `sqrt(n)`.
    pub azuma_multipliers: Vec<f64>,
    /// Standard-error unit; defaults to blocks for random environments and
    /// replicas otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<Grouping>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            estimators: KNOWN_ESTIMATORS.iter().map(|s| s.to_string()).collect(),
            ci_level: 0.95,
            alpha0: 0.05,
            delta: 0.1,
            b_grid: (1..=9).map(|k| k as f64 / 10.0).collect(),
            confirm_margin: 0.0,
            safety_window: 0,
            batch_size: 32,
            ks_alpha: 0.01,
            radius_max: 200.0,
            azuma_multipliers: vec![1.0, 2.0, 3.0],
            grouping: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv],
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.normalize()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::MissingInput(format!("config file {} not found", path.display()))
            } else {
                CliError::io(path)(e)
            }
        })?;
        RunConfig::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks invariants and normalizes `ell` in place.
    pub fn normalize(&mut self) -> Result<(), CliError> {
        let m = &mut self.model;
        if m.d < 2 || m.d > cookielab_core::MAX_DIM {
            return Err(config_err(format!("model.d = {} must be in 2..=8", m.d)));
        }
        if m.ell.len() != m.d {
            return Err(config_err(format!(
                "model.ell has {} components, expected {}",
                m.ell.len(),
                m.d
            )));
        }
        let dir =
            Direction::normalized(&m.ell).map_err(|e| config_err(format!("model.ell: {e}")))?;
        let norm: f64 = dir.components().iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(config_err("model.ell does not normalize to a unit vector"));
        }
        m.ell = dir.components().to_vec();
        match m.kind {
            KernelChoice::StandardErw => {
                let p =
                    m.p.ok_or_else(|| config_err("model.p is required for standard_erw"))?;
                if !(0.5..=1.0).contains(&p) {
                    return Err(config_err(format!("model.p = {p} is outside [0.5, 1]")));
                }
            }
            KernelChoice::Erwre => {
                let (lo, hi) = m.p_lo.zip(m.p_hi).ok_or_else(|| {
                    config_err("model.p_lo and model.p_hi are required for erwre")
                })?;
                if !(0.5 < lo && lo <= hi && hi < 1.0) {
                    return Err(config_err(format!(
                        "need 1/2 < p_lo <= p_hi < 1, got [{lo}, {hi}]"
                    )));
                }
            }
            KernelChoice::Generalized | KernelChoice::Martingale => {
                if m.table.as_ref().is_none_or(|t| t.is_empty()) {
                    return Err(config_err("model.table is required for table kernels"));
                }
            }
            KernelChoice::Symmetric => {}
        }
        let r = &self.run;
        let cps = r.horizon.checkpoints();
        if cps.is_empty() || cps[0] < 1 {
            return Err(config_err("run.horizon must be at least 1"));
        }
        if r.replicas < 1 {
            return Err(config_err("run.replicas must be at least 1"));
        }
        let a = &self.analysis;
        for e in &a.estimators {
            if !KNOWN_ESTIMATORS.contains(&e.as_str()) {
                return Err(config_err(format!("unknown estimator '{e}'")));
            }
        }
        if !(a.ci_level > 0.0 && a.ci_level < 1.0) {
            return Err(config_err("analysis.ci_level must be in (0, 1)"));
        }
        if a.batch_size == 0 {
            return Err(config_err("analysis.batch_size must be positive"));
        }
        if a.b_grid.is_empty() {
            return Err(config_err("analysis.b_grid must not be empty"));
        }
        if self.output.formats.is_empty() {
            return Err(config_err("output.formats must not be empty"));
        }
        Ok(())
    }

    pub fn direction(&self) -> Result<Direction, CliError> {
        Direction::new(self.model.ell.clone()).map_err(|e| config_err(e.to_string()))
    }

    pub fn kernel(&self) -> Result<KernelSpec, CliError> {
        let m = &self.model;
        let base = match m.kind {
            KernelChoice::StandardErw => KernelSpec::standard_erw(m.d, m.p.unwrap_or(0.75))?,
            KernelChoice::Symmetric => KernelSpec::symmetric(m.d)?,
            KernelChoice::Generalized => KernelSpec::generalized(m.d, table(m))?,
            KernelChoice::Martingale => KernelSpec::martingale(m.d, table(m))?,
            KernelChoice::Erwre => {
                let family = SiteBias::new(m.d, m.p_lo.unwrap_or(0.0), m.p_hi.unwrap_or(0.0))?;
                KernelSpec::erwre(EnvironmentModel::site_bias(family, self.run.master_seed))?
            }
        };
        let mut k = base;
        if m.cookie_set != CookieSet::All {
            k = k.with_cookie_set(m.cookie_set.clone())?;
        }
        if let Some(kk) = m.declared_k {
            k = k.with_declared_k(kk)?;
        }
        Ok(k)
    }

    pub fn grouping(&self) -> Grouping {
        self.analysis.grouping.unwrap_or(match self.model.kind {
            KernelChoice::Erwre => Grouping::Block,
            _ => Grouping::Replica,
        })
    }

    pub fn wants(&self, estimator: &str) -> bool {
        self.analysis.estimators.iter().any(|e| e == estimator)
    }
}

fn table(m: &ModelConfig) -> ContextTable {
    ContextTable {
        entries: m.table.clone().unwrap_or_default(),
        overrides: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::parse(&cfg.to_toml()).unwrap());
        assert_eq!(cfg.model.kind, KernelChoice::StandardErw);
    }

    #[test]
    fn ell_is_normalized() {
        let cfg =
            RunConfig::parse("[model]\nkind = \"symmetric\"\nd = 2\nell = [3.0, 4.0]\n").unwrap();
        assert!((cfg.model.ell[0] - 0.6).abs() < 1e-15);
        assert!((cfg.model.ell[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            "[model]\nkind = \"standard_erw\"\nd = 2\nell = [1.0, 0.0]\np = 0.4\n",
            "[run]\nhorizon = 0\nreplicas = 1\nmaster_seed = 1\nthreads = 1\ntrajectories = 0\n",
            "[model]\nkind = \"symmetric\"\nd = 2\nell = [0.0, 0.0]\n",
            "[model]\nkind = \"nope\"\n",
            "[analysis]\nestimators = [\"bogus\"]\n",
            "this is not toml",
        ];
        for text in bad {
            assert!(
                matches!(RunConfig::parse(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn horizon_grid() {
        let cfg = RunConfig::parse(
            "[run]\nhorizon = [10000, 1000, 1000]\nreplicas = 3\nmaster_seed = 5\nthreads = 1\ntrajectories = 0\n",
        )
        .unwrap();
        assert_eq!(cfg.run.horizon.checkpoints(), vec![1000, 10000]);
    }

    #[test]
    fn table_kernel_from_config() {
        let text = r#"
[model]
kind = "generalized"
d = 2
ell = [1.0, 0.0]

[[model.table]]
first_visit = true
in_cookie_set = true
outcomes = [{ dz = [1, 0], p = 0.5 }, { dz = [0, 1], p = 0.25 }, { dz = [0, -1], p = 0.25 }]

[[model.table]]
first_visit = false
in_cookie_set = true
outcomes = [{ dz = [1, 0], p = 0.25 }, { dz = [-1, 0], p = 0.25 }, { dz = [0, 1], p = 0.25 }, { dz = [0, -1], p = 0.25 }]
"#;
        let cfg = RunConfig::parse(text).unwrap();
        let k = cfg.kernel().unwrap();
        assert_eq!(k.dim(), 2);
    }
}
