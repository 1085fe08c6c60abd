//! Estimator reports and plot data from simulation outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cookielab_core::estimators::{
    self as est, AzumaMode, BlockSample, EstimatorError, EstimatorReport, Survival,
};
use cookielab_core::model::{validate_condition_c_plus, StepDistribution};
use cookielab_core::trajectory::StatsRecord;
use cookielab_core::{Direction, KernelSpec};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{
    blocks_name, read_blocks, read_stats, stats_csv_name, stats_json_name, Artifacts,
};

/// Inputs of the analysis, keyed by checkpoint horizon.
pub struct AnalysisInput {
    pub stats: BTreeMap<u64, Vec<StatsRecord>>,
    pub blocks: BTreeMap<u64, BlockSample>,
}

impl AnalysisInput {
    pub fn load(cfg: &RunConfig, dir: &Path) -> Result<Self, CliError> {
        let d = cfg.model.d;
        let mut stats = BTreeMap::new();
        let mut blocks = BTreeMap::new();
        let mut missing = Vec::new();
        for h in cfg.run.horizon.checkpoints() {
            match read_stats(dir, h, d)? {
                Some(rows) => {
                    stats.insert(h, rows.into_iter().map(|r| r.record).collect());
                }
                None => missing.push(format!("{} (or {})", stats_json_name(h), stats_csv_name(h))),
            }
            match read_blocks(dir, h, d, cfg.analysis.safety_window)? {
                Some(b) => {
                    blocks.insert(h, b);
                }
                None => missing.push(blocks_name(h)),
            }
        }
        if !missing.is_empty() {
            return Err(CliError::MissingInput(format!(
                "expected in {}: {}",
                dir.display(),
                missing.join(", ")
            )));
        }
        Ok(AnalysisInput { stats, blocks })
    }
}

fn report_value(r: Result<EstimatorReport, EstimatorError>) -> Value {
    match r {
        Ok(rep) => serde_json::to_value(rep).expect("reports serialize"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json serializes");
    b.push(b'\n');
    b
}

/// Zero-drift step laws of the kernel (its martingale part).
pub fn martingale_laws(kernel: &KernelSpec) -> Result<Vec<StepDistribution>, CliError> {
    let mut laws: Vec<StepDistribution> = Vec::new();
    for c in kernel.context_laws()? {
        if c.law.is_zero_drift() && !laws.contains(&c.law) {
            laws.push(c.law);
        }
    }
    Ok(laws)
}

/// Azuma mode for the projection and the increment bound `c`, if the
/// projection is a (super/sub)martingale. The returned sign flips the
/// increments so that the one-sided check is always an upper tail.
pub fn azuma_setup(
    kernel: &KernelSpec,
    dir: &Direction,
) -> Result<Option<(AzumaMode, f64, f64)>, CliError> {
    let laws = kernel.context_laws()?;
    let mut c: f64 = 0.0;
    let (mut pos, mut neg) = (false, false);
    for l in &laws {
        let drift = dir.dot(&l.law.drift());
        pos |= drift > 1e-12;
        neg |= drift < -1e-12;
        for (z, _) in l.law.iter() {
            c = c.max(dir.project(z).abs());
        }
    }
    Ok(match (pos, neg) {
        (false, false) => Some((AzumaMode::TwoSided, c, 1.0)),
        (true, false) => Some((AzumaMode::Upper, c, -1.0)),
        (false, true) => Some((AzumaMode::Upper, c, 1.0)),
        (true, true) => None,
    })
}

pub fn analyze(cfg: &RunConfig, input: &AnalysisInput) -> Result<Artifacts, CliError> {
    let kernel = cfg.kernel()?;
    let dir = cfg.direction()?;
    let a = &cfg.analysis;
    let level = a.ci_level;
    let grouping = cfg.grouping();
    let mut art = Artifacts::default();
    let mut put = |name: String, v: Value| art.add(format!("reports/{name}.json"), json_bytes(&v));

    // the martingale part: certified exponent for the site local times
    let mlaws = martingale_laws(&kernel)?;
    let submart = (!mlaws.is_empty())
        .then(|| est::search_submartingale_exponent(&mlaws, &a.b_grid, a.radius_max));
    let certified_b = submart
        .as_ref()
        .and_then(|r| r.as_ref().ok())
        .filter(|r| r.flag("certified"))
        .and_then(|r| r.diagnostic("b").and_then(Value::as_f64));
    if cfg.wants("submartingale") {
        let v = match submart.clone() {
            Some(r) => report_value(r),
            None => json!({ "error": "kernel has no zero-drift laws" }),
        };
        put("submartingale".into(), v);
    }
    let lambda = validate_condition_c_plus(&kernel, &dir)
        .ok()
        .and_then(|r| r.lambda)
        .filter(|l| *l > 0.0);
    let azuma = azuma_setup(&kernel, &dir)?;

    let mut plots: Vec<(String, Vec<u8>)> = Vec::new();
    for (&h, recs) in &input.stats {
        let blocks = &input.blocks[&h];
        if cfg.wants("direct_speed") {
            put(
                format!("direct_speed_h{h}"),
                report_value(est::direct_speed(recs, level)),
            );
        }
        if cfg.wants("escape") {
            put(
                format!("escape_h{h}"),
                report_value(est::escape_probability(recs, level)),
            );
        }
        if cfg.wants("local_time") {
            put(
                format!("local_time_h{h}"),
                report_value(est::local_time_check(recs, a.delta, level)),
            );
        }
        if cfg.wants("site_local_time") {
            let v = match certified_b {
                Some(b) => report_value(est::site_local_time_check(recs, b, a.delta, level)),
                None => json!({ "error": "no certified submartingale exponent" }),
            };
            put(format!("site_local_time_h{h}"), v);
        }
        if cfg.wants("advance") {
            let v = match lambda {
                Some(l) => report_value(est::advance_check(recs, l, a.alpha0, level)),
                None => json!({ "error": "no positive first-visit drift" }),
            };
            put(format!("advance_h{h}"), v);
        }
        if cfg.wants("azuma") {
            let v = match azuma {
                Some((mode, c, sign)) => {
                    let inc: Vec<f64> = recs.iter().map(|r| sign * r.proj).collect();
                    let grid: Vec<f64> = a
                        .azuma_multipliers
                        .iter()
                        .map(|m| m * (h as f64).sqrt())
                        .collect();
                    report_value(est::azuma_check(&inc, h, c, &grid, mode))
                }
                None => json!({ "error": "projection is neither a sub- nor a supermartingale" }),
            };
            put(format!("azuma_h{h}"), v);
        }
        let speed = est::speed_estimate(blocks, grouping, level);
        let v: Option<Vec<f64>> = speed
            .as_ref()
            .ok()
            .and_then(|r| r.estimate.vector().map(<[f64]>::to_vec));
        let cov = v
            .as_ref()
            .map(|v| est::covariance_estimate(blocks, v, grouping, level));
        if cfg.wants("speed") {
            let mut val = report_value(speed.clone());
            if let (Ok(s), Ok(dsp)) = (&speed, est::direct_speed(recs, level)) {
                if let Ok((diff, se)) = est::speed_consistency(&dsp, s, &dir) {
                    val["diagnostics"]["direct_minus_regeneration"] = json!(diff);
                    val["diagnostics"]["joint_se"] = json!(se);
                }
            }
            put(format!("speed_h{h}"), val);
        }
        if cfg.wants("covariance") {
            let val = match &cov {
                Some(c) => report_value(c.clone()),
                None => json!({ "error": "speed unavailable" }),
            };
            put(format!("covariance_h{h}"), val);
        }
        if cfg.wants("regen_tail") {
            put(
                format!("regen_tail_h{h}"),
                report_value(est::regen_tail(blocks, level)),
            );
            let mut buf = Vec::new();
            Survival::new(&blocks.dtaus())
                .write_csv(&mut buf)
                .expect("memory");
            plots.push((format!("plots/survival_h{h}.csv"), buf));
        }
        if cfg.wants("autocorrelation") {
            put(
                format!("autocorrelation_h{h}"),
                report_value(est::lag1_autocorrelation(blocks)),
            );
        }
        if cfg.wants("clt") {
            let val = match (&v, &cov) {
                (Some(v), Some(Ok(c))) => {
                    let amat = c.estimate.matrix().expect("matrix").to_vec();
                    if let Ok((zs, _)) = est::standardized_batches(blocks, v, &amat, a.batch_size) {
                        plots.push((format!("plots/ks_h{h}.csv"), ks_curve(&zs)));
                    }
                    report_value(est::clt_test(blocks, v, &amat, a.batch_size, a.ks_alpha))
                }
                _ => json!({ "error": "speed or covariance unavailable" }),
            };
            put(format!("clt_h{h}"), val);
        }
    }

    if cfg.wants("regen_tail") {
        let hs: Vec<u64> = input.blocks.keys().copied().collect();
        let mut pairs = Vec::new();
        for &h in &hs {
            if hs.contains(&(2 * h)) {
                let short = input.blocks[&h].dtaus();
                let long = input.blocks[&(2 * h)].dtaus();
                let v = match est::moment_stability(&short, &long) {
                    Ok((m1, m2)) => {
                        json!({ "horizon": h, "doubled": 2 * h, "mean_change": m1, "second_moment_change": m2 })
                    }
                    Err(e) => json!({ "horizon": h, "error": e.to_string() }),
                };
                pairs.push(v);
            }
        }
        put("tail_doubling".into(), json!(pairs));
    }

    if cfg.wants("range_exponent") {
        let hs: Vec<u64> = input.stats.keys().copied().collect();
        let reps = input.stats[&hs[0]].len();
        let ranges: Vec<Vec<(u64, u64)>> = (0..reps)
            .map(|i| hs.iter().map(|h| (*h, input.stats[h][i].range)).collect())
            .collect();
        let rep = est::range_exponent(&ranges, a.alpha0, level);
        if let Ok(r) = &rep {
            let mut csv = String::from("n,log_n,mean_log_range\n");
            let ml = r
                .diagnostic("mean_log_range")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            for (h, m) in hs.iter().zip(ml) {
                let _ = writeln!(
                    csv,
                    "{h},{},{}",
                    (*h as f64).ln(),
                    m.as_f64().unwrap_or(f64::NAN)
                );
            }
            plots.push(("plots/range_loglog.csv".into(), csv.into_bytes()));
        }
        put("range_exponent".into(), report_value(rep));
    }
    for (name, bytes) in plots {
        art.add(name, bytes);
    }
    Ok(art)
}

fn ks_curve(zs: &[Vec<f64>]) -> Vec<u8> {
    let mut s = String::from("component,z,ecdf,normal_cdf\n");
    for (i, z) in zs.iter().enumerate() {
        let mut z = z.clone();
        z.sort_by(f64::total_cmp);
        let n = z.len() as f64;
        for (k, x) in z.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{x},{},{}",
                i + 1,
                (k + 1) as f64 / n,
                est::normal_cdf(*x)
            );
        }
    }
    s.into_bytes()
}
