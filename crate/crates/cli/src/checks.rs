//! The theory-check suite: fixed ensembles, one pass/fail verdict per
//! property.

use std::time::{Duration, Instant};

use cookielab_core::estimators::{
    self as est, AzumaMode, BlockSample, EstimatorReport, Grouping, Interval, SampleBlock,
};
use cookielab_core::model::validate_condition_c_plus;
use cookielab_core::renewal::oracle_regeneration_times;
use cookielab_core::rng::derive_seed;
use cookielab_core::trajectory::{stats_from_path, Observer, StatsRecord, StepRecord};
use cookielab_core::{
    simulate, CookieSet, Direction, EnvironmentModel, KernelSpec, RenewalDetector, RngStream,
    SimOptions, SiteBias, StepDistribution,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::runner::{map_ensemble, EnsembleSpec, ReplicaRun};

/// `y = (10, 0)`, `b = 0.9` margin for the simple symmetric walk, evaluated
/// at 50 digits with an arbitrary-precision library.
pub const MARGIN_REFERENCE: f64 = 0.01603279493137567;

/// Ensemble sizes of the suite.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteSizes {
    pub oracle_paths: u64,
    pub oracle_horizon: u64,
    pub erw_replicas: u64,
    /// Ascending; the first three feed the range and local-time checks, the
    /// last two the tail-stability check.
    pub erw_horizons: Vec<u64>,
    pub speed_horizon: u64,
    pub range_replicas: u64,
    pub escape_horizons: [u64; 2],
    pub null_replicas: u64,
    pub erwre_replicas: u64,
    pub erwre_horizon: u64,
    pub azuma_replicas: u64,
    pub azuma_horizon: u64,
    pub radius_max: f64,
}

impl SuiteSizes {
    pub fn full() -> Self {
        SuiteSizes {
            oracle_paths: 1000,
            oracle_horizon: 2000,
            erw_replicas: 500,
            erw_horizons: vec![1_000, 3_000, 10_000, 20_000],
            speed_horizon: 10_000,
            range_replicas: 200,
            escape_horizons: [1_000, 10_000],
            null_replicas: 500,
            erwre_replicas: 50,
            erwre_horizon: 5_000,
            azuma_replicas: 100_000,
            azuma_horizon: 1_000,
            radius_max: 200.0,
        }
    }

    /// A small version for smoke tests; verdicts are not meaningful.
    pub fn quick() -> Self {
        SuiteSizes {
            oracle_paths: 30,
            oracle_horizon: 300,
            erw_replicas: 40,
            erw_horizons: vec![100, 300, 1_000, 2_000],
            speed_horizon: 1_000,
            range_replicas: 40,
            escape_horizons: [100, 1_000],
            null_replicas: 40,
            erwre_replicas: 8,
            erwre_horizon: 2_000,
            azuma_replicas: 2_000,
            azuma_horizon: 100,
            radius_max: 30.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub title: String,
    pub passed: bool,
    /// Not one of the numbered acceptance properties.
    pub supplementary: bool,
    pub summary: String,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChecksOutcome {
    pub master_seed: u64,
    pub sizes: SuiteSizes,
    pub results: Vec<CheckResult>,
    /// Wall clock per stage; excluded from the serialized outcome.
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
}

impl ChecksOutcome {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = serde_json::to_vec_pretty(self).expect("outcome serializes");
        b.push(b'\n');
        b
    }

    pub fn get(&self, id: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.id == id)
    }

    pub fn timing(&self, stage: &str) -> Option<Duration> {
        self.timings
            .iter()
            .find(|(s, _)| s == stage)
            .map(|(_, d)| *d)
    }

    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

fn result(id: &str, title: &str, passed: bool, summary: String, details: Value) -> CheckResult {
    CheckResult {
        id: id.into(),
        title: title.into(),
        passed,
        supplementary: false,
        summary,
        details,
    }
}

fn report_json(r: &EstimatorReport) -> Value {
    serde_json::to_value(r).expect("reports serialize")
}

fn e1(d: usize) -> Direction {
    Direction::axis(d, 0).expect("valid axis")
}

#[derive(Default)]
struct Projections(Vec<f64>);

impl Observer for Projections {
    fn on_step(&mut self, rec: &StepRecord<'_>) {
        self.0.push(rec.proj);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub paths: u64,
    pub horizon: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<u64>,
    pub regeneration_times: u64,
}

/// Streaming detector against the brute-force oracle on random standard
/// excited walks (`p` cycling through 0.6, 0.75, 1; `d` through 2, 3).
pub fn oracle_equivalence(
    paths: u64,
    horizon: u64,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<OracleSummary, CliError> {
    const PS: [f64; 3] = [0.6, 0.75, 1.0];
    let outcomes: Vec<(bool, usize)> = pool.install(|| {
        (0..paths)
            .into_par_iter()
            .map(|i| {
                let p = PS[(i % 3) as usize];
                let d = 2 + ((i / 3) % 2) as usize;
                let kernel = KernelSpec::standard_erw(d, p)?;
                let mut rng = RngStream::new(seed, i);
                let mut det = RenewalDetector::new();
                let mut projs = Projections::default();
                simulate(
                    &kernel,
                    &e1(d),
                    horizon,
                    &mut rng,
                    &mut [&mut det, &mut projs],
                    SimOptions::default(),
                )?;
                let streamed = det.finalize(horizon, 0.0).taus;
                let oracle = oracle_regeneration_times(&projs.0);
                Ok((streamed == oracle, oracle.len()))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let first_mismatch = outcomes.iter().position(|(ok, _)| !ok).map(|i| i as u64);
    Ok(OracleSummary {
        paths,
        horizon,
        mismatches: outcomes.iter().filter(|(ok, _)| !ok).count() as u64,
        first_mismatch,
        regeneration_times: outcomes.iter().map(|(_, n)| *n as u64).sum(),
    })
}

fn streamed_taus(projs: &[f64]) -> Vec<u64> {
    let mut det = RenewalDetector::new();
    for (i, p) in projs.iter().enumerate() {
        det.observe(i as u64, *p).expect("in order");
    }
    det.finalize(projs.len() as u64 - 1, 0.0).taus
}

fn check_hand_traces() -> CheckResult {
    let mono: Vec<f64> = (0..=10).map(f64::from).collect();
    let mut back = vec![0.0, 1.0, 0.0, 1.0];
    back.extend((2..=12).map(f64::from));
    let want_mono: Vec<u64> = (1..=10).collect();
    let want_back: Vec<u64> = (4..=14).collect();
    let got = [
        (
            streamed_taus(&mono),
            oracle_regeneration_times(&mono),
            want_mono,
        ),
        (
            streamed_taus(&back),
            oracle_regeneration_times(&back),
            want_back,
        ),
    ];
    let passed = got.iter().all(|(s, o, w)| s == w && o == w);
    result(
        "2",
        "hand-traced regeneration fixtures",
        passed,
        format!(
            "monotone taus = {:?}; backtrack tau_1 = {:?}",
            got[0].0,
            got[1].0.first()
        ),
        json!({
            "monotone": { "streamed": got[0].0, "oracle": got[0].1 },
            "backtrack": { "streamed": got[1].0, "oracle": got[1].1 },
        }),
    )
}

/// Per-replica reduction of the excited-walk ensemble.
struct ErwReplica {
    records: Vec<StatsRecord>,
    speed_blocks: BlockSample,
    tail_dtaus: Vec<Vec<u64>>,
}

fn replica_blocks(run: &ReplicaRun, h: u64, d: usize) -> BlockSample {
    let mut s = BlockSample::new(d);
    if let Some(seq) = &run.at(h).regen {
        s.push_sequence(run.replica, seq, 0)
            .expect("dimensions match");
    }
    s
}

fn merge(d: usize, parts: impl IntoIterator<Item = BlockSample>) -> BlockSample {
    let mut out = BlockSample::new(d);
    for p in parts {
        out.replicas += p.replicas;
        out.dropped_first += p.dropped_first;
        out.dropped_last += p.dropped_last;
        out.dropped_window += p.dropped_window;
        out.blocks.extend(p.blocks);
    }
    out
}

fn dtau_sample(d: usize, dtaus: &[u64]) -> BlockSample {
    // only the durations matter to the tail estimators
    let blocks = dtaus
        .iter()
        .enumerate()
        .map(|(i, &dtau)| est_block(i as u64, dtau, d))
        .collect();
    let mut s = BlockSample::from_blocks(d, blocks);
    s.replicas = 0;
    s
}

fn est_block(k: u64, dtau: u64, d: usize) -> SampleBlock {
    SampleBlock {
        replica: 0,
        k: k as usize + 1,
        dtau,
        dx: vec![0; d],
        dproj: 0.0,
    }
}

fn idx(hs: &[u64], h: u64) -> usize {
    hs.iter().position(|x| *x == h).expect("horizon in grid")
}

struct Timer {
    timings: Vec<(String, Duration)>,
}

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), t.elapsed()));
        out
    }
}

/// Runs the whole suite. Every ensemble draws from its own master seed
/// `derive_seed(master_seed, k)`, so results do not depend on `pool`.
pub fn run_checks(
    sizes: &SuiteSizes,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<ChecksOutcome, CliError> {
    let seed = |k: u64| derive_seed(master_seed, k);
    let level = 0.99;
    let mut timer = Timer {
        timings: Vec::new(),
    };
    let mut results = Vec::new();

    // 1, 2: regeneration times
    let oracle = timer.time("oracle", || {
        oracle_equivalence(sizes.oracle_paths, sizes.oracle_horizon, seed(0), pool)
    })?;
    results.push(result(
        "1",
        "streaming regeneration times equal the oracle",
        oracle.mismatches == 0,
        format!(
            "{} mismatches over {} paths",
            oracle.mismatches, oracle.paths
        ),
        serde_json::to_value(&oracle).expect("serializes"),
    ));
    results.push(check_hand_traces());

    // excited walk ensemble shared by 3 and 5 to 8
    let hs = sizes.erw_horizons.clone();
    let erw = KernelSpec::standard_erw(2, 0.75)?;
    let dir = e1(2);
    let spec = EnsembleSpec::new(
        erw.clone(),
        dir.clone(),
        hs.clone(),
        sizes.erw_replicas,
        seed(1),
    );
    let speed_h = sizes.speed_horizon;
    let tail_hs = [hs[hs.len() - 2], hs[hs.len() - 1]];
    let reps: Vec<ErwReplica> = timer.time("erw_ensemble", || {
        map_ensemble(&spec, pool, |run| ErwReplica {
            records: run.checkpoints.iter().map(|c| c.record.clone()).collect(),
            speed_blocks: replica_blocks(&run, speed_h, 2),
            tail_dtaus: tail_hs
                .iter()
                .map(|&h| replica_blocks(&run, h, 2).dtaus())
                .collect(),
        })
    })?;
    let records_at = |reps: &[ErwReplica], h: u64| -> Vec<StatsRecord> {
        let i = idx(&hs, h);
        reps.iter().map(|r| r.records[i].clone()).collect()
    };

    // 3: ballisticity
    {
        let recs = records_at(&reps, speed_h);
        let blocks = merge(2, reps.iter().map(|r| r.speed_blocks.clone()));
        let direct = est::direct_speed(&recs, level)?;
        let regen = est::speed_estimate(&blocks, Grouping::Replica, level)?;
        let (diff, joint) = est::speed_consistency(&direct, &regen, &dir)?;
        let lo = scalar_ci(&direct.ci)[0];
        let agree = diff.abs() <= 3.0 * joint;
        results.push(result(
            "3",
            "ballisticity of the excited walk",
            lo > 0.0 && agree,
            format!(
                "direct speed {:.5} (99% CI lower {:.5}); regeneration speed {:.5}; |diff| = {:.2} joint SE",
                direct.estimate.scalar().unwrap_or(f64::NAN),
                lo,
                regen.estimate.vector().map_or(f64::NAN, |v| v[0]),
                diff.abs() / joint
            ),
            json!({
                "direct_speed": report_json(&direct),
                "regeneration_speed": report_json(&regen),
                "difference": diff,
                "joint_se": joint,
            }),
        ));
    }

    // 4: null control
    {
        let null = KernelSpec::standard_erw(2, 0.5)?;
        let spec = EnsembleSpec::new(
            null,
            dir.clone(),
            vec![speed_h],
            sizes.null_replicas,
            seed(2),
        )
        .without_renewal();
        let recs: Vec<StatsRecord> = timer.time("null_ensemble", || {
            map_ensemble(&spec, pool, |run| run.checkpoints[0].record.clone())
        })?;
        let direct = est::direct_speed(&recs, level)?;
        let v = direct.estimate.scalar().unwrap_or(f64::NAN);
        let se = direct.se.scalar().unwrap_or(f64::NAN);
        results.push(result(
            "4",
            "no drift for the symmetric walk",
            v.abs() <= 4.0 * se,
            format!("direct speed {v:.5}, {:.2} SE from 0", v.abs() / se),
            json!({ "direct_speed": report_json(&direct) }),
        ));
    }

    // martingale ensemble (empty cookie set) for 5 and 6
    let range_hs: Vec<u64> = hs[..3].to_vec();
    let mart = erw.clone().with_cookie_set(CookieSet::Empty)?;
    let mspec = EnsembleSpec::new(
        mart,
        dir.clone(),
        range_hs.clone(),
        sizes.range_replicas,
        seed(3),
    )
    .without_renewal();
    let mart_recs: Vec<Vec<StatsRecord>> = timer.time("martingale_ensemble", || {
        map_ensemble(&mspec, pool, |run| {
            run.checkpoints.iter().map(|c| c.record.clone()).collect()
        })
    })?;
    let erw_sub = &reps[..(sizes.range_replicas as usize).min(reps.len())];
    let erw_recs: Vec<Vec<StatsRecord>> = erw_sub
        .iter()
        .map(|r| {
            range_hs
                .iter()
                .map(|&h| r.records[idx(&hs, h)].clone())
                .collect()
        })
        .collect();
    let ensembles = [("excited", &erw_recs), ("martingale", &mart_recs)];

    // 5: range growth
    {
        let mut ok = true;
        let mut details = serde_json::Map::new();
        let mut parts = Vec::new();
        for (name, recs) in ensembles {
            let ranges: Vec<Vec<(u64, u64)>> = recs
                .iter()
                .map(|rs| rs.iter().map(|r| (r.n, r.range)).collect())
                .collect();
            let rep = est::range_exponent(&ranges, 0.05, level)?;
            let fr: Vec<f64> = rep
                .diagnostic("fraction_below")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_f64).collect())
                .unwrap_or_default();
            let lo = scalar_ci(&rep.ci)[0];
            let pass = fr.iter().all(|f| *f == 0.0) && lo > 0.5;
            ok &= pass;
            parts.push(format!(
                "{name}: beta {:.3} (CI lower {lo:.3}), below {fr:?}",
                rep.estimate.scalar().unwrap_or(f64::NAN)
            ));
            details.insert(name.into(), report_json(&rep));
        }
        results.push(result(
            "5",
            "range growth",
            ok,
            parts.join("; "),
            Value::Object(details),
        ));
    }

    // 6: strip local time
    {
        let delta = 0.1;
        let mut ok = true;
        let mut details = serde_json::Map::new();
        let mut parts = Vec::new();
        for (name, recs) in ensembles {
            let mut per_h = Vec::new();
            for (i, h) in range_hs.iter().enumerate() {
                let col: Vec<StatsRecord> = recs.iter().map(|r| r[i].clone()).collect();
                let rep = est::local_time_check(&col, delta, level)?;
                let count = rep
                    .diagnostic("count")
                    .and_then(Value::as_u64)
                    .unwrap_or(u64::MAX);
                ok &= count == 0;
                parts.push(format!("{name} n={h}: {count} over"));
                per_h.push(report_json(&rep));
            }
            details.insert(name.into(), json!(per_h));
        }
        // two sites on the same level: the strip fills up linearly
        let n = speed_h as i32;
        let path: Vec<Vec<i32>> = (0..=n).map(|j| vec![0, j % 2]).collect();
        let fixture = stats_from_path(&path, &dir).record(false);
        let neg = est::local_time_check(&[fixture], delta, level)?;
        let triggered = neg.estimate.scalar() == Some(1.0);
        ok &= triggered;
        parts.push(format!("oscillating fixture triggered: {triggered}"));
        details.insert("oscillating_fixture".into(), report_json(&neg));
        results.push(result(
            "6",
            "strip local times",
            ok,
            parts.join("; "),
            Value::Object(details),
        ));
    }

    // 7: regeneration tails
    {
        let short: Vec<u64> = reps
            .iter()
            .flat_map(|r| r.tail_dtaus[0].iter().copied())
            .collect();
        let long: Vec<u64> = reps
            .iter()
            .flat_map(|r| r.tail_dtaus[1].iter().copied())
            .collect();
        let (m1, m2) = est::moment_stability(&short, &long)?;
        let tail = est::regen_tail(&dtau_sample(2, &long), level)?;
        let alpha = tail.estimate.scalar().unwrap_or(f64::NAN);
        let r2 = tail
            .diagnostic("r2")
            .and_then(Value::as_f64)
            .unwrap_or(f64::NAN);
        let passed = m1 < 0.1 && m2 < 0.1 && alpha > 0.0 && r2 >= 0.95 && !tail.flag("degenerate");
        results.push(result(
            "7",
            "regeneration tails",
            passed,
            format!(
                "mean change {:.2}%, second moment change {:.2}%; alpha' {alpha:.3}, R^2 {r2:.4}",
                100.0 * m1,
                100.0 * m2
            ),
            json!({
                "horizons": tail_hs,
                "blocks": [short.len(), long.len()],
                "mean_change": m1,
                "second_moment_change": m2,
                "tail": report_json(&tail),
            }),
        ));
    }

    // 8: escape probability
    {
        let reports: Vec<EstimatorReport> = sizes
            .escape_horizons
            .iter()
            .map(|&h| est::escape_probability(&records_at(&reps, h), level))
            .collect::<Result<_, _>>()?;
        let cis: Vec<[f64; 2]> = reports.iter().map(|r| scalar_ci(&r.ci)).collect();
        let overlap = cis[0][0] <= cis[1][1] && cis[1][0] <= cis[0][1];
        let positive = cis.iter().all(|c| c[0] > 0.0);
        results.push(result(
            "8",
            "escape probability",
            overlap && positive,
            format!(
                "psi {:.3} {} at n={} and {:.3} {} at n={}",
                reports[0].estimate.scalar().unwrap_or(f64::NAN),
                fmt_list(&cis[0]),
                sizes.escape_horizons[0],
                reports[1].estimate.scalar().unwrap_or(f64::NAN),
                fmt_list(&cis[1]),
                sizes.escape_horizons[1]
            ),
            json!(reports.iter().map(report_json).collect::<Vec<_>>()),
        ));
    }

    // supplementary: advance along ell, with the empty cookie set as control
    {
        let lambda = validate_condition_c_plus(&erw, &dir)?.lambda.unwrap_or(0.0);
        let recs = records_at(&reps, speed_h);
        let adv = est::advance_check(&recs, lambda, 0.05, level)?;
        let last = range_hs.len() - 1;
        let mrecs: Vec<StatsRecord> = mart_recs.iter().map(|r| r[last].clone()).collect();
        let control = est::advance_check(&mrecs, lambda, 0.05, level)?;
        let f = adv.estimate.scalar().unwrap_or(f64::NAN);
        let fc = control.estimate.scalar().unwrap_or(f64::NAN);
        let mut r = result(
            "advance",
            "advance along ell",
            f == 0.0 && fc > 0.5,
            format!("excited fraction behind {f:.3}; martingale control {fc:.3}"),
            json!({ "excited": report_json(&adv), "martingale": report_json(&control) }),
        );
        r.supplementary = true;
        results.push(r);
    }
    drop(reps);

    // 9, 10: random environment
    {
        let env = EnvironmentModel::site_bias(SiteBias::new(2, 0.6, 0.9)?, seed(4));
        let kernel = KernelSpec::erwre(env)?;
        let spec = EnsembleSpec::new(
            kernel,
            dir.clone(),
            vec![sizes.erwre_horizon],
            sizes.erwre_replicas,
            seed(5),
        );
        let h = sizes.erwre_horizon;
        let parts: Vec<BlockSample> = timer.time("erwre_ensemble", || {
            map_ensemble(&spec, pool, |run| replica_blocks(&run, h, 2))
        })?;
        let blocks = merge(2, parts);
        let n_blocks = blocks.len();
        let speed = est::speed_estimate(&blocks, Grouping::Block, level)?;
        let v = speed.estimate.vector().expect("vector").to_vec();
        let cov = est::covariance_estimate(&blocks, &v, Grouping::Block, level)?;
        let a = cov.estimate.matrix().expect("matrix").to_vec();
        let asym = (a[0][1] - a[1][0]).abs();
        let min_eig = cov
            .diagnostic("min_eigenvalue")
            .and_then(Value::as_f64)
            .unwrap_or(f64::NAN);
        let clt = est::clt_test(&blocks, &v, &a, 32, 0.01)?;
        let pv: Vec<f64> = clt
            .diagnostic("p_values")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        let rejected = clt
            .diagnostic("reject")
            .and_then(Value::as_array)
            .is_none_or(|r| r.iter().any(|x| x.as_bool() != Some(false)));
        let passed = n_blocks >= 10_000
            && !rejected
            && !clt.flag("degenerate")
            && asym <= 1e-12
            && min_eig > 0.0;
        results.push(result(
            "9",
            "central limit theorem in the random environment",
            passed,
            format!("{n_blocks} blocks; KS p-values {}; min eigenvalue {min_eig:.4}; asymmetry {asym:e}", fmt_list(&pv)),
            json!({
                "blocks": n_blocks,
                "speed": report_json(&speed),
                "covariance": report_json(&cov),
                "ks": report_json(&clt),
            }),
        ));
        let ac = est::lag1_autocorrelation(&blocks)?;
        let r = ac.estimate.scalar().unwrap_or(f64::NAN);
        let bound = ac
            .diagnostic("bound")
            .and_then(Value::as_f64)
            .unwrap_or(f64::NAN);
        results.push(result(
            "10",
            "lag-1 autocorrelation of block durations",
            ac.flag("within_bound"),
            format!("r1 = {r:.4}, bound {bound:.4}"),
            report_json(&ac),
        ));
    }

    // 11: Azuma
    {
        let n = sizes.azuma_horizon;
        let kernel = KernelSpec::symmetric(2)?;
        let spec = EnsembleSpec::new(kernel, dir.clone(), vec![n], sizes.azuma_replicas, seed(6))
            .without_renewal();
        let inc: Vec<f64> = timer.time("azuma_ensemble", || {
            map_ensemble(&spec, pool, |run| run.checkpoints[0].record.proj)
        })?;
        let sq = (n as f64).sqrt();
        let grid = [sq, 2.0 * sq, 3.0 * sq];
        let rep = est::azuma_check(&inc, n, 1.0, &grid, AzumaMode::TwoSided)?;
        let closed = est::azuma_bound(100, 30.0, 1.0);
        let closed_ok = (closed - 2.0 * (-4.5f64).exp()).abs() <= 1e-12;
        let freq = rep
            .estimate
            .vector()
            .map(<[f64]>::to_vec)
            .unwrap_or_default();
        results.push(result(
            "11",
            "Azuma bound",
            rep.flag("all_within_bound") && closed_ok,
            format!(
                "exceedance {} vs bound {}; closed form ok: {closed_ok}",
                fmt_list(&freq),
                fmt_list(
                    &rep.diagnostic("bound")
                        .and_then(Value::as_array)
                        .map(|a| a.iter().filter_map(Value::as_f64).collect::<Vec<_>>())
                        .unwrap_or_default()
                )
            ),
            json!({ "check": report_json(&rep), "closed_form": closed }),
        ));
    }

    // 12: submartingale certification
    {
        let laws = vec![StepDistribution::symmetric(2)];
        let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let search = timer.time("submartingale", || {
            est::search_submartingale_exponent(&laws, &grid, sizes.radius_max)
        })?;
        let b = search
            .diagnostic("b")
            .and_then(Value::as_f64)
            .unwrap_or(f64::NAN);
        let g = search.estimate.scalar().unwrap_or(f64::NAN);
        let m = est::margin_at(&laws, &[10, 0], 0.9);
        let hand =
            0.25 * (11f64.powf(0.9) + 9f64.powf(0.9) + 2.0 * 101f64.powf(0.45)) - 10f64.powf(0.9);
        let exact = (m - MARGIN_REFERENCE).abs() <= 1e-12 && (m - hand).abs() <= 1e-12;
        let passed = search.flag("certified") && b > 0.0 && b < 1.0 && exact;
        results.push(result(
            "12",
            "submartingale certification",
            passed,
            format!("b = {b}, gamma2' = {g}; margin at (10,0) = {m:.17} (reference {MARGIN_REFERENCE})"),
            json!({ "search": report_json(&search), "margin_10_0": m, "reference": MARGIN_REFERENCE }),
        ));

        // supplementary: site visits of the martingale walk at the certified b
        if search.flag("certified") {
            let last = range_hs.len() - 1;
            let col: Vec<StatsRecord> = mart_recs.iter().map(|r| r[last].clone()).collect();
            let rep = est::site_local_time_check(&col, b, 0.1, level)?;
            let count = rep
                .diagnostic("count")
                .and_then(Value::as_u64)
                .unwrap_or(u64::MAX);
            let mut r = result(
                "site_local_time",
                "site visit counts of the martingale walk",
                count == 0,
                format!(
                    "{count} replicas above n^(b/2 + 0.1) at n = {}",
                    range_hs[last]
                ),
                report_json(&rep),
            );
            r.supplementary = true;
            results.push(r);
        }
    }

    Ok(ChecksOutcome {
        master_seed,
        sizes: sizes.clone(),
        results,
        timings: timer.timings,
    })
}

fn scalar_ci(ci: &Interval) -> [f64; 2] {
    match ci {
        Interval::Scalar(c) => *c,
        _ => [f64::NAN, f64::NAN],
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}
