//! Checks over ensembles of independent trajectories, one record per
//! replica.

use super::stats::{critical_value, mean, normal_quantile, ols, variance};
use super::{Estimate, EstimatorError, EstimatorReport, Interval};
use crate::trajectory::StatsRecord;

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, level: f64) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = normal_quantile(level);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    [lo, hi]
}

fn fraction_report(method: &str, hits: usize, n: usize, level: f64) -> EstimatorReport {
    let f = hits as f64 / n as f64;
    EstimatorReport::new(
        method,
        Estimate::Scalar(f),
        Estimate::Scalar((f * (1.0 - f) / n as f64).sqrt()),
        Interval::Scalar(wilson_interval(hits, n, level)),
        level,
        n,
    )
    .diag("count", hits)
}

fn nonempty(records: &[StatsRecord], need: usize) -> Result<(), EstimatorError> {
    if records.len() < need {
        return Err(EstimatorError::InsufficientData(format!(
            "need at least {need} replicas, got {}",
            records.len()
        )));
    }
    Ok(())
}

/// Mean of `X_n . ell / n` across replicas.
pub fn direct_speed(
    records: &[StatsRecord],
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    nonempty(records, 2)?;
    let xs: Vec<f64> = records.iter().map(|r| r.proj / r.n.max(1) as f64).collect();
    let m = mean(&xs);
    let se = (variance(&xs) / xs.len() as f64).sqrt();
    let q = critical_value(level, xs.len());
    Ok(EstimatorReport::new(
        "direct_speed",
        Estimate::Scalar(m),
        Estimate::Scalar(se),
        Interval::Scalar([m - q * se, m + q * se]),
        level,
        xs.len(),
    )
    .diag("horizon", records[0].n))
}

/// Fraction of trajectories with `X_j . ell > 0` for every `1 <= j <= n`.
pub fn escape_probability(
    records: &[StatsRecord],
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    nonempty(records, 1)?;
    let k = records.iter().filter(|r| r.stayed_ahead).count();
    Ok(
        fraction_report("escape_probability", k, records.len(), level)
            .diag("horizon", records[0].n),
    )
}

/// Growth exponent of the range. `ranges[i]` holds `(n, |R_n|)` for replica
/// `i` at each grid horizon (the same grid for every replica). The slope is
/// fitted per replica, so the interval reflects the spread across replicas.
pub fn range_exponent(
    ranges: &[Vec<(u64, u64)>],
    alpha0: f64,
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    nonempty_grid(ranges)?;
    let grid: Vec<u64> = ranges[0].iter().map(|p| p.0).collect();
    let lx: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let mut slopes = Vec::with_capacity(ranges.len());
    let mut mean_log = vec![0.0; grid.len()];
    let mut below = vec![0usize; grid.len()];
    for rep in ranges {
        if rep.iter().map(|p| p.0).ne(grid.iter().copied()) {
            return Err(EstimatorError::Invalid(
                "replicas use different horizon grids".into(),
            ));
        }
        let ly: Vec<f64> = rep.iter().map(|p| (p.1 as f64).ln()).collect();
        slopes.push(ols(&lx, &ly).expect("distinct horizons").slope);
        for (i, &(n, r)) in rep.iter().enumerate() {
            mean_log[i] += ly[i] / ranges.len() as f64;
            if (r as f64) < (n as f64).powf(0.5 + alpha0) {
                below[i] += 1;
            }
        }
    }
    let beta = mean(&slopes);
    let se = (variance(&slopes) / slopes.len() as f64).sqrt();
    let q = critical_value(level, slopes.len());
    let pooled = ols(&lx, &mean_log).expect("distinct horizons");
    let fractions: Vec<f64> = below
        .iter()
        .map(|&b| b as f64 / ranges.len() as f64)
        .collect();
    Ok(EstimatorReport::new(
        "range_exponent",
        Estimate::Scalar(beta),
        Estimate::Scalar(se),
        Interval::Scalar([beta - q * se, beta + q * se]),
        level,
        ranges.len(),
    )
    .diag("horizons", grid)
    .diag("mean_log_range", mean_log)
    .diag("pooled_r2", pooled.r2)
    .diag("alpha0", alpha0)
    .diag("fraction_below", fractions))
}

fn nonempty_grid(ranges: &[Vec<(u64, u64)>]) -> Result<(), EstimatorError> {
    if ranges.len() < 30 {
        return Err(EstimatorError::InsufficientData(format!(
            "range exponent needs 30 replicas, got {}",
            ranges.len()
        )));
    }
    let g = ranges[0].len();
    if g < 3 {
        return Err(EstimatorError::InsufficientData(format!(
            "range exponent needs 3 horizons, got {g}"
        )));
    }
    Ok(())
}

fn threshold_fraction(
    method: &str,
    records: &[StatsRecord],
    threshold: f64,
    level: f64,
    value: impl Fn(&StatsRecord) -> f64,
    violates: impl Fn(f64, f64) -> bool,
) -> Result<EstimatorReport, EstimatorError> {
    nonempty(records, 1)?;
    let vals: Vec<f64> = records.iter().map(value).collect();
    let hits = vals.iter().filter(|v| violates(**v, threshold)).count();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(fraction_report(method, hits, records.len(), level)
        .diag("threshold", threshold)
        .diag("max_observed", max)
        .diag("horizon", records[0].n))
}

/// Fraction of replicas with `max_m L_n(m) >= n^(1/2 + 2 delta)`.
pub fn local_time_check(
    records: &[StatsRecord],
    delta: f64,
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    nonempty(records, 1)?;
    let n = records[0].n as f64;
    threshold_fraction(
        "strip_local_time",
        records,
        n.powf(0.5 + 2.0 * delta),
        level,
        |r| r.max_local_time as f64,
        |v, t| v >= t,
    )
}

/// Fraction of replicas whose most visited site is visited more than
/// `n^(b/2 + delta)` times.
pub fn site_local_time_check(
    records: &[StatsRecord],
    b: f64,
    delta: f64,
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    nonempty(records, 1)?;
    let n = records[0].n as f64;
    threshold_fraction(
        "site_local_time",
        records,
        n.powf(b / 2.0 + delta),
        level,
        |r| r.max_visit_count as f64,
        |v, t| v > t,
    )
    .map(|r| r.diag("b", b))
}

/// Fraction of replicas with `X_n . ell < (lambda / 3) n^(1/2 + alpha0)`.
pub fn advance_check(
    records: &[StatsRecord],
    lambda: f64,
    alpha0: f64,
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    nonempty(records, 1)?;
    let n = records[0].n as f64;
    threshold_fraction(
        "advance",
        records,
        lambda / 3.0 * n.powf(0.5 + alpha0),
        level,
        |r| r.proj,
        |v, t| v < t,
    )
}
