//! Normality of batched block sums and independence of blocks.

use serde_json::Value;

use super::stats::normal_cdf;
use super::{BlockSample, Estimate, EstimatorError, EstimatorReport, Interval};

pub const MIN_CLT_BLOCKS: usize = 200;
/// Below this many batches only the statistic is reported.
pub const MIN_KS_SAMPLES: usize = 35;
const DEGENERATE_VAR: f64 = 1e-12;

/// One-sample Kolmogorov-Smirnov distance to the standard normal.
pub fn ks_statistic_normal(values: &[f64]) -> f64 {
    let mut z = values.to_vec();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `P[K > x]` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // P[K <= x] = sqrt(2 pi)/x sum_k exp(-(2k-1)^2 pi^2 / (8 x^2))
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let s: f64 = (1..=50)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * c).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * kf * kf * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// Sums over `batch` consecutive blocks of a replica, standardized per
/// component as `(S_X - S_tau v) / sqrt(S_tau A_ii)`. Components with
/// (near) zero variance are flagged and reported as all zeros.
pub fn standardized_batches(
    blocks: &BlockSample,
    v: &[f64],
    a: &[Vec<f64>],
    batch: usize,
) -> Result<(Vec<Vec<f64>>, Vec<bool>), EstimatorError> {
    let d = blocks.d;
    if batch == 0 || v.len() != d || a.len() != d || a.iter().any(|r| r.len() != d) {
        return Err(EstimatorError::Invalid(
            "batch size or dimensions do not match".into(),
        ));
    }
    let mut sums: Vec<(f64, Vec<f64>)> = Vec::new();
    for group in blocks.by_replica() {
        for chunk in group.chunks_exact(batch) {
            let mut sx = vec![0.0; d];
            let mut st = 0.0;
            for b in chunk {
                st += b.dtau as f64;
                for (s, x) in sx.iter_mut().zip(&b.dx) {
                    *s += *x as f64;
                }
            }
            sums.push((st, sx));
        }
    }
    let mut out = Vec::with_capacity(d);
    let mut degenerate = Vec::with_capacity(d);
    for i in 0..d {
        let var = a[i][i];
        let deg = !(var > DEGENERATE_VAR);
        out.push(
            sums.iter()
                .map(|(st, sx)| {
                    if deg {
                        0.0
                    } else {
                        (sx[i] - st * v[i]) / (st * var).sqrt()
                    }
                })
                .collect(),
        );
        degenerate.push(deg);
    }
    Ok((out, degenerate))
}

/// Kolmogorov-Smirnov test of the standardized batch sums against the
/// standard normal, per component.
pub fn clt_test(
    blocks: &BlockSample,
    v: &[f64],
    a: &[Vec<f64>],
    batch: usize,
    alpha: f64,
) -> Result<EstimatorReport, EstimatorError> {
    let d = blocks.d;
    if blocks.len() < MIN_CLT_BLOCKS {
        return Err(EstimatorError::InsufficientData(format!(
            "normality test needs {MIN_CLT_BLOCKS} blocks, got {}",
            blocks.len()
        )));
    }
    let (zs, degenerate) = standardized_batches(blocks, v, a, batch)?;
    let m = zs.first().map_or(0, Vec::len);
    let mut stats = Vec::with_capacity(d);
    let mut pvalues = Vec::with_capacity(d);
    let mut reject = Vec::with_capacity(d);
    for (z, deg) in zs.iter().zip(&degenerate) {
        let dn = ks_statistic_normal(z);
        let p = (!deg && m >= MIN_KS_SAMPLES).then(|| kolmogorov_survival((m as f64).sqrt() * dn));
        stats.push(dn);
        reject.push(p.map_or(Value::Null, |p| Value::Bool(p < alpha)));
        pvalues.push(p.map_or(Value::Null, Value::from));
    }
    let se = vec![0.0; d];
    let ci = stats.iter().map(|s| [*s, *s]).collect();
    Ok(EstimatorReport::new(
        "batch_ks_normality",
        Estimate::Vector(stats),
        Estimate::Vector(se),
        Interval::Vector(ci),
        1.0 - alpha,
        m,
    )
    .diag("batch_size", batch)
    .diag("blocks", blocks.len())
    .diag("p_values", pvalues)
    .diag("reject", reject)
    .diag("degenerate", degenerate))
}

/// Lag-1 autocorrelation of `dtau` between consecutive blocks of the same
/// replica, pooled over replicas around the global mean.
pub fn lag1_autocorrelation(blocks: &BlockSample) -> Result<EstimatorReport, EstimatorError> {
    let groups = blocks.by_replica();
    let n = blocks.len();
    if n < 3 {
        return Err(EstimatorError::InsufficientData(
            "autocorrelation needs 3 blocks".into(),
        ));
    }
    let mean = blocks.blocks.iter().map(|b| b.dtau as f64).sum::<f64>() / n as f64;
    let den: f64 = blocks
        .blocks
        .iter()
        .map(|b| (b.dtau as f64 - mean).powi(2))
        .sum();
    let mut num = 0.0;
    let mut pairs = 0usize;
    for g in &groups {
        for w in g.windows(2) {
            num += (w[0].dtau as f64 - mean) * (w[1].dtau as f64 - mean);
            pairs += 1;
        }
    }
    if pairs == 0 || den <= 0.0 {
        return Err(EstimatorError::InsufficientData(
            "no consecutive pairs with spread".into(),
        ));
    }
    let r = num / den * n as f64 / pairs as f64;
    let se = 1.0 / (pairs as f64).sqrt();
    Ok(EstimatorReport::new(
        "lag1_autocorrelation",
        Estimate::Scalar(r),
        Estimate::Scalar(se),
        Interval::Scalar([r - 4.0 * se, r + 4.0 * se]),
        0.9999,
        pairs,
    )
    .diag("bound", 4.0 * se)
    .diag("within_bound", r.abs() <= 4.0 * se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::SampleBlock;
    use crate::rng::RngStream;

    fn gaussian(rng: &mut RngStream) -> f64 {
        let u1 = 1.0 - rng.next_f64();
        let u2 = rng.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn kolmogorov_reference_points() {
        // classical critical values
        assert!((kolmogorov_survival(1.3580986393225505) - 0.05).abs() < 1e-9);
        assert!((kolmogorov_survival(1.6276236115189545) - 0.01).abs() < 1e-9);
        assert!((kolmogorov_survival(0.5) - 0.9639452436648752).abs() < 1e-9);
        // both series agree where they meet
        let lo = kolmogorov_survival(1.0 - 1e-12);
        let hi = kolmogorov_survival(1.0);
        assert!((lo - hi).abs() < 1e-9);
    }

    #[test]
    fn point_mass_at_zero() {
        assert!((ks_statistic_normal(&[0.0; 40]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn deterministic_blocks_are_degenerate() {
        let blocks: Vec<SampleBlock> = (0..256)
            .map(|k| SampleBlock {
                replica: 0,
                k: k + 1,
                dtau: 1,
                dx: vec![1, 0],
                dproj: 1.0,
            })
            .collect();
        let bs = BlockSample::from_blocks(2, blocks);
        let a = vec![vec![0.0; 2]; 2];
        let r = clt_test(&bs, &[1.0, 0.0], &a, 32, 0.01).unwrap();
        assert_eq!(r.estimate.vector().unwrap(), &[0.5, 0.5]);
        assert_eq!(
            r.diagnostic("degenerate").unwrap(),
            &serde_json::json!([true, true])
        );
        assert!(r.diagnostic("p_values").unwrap()[0].is_null());
    }

    /// Exact-normal batches: p-values are uniform and the 1% test rejects
    /// about 1% of the time.
    #[test]
    fn calibration_under_exact_normal_model() {
        let runs = 400;
        let m = 100;
        let mut rng = RngStream::new(2024, 1);
        let mut rejections = 0;
        let mut pvals = Vec::with_capacity(runs);
        for _ in 0..runs {
            let z: Vec<f64> = (0..m).map(|_| gaussian(&mut rng)).collect();
            let p = kolmogorov_survival((m as f64).sqrt() * ks_statistic_normal(&z));
            if p < 0.01 {
                rejections += 1;
            }
            pvals.push(p);
        }
        let rate = rejections as f64 / runs as f64;
        assert!(
            rate <= 0.01 + 3.0 * (0.01 * 0.99 / runs as f64).sqrt(),
            "rate {rate}"
        );
        // p-values against U(0,1)
        pvals.sort_by(f64::total_cmp);
        let d = pvals
            .iter()
            .enumerate()
            .map(|(i, &p)| ((i + 1) as f64 / runs as f64 - p).max(p - i as f64 / runs as f64))
            .fold(0.0, f64::max);
        assert!(
            kolmogorov_survival((runs as f64).sqrt() * d) > 0.001,
            "D {d}"
        );
    }

    #[test]
    fn clt_test_on_synthetic_normal_blocks() {
        let mut rng = RngStream::new(77, 0);
        let n = 320 * 32;
        let blocks: Vec<SampleBlock> = (0..n)
            .map(|k| {
                let dtau = 1 + (rng.next_f64() * 4.0) as u64;
                let t = dtau as f64;
                // dX = dtau v + sqrt(dtau) sigma Z, rounded far below the noise
                let x0 = (0.5 * t + 3.0 * t.sqrt() * gaussian(&mut rng)).round() as i32;
                let x1 = (2.0 * t.sqrt() * gaussian(&mut rng)).round() as i32;
                SampleBlock {
                    replica: (k / 640) as u64,
                    k: k + 1,
                    dtau,
                    dx: vec![x0, x1],
                    dproj: x0 as f64,
                }
            })
            .collect();
        let bs = BlockSample::from_blocks(2, blocks);
        let v = crate::estimators::speed_estimate(&bs, crate::estimators::Grouping::Block, 0.95)
            .unwrap();
        let vv = v.estimate.vector().unwrap().to_vec();
        let a = crate::estimators::covariance_estimate(
            &bs,
            &vv,
            crate::estimators::Grouping::Block,
            0.95,
        )
        .unwrap();
        let r = clt_test(&bs, &vv, a.estimate.matrix().unwrap(), 32, 0.01).unwrap();
        assert_eq!(r.n, 320);
        for p in r.diagnostic("p_values").unwrap().as_array().unwrap() {
            assert!(p.as_f64().unwrap() > 0.01);
        }
    }

    #[test]
    fn autocorrelation_of_independent_and_dependent_sequences() {
        let mut rng = RngStream::new(5, 5);
        let iid: Vec<SampleBlock> = (0..5000)
            .map(|k| SampleBlock {
                replica: (k / 500) as u64,
                k: k + 1,
                dtau: 1 + (rng.next_f64() * 10.0) as u64,
                dx: vec![1],
                dproj: 1.0,
            })
            .collect();
        let r = lag1_autocorrelation(&BlockSample::from_blocks(1, iid)).unwrap();
        assert!(r.flag("within_bound"));

        let alternating: Vec<SampleBlock> = (0..1000)
            .map(|k| SampleBlock {
                replica: 0,
                k: k + 1,
                dtau: if k % 2 == 0 { 1 } else { 9 },
                dx: vec![1],
                dproj: 1.0,
            })
            .collect();
        let r = lag1_autocorrelation(&BlockSample::from_blocks(1, alternating)).unwrap();
        assert!((r.estimate.scalar().unwrap() + 1.0).abs() < 0.01);
        assert!(!r.flag("within_bound"));
    }
}
