//! Ratio estimators for the speed and the limiting covariance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::stats::critical_value;
use super::{BlockSample, Estimate, EstimatorError, EstimatorReport, Interval, SampleBlock};
use crate::model::Direction;

/// Sampling unit for standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One batch per replica (blocks inside a replica may be dependent).
    #[default]
    Replica,
    /// Every block is its own unit (i.i.d. blocks).
    Block,
}

/// Per-unit sums `(sum dtau, sum f(block))` for a vector-valued `f`.
fn unit_sums(
    blocks: &BlockSample,
    grouping: Grouping,
    width: usize,
    f: impl Fn(&SampleBlock, &mut [f64]),
) -> Vec<(f64, Vec<f64>)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut scratch = vec![0.0; width];
    let mut current: Option<u64> = None;
    for b in &blocks.blocks {
        let new_unit = match grouping {
            Grouping::Block => true,
            Grouping::Replica => current != Some(b.replica),
        };
        if new_unit {
            out.push((0.0, vec![0.0; width]));
            current = Some(b.replica);
        }
        let unit = out.last_mut().expect("unit pushed");
        unit.0 += b.dtau as f64;
        scratch.iter_mut().for_each(|s| *s = 0.0);
        f(b, &mut scratch);
        for (u, s) in unit.1.iter_mut().zip(&scratch) {
            *u += s;
        }
    }
    out
}

/// Ratio `sum y / sum t` per component with its delta-method standard error
/// over units.
fn ratio_with_se(units: &[(f64, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    let m = units.len() as f64;
    let width = units[0].1.len();
    let total_t: f64 = units.iter().map(|u| u.0).sum();
    let mean_t = total_t / m;
    let mut est = vec![0.0; width];
    let mut se = vec![0.0; width];
    for i in 0..width {
        let total_y: f64 = units.iter().map(|u| u.1[i]).sum();
        let r = total_y / total_t;
        est[i] = r;
        if units.len() >= 2 {
            let s2: f64 = units
                .iter()
                .map(|u| {
                    let e = u.1[i] - r * u.0;
                    e * e
                })
                .sum::<f64>()
                / (m - 1.0);
            se[i] = (s2 / m).sqrt() / mean_t;
        }
    }
    (est, se)
}

fn effective_grouping(blocks: &BlockSample, grouping: Grouping) -> (Grouping, bool) {
    if grouping == Grouping::Replica && blocks.by_replica().len() < 2 {
        (Grouping::Block, true)
    } else {
        (grouping, false)
    }
}

fn require_blocks(blocks: &BlockSample) -> Result<(), EstimatorError> {
    if blocks.len() < 2 {
        return Err(EstimatorError::InsufficientData(format!(
            "need at least 2 blocks, got {}",
            blocks.len()
        )));
    }
    if blocks.blocks.iter().any(|b| b.dx.len() != blocks.d) {
        return Err(EstimatorError::Invalid("blocks lack displacements".into()));
    }
    Ok(())
}

/// `v = sum dX / sum dtau` componentwise.
pub fn speed_estimate(
    blocks: &BlockSample,
    grouping: Grouping,
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    require_blocks(blocks)?;
    let d = blocks.d;
    let (grouping, fell_back) = effective_grouping(blocks, grouping);
    let units = unit_sums(blocks, grouping, d, |b, out| {
        for (o, x) in out.iter_mut().zip(&b.dx) {
            *o = *x as f64;
        }
    });
    let (v, se) = ratio_with_se(&units);
    let q = critical_value(level, units.len());
    let ci = v
        .iter()
        .zip(&se)
        .map(|(x, s)| [x - q * s, x + q * s])
        .collect();

    let mut report = EstimatorReport::new(
        "regeneration_ratio",
        Estimate::Vector(v),
        Estimate::Vector(se),
        Interval::Vector(ci),
        level,
        blocks.len(),
    )
    .diag("grouping", serde_json::to_value(grouping).unwrap())
    .diag("units", units.len())
    .diag("grouping_fallback", fell_back)
    .diag("low_power", blocks.len() < 30)
    .diag("dropped_first", blocks.dropped_first)
    .diag("dropped_last", blocks.dropped_last);

    let groups = blocks.by_replica();
    if groups.len() >= 2 {
        report = report.diag("jackknife_se", jackknife_se(&groups, d));
    }
    Ok(report)
}

/// Leave-one-replica-out jackknife standard error of the ratio.
fn jackknife_se(groups: &[Vec<&SampleBlock>], d: usize) -> Vec<f64> {
    let g = groups.len() as f64;
    let sums: Vec<(f64, Vec<f64>)> = groups
        .iter()
        .map(|grp| {
            let mut x = vec![0.0; d];
            let mut t = 0.0;
            for b in grp {
                t += b.dtau as f64;
                for (xi, dx) in x.iter_mut().zip(&b.dx) {
                    *xi += *dx as f64;
                }
            }
            (t, x)
        })
        .collect();
    let tt: f64 = sums.iter().map(|s| s.0).sum();
    (0..d)
        .map(|i| {
            let tx: f64 = sums.iter().map(|s| s.1[i]).sum();
            let loo: Vec<f64> = sums.iter().map(|s| (tx - s.1[i]) / (tt - s.0)).collect();
            let m = loo.iter().sum::<f64>() / g;
            ((g - 1.0) / g * loo.iter().map(|x| (x - m) * (x - m)).sum::<f64>()).sqrt()
        })
        .collect()
}

/// `A = sum r r^T / sum dtau` with residuals `r = dX - dtau v`.
pub fn covariance_estimate(
    blocks: &BlockSample,
    v: &[f64],
    grouping: Grouping,
    level: f64,
) -> Result<EstimatorReport, EstimatorError> {
    require_blocks(blocks)?;
    let d = blocks.d;
    if v.len() != d {
        return Err(EstimatorError::Invalid(format!(
            "speed has {} components, expected {d}",
            v.len()
        )));
    }
    let (grouping, fell_back) = effective_grouping(blocks, grouping);
    let units = unit_sums(blocks, grouping, d * d, |b, out| {
        let t = b.dtau as f64;
        for i in 0..d {
            let ri = b.dx[i] as f64 - t * v[i];
            for j in 0..d {
                out[i * d + j] = ri * (b.dx[j] as f64 - t * v[j]);
            }
        }
    });
    let (flat, se_flat) = ratio_with_se(&units);
    let mut a = DMatrix::from_row_slice(d, d, &flat);
    a = (&a + a.transpose()) * 0.5;
    let eig = a.clone().symmetric_eigen();
    let min_eig = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let rows = |m: &[f64]| -> Vec<Vec<f64>> { m.chunks(d).map(<[f64]>::to_vec).collect() };
    let sym: Vec<f64> = a.transpose().iter().copied().collect();
    Ok(EstimatorReport::new(
        "regeneration_covariance",
        Estimate::Matrix(rows(&sym)),
        Estimate::Matrix(rows(&se_flat)),
        Interval::None,
        level,
        blocks.len(),
    )
    .diag("min_eigenvalue", min_eig)
    .diag(
        "eigenvalues",
        eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
    )
    .diag("grouping", serde_json::to_value(grouping).unwrap())
    .diag("grouping_fallback", fell_back)
    .diag("non_degenerate", min_eig > 0.0))
}

/// Difference between the direct estimate of `X_n . ell / n` and the
/// regeneration speed projected on `ell`, in units of the joint standard
/// error `sqrt(se_1^2 + se_2^2)`.
pub fn speed_consistency(
    direct: &EstimatorReport,
    regen: &EstimatorReport,
    dir: &Direction,
) -> Result<(f64, f64), EstimatorError> {
    let a = direct
        .estimate
        .scalar()
        .ok_or_else(|| EstimatorError::Invalid("direct speed must be scalar".into()))?;
    let sa = direct.se.scalar().unwrap_or(0.0);
    let v = regen
        .estimate
        .vector()
        .ok_or_else(|| EstimatorError::Invalid("regeneration speed must be a vector".into()))?;
    let sv = regen.se.vector().unwrap_or(&[]);
    let b = dir.dot(v);
    // component SEs projected as if independent
    let sb2: f64 = dir
        .components()
        .iter()
        .zip(sv)
        .map(|(l, s)| l * l * s * s)
        .sum();
    Ok((a - b, (sa * sa + sb2).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(blocks: &[(u64, u64, [i32; 2])]) -> BlockSample {
        BlockSample::from_blocks(
            2,
            blocks
                .iter()
                .enumerate()
                .map(|(k, (rep, t, x))| SampleBlock {
                    replica: *rep,
                    k: k + 1,
                    dtau: *t,
                    dx: x.to_vec(),
                    dproj: x[0] as f64,
                })
                .collect(),
        )
    }

    #[test]
    fn ratio_of_sums() {
        let bs = sample(&[(0, 3, [2, 0]), (0, 5, [4, 0])]);
        let r = speed_estimate(&bs, Grouping::Block, 0.95).unwrap();
        assert!((r.estimate.vector().unwrap()[0] - 0.75).abs() < 1e-15);
        assert!(r.ci_contains_estimate());
    }

    #[test]
    fn deterministic_walk_has_unit_speed_and_zero_se() {
        let bs = sample(&[
            (0, 1, [1, 0]),
            (0, 1, [1, 0]),
            (1, 1, [1, 0]),
            (1, 1, [1, 0]),
        ]);
        let r = speed_estimate(&bs, Grouping::Replica, 0.95).unwrap();
        assert_eq!(r.estimate.vector().unwrap(), &[1.0, 0.0]);
        assert_eq!(r.se.vector().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn identical_blocks_give_exact_ratio() {
        let bs = sample(&[(0, 7, [3, -2]); 5]);
        let r = speed_estimate(&bs, Grouping::Block, 0.95).unwrap();
        assert_eq!(r.estimate.vector().unwrap(), &[3.0 / 7.0, -2.0 / 7.0]);
    }

    #[test]
    fn too_few_blocks() {
        let bs = sample(&[(0, 1, [1, 0])]);
        assert!(matches!(
            speed_estimate(&bs, Grouping::Block, 0.95),
            Err(EstimatorError::InsufficientData(_))
        ));
        assert!(speed_estimate(&BlockSample::new(2), Grouping::Block, 0.95).is_err());
    }

    #[test]
    fn delta_method_matches_hand_computation() {
        // units (t, x): (2, 1), (4, 3), (6, 2) -> r = 6/12
        let bs = sample(&[(0, 2, [1, 0]), (1, 4, [3, 0]), (2, 6, [2, 0])]);
        let r = speed_estimate(&bs, Grouping::Replica, 0.95).unwrap();
        let e = [1.0 - 1.0, 3.0 - 2.0, 2.0 - 3.0];
        let s2 = e.iter().map(|x| x * x).sum::<f64>() / 2.0;
        let want = (s2 / 3.0f64).sqrt() / 4.0;
        assert!((r.se.vector().unwrap()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn two_residual_covariance() {
        let bs = sample(&[(0, 1, [1, 0]), (0, 1, [0, 1])]);
        let r = covariance_estimate(&bs, &[0.5, 0.5], Grouping::Block, 0.95).unwrap();
        let a = r.estimate.matrix().unwrap();
        let want = [[0.25, -0.25], [-0.25, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_residuals_give_zero_matrix() {
        let bs = sample(&[(0, 2, [2, 0]), (0, 3, [3, 0]), (1, 1, [1, 0])]);
        let r = covariance_estimate(&bs, &[1.0, 0.0], Grouping::Replica, 0.95).unwrap();
        for row in r.estimate.matrix().unwrap() {
            assert!(row.iter().all(|x| *x == 0.0));
        }
    }
}
