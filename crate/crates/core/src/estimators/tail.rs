//! Regeneration-time tails.

use serde::Serialize;

use super::stats::{critical_value, ols};
use super::{BlockSample, Estimate, EstimatorError, EstimatorReport, Interval};

pub const MIN_TAIL_BLOCKS: usize = 100;
/// Survival window used for the stretched-exponential fit.
pub const FIT_WINDOW: (f64, f64) = (0.01, 0.5);

/// Empirical survival function `S(n) = #{x > n} / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Survival {
    sorted: Vec<u64>,
}

impl Survival {
    pub fn new(samples: &[u64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        Survival { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn at(&self, n: u64) -> f64 {
        let above = self.sorted.len() - self.sorted.partition_point(|&x| x <= n);
        above as f64 / self.sorted.len() as f64
    }

    /// `(n, S(n))` at every distinct sample value.
    pub fn points(&self) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64)> = Vec::new();
        for &x in &self.sorted {
            if out.last().map(|p| p.0) != Some(x) {
                out.push((x, self.at(x)));
            }
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,survival")?;
        for (n, s) in self.points() {
            writeln!(w, "{n},{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
}

fn moments(xs: &[u64]) -> Moments {
    let n = xs.len() as f64;
    Moments {
        mean: xs.iter().map(|&x| x as f64).sum::<f64>() / n,
        second: xs.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>() / n,
    }
}

/// Fits `log(-log S(n)) = c + alpha log n` on the window
/// `S in [0.01, 0.5]` and reports the first two moments of `dtau`.
pub fn regen_tail(blocks: &BlockSample, level: f64) -> Result<EstimatorReport, EstimatorError> {
    let dt = blocks.dtaus();
    if dt.len() < MIN_TAIL_BLOCKS {
        return Err(EstimatorError::InsufficientData(format!(
            "tail fit needs {MIN_TAIL_BLOCKS} blocks, got {}",
            dt.len()
        )));
    }
    let surv = Survival::new(&dt);
    let (xs, ys): (Vec<f64>, Vec<f64>) = surv
        .points()
        .into_iter()
        .filter(|(n, s)| *n >= 1 && *s >= FIT_WINDOW.0 && *s <= FIT_WINDOW.1)
        .map(|(n, s)| ((n as f64).ln(), (-s.ln()).ln()))
        .unzip();
    let m = moments(&dt);
    let base = |est: f64, se: f64, ci: [f64; 2], n: usize| {
        EstimatorReport::new(
            "stretched_exponential_tail",
            Estimate::Scalar(est),
            Estimate::Scalar(se),
            Interval::Scalar(ci),
            level,
            n,
        )
        .diag("mean_dtau", m.mean)
        .diag("second_moment_dtau", m.second)
        .diag("blocks", dt.len())
        .diag("fit_points", xs.len())
    };
    match ols(&xs, &ys).filter(|f| f.n >= 3) {
        Some(fit) => {
            let q = critical_value(level, fit.n);
            Ok(base(
                fit.slope,
                fit.slope_se,
                [fit.slope - q * fit.slope_se, fit.slope + q * fit.slope_se],
                dt.len(),
            )
            .diag("r2", fit.r2)
            .diag("intercept", fit.intercept)
            .diag("degenerate", false))
        }
        None => Ok(base(0.0, 0.0, [0.0, 0.0], dt.len()).diag("degenerate", true)),
    }
}

/// Relative changes `(|m1' - m1| / m1, |m2' - m2| / m2)` of the first and
/// second moments between two samples (e.g. a horizon and its double).
pub fn moment_stability(short: &[u64], long: &[u64]) -> Result<(f64, f64), EstimatorError> {
    if short.is_empty() || long.is_empty() {
        return Err(EstimatorError::InsufficientData(
            "moment comparison needs non-empty samples".into(),
        ));
    }
    let a = moments(short);
    let b = moments(long);
    Ok((
        (b.mean - a.mean).abs() / a.mean,
        (b.second - a.second).abs() / a.second,
    ))
}

/// `max_m tau_m / m` over confirmed times.
pub fn tau_growth(taus: &[u64]) -> Option<f64> {
    taus.iter()
        .enumerate()
        .map(|(i, &t)| t as f64 / (i + 1) as f64)
        .reduce(f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::SampleBlock;

    fn sample(dt: &[u64]) -> BlockSample {
        BlockSample::from_blocks(
            1,
            dt.iter()
                .enumerate()
                .map(|(k, &t)| SampleBlock {
                    replica: 0,
                    k: k + 1,
                    dtau: t,
                    dx: vec![1],
                    dproj: 1.0,
                })
                .collect(),
        )
    }

    #[test]
    fn survival_counts_strict_exceedance() {
        let s = Survival::new(&[1, 1, 2, 4]);
        assert_eq!(s.at(2), 0.25);
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(1), 0.5);
        assert_eq!(s.at(4), 0.0);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let s = Survival::new(&[5; 10]);
        assert_eq!(s.at(4), 1.0);
        assert_eq!(s.at(5), 0.0);
        let r = regen_tail(&sample(&[5; 200]), 0.95).unwrap();
        assert!(r.flag("degenerate"));
    }

    #[test]
    fn too_few_blocks_for_fit() {
        assert!(matches!(
            regen_tail(&sample(&[1, 2, 3]), 0.95),
            Err(EstimatorError::InsufficientData(_))
        ));
    }

    #[test]
    fn recovers_exponent_of_exact_stretched_exponential() {
        // quantiles of S(n) = exp(-n^0.5) rounded up to integers
        let n = 20_000;
        let dt: Vec<u64> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                (-u.ln()).powf(2.0).ceil() as u64
            })
            .collect();
        let r = regen_tail(&sample(&dt), 0.95).unwrap();
        let a = r.estimate.scalar().unwrap();
        assert!((a - 0.5).abs() < 0.05, "alpha {a}");
        assert!(r.diagnostic("r2").unwrap().as_f64().unwrap() > 0.95);
    }

    #[test]
    fn doubling_stability() {
        let (m1, m2) = moment_stability(&[1, 2, 3], &[1, 2, 3, 2]).unwrap();
        assert_eq!(m1, 0.0);
        assert!((m2 - (4.5f64 - 14.0 / 3.0).abs() / (14.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn growth_of_regeneration_times() {
        assert_eq!(tau_growth(&[4, 5, 6]), Some(4.0));
        assert_eq!(tau_growth(&[]), None);
    }
}
