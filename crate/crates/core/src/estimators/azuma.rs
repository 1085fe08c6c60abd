//! Empirical check of Azuma-Hoeffding bounds.

use serde::{Deserialize, Serialize};

use super::{Estimate, EstimatorError, EstimatorReport, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AzumaMode {
    /// `P[|Z_n - Z_0| >= a] <= 2 exp(-a^2 / (2 n c^2))` for martingales.
    #[default]
    TwoSided,
    /// `P[Z_n - Z_0 >= a] <= exp(-a^2 / (2 n c^2))` for supermartingales.
    Upper,
}

/// `2 exp(-a^2 / (2 n c^2))`.
pub fn azuma_bound(n: u64, a: f64, c: f64) -> f64 {
    2.0 * (-(a * a) / (2.0 * n as f64 * c * c)).exp()
}

/// Compares exceedance frequencies of the increments `Z_n - Z_0` (one per
/// replica) with the bound plus three binomial standard errors.
pub fn azuma_check(
    increments: &[f64],
    n: u64,
    c: f64,
    a_grid: &[f64],
    mode: AzumaMode,
) -> Result<EstimatorReport, EstimatorError> {
    if increments.is_empty() {
        return Err(EstimatorError::InsufficientData("no replicas".into()));
    }
    if n == 0 || !(c > 0.0) {
        return Err(EstimatorError::Invalid("need n >= 1 and c > 0".into()));
    }
    let m = increments.len() as f64;
    let mut freq = Vec::with_capacity(a_grid.len());
    let mut se = Vec::with_capacity(a_grid.len());
    let mut bounds = Vec::with_capacity(a_grid.len());
    let mut ok = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        let hits = increments
            .iter()
            .filter(|&&z| match mode {
                AzumaMode::TwoSided => z.abs() >= a,
                AzumaMode::Upper => z >= a,
            })
            .count();
        let f = hits as f64 / m;
        let s = (f * (1.0 - f) / m).sqrt();
        let bound = match mode {
            AzumaMode::TwoSided => azuma_bound(n, a, c),
            AzumaMode::Upper => azuma_bound(n, a, c) / 2.0,
        };
        ok.push(f <= bound + 3.0 * s);
        freq.push(f);
        se.push(s);
        bounds.push(bound);
    }
    let all_ok = ok.iter().all(|x| *x);
    let ci = freq
        .iter()
        .zip(&se)
        .map(|(f, s)| [(f - 3.0 * s).max(0.0), f + 3.0 * s])
        .collect();
    Ok(EstimatorReport::new(
        "azuma",
        Estimate::Vector(freq),
        Estimate::Vector(se),
        Interval::Vector(ci),
        0.9973,
        increments.len(),
    )
    .diag("mode", serde_json::to_value(mode).unwrap())
    .diag("a", a_grid.to_vec())
    .diag("bound", bounds)
    .diag("within_bound", ok)
    .diag("all_within_bound", all_ok)
    .diag("horizon", n)
    .diag("c", c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_value() {
        let b = azuma_bound(100, 30.0, 1.0);
        assert!((b - 2.0 * (-4.5f64).exp()).abs() < 1e-15);
        assert!((b - 0.022217993076484612).abs() < 1e-15);
        assert_eq!(azuma_bound(100, 0.0, 1.0), 2.0);
    }

    #[test]
    fn flags_violations() {
        // every path moves n steps in one direction: frequency 1 at a = n
        let r = azuma_check(&[10.0; 100], 10, 1.0, &[0.0, 10.0], AzumaMode::TwoSided).unwrap();
        assert_eq!(
            r.diagnostic("within_bound").unwrap(),
            &serde_json::json!([true, false])
        );
        assert!(!r.flag("all_within_bound"));
    }

    #[test]
    fn one_sided_variant() {
        let inc = [-10.0; 50];
        let r = azuma_check(&inc, 10, 1.0, &[5.0], AzumaMode::Upper).unwrap();
        assert!(r.flag("all_within_bound"));
        assert_eq!(r.estimate.vector().unwrap(), &[0.0]);
    }
}
