//! Estimators and theory checks over replica ensembles and regeneration
//! blocks.
//!
//! Everything here is a pure function of its inputs; simulation happens
//! elsewhere. Reports share one shape ([`EstimatorReport`]) so they can be
//! serialized uniformly.

mod azuma;
mod clt;
mod ensemble;
mod speed;
mod stats;
mod submart;
mod tail;

pub use azuma::{azuma_bound, azuma_check, AzumaMode};
pub use clt::{
    clt_test, kolmogorov_survival, ks_statistic_normal, lag1_autocorrelation, standardized_batches,
};
pub use ensemble::{
    advance_check, direct_speed, escape_probability, local_time_check, range_exponent,
    site_local_time_check, wilson_interval,
};
pub use speed::{covariance_estimate, speed_consistency, speed_estimate, Grouping};
pub use stats::{critical_value, normal_cdf, ols, Ols};
pub use submart::{
    margin_at, search_submartingale_exponent, submartingale_margin, submartingale_margin_laws,
};
pub use tail::{moment_stability, regen_tail, tau_growth, Survival};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::ModelError;
use crate::renewal::RegenerationSequence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Point estimate (or standard error) of any shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Estimate {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl Estimate {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Estimate::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Estimate::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn matrix(&self) -> Option<&[Vec<f64>]> {
        match self {
            Estimate::Matrix(m) => Some(m),
            _ => None,
        }
    }
}

/// Confidence interval matching the estimate's shape; matrices carry none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Interval {
    Scalar([f64; 2]),
    Vector(Vec<[f64; 2]>),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub method: String,
    pub estimate: Estimate,
    pub se: Estimate,
    pub ci: Interval,
    pub level: f64,
    pub n: usize,
    pub diagnostics: Map<String, Value>,
}

impl EstimatorReport {
    pub(crate) fn new(
        method: &str,
        estimate: Estimate,
        se: Estimate,
        ci: Interval,
        level: f64,
        n: usize,
    ) -> Self {
        EstimatorReport {
            method: method.to_string(),
            estimate,
            se,
            ci,
            level,
            n,
            diagnostics: Map::new(),
        }
    }

    pub(crate) fn diag(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.to_string(), value.into());
        self
    }

    pub fn diagnostic(&self, key: &str) -> Option<&Value> {
        self.diagnostics.get(key)
    }

    pub fn flag(&self, key: &str) -> bool {
        self.diagnostics
            .get(key)
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// `true` when every finite interval contains its point estimate.
    pub fn ci_contains_estimate(&self) -> bool {
        let inside = |x: f64, c: &[f64; 2]| !x.is_finite() || (c[0] <= x && x <= c[1]);
        match (&self.estimate, &self.ci) {
            (Estimate::Scalar(x), Interval::Scalar(c)) => inside(*x, c),
            (Estimate::Vector(v), Interval::Vector(c)) => {
                v.len() == c.len() && v.iter().zip(c).all(|(x, c)| inside(*x, c))
            }
            (_, Interval::None) => true,
            _ => false,
        }
    }
}

/// One regeneration block with its replica of origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub replica: u64,
    pub k: usize,
    pub dtau: u64,
    pub dx: Vec<i32>,
    pub dproj: f64,
}

/// Blocks `tau_k -> tau_{k+1}`, `k >= 1`, pooled over replicas. The
/// initial segment `0 -> tau_1` and the last confirmed block of every
/// replica are excluded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockSample {
    pub d: usize,
    pub blocks: Vec<SampleBlock>,
    pub replicas: usize,
    pub dropped_first: usize,
    pub dropped_last: usize,
    pub dropped_window: usize,
}

impl BlockSample {
    pub fn new(d: usize) -> Self {
        BlockSample {
            d,
            ..Default::default()
        }
    }

    /// Adds one replica's sequence. Blocks ending within `safety_window`
    /// steps of the horizon are dropped as well.
    pub fn push_sequence(
        &mut self,
        replica: u64,
        seq: &RegenerationSequence,
        safety_window: u64,
    ) -> Result<(), EstimatorError> {
        self.replicas += 1;
        if seq.censor.first_block_present {
            self.dropped_first += 1;
        }
        let Some((_, kept)) = seq.blocks.split_last() else {
            return Ok(());
        };
        self.dropped_last += 1;
        let limit = seq.censor.horizon.saturating_sub(safety_window);
        for b in kept {
            if b.dx.len() != self.d {
                return Err(EstimatorError::Invalid(format!(
                    "block displacement has {} coordinates, expected {}",
                    b.dx.len(),
                    self.d
                )));
            }
            if safety_window > 0 && b.tau_k + b.dtau > limit {
                self.dropped_window += 1;
                continue;
            }
            self.blocks.push(SampleBlock {
                replica,
                k: b.k,
                dtau: b.dtau,
                dx: b.dx.clone(),
                dproj: b.dproj,
            });
        }
        Ok(())
    }

    pub fn from_blocks(d: usize, blocks: Vec<SampleBlock>) -> Self {
        let mut reps: Vec<u64> = blocks.iter().map(|b| b.replica).collect();
        reps.sort_unstable();
        reps.dedup();
        BlockSample {
            d,
            replicas: reps.len(),
            blocks,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dtaus(&self) -> Vec<u64> {
        self.blocks.iter().map(|b| b.dtau).collect()
    }

    /// Blocks grouped by replica, each group in block order.
    pub fn by_replica(&self) -> Vec<Vec<&SampleBlock>> {
        let mut groups: std::collections::BTreeMap<u64, Vec<&SampleBlock>> = Default::default();
        for b in &self.blocks {
            groups.entry(b.replica).or_default().push(b);
        }
        groups.into_values().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renewal::RenewalDetector;

    #[test]
    fn first_and_last_blocks_are_excluded() {
        let mut det = RenewalDetector::new();
        for j in 0..=6i32 {
            det.observe_site(j as u64, j as f64, &[j, 0]).unwrap();
        }
        let seq = det.finalize(6, 0.0);
        assert_eq!(seq.taus.len(), 6);
        let mut bs = BlockSample::new(2);
        bs.push_sequence(0, &seq, 0).unwrap();
        assert_eq!(bs.len(), 4);
        assert_eq!(bs.dropped_first, 1);
        assert_eq!(bs.dropped_last, 1);
        assert!(bs.blocks.iter().all(|b| b.k >= 1));
        let mut windowed = BlockSample::new(2);
        windowed.push_sequence(0, &seq, 2).unwrap();
        assert_eq!(windowed.len(), 3);
    }

    #[test]
    fn report_json_shape() {
        let r = EstimatorReport::new(
            "x",
            Estimate::Scalar(1.0),
            Estimate::Scalar(0.0),
            Interval::Scalar([1.0, 1.0]),
            0.95,
            3,
        )
        .diag("flag", true);
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["method"], "x");
        assert_eq!(v["ci"][1], 1.0);
        assert_eq!(v["n"], 3);
        assert_eq!(v["diagnostics"]["flag"], true);
        assert!(r.ci_contains_estimate());
    }
}
