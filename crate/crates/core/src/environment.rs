//! I.i.d. random environments for the excited walk in random environment.
//!
//! The environment is never stored. The randomness attached to a site is a
//! hash of `(master_seed, site)`, so every query of the same site (on a
//! revisit, in a re-run, or from another thread) sees the same law.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{biased_law, Direction, StepDistribution, DRIFT_TOL};
use crate::rng::{mix64, unit_f64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("revisit law has nonzero drift {drift:?} ({context})")]
    RevisitDrift { context: String, drift: Vec<f64> },
}

/// A user-supplied environment family.
///
/// `site_law` must be a pure function of its arguments. `support_laws` lists
/// laws whose extremes bound the whole family (they are what the validators
/// enumerate), tagged with a label and the visit count they apply to.
pub trait EnvironmentFamily: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn site_law(&self, master_seed: u64, site: &[i32], visit_count: u32) -> StepDistribution;
    fn support_laws(&self) -> Vec<(String, u32, StepDistribution)>;
}

/// Built-in family: each site draws `p_x ~ Uniform[p_lo, p_hi]`; the first
/// visit uses the nearest-neighbour law biased toward `+e_axis` with `p_x`,
/// later visits use the symmetric law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteBias {
    pub d: usize,
    pub p_lo: f64,
    pub p_hi: f64,
    #[serde(default)]
    pub axis: usize,
}

impl SiteBias {
    pub fn new(d: usize, p_lo: f64, p_hi: f64) -> Result<Self, EnvironmentError> {
        let sb = SiteBias {
            d,
            p_lo,
            p_hi,
            axis: 0,
        };
        sb.check()?;
        Ok(sb)
    }

    fn check(&self) -> Result<(), EnvironmentError> {
        if self.d < 2 || self.d > crate::MAX_DIM {
            return Err(EnvironmentError::Invalid(format!(
                "dimension must be in 2..={}, got {}",
                crate::MAX_DIM,
                self.d
            )));
        }
        if self.axis >= self.d {
            return Err(EnvironmentError::Invalid(format!(
                "bias axis {} out of range",
                self.axis
            )));
        }
        if !(0.5 <= self.p_lo && self.p_lo <= self.p_hi && self.p_hi <= 1.0) {
            return Err(EnvironmentError::Invalid(format!(
                "need 1/2 <= p_lo <= p_hi <= 1, got [{}, {}]",
                self.p_lo, self.p_hi
            )));
        }
        Ok(())
    }

    #[inline]
    fn bias(&self, u: f64) -> f64 {
        self.p_lo + (self.p_hi - self.p_lo) * u
    }
}

#[derive(Debug, Clone)]
pub enum EnvironmentLaw {
    SiteBias(SiteBias),
    Custom(Arc<dyn EnvironmentFamily>),
}

#[derive(Debug, Clone)]
pub struct EnvironmentModel {
    law: EnvironmentLaw,
    master_seed: u64,
    declared_kappa: Option<f64>,
    declared_lambda: Option<f64>,
}

/// Hash of a site under a seed. Coordinates are folded in one at a time
/// together with their index, so permuted coordinates hash differently.
#[inline]
pub fn site_hash(seed: u64, site: &[i32]) -> u64 {
    let mut h = mix64(seed ^ 0x6A09_E667_F3BC_C909);
    for (i, &c) in site.iter().enumerate() {
        h = mix64(h ^ ((c as u32 as u64) | ((i as u64) << 32)));
    }
    h
}

impl EnvironmentModel {
    pub fn site_bias(family: SiteBias, master_seed: u64) -> Self {
        EnvironmentModel {
            law: EnvironmentLaw::SiteBias(family),
            master_seed,
            declared_kappa: None,
            declared_lambda: None,
        }
    }

    pub fn custom(family: Arc<dyn EnvironmentFamily>, master_seed: u64) -> Self {
        EnvironmentModel {
            law: EnvironmentLaw::Custom(family),
            master_seed,
            declared_kappa: None,
            declared_lambda: None,
        }
    }

    /// Declared constants are checked against the computed ones by
    /// [`EnvironmentModel::validate`].
    pub fn with_declared(mut self, kappa: Option<f64>, lambda: Option<f64>) -> Self {
        self.declared_kappa = kappa;
        self.declared_lambda = lambda;
        self
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        let mut e = self.clone();
        e.master_seed = master_seed;
        e
    }

    pub fn law(&self) -> &EnvironmentLaw {
        &self.law
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn dim(&self) -> usize {
        match &self.law {
            EnvironmentLaw::SiteBias(sb) => sb.d,
            EnvironmentLaw::Custom(f) => f.dim(),
        }
    }

    /// First-visit bias `p_x` of the built-in family at `site`.
    ///
    /// # Panics
    /// If the environment is not a site-bias family.
    #[inline]
    pub fn bias_at(&self, site: &[i32]) -> f64 {
        match &self.law {
            EnvironmentLaw::SiteBias(sb) => sb.bias(unit_f64(site_hash(self.master_seed, site))),
            EnvironmentLaw::Custom(_) => panic!("site_bias called on a custom family"),
        }
    }

    /// `omega_{visit_count}(site, .)`.
    pub fn site_law(&self, site: &[i32], visit_count: u32) -> StepDistribution {
        match &self.law {
            EnvironmentLaw::SiteBias(sb) => {
                if visit_count == 0 {
                    biased_law(sb.d, sb.axis, self.bias_at(site))
                } else {
                    StepDistribution::symmetric(sb.d)
                }
            }
            EnvironmentLaw::Custom(f) => f.site_law(self.master_seed, site, visit_count),
        }
    }

    /// Extreme members of the family and the revisit law.
    pub fn support_laws(&self) -> Vec<(String, u32, StepDistribution)> {
        match &self.law {
            EnvironmentLaw::SiteBias(sb) => {
                let mut out = vec![(
                    format!("first visit, p = {}", sb.p_lo),
                    0,
                    biased_law(sb.d, sb.axis, sb.p_lo),
                )];
                if sb.p_hi != sb.p_lo {
                    out.push((
                        format!("first visit, p = {}", sb.p_hi),
                        0,
                        biased_law(sb.d, sb.axis, sb.p_hi),
                    ));
                }
                out.push(("revisit".into(), 1, StepDistribution::symmetric(sb.d)));
                out
            }
            EnvironmentLaw::Custom(f) => f.support_laws(),
        }
    }

    /// Checks declared constants against the computed ones and returns
    /// `(kappa, lambda)`.
    pub fn validate(&self, dir: &Direction) -> Result<(f64, f64), EnvironmentError> {
        let kappa = validate_uniform_ellipticity(self)?;
        let lambda = validate_uniform_excitation(self, dir)?;
        if let Some(k) = self.declared_kappa {
            if k > kappa + DRIFT_TOL {
                return Err(EnvironmentError::Invalid(format!(
                    "declared kappa {k} exceeds the family's ellipticity {kappa}"
                )));
            }
        }
        if let Some(l) = self.declared_lambda {
            if l > lambda + DRIFT_TOL {
                return Err(EnvironmentError::Invalid(format!(
                    "declared lambda {l} exceeds the family's excitation {lambda}"
                )));
            }
        }
        Ok((kappa, lambda))
    }
}

/// Infimum over the family of the smallest nearest-neighbour probability.
pub fn validate_uniform_ellipticity(env: &EnvironmentModel) -> Result<f64, EnvironmentError> {
    let kappa = match &env.law {
        // the -e_axis probability (1 - p_hi)/d is the smallest one
        EnvironmentLaw::SiteBias(sb) => {
            sb.check()?;
            ((1.0 - sb.p_hi) / sb.d as f64).min(1.0 / (2 * sb.d) as f64)
        }
        EnvironmentLaw::Custom(f) => {
            let d = f.dim();
            let mut kappa = f64::INFINITY;
            for (_, _, law) in f.support_laws() {
                for k in 0..2 * d {
                    kappa = kappa.min(law.prob_of(&crate::model::unit_step(d, k)));
                }
            }
            kappa
        }
    };
    if !(kappa > 0.0) {
        return Err(EnvironmentError::Invalid(format!(
            "ellipticity constant is {kappa}; some direction has no mass"
        )));
    }
    Ok(kappa)
}

/// Infimum of the first-visit drift along `dir`, after checking that every
/// later-visit law has zero drift.
pub fn validate_uniform_excitation(
    env: &EnvironmentModel,
    dir: &Direction,
) -> Result<f64, EnvironmentError> {
    if dir.dim() != env.dim() {
        return Err(EnvironmentError::Invalid(format!(
            "direction has dimension {}, environment {}",
            dir.dim(),
            env.dim()
        )));
    }
    let mut lambda = f64::INFINITY;
    for (label, visits, law) in env.support_laws() {
        let drift = law.drift();
        if visits == 0 {
            lambda = lambda.min(dir.dot(&drift));
        } else if drift.iter().any(|x| x.abs() > DRIFT_TOL) {
            return Err(EnvironmentError::RevisitDrift {
                context: label,
                drift,
            });
        }
    }
    if !(lambda > 0.0) {
        return Err(EnvironmentError::Invalid(format!(
            "excitation constant is {lambda}; first visits need a strictly positive push"
        )));
    }
    Ok(lambda)
}
