//! Step kernels and the structural conditions of a generalized excited walk.
//!
//! A [`KernelSpec`] maps the walk's context (site, number of earlier visits,
//! cookie-set membership) to a finite [`StepDistribution`]. The validators
//! recompute the constants of the model from the kernel itself:
//!
//! * bounded jumps: the smallest `K` with `|step| <= K`,
//! * drift: zero drift on revisits and outside the cookie set, and the
//!   infimum `lambda` of the first-visit drift along `ell`,
//! * ellipticity: a certified pair `(h, r)` with `P[step . ell > r] >= h` in
//!   every context, and `P[step . ell' > r] >= h` for every probe direction
//!   `ell'` in zero-drift contexts.

use std::f64::consts::PI;
use std::fmt;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::environment::{EnvironmentLaw, EnvironmentModel};
use crate::rng::RngStream;
use crate::{Site, MAX_DIM};

/// Tolerance for zero-drift checks and for probabilities summing to one.
pub const DRIFT_TOL: f64 = 1e-12;

/// Default number of probe directions used by the ellipticity certificate.
pub const DEFAULT_PROBE_COUNT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: kernel has d = {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("no law for context first_visit={first_visit}, in_cookie_set={in_cookie_set}")]
    MissingContext {
        first_visit: bool,
        in_cookie_set: bool,
    },
    #[error("invalid step distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "bounded-jump condition violated: jump of length {found} exceeds declared K = {declared}"
    )]
    ConditionB { declared: f64, found: f64 },
    #[error("zero-drift condition violated in context {context}: drift = {drift:?}")]
    ConditionC { context: String, drift: Vec<f64> },
    #[error("ellipticity condition violated: {context}, direction {direction:?}")]
    ConditionE {
        context: String,
        direction: Vec<f64>,
    },
}

/// A unit vector `ell` in `R^d`, `d >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Direction {
    ell: Vec<f64>,
}

impl Direction {
    /// Accepts a vector that is already of unit length (within 1e-12).
    pub fn new(ell: Vec<f64>) -> Result<Self, ModelError> {
        if ell.len() < 2 || ell.len() > MAX_DIM {
            return Err(ModelError::InvalidParameter(format!(
                "direction dimension must be in 2..={MAX_DIM}, got {}",
                ell.len()
            )));
        }
        let norm = ell.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(ModelError::InvalidParameter(format!(
                "direction must have unit norm, got {norm}"
            )));
        }
        Ok(Direction { ell })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(v: &[f64]) -> Result<Self, ModelError> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(ModelError::InvalidParameter(
                "direction vector must be nonzero and finite".into(),
            ));
        }
        let ell: Vec<f64> = v.iter().map(|x| x / norm).collect();
        // normalization can leave the norm 1 ulp off; that is within tolerance
        Direction::new(ell)
    }

    /// The coordinate axis `e_{axis}` (zero-based).
    pub fn axis(d: usize, axis: usize) -> Result<Self, ModelError> {
        if axis >= d {
            return Err(ModelError::InvalidParameter(format!(
                "axis {axis} out of range for d = {d}"
            )));
        }
        let mut ell = vec![0.0; d];
        ell[axis] = 1.0;
        Direction::new(ell)
    }

    pub fn dim(&self) -> usize {
        self.ell.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.ell
    }

    /// `x . ell` for a lattice point, summed in coordinate order.
    #[inline]
    pub fn project(&self, site: &[i32]) -> f64 {
        let mut s = 0.0;
        for (x, l) in site.iter().zip(&self.ell) {
            s += *x as f64 * l;
        }
        s
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.ell).map(|(a, b)| a * b).sum()
    }
}

/// A finite law over integer displacement vectors.
///
/// Outcomes keep their insertion order; sampling walks the cumulative sums
/// in that order, so the order is part of the replay contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepDistributionRepr", into = "StepDistributionRepr")]
pub struct StepDistribution {
    dim: usize,
    disp: Vec<i32>,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeRepr {
    pub dz: Vec<i32>,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepDistributionRepr(pub Vec<OutcomeRepr>);

impl TryFrom<StepDistributionRepr> for StepDistribution {
    type Error = ModelError;

    fn try_from(r: StepDistributionRepr) -> Result<Self, ModelError> {
        let dim = r.0.first().map(|o| o.dz.len()).unwrap_or(0);
        StepDistribution::new(dim, r.0.into_iter().map(|o| (o.dz, o.p)).collect())
    }
}

impl From<StepDistribution> for StepDistributionRepr {
    fn from(d: StepDistribution) -> Self {
        StepDistributionRepr(
            d.iter()
                .map(|(dz, p)| OutcomeRepr { dz: dz.to_vec(), p })
                .collect(),
        )
    }
}

impl StepDistribution {
    pub fn new(dim: usize, outcomes: Vec<(Vec<i32>, f64)>) -> Result<Self, ModelError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(ModelError::InvalidDistribution(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if outcomes.is_empty() {
            return Err(ModelError::InvalidDistribution("no outcomes".into()));
        }
        let mut disp = Vec::with_capacity(outcomes.len() * dim);
        let mut probs = Vec::with_capacity(outcomes.len());
        for (dz, p) in &outcomes {
            if dz.len() != dim {
                return Err(ModelError::DimensionMismatch {
                    expected: dim,
                    got: dz.len(),
                });
            }
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(ModelError::InvalidDistribution(format!(
                    "probability {p} of {dz:?} is not in (0, 1]"
                )));
            }
            disp.extend_from_slice(dz);
            probs.push(*p);
        }
        for i in 0..outcomes.len() {
            for j in 0..i {
                if outcomes[i].0 == outcomes[j].0 {
                    return Err(ModelError::InvalidDistribution(format!(
                        "duplicate displacement {:?}",
                        outcomes[i].0
                    )));
                }
            }
        }
        let cum = cumulative(&probs);
        let total = *cum.last().unwrap();
        if (total - 1.0).abs() > DRIFT_TOL {
            return Err(ModelError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(StepDistribution {
            dim,
            disp,
            probs,
            cum,
        })
    }

    pub fn point_mass(dz: Vec<i32>) -> Result<Self, ModelError> {
        let d = dz.len();
        StepDistribution::new(d, vec![(dz, 1.0)])
    }

    /// Nearest-neighbour law listed in the canonical order
    /// `+e_1, -e_1, +e_2, -e_2, ...`; zero-probability neighbours are omitted.
    pub fn nearest_neighbor(d: usize, probs: &[f64]) -> Result<Self, ModelError> {
        if probs.len() != 2 * d {
            return Err(ModelError::InvalidDistribution(format!(
                "expected {} neighbour probabilities, got {}",
                2 * d,
                probs.len()
            )));
        }
        let mut out = Vec::with_capacity(2 * d);
        for (k, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            out.push((unit_step(d, k), p));
        }
        StepDistribution::new(d, out)
    }

    /// Symmetric simple random walk law: every neighbour with `1/(2d)`.
    pub fn symmetric(d: usize) -> Self {
        let p = 1.0 / (2 * d) as f64;
        StepDistribution::nearest_neighbor(d, &vec![p; 2 * d]).expect("valid symmetric law")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn displacement(&self, i: usize) -> &[i32] {
        &self.disp[i * self.dim..(i + 1) * self.dim]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i32], f64)> + '_ {
        self.disp
            .chunks_exact(self.dim)
            .zip(self.probs.iter().copied())
    }

    /// Probability of a given displacement (0 if absent).
    pub fn prob_of(&self, dz: &[i32]) -> f64 {
        self.iter()
            .find(|(z, _)| *z == dz)
            .map(|(_, p)| p)
            .unwrap_or(0.0)
    }

    /// `sum_z z * P(z)`.
    pub fn drift(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (z, p) in self.iter() {
            for (o, zi) in out.iter_mut().zip(z) {
                *o += *zi as f64 * p;
            }
        }
        out
    }

    pub fn is_zero_drift(&self) -> bool {
        self.drift().iter().all(|x| x.abs() <= DRIFT_TOL)
    }

    /// Largest Euclidean jump length.
    pub fn max_norm(&self) -> f64 {
        self.disp
            .chunks_exact(self.dim)
            .map(norm_i)
            .fold(0.0, f64::max)
    }

    /// `P[step . v > r]`.
    pub fn prob_dot_exceeds(&self, v: &[f64], r: f64) -> f64 {
        self.iter()
            .filter(|(z, _)| dot_iv(z, v) > r)
            .map(|(_, p)| p)
            .sum()
    }

    /// Index selected by a single uniform `u` in `[0, 1)`.
    #[inline]
    pub fn sample_index(&self, u: f64) -> usize {
        let last = self.cum.len() - 1;
        for (i, c) in self.cum[..last].iter().enumerate() {
            if u < *c {
                return i;
            }
        }
        last
    }

    /// Draws one displacement, consuming exactly one uniform from `rng`.
    pub fn sample_step(&self, rng: &mut RngStream) -> &[i32] {
        let i = self.sample_index(rng.next_f64());
        self.displacement(i)
    }
}

/// `sample_step` as a free function.
pub fn sample_step<'a>(dist: &'a StepDistribution, rng: &mut RngStream) -> &'a [i32] {
    dist.sample_step(rng)
}

/// `drift` as a free function.
pub fn drift(dist: &StepDistribution) -> Vec<f64> {
    dist.drift()
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Picks an index from probabilities given in order, summing as
/// [`StepDistribution::sample_index`] does so both paths agree bit for bit.
#[inline]
pub(crate) fn sample_index_from_probs(probs: &[f64], u: f64) -> usize {
    // zero entries are skipped so the choice matches a law that omits them
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        last_nonzero = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_nonzero
}

/// Displacement of the `k`-th neighbour in the order `+e_1, -e_1, +e_2, ...`.
pub fn unit_step(d: usize, k: usize) -> Vec<i32> {
    let mut z = vec![0; d];
    z[k / 2] = if k.is_multiple_of(2) { 1 } else { -1 };
    z
}

fn norm_i(z: &[i32]) -> f64 {
    z.iter()
        .map(|x| (*x as f64) * (*x as f64))
        .sum::<f64>()
        .sqrt()
}

fn dot_iv(z: &[i32], v: &[f64]) -> f64 {
    z.iter().zip(v).map(|(a, b)| *a as f64 * b).sum()
}

/// What the kernel may read at the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkContext {
    pub site: Vec<i32>,
    pub first_visit: bool,
    /// Number of earlier visits to `site`.
    pub visit_count: u32,
    pub in_cookie_set: bool,
}

impl WalkContext {
    pub fn new(site: Vec<i32>, visit_count: u32, in_cookie_set: bool) -> Self {
        WalkContext {
            site,
            first_visit: visit_count == 0,
            visit_count,
            in_cookie_set,
        }
    }
}

/// The set `A` of sites that still carry a first-visit push.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CookieSet {
    #[default]
    All,
    Empty,
    /// Sites with `x[axis] >= min`.
    HalfSpace {
        axis: usize,
        min: i32,
    },
    /// Everything except the strip `lo <= x[axis] < hi`.
    Depleted {
        axis: usize,
        lo: i32,
        hi: i32,
    },
}

impl CookieSet {
    #[inline]
    pub fn contains(&self, site: &[i32]) -> bool {
        match *self {
            CookieSet::All => true,
            CookieSet::Empty => false,
            CookieSet::HalfSpace { axis, min } => site[axis] >= min,
            CookieSet::Depleted { axis, lo, hi } => !(lo <= site[axis] && site[axis] < hi),
        }
    }

    /// Membership values a walk can actually observe.
    pub fn reachable_membership(&self) -> &'static [bool] {
        match self {
            CookieSet::All => &[true],
            CookieSet::Empty => &[false],
            _ => &[true, false],
        }
    }

    fn check_dim(&self, d: usize) -> Result<(), ModelError> {
        match *self {
            CookieSet::HalfSpace { axis, .. } | CookieSet::Depleted { axis, .. } if axis >= d => {
                Err(ModelError::InvalidParameter(format!(
                    "cookie-set axis {axis} out of range for d = {d}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub first_visit: bool,
    pub in_cookie_set: bool,
    pub outcomes: StepDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteOverride {
    pub site: Vec<i32>,
    pub first_visit: bool,
    pub outcomes: StepDistribution,
}

/// Context table of a generalized kernel: one law per
/// `(first_visit, in_cookie_set)` key plus optional per-site overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextTable {
    pub entries: Vec<TableEntry>,
    #[serde(default)]
    pub overrides: Vec<SiteOverride>,
}

impl ContextTable {
    /// The same law in every context.
    pub fn uniform(law: StepDistribution) -> Self {
        let mut entries = Vec::with_capacity(4);
        for first_visit in [true, false] {
            for in_cookie_set in [true, false] {
                entries.push(TableEntry {
                    first_visit,
                    in_cookie_set,
                    outcomes: law.clone(),
                });
            }
        }
        ContextTable {
            entries,
            overrides: Vec::new(),
        }
    }

    /// Excited law on first visits inside `A`, revisit law everywhere else.
    pub fn excited(first: StepDistribution, revisit: StepDistribution) -> Self {
        let mut t = ContextTable::uniform(revisit);
        t.entries[0].outcomes = first;
        t
    }

    fn lookup(&self, first_visit: bool, in_cookie_set: bool) -> Option<&StepDistribution> {
        self.entries
            .iter()
            .find(|e| e.first_visit == first_visit && e.in_cookie_set == in_cookie_set)
            .map(|e| &e.outcomes)
    }

    fn lookup_site(&self, site: &[i32], first_visit: bool) -> Option<&StepDistribution> {
        self.overrides
            .iter()
            .find(|o| o.first_visit == first_visit && o.site == site)
            .map(|o| &o.outcomes)
    }

    fn laws(&self) -> impl Iterator<Item = &StepDistribution> {
        self.entries
            .iter()
            .map(|e| &e.outcomes)
            .chain(self.overrides.iter().map(|o| &o.outcomes))
    }
}

#[derive(Debug, Clone)]
pub enum KernelKind {
    /// Nearest-neighbour excited walk biased toward `+e_1` with `p` in `[1/2, 1]`.
    StandardErw {
        p: f64,
    },
    Generalized(ContextTable),
    /// Zero drift in every context.
    Martingale(ContextTable),
    Erwre(EnvironmentModel),
}

/// A complete walk model.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    kind: KernelKind,
    d: usize,
    cookie_set: CookieSet,
    declared_k: f64,
}

/// Label of one enumerable context, used in validation reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextLabel {
    pub first_visit: bool,
    pub in_cookie_set: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site: Option<Vec<i32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl fmt::Display for ContextLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "first_visit={}, in_cookie_set={}",
            self.first_visit, self.in_cookie_set
        )?;
        if let Some(site) = &self.site {
            write!(f, ", site={site:?}")?;
        }
        if let Some(note) = &self.note {
            write!(f, " ({note})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ContextLaw {
    pub label: ContextLabel,
    pub law: StepDistribution,
}

impl KernelSpec {
    pub fn standard_erw(d: usize, p: f64) -> Result<Self, ModelError> {
        check_dim(d)?;
        if !(0.5..=1.0).contains(&p) {
            return Err(ModelError::InvalidParameter(format!(
                "bias p must lie in [1/2, 1], got {p}"
            )));
        }
        Ok(KernelSpec {
            kind: KernelKind::StandardErw { p },
            d,
            cookie_set: CookieSet::All,
            declared_k: 1.0,
        })
    }

    /// Simple symmetric random walk, as a martingale kernel.
    pub fn symmetric(d: usize) -> Result<Self, ModelError> {
        KernelSpec::martingale(d, ContextTable::uniform(StepDistribution::symmetric(d)))
    }

    /// Generalized kernel; `declared_k` defaults to the largest listed jump.
    pub fn generalized(d: usize, table: ContextTable) -> Result<Self, ModelError> {
        check_table(d, &table)?;
        let k = table.laws().map(|l| l.max_norm()).fold(0.0, f64::max);
        Ok(KernelSpec {
            kind: KernelKind::Generalized(table),
            d,
            cookie_set: CookieSet::All,
            declared_k: k,
        })
    }

    /// The same law in every context.
    pub fn constant(law: StepDistribution) -> Result<Self, ModelError> {
        KernelSpec::generalized(law.dim(), ContextTable::uniform(law))
    }

    pub fn martingale(d: usize, table: ContextTable) -> Result<Self, ModelError> {
        check_table(d, &table)?;
        for e in &table.entries {
            if !e.outcomes.is_zero_drift() {
                return Err(ModelError::ConditionC {
                    context: format!(
                        "first_visit={}, in_cookie_set={}",
                        e.first_visit, e.in_cookie_set
                    ),
                    drift: e.outcomes.drift(),
                });
            }
        }
        for o in &table.overrides {
            if !o.outcomes.is_zero_drift() {
                return Err(ModelError::ConditionC {
                    context: format!("site={:?}, first_visit={}", o.site, o.first_visit),
                    drift: o.outcomes.drift(),
                });
            }
        }
        let k = table.laws().map(|l| l.max_norm()).fold(0.0, f64::max);
        Ok(KernelSpec {
            kind: KernelKind::Martingale(table),
            d,
            cookie_set: CookieSet::All,
            declared_k: k,
        })
    }

    pub fn erwre(env: EnvironmentModel) -> Result<Self, ModelError> {
        let d = env.dim();
        check_dim(d)?;
        Ok(KernelSpec {
            kind: KernelKind::Erwre(env),
            d,
            cookie_set: CookieSet::All,
            declared_k: 1.0,
        })
    }

    pub fn with_cookie_set(mut self, cookie_set: CookieSet) -> Result<Self, ModelError> {
        cookie_set.check_dim(self.d)?;
        if matches!(self.kind, KernelKind::Erwre(_)) && cookie_set != CookieSet::All {
            return Err(ModelError::InvalidParameter(
                "random-environment kernels use the full cookie set".into(),
            ));
        }
        self.cookie_set = cookie_set;
        Ok(self)
    }

    pub fn with_declared_k(mut self, k: f64) -> Result<Self, ModelError> {
        if !(k > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "declared K must be positive, got {k}"
            )));
        }
        self.declared_k = k;
        Ok(self)
    }

    /// Same kernel with a different environment seed (no-op for
    /// environment-free kernels).
    pub fn with_environment_seed(&self, seed: u64) -> Self {
        let mut k = self.clone();
        if let KernelKind::Erwre(env) = &mut k.kind {
            *env = env.with_seed(seed);
        }
        k
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn cookie_set(&self) -> &CookieSet {
        &self.cookie_set
    }

    pub fn declared_k(&self) -> f64 {
        self.declared_k
    }

    /// Exact one-step law in the given context.
    pub fn step_distribution(&self, ctx: &WalkContext) -> Result<StepDistribution, ModelError> {
        if ctx.site.len() != self.d {
            return Err(ModelError::DimensionMismatch {
                expected: self.d,
                got: ctx.site.len(),
            });
        }
        if ctx.first_visit != (ctx.visit_count == 0) {
            return Err(ModelError::ContractViolation(format!(
                "first_visit={} inconsistent with visit_count={}",
                ctx.first_visit, ctx.visit_count
            )));
        }
        match &self.kind {
            KernelKind::StandardErw { p } => {
                if ctx.first_visit && ctx.in_cookie_set {
                    Ok(erw_first_visit_law(self.d, *p))
                } else {
                    Ok(StepDistribution::symmetric(self.d))
                }
            }
            KernelKind::Generalized(t) | KernelKind::Martingale(t) => t
                .lookup_site(&ctx.site, ctx.first_visit)
                .or_else(|| t.lookup(ctx.first_visit, ctx.in_cookie_set))
                .cloned()
                .ok_or(ModelError::MissingContext {
                    first_visit: ctx.first_visit,
                    in_cookie_set: ctx.in_cookie_set,
                }),
            KernelKind::Erwre(env) => Ok(env.site_law(&ctx.site, ctx.visit_count)),
        }
    }

    /// Every law the walk can meet, with the context it belongs to. For
    /// random-environment kernels this is the support template: the extreme
    /// members of the family plus the revisit law.
    pub fn context_laws(&self) -> Result<Vec<ContextLaw>, ModelError> {
        let mut out = Vec::new();
        let label = |first_visit, in_cookie_set| ContextLabel {
            first_visit,
            in_cookie_set,
            site: None,
            note: None,
        };
        match &self.kind {
            KernelKind::StandardErw { p } => {
                for &in_a in self.cookie_set.reachable_membership() {
                    for first in [true, false] {
                        let law = if first && in_a {
                            erw_first_visit_law(self.d, *p)
                        } else {
                            StepDistribution::symmetric(self.d)
                        };
                        out.push(ContextLaw {
                            label: label(first, in_a),
                            law,
                        });
                    }
                }
            }
            KernelKind::Generalized(t) | KernelKind::Martingale(t) => {
                for &in_a in self.cookie_set.reachable_membership() {
                    for first in [true, false] {
                        let law = t.lookup(first, in_a).ok_or(ModelError::MissingContext {
                            first_visit: first,
                            in_cookie_set: in_a,
                        })?;
                        out.push(ContextLaw {
                            label: label(first, in_a),
                            law: law.clone(),
                        });
                    }
                }
                for o in &t.overrides {
                    out.push(ContextLaw {
                        label: ContextLabel {
                            first_visit: o.first_visit,
                            in_cookie_set: self.cookie_set.contains(&o.site),
                            site: Some(o.site.clone()),
                            note: None,
                        },
                        law: o.outcomes.clone(),
                    });
                }
            }
            KernelKind::Erwre(env) => {
                for (note, visit_count, law) in env.support_laws() {
                    out.push(ContextLaw {
                        label: ContextLabel {
                            first_visit: visit_count == 0,
                            in_cookie_set: true,
                            site: None,
                            note: Some(note),
                        },
                        law,
                    });
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn compile(&self) -> Result<CompiledKernel, ModelError> {
        CompiledKernel::new(self)
    }
}

fn check_dim(d: usize) -> Result<(), ModelError> {
    if d == 0 || d > MAX_DIM {
        return Err(ModelError::InvalidParameter(format!(
            "dimension must be in 1..={MAX_DIM}, got {d}"
        )));
    }
    Ok(())
}

fn check_table(d: usize, table: &ContextTable) -> Result<(), ModelError> {
    check_dim(d)?;
    for law in table.laws() {
        if law.dim() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                got: law.dim(),
            });
        }
    }
    for o in &table.overrides {
        if o.site.len() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                got: o.site.len(),
            });
        }
    }
    Ok(())
}

/// Neighbour probabilities of the biased law in canonical order:
/// `+e_axis` gets `p/d`, `-e_axis` gets `(1-p)/d`, the rest `1/(2d)`.
#[inline]
pub(crate) fn biased_probs(d: usize, axis: usize, p: f64, out: &mut [f64]) {
    let other = 1.0 / (2 * d) as f64;
    for (k, o) in out.iter_mut().enumerate().take(2 * d) {
        *o = if k / 2 != axis {
            other
        } else if k % 2 == 0 {
            p / d as f64
        } else {
            (1.0 - p) / d as f64
        };
    }
}

pub(crate) fn biased_law(d: usize, axis: usize, p: f64) -> StepDistribution {
    let mut probs = vec![0.0; 2 * d];
    biased_probs(d, axis, p, &mut probs);
    StepDistribution::nearest_neighbor(d, &probs).expect("valid biased law")
}

fn erw_first_visit_law(d: usize, p: f64) -> StepDistribution {
    biased_law(d, 0, p)
}

/// Kernel prepared for the inner simulation loop.
pub(crate) struct CompiledKernel {
    d: usize,
    cookie_set: CookieSet,
    mode: CompiledMode,
}

enum CompiledMode {
    /// Laws indexed by `2 * first_visit + in_cookie_set`.
    Table {
        by_key: [Option<usize>; 4],
        laws: Vec<StepDistribution>,
        overrides: FxHashMap<(Site, bool), usize>,
    },
    SiteBias {
        env: EnvironmentModel,
        axis: usize,
        symmetric: Vec<f64>,
    },
    Custom(EnvironmentModel),
}

fn key_index(first_visit: bool, in_cookie_set: bool) -> usize {
    2 * first_visit as usize + in_cookie_set as usize
}

pub(crate) fn to_site(v: &[i32]) -> Site {
    let mut s = [0; MAX_DIM];
    s[..v.len()].copy_from_slice(v);
    s
}

impl CompiledKernel {
    fn new(spec: &KernelSpec) -> Result<Self, ModelError> {
        let mode = match &spec.kind {
            KernelKind::StandardErw { p } => {
                let laws = vec![
                    erw_first_visit_law(spec.d, *p),
                    StepDistribution::symmetric(spec.d),
                ];
                let mut by_key = [Some(1); 4];
                by_key[key_index(true, true)] = Some(0);
                CompiledMode::Table {
                    by_key,
                    laws,
                    overrides: FxHashMap::default(),
                }
            }
            KernelKind::Generalized(t) | KernelKind::Martingale(t) => {
                let mut laws = Vec::new();
                let mut by_key = [None; 4];
                for e in &t.entries {
                    by_key[key_index(e.first_visit, e.in_cookie_set)] = Some(laws.len());
                    laws.push(e.outcomes.clone());
                }
                let mut overrides = FxHashMap::default();
                for o in &t.overrides {
                    overrides.insert((to_site(&o.site), o.first_visit), laws.len());
                    laws.push(o.outcomes.clone());
                }
                CompiledMode::Table {
                    by_key,
                    laws,
                    overrides,
                }
            }
            KernelKind::Erwre(env) => match env.law() {
                EnvironmentLaw::SiteBias(sb) => {
                    let symmetric = vec![1.0 / (2 * spec.d) as f64; 2 * spec.d];
                    CompiledMode::SiteBias {
                        env: env.clone(),
                        axis: sb.axis,
                        symmetric,
                    }
                }
                EnvironmentLaw::Custom(_) => CompiledMode::Custom(env.clone()),
            },
        };
        Ok(CompiledKernel {
            d: spec.d,
            cookie_set: spec.cookie_set.clone(),
            mode,
        })
    }

    #[inline]
    pub(crate) fn in_cookie_set(&self, site: &Site) -> bool {
        self.cookie_set.contains(&site[..self.d])
    }

    /// Writes the sampled displacement into `out` (first `d` entries).
    #[inline]
    pub(crate) fn sample(
        &self,
        site: &Site,
        visit_count: u32,
        in_cookie_set: bool,
        u: f64,
        out: &mut Site,
    ) -> Result<(), ModelError> {
        let d = self.d;
        match &self.mode {
            CompiledMode::Table {
                by_key,
                laws,
                overrides,
            } => {
                let first = visit_count == 0;
                let idx = if overrides.is_empty() {
                    None
                } else {
                    overrides.get(&(*site, first)).copied()
                };
                let idx = match idx.or(by_key[key_index(first, in_cookie_set)]) {
                    Some(i) => i,
                    None => {
                        return Err(ModelError::MissingContext {
                            first_visit: first,
                            in_cookie_set,
                        })
                    }
                };
                let law = &laws[idx];
                out[..d].copy_from_slice(law.displacement(law.sample_index(u)));
            }
            CompiledMode::SiteBias {
                env,
                axis,
                symmetric,
            } => {
                let k = if visit_count == 0 {
                    let mut probs = [0.0; 2 * MAX_DIM];
                    biased_probs(d, *axis, env.bias_at(&site[..d]), &mut probs);
                    sample_index_from_probs(&probs[..2 * d], u)
                } else {
                    sample_index_from_probs(symmetric, u)
                };
                out[..d].fill(0);
                out[k / 2] = if k % 2 == 0 { 1 } else { -1 };
            }
            CompiledMode::Custom(env) => {
                let law = env.site_law(&site[..d], visit_count);
                out[..d].copy_from_slice(law.displacement(law.sample_index(u)));
            }
        }
        Ok(())
    }
}

/// `validate_condition_B`: the smallest `K` bounding every jump, checked
/// against the declared bound.
pub fn validate_condition_b(kernel: &KernelSpec) -> Result<f64, ModelError> {
    let k = kernel
        .context_laws()?
        .iter()
        .map(|c| c.law.max_norm())
        .fold(0.0, f64::max);
    if k > kernel.declared_k + DRIFT_TOL {
        return Err(ModelError::ConditionB {
            declared: kernel.declared_k,
            found: k,
        });
    }
    Ok(k)
}

/// Outcome of the drift check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    /// Infimum of the first-visit drift along `ell` over first-visit contexts
    /// inside the cookie set; `None` when there are no such contexts.
    pub lambda: Option<f64>,
    /// Strictly positive push (or vacuous).
    pub c_plus: bool,
    /// Nonnegative push (or vacuous).
    pub c: bool,
    pub vacuous: bool,
}

/// `validate_condition_C_plus`.
pub fn validate_condition_c_plus(
    kernel: &KernelSpec,
    dir: &Direction,
) -> Result<DriftReport, ModelError> {
    check_dir(kernel, dir)?;
    let mut lambda: Option<f64> = None;
    for c in kernel.context_laws()? {
        let drift = c.law.drift();
        if c.label.first_visit && c.label.in_cookie_set {
            let along = dir.dot(&drift);
            lambda = Some(lambda.map_or(along, |l: f64| l.min(along)));
        } else if drift.iter().any(|x| x.abs() > DRIFT_TOL) {
            return Err(ModelError::ConditionC {
                context: c.label.to_string(),
                drift,
            });
        }
    }
    Ok(match lambda {
        Some(l) => DriftReport {
            lambda: Some(l),
            c_plus: l > 0.0,
            c: l >= 0.0,
            vacuous: false,
        },
        None => DriftReport {
            lambda: None,
            c_plus: true,
            c: true,
            vacuous: true,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub h: f64,
    pub r: f64,
    pub probe_count: usize,
}

/// `validate_condition_E`: searches `r` over `{k/(4K)}` and returns the pair
/// with the largest certified `h` (ties go to the larger `r`).
pub fn validate_condition_e(
    kernel: &KernelSpec,
    dir: &Direction,
    probe_count: usize,
) -> Result<EllipticityReport, ModelError> {
    check_dir(kernel, dir)?;
    let laws = kernel.context_laws()?;
    let k = laws.iter().map(|c| c.law.max_norm()).fold(0.0, f64::max);
    if !(k > 0.0) {
        return Err(ModelError::ConditionE {
            context: "kernel never moves".into(),
            direction: dir.components().to_vec(),
        });
    }
    let probes = probe_directions(kernel.dim(), probe_count);
    let zero_drift: Vec<&ContextLaw> = laws.iter().filter(|c| c.law.is_zero_drift()).collect();

    let steps = (4.0 * k * k + 1e-9).floor() as usize;
    let mut best: Option<(f64, f64)> = None;
    for i in 1..=steps {
        let r = i as f64 / (4.0 * k);
        let h = certified_h(&laws, &zero_drift, dir.components(), &probes, r);
        if h > 0.0 && best.is_none_or(|(bh, _)| h >= bh) {
            best = Some((h, r));
        }
    }
    match best {
        Some((h, r)) => Ok(EllipticityReport {
            h,
            r,
            probe_count: probes.len(),
        }),
        None => {
            let r = 1.0 / (4.0 * k);
            for c in &laws {
                if c.law.prob_dot_exceeds(dir.components(), r) == 0.0 {
                    return Err(ModelError::ConditionE {
                        context: c.label.to_string(),
                        direction: dir.components().to_vec(),
                    });
                }
            }
            for c in &zero_drift {
                for p in &probes {
                    if c.law.prob_dot_exceeds(p, r) == 0.0 {
                        return Err(ModelError::ConditionE {
                            context: c.label.to_string(),
                            direction: p.clone(),
                        });
                    }
                }
            }
            unreachable!("some context must fail when no pair is certified")
        }
    }
}

fn certified_h(
    laws: &[ContextLaw],
    zero_drift: &[&ContextLaw],
    ell: &[f64],
    probes: &[Vec<f64>],
    r: f64,
) -> f64 {
    let mut h = f64::INFINITY;
    for c in laws {
        h = h.min(c.law.prob_dot_exceeds(ell, r));
    }
    for c in zero_drift {
        for p in probes {
            h = h.min(c.law.prob_dot_exceeds(p, r));
        }
    }
    h
}

/// Re-checks a certificate by direct enumeration over every context and probe.
pub fn check_ellipticity_certificate(
    kernel: &KernelSpec,
    dir: &Direction,
    report: &EllipticityReport,
    probe_count: usize,
) -> Result<bool, ModelError> {
    let laws = kernel.context_laws()?;
    let probes = probe_directions(kernel.dim(), probe_count);
    for c in &laws {
        if c.law.prob_dot_exceeds(dir.components(), report.r) < report.h {
            return Ok(false);
        }
        if c.law.is_zero_drift() {
            for p in &probes {
                if c.law.prob_dot_exceeds(p, report.r) < report.h {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn check_dir(kernel: &KernelSpec, dir: &Direction) -> Result<(), ModelError> {
    if dir.dim() != kernel.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: kernel.dim(),
            got: dir.dim(),
        });
    }
    Ok(())
}

/// Deterministic probe directions on the unit sphere: the `2d` axis
/// directions followed by `count` grid points (equally spaced angles for
/// `d = 2`, a Fibonacci lattice for `d = 3`, normalized Gaussian images of a
/// Halton sequence above that).
pub fn probe_directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..2 * d)
        .map(|k| unit_step(d, k).into_iter().map(f64::from).collect())
        .collect();
    match d {
        1 => {}
        2 => {
            for k in 0..count {
                let t = 2.0 * PI * k as f64 / count as f64;
                out.push(vec![t.cos(), t.sin()]);
            }
        }
        3 => {
            let golden_angle = PI * (3.0 - 5f64.sqrt());
            for k in 0..count {
                let z = 1.0 - (2 * k + 1) as f64 / count as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden_angle * k as f64;
                out.push(vec![rho * phi.cos(), rho * phi.sin(), z]);
            }
        }
        _ => {
            const PRIMES: [u64; MAX_DIM] = [2, 3, 5, 7, 11, 13, 17, 19];
            let normal = Normal::standard();
            for k in 0..count {
                let v: Vec<f64> = (0..d)
                    .map(|i| normal.inverse_cdf(halton(k as u64 + 1, PRIMES[i])))
                    .collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                out.push(v.into_iter().map(|x| x / n).collect());
            }
        }
    }
    out
}

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(d: usize, visits: u32) -> WalkContext {
        WalkContext::new(vec![0; d], visits, true)
    }

    #[test]
    fn erw_first_visit_law_matches_definition() {
        let k = KernelSpec::standard_erw(2, 0.75).unwrap();
        let law = k.step_distribution(&ctx(2, 0)).unwrap();
        assert_eq!(law.prob_of(&[1, 0]), 0.375);
        assert_eq!(law.prob_of(&[-1, 0]), 0.125);
        assert_eq!(law.prob_of(&[0, 1]), 0.25);
        assert_eq!(law.prob_of(&[0, -1]), 0.25);
    }

    #[test]
    fn erw_revisit_and_symmetric_laws() {
        let k = KernelSpec::standard_erw(2, 0.75).unwrap();
        let law = k.step_distribution(&ctx(2, 1)).unwrap();
        for z in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert_eq!(law.prob_of(&z), 0.25);
        }
        let k = KernelSpec::standard_erw(2, 0.5).unwrap();
        let law = k.step_distribution(&ctx(2, 0)).unwrap();
        for z in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert_eq!(law.prob_of(&z), 0.25);
        }
    }

    #[test]
    fn outside_cookie_set_is_symmetric() {
        let k = KernelSpec::standard_erw(2, 0.9)
            .unwrap()
            .with_cookie_set(CookieSet::Empty)
            .unwrap();
        let law = k
            .step_distribution(&WalkContext::new(vec![3, 4], 0, false))
            .unwrap();
        assert!(law.is_zero_drift());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let k = KernelSpec::standard_erw(2, 0.75).unwrap();
        let err = k.step_distribution(&ctx(3, 0)).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn missing_context_is_an_error() {
        let law = StepDistribution::symmetric(2);
        let table = ContextTable {
            entries: vec![TableEntry {
                first_visit: true,
                in_cookie_set: true,
                outcomes: law,
            }],
            overrides: vec![],
        };
        let k = KernelSpec::generalized(2, table).unwrap();
        let err = k.step_distribution(&ctx(2, 4)).unwrap_err();
        assert_eq!(
            err,
            ModelError::MissingContext {
                first_visit: false,
                in_cookie_set: true
            }
        );
        assert!(validate_condition_b(&k).is_err());
    }

    #[test]
    fn drift_examples() {
        let k = KernelSpec::standard_erw(2, 0.75).unwrap();
        let first = k.step_distribution(&ctx(2, 0)).unwrap();
        assert_eq!(first.drift(), vec![0.25, 0.0]);
        let revisit = k.step_distribution(&ctx(2, 2)).unwrap();
        assert_eq!(revisit.drift(), vec![0.0, 0.0]);
        let k1 = KernelSpec::standard_erw(2, 1.0).unwrap();
        assert_eq!(
            k1.step_distribution(&ctx(2, 0)).unwrap().drift(),
            vec![0.5, 0.0]
        );
    }

    #[test]
    fn point_mass_sampling_ignores_rng() {
        let law = StepDistribution::point_mass(vec![1, 0]).unwrap();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..100 {
            assert_eq!(law.sample_step(&mut rng), &[1, 0]);
        }
        assert_eq!(rng.counter(), 100);
    }

    #[test]
    fn cloned_streams_sample_identically() {
        let law = KernelSpec::standard_erw(3, 0.8)
            .unwrap()
            .step_distribution(&ctx(3, 0))
            .unwrap();
        let mut a = RngStream::new(77, 3);
        for _ in 0..13 {
            a.next_u64();
        }
        let mut b = a.clone();
        for _ in 0..1000 {
            assert_eq!(law.sample_step(&mut a), law.sample_step(&mut b));
        }
    }

    #[test]
    fn sample_frequency_of_biased_step() {
        let law = KernelSpec::standard_erw(2, 0.75)
            .unwrap()
            .step_distribution(&ctx(2, 0))
            .unwrap();
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| law.sample_step(&mut rng) == [1, 0])
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.375).abs() < 0.002, "freq = {freq}");
    }

    #[test]
    fn condition_b_examples() {
        for d in 2..=4 {
            let k = KernelSpec::standard_erw(d, 0.6).unwrap();
            assert_eq!(validate_condition_b(&k).unwrap(), 1.0);
        }
        let law = StepDistribution::new(2, vec![(vec![2, 1], 0.5), (vec![-2, -1], 0.5)]).unwrap();
        let k = KernelSpec::constant(law).unwrap();
        assert!((validate_condition_b(&k).unwrap() - 5f64.sqrt()).abs() < 1e-15);

        let law = StepDistribution::new(2, vec![(vec![0, 3], 0.5), (vec![0, -3], 0.5)]).unwrap();
        let k = KernelSpec::constant(law)
            .unwrap()
            .with_declared_k(1.0)
            .unwrap();
        assert!(matches!(
            validate_condition_b(&k),
            Err(ModelError::ConditionB { .. })
        ));
    }

    #[test]
    fn condition_c_examples() {
        let e1 = Direction::axis(2, 0).unwrap();
        let r =
            validate_condition_c_plus(&KernelSpec::standard_erw(2, 0.75).unwrap(), &e1).unwrap();
        assert_eq!(r.lambda, Some(0.25));
        assert!(r.c_plus);
        let r = validate_condition_c_plus(&KernelSpec::standard_erw(2, 0.5).unwrap(), &e1).unwrap();
        assert_eq!(r.lambda, Some(0.0));
        assert!(!r.c_plus && r.c);
        let m = KernelSpec::symmetric(2)
            .unwrap()
            .with_cookie_set(CookieSet::Empty)
            .unwrap();
        let r = validate_condition_c_plus(&m, &e1).unwrap();
        assert!(r.vacuous && r.lambda.is_none());
    }

    #[test]
    fn condition_c_rejects_revisit_drift() {
        let e1 = Direction::axis(2, 0).unwrap();
        let k = KernelSpec::constant(StepDistribution::point_mass(vec![1, 0]).unwrap()).unwrap();
        let err = validate_condition_c_plus(&k, &e1).unwrap_err();
        match err {
            ModelError::ConditionC { context, drift } => {
                assert!(context.contains("first_visit=false"));
                assert_eq!(drift, vec![1.0, 0.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lambda_formula_on_grid() {
        for d in 2..=4 {
            let e1 = Direction::axis(d, 0).unwrap();
            for i in 0..=10 {
                let p = 0.5 + 0.05 * i as f64;
                let k = KernelSpec::standard_erw(d, p).unwrap();
                let l = validate_condition_c_plus(&k, &e1).unwrap().lambda.unwrap();
                assert!((l - (2.0 * p - 1.0) / d as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn revisit_drift_is_exactly_zero() {
        for d in 2..=4 {
            for i in 0..=10 {
                let p = 0.5 + 0.05 * i as f64;
                let k = KernelSpec::standard_erw(d, p).unwrap();
                let law = k.step_distribution(&ctx(d, 1)).unwrap();
                assert!(law.drift().iter().all(|x| x.abs() <= 1e-15));
            }
        }
    }

    #[test]
    fn condition_e_examples() {
        let e1 = Direction::axis(2, 0).unwrap();
        for p in [0.75, 1.0] {
            let k = KernelSpec::standard_erw(2, p).unwrap();
            let rep = validate_condition_e(&k, &e1, DEFAULT_PROBE_COUNT).unwrap();
            assert_eq!((rep.h, rep.r), (0.25, 0.5));
            assert!(check_ellipticity_certificate(&k, &e1, &rep, DEFAULT_PROBE_COUNT).unwrap());
        }
        let k = KernelSpec::constant(StepDistribution::point_mass(vec![1, 0]).unwrap()).unwrap();
        let minus_e1 = Direction::new(vec![-1.0, 0.0]).unwrap();
        assert!(matches!(
            validate_condition_e(&k, &minus_e1, 64),
            Err(ModelError::ConditionE { .. })
        ));
    }

    #[test]
    fn condition_e_is_sound_in_three_dimensions() {
        let e = Direction::normalized(&[1.0, 1.0, 0.0]).unwrap();
        let k = KernelSpec::standard_erw(3, 0.7).unwrap();
        let rep = validate_condition_e(&k, &e, 512).unwrap();
        assert!(rep.h > 0.0 && rep.r > 0.0);
        assert!(check_ellipticity_certificate(&k, &e, &rep, 512).unwrap());
    }

    #[test]
    fn probes_are_unit_vectors() {
        for d in 2..=5 {
            for p in probe_directions(d, 200) {
                let n: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distribution_validation() {
        assert!(StepDistribution::new(2, vec![(vec![1, 0], 0.5)]).is_err());
        assert!(StepDistribution::new(2, vec![(vec![1, 0], 0.5), (vec![1, 0], 0.5)]).is_err());
        assert!(StepDistribution::new(2, vec![(vec![1, 0, 0], 1.0)]).is_err());
        assert!(KernelSpec::standard_erw(2, 0.4).is_err());
    }

    #[test]
    fn direction_requires_unit_norm() {
        assert!(Direction::new(vec![1.0, 1.0]).is_err());
        assert!(Direction::new(vec![1.0]).is_err());
        let d = Direction::normalized(&[3.0, 4.0]).unwrap();
        assert_eq!(d.project(&[1, 1]), 0.6 + 0.8);
    }

    #[test]
    fn compiled_sampler_matches_exact_law() {
        use crate::environment::{EnvironmentModel, SiteBias};
        let env = EnvironmentModel::site_bias(SiteBias::new(2, 0.6, 0.9).unwrap(), 5);
        let kernels = vec![
            KernelSpec::standard_erw(2, 0.75).unwrap(),
            KernelSpec::standard_erw(3, 1.0).unwrap(),
            KernelSpec::erwre(env).unwrap(),
            KernelSpec::standard_erw(2, 0.8)
                .unwrap()
                .with_cookie_set(CookieSet::Depleted {
                    axis: 0,
                    lo: -2,
                    hi: 2,
                })
                .unwrap(),
        ];
        let mut rng = RngStream::new(11, 0);
        for k in &kernels {
            let c = k.compile().unwrap();
            let d = k.dim();
            for _ in 0..2000 {
                let site: Vec<i32> = (0..d).map(|_| (rng.next_u64() % 9) as i32 - 4).collect();
                let visits = (rng.next_u64() % 3) as u32;
                let s = to_site(&site);
                let in_a = c.in_cookie_set(&s);
                let u = rng.next_f64();
                let mut out = [0; MAX_DIM];
                c.sample(&s, visits, in_a, u, &mut out).unwrap();
                let law = k
                    .step_distribution(&WalkContext::new(site.clone(), visits, in_a))
                    .unwrap();
                assert_eq!(&out[..d], law.displacement(law.sample_index(u)));
            }
        }
    }
}
