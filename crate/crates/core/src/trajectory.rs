//! Streaming simulation engine.
//!
//! A [`Walker`] advances one trajectory step by step and keeps every
//! accumulator the estimators need (range, per-site visit counts, strip
//! local times, projection extremes) with O(1) amortized work per step.
//! Each step consumes exactly one uniform from the replica's stream.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    to_site, validate_condition_b, CompiledKernel, Direction, KernelSpec, ModelError,
};
use crate::rng::RngStream;
use crate::{Site, MAX_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("at step {step}: {source}")]
    Kernel { step: u64, source: ModelError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// What an observer sees at each time `j = 0, 1, ..., horizon`.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub index: u64,
    pub site: &'a [i32],
    pub proj: f64,
    pub first_visit: bool,
}

pub trait Observer {
    fn on_step(&mut self, rec: &StepRecord<'_>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", content = "capacity", rename_all = "snake_case")]
pub enum PathMode {
    #[default]
    None,
    Full,
    /// Keep only the last `n` positions.
    Ring(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub path: PathMode,
}

/// One stored position.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub step: u64,
    pub site: Site,
    pub proj: f64,
    pub first_visit: bool,
}

#[derive(Debug, Clone, Default)]
struct PathStore {
    mode: PathMode,
    points: std::collections::VecDeque<PathPoint>,
}

impl PathStore {
    fn push(&mut self, p: PathPoint) {
        match self.mode {
            PathMode::None => {}
            PathMode::Full => self.points.push_back(p),
            PathMode::Ring(cap) => {
                if cap == 0 {
                    return;
                }
                if self.points.len() == cap {
                    self.points.pop_front();
                }
                self.points.push_back(p);
            }
        }
    }
}

const PACK_BITS: u32 = 21;
const PACK_OFFSET: i64 = 1 << (PACK_BITS - 1);

/// Visit counts keyed on packed coordinates (21 bits each, `d <= 3`),
/// switching to full-width keys once a coordinate leaves the packable range.
#[derive(Debug, Clone)]
struct SiteTable {
    d: usize,
    packed: FxHashMap<u64, u32>,
    wide: FxHashMap<Site, u32>,
    use_wide: bool,
}

impl SiteTable {
    fn new(d: usize) -> Self {
        SiteTable {
            d,
            packed: FxHashMap::default(),
            wide: FxHashMap::default(),
            use_wide: d > 3,
        }
    }

    #[inline]
    fn pack(d: usize, site: &Site) -> Option<u64> {
        let mut key = 0u64;
        for (i, &c) in site[..d].iter().enumerate() {
            let v = c as i64 + PACK_OFFSET;
            if !(0..(1 << PACK_BITS)).contains(&v) {
                return None;
            }
            key |= (v as u64) << (PACK_BITS * i as u32);
        }
        Some(key)
    }

    fn unpack(d: usize, key: u64) -> Site {
        let mut s = [0; MAX_DIM];
        for (i, c) in s[..d].iter_mut().enumerate() {
            *c = (((key >> (PACK_BITS * i as u32)) & ((1 << PACK_BITS) - 1)) as i64 - PACK_OFFSET)
                as i32;
        }
        s
    }

    fn migrate(&mut self) {
        let d = self.d;
        self.wide.extend(
            self.packed
                .drain()
                .map(|(k, v)| (SiteTable::unpack(d, k), v)),
        );
        self.use_wide = true;
    }

    /// Records a visit and returns the number of earlier visits.
    #[inline]
    fn visit(&mut self, site: &Site) -> u32 {
        if !self.use_wide {
            if let Some(k) = SiteTable::pack(self.d, site) {
                let c = self.packed.entry(k).or_insert(0);
                *c += 1;
                return *c - 1;
            }
            self.migrate();
        }
        let c = self.wide.entry(*site).or_insert(0);
        *c += 1;
        *c - 1
    }

    fn get(&self, site: &Site) -> u32 {
        if self.use_wide {
            self.wide.get(site).copied().unwrap_or(0)
        } else {
            SiteTable::pack(self.d, site)
                .and_then(|k| self.packed.get(&k).copied())
                .unwrap_or(0)
        }
    }

    fn len(&self) -> usize {
        if self.use_wide {
            self.wide.len()
        } else {
            self.packed.len()
        }
    }

    fn for_each(&self, mut f: impl FnMut(Site, u32)) {
        if self.use_wide {
            for (s, c) in &self.wide {
                f(*s, *c);
            }
        } else {
            for (k, c) in &self.packed {
                f(SiteTable::unpack(self.d, *k), *c);
            }
        }
    }
}

/// Dense histogram over the contiguous range of occupied strip levels.
#[derive(Debug, Clone, Default)]
struct LevelHistogram {
    lo: i64,
    counts: Vec<u64>,
}

impl LevelHistogram {
    #[inline]
    fn add(&mut self, m: i64) {
        if self.counts.is_empty() {
            self.lo = m;
            self.counts.push(0);
        }
        if m < self.lo {
            let grow = (self.lo - m) as usize;
            let extra = grow.max(self.counts.len());
            let mut v = vec![0; extra];
            v.extend_from_slice(&self.counts);
            self.counts = v;
            self.lo -= extra as i64;
        }
        let idx = (m - self.lo) as usize;
        if idx >= self.counts.len() {
            let new_len = (idx + 1).max(2 * self.counts.len());
            self.counts.resize(new_len, 0);
        }
        self.counts[idx] += 1;
    }

    fn get(&self, m: i64) -> u64 {
        if m < self.lo {
            return 0;
        }
        self.counts
            .get((m - self.lo) as usize)
            .copied()
            .unwrap_or(0)
    }

    fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(move |(i, c)| (self.lo + i as i64, *c))
    }

    fn max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Streaming accumulators of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryStats {
    d: usize,
    n: u64,
    position: Site,
    proj: f64,
    min_proj: f64,
    max_proj: f64,
    /// Minimum of `X_j . ell` over `j >= 1`.
    min_proj_after_start: f64,
    max_visit_count: u32,
    sites: SiteTable,
    local_time: LevelHistogram,
    path: PathStore,
}

impl TrajectoryStats {
    pub fn time(&self) -> u64 {
        self.n
    }

    pub fn position(&self) -> &[i32] {
        &self.position[..self.d]
    }

    pub fn proj(&self) -> f64 {
        self.proj
    }

    pub fn min_proj(&self) -> f64 {
        self.min_proj
    }

    pub fn max_proj(&self) -> f64 {
        self.max_proj
    }

    /// `|R_n|`: distinct sites visited, `X_0` included.
    pub fn range_size(&self) -> usize {
        self.sites.len()
    }

    /// Number of times `j <= n` with `X_j = site`.
    pub fn visit_count(&self, site: &[i32]) -> u32 {
        self.sites.get(&to_site(site))
    }

    pub fn max_visit_count(&self) -> u32 {
        self.max_visit_count
    }

    /// `L_n(m)`: number of `j <= n` with `X_j . ell` in `[m, m+1)`.
    pub fn local_time(&self, m: i64) -> u64 {
        self.local_time.get(m)
    }

    pub fn max_local_time(&self) -> u64 {
        self.local_time.max()
    }

    pub fn local_time_map(&self) -> BTreeMap<i64, u64> {
        self.local_time.iter().collect()
    }

    /// True when `X_j . ell > 0` for every `1 <= j <= n`.
    pub fn stayed_ahead(&self) -> bool {
        self.n >= 1 && self.min_proj_after_start > 0.0
    }

    pub fn visited_sites(&self) -> Vec<(Vec<i32>, u32)> {
        let mut v = Vec::with_capacity(self.sites.len());
        self.sites
            .for_each(|s, c| v.push((s[..self.d].to_vec(), c)));
        v.sort();
        v
    }

    /// Stored path, if path storage was enabled.
    pub fn path(&self) -> impl Iterator<Item = &PathPoint> {
        self.path.points.iter()
    }

    /// Projections of the stored path, in time order.
    pub fn path_projections(&self) -> Vec<f64> {
        self.path.points.iter().map(|p| p.proj).collect()
    }

    fn check_invariants(&self) {
        debug_assert_eq!(self.local_time.total(), self.n + 1);
        debug_assert!(self.sites.len() as u64 <= self.n + 1);
    }

    /// Serializable summary.
    pub fn record(&self, with_local_time: bool) -> StatsRecord {
        self.check_invariants();
        StatsRecord {
            n: self.n,
            range: self.range_size() as u64,
            position: self.position().to_vec(),
            proj: self.proj,
            min_proj: self.min_proj,
            max_proj: self.max_proj,
            max_local_time: self.max_local_time(),
            max_visit_count: self.max_visit_count,
            stayed_ahead: self.stayed_ahead(),
            local_time: with_local_time.then(|| self.local_time_map()),
        }
    }

    /// Writes the stored path as `step,x1,...,xd,proj,first_visit`.
    pub fn write_path_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = String::from("step");
        for i in 1..=self.d {
            header.push_str(&format!(",x{i}"));
        }
        header.push_str(",proj,first_visit");
        writeln!(w, "{header}")?;
        for p in &self.path.points {
            write!(w, "{}", p.step)?;
            for c in &p.site[..self.d] {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{},{}", p.proj, p.first_visit as u8)?;
        }
        Ok(())
    }
}

/// Summary of a trajectory at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub n: u64,
    pub range: u64,
    pub position: Vec<i32>,
    pub proj: f64,
    pub min_proj: f64,
    pub max_proj: f64,
    pub max_local_time: u64,
    pub max_visit_count: u32,
    pub stayed_ahead: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_time: Option<BTreeMap<i64, u64>>,
}

/// Advances one trajectory.
pub struct Walker {
    kernel: CompiledKernel,
    dir: Direction,
    k_bound: f64,
    stats: TrajectoryStats,
    current_prior_visits: u32,
    scratch: Site,
}

impl Walker {
    /// Starts at the origin; validates the bounded-jump condition first.
    pub fn new(kernel: &KernelSpec, dir: &Direction, opts: SimOptions) -> Result<Self, SimError> {
        if kernel.dim() != dir.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: kernel.dim(),
                got: dir.dim(),
            }
            .into());
        }
        let k_bound = validate_condition_b(kernel)?;
        let d = kernel.dim();
        let mut stats = TrajectoryStats {
            d,
            n: 0,
            position: [0; MAX_DIM],
            proj: 0.0,
            min_proj: 0.0,
            max_proj: 0.0,
            min_proj_after_start: f64::INFINITY,
            max_visit_count: 1,
            sites: SiteTable::new(d),
            local_time: LevelHistogram::default(),
            path: PathStore {
                mode: opts.path,
                points: Default::default(),
            },
        };
        let origin = [0; MAX_DIM];
        stats.sites.visit(&origin);
        stats.local_time.add(0);
        stats.path.push(PathPoint {
            step: 0,
            site: origin,
            proj: 0.0,
            first_visit: true,
        });
        Ok(Walker {
            kernel: kernel.compile()?,
            dir: dir.clone(),
            k_bound,
            stats,
            current_prior_visits: 0,
            scratch: [0; MAX_DIM],
        })
    }

    pub fn stats(&self) -> &TrajectoryStats {
        &self.stats
    }

    pub fn into_stats(self) -> TrajectoryStats {
        self.stats
    }

    /// Record of the current time, for observers attached late.
    pub fn current(&self) -> StepRecord<'_> {
        StepRecord {
            index: self.stats.n,
            site: self.stats.position(),
            proj: self.stats.proj,
            first_visit: self.current_prior_visits == 0,
        }
    }

    /// Performs one step and returns the new time's record.
    #[inline]
    pub fn step(&mut self, rng: &mut RngStream) -> Result<StepRecord<'_>, SimError> {
        let u = rng.next_f64();
        let s = &mut self.stats;
        let d = s.d;
        let in_a = self.kernel.in_cookie_set(&s.position);
        self.kernel
            .sample(
                &s.position,
                self.current_prior_visits,
                in_a,
                u,
                &mut self.scratch,
            )
            .map_err(|source| SimError::Kernel { step: s.n, source })?;
        debug_assert!({
            let len: f64 = self.scratch[..d]
                .iter()
                .map(|x| (*x as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            len <= self.k_bound + 1e-12
        });
        for i in 0..d {
            s.position[i] += self.scratch[i];
        }
        s.n += 1;
        let prior = s.sites.visit(&s.position);
        self.current_prior_visits = prior;
        if prior + 1 > s.max_visit_count {
            s.max_visit_count = prior + 1;
        }
        let proj = self.dir.project(&s.position[..d]);
        s.proj = proj;
        s.min_proj = s.min_proj.min(proj);
        s.max_proj = s.max_proj.max(proj);
        s.min_proj_after_start = s.min_proj_after_start.min(proj);
        s.local_time.add(proj.floor() as i64);
        s.path.push(PathPoint {
            step: s.n,
            site: s.position,
            proj,
            first_visit: prior == 0,
        });
        Ok(StepRecord {
            index: s.n,
            site: &s.position[..d],
            proj,
            first_visit: prior == 0,
        })
    }

    /// Steps until time `until`, notifying observers after each step.
    pub fn run_to(
        &mut self,
        until: u64,
        rng: &mut RngStream,
        observers: &mut [&mut dyn Observer],
    ) -> Result<(), SimError> {
        while self.stats.n < until {
            let rec = self.step(rng)?;
            for o in observers.iter_mut() {
                o.on_step(&rec);
            }
        }
        Ok(())
    }
}

/// Runs exactly `horizon` steps from the origin. Observers see `j = 0` and
/// then every step.
pub fn simulate(
    kernel: &KernelSpec,
    dir: &Direction,
    horizon: u64,
    rng: &mut RngStream,
    observers: &mut [&mut dyn Observer],
    opts: SimOptions,
) -> Result<TrajectoryStats, SimError> {
    let mut w = Walker::new(kernel, dir, opts)?;
    let start = w.current();
    for o in observers.iter_mut() {
        o.on_step(&start);
    }
    w.run_to(horizon, rng, observers)?;
    Ok(w.into_stats())
}

pub fn local_time(stats: &TrajectoryStats, m: i64) -> u64 {
    stats.local_time(m)
}

pub fn range_size(stats: &TrajectoryStats) -> usize {
    stats.range_size()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Entrance {
    Hit {
        time: u64,
    },
    /// Not hit within the horizon; the entrance time is censored.
    NotHit {
        horizon: u64,
        censored: bool,
    },
}

/// `min{n >= 0 : X_n in target}`, or `NotHit` past the horizon.
pub fn entrance_time(
    kernel: &KernelSpec,
    dir: &Direction,
    target: impl Fn(&[i32]) -> bool,
    horizon: u64,
    rng: &mut RngStream,
) -> Result<Entrance, SimError> {
    let mut w = Walker::new(kernel, dir, SimOptions::default())?;
    if target(w.stats.position()) {
        return Ok(Entrance::Hit { time: 0 });
    }
    while w.stats.n < horizon {
        let rec = w.step(rng)?;
        if target(rec.site) {
            return Ok(Entrance::Hit { time: rec.index });
        }
    }
    Ok(Entrance::NotHit {
        horizon,
        censored: true,
    })
}

/// Statistics for an explicit path (tests and fixtures): applies the same
/// accumulators to a given sequence of sites starting anywhere.
pub fn stats_from_path(path: &[Vec<i32>], dir: &Direction) -> TrajectoryStats {
    assert!(!path.is_empty(), "path needs at least X_0");
    let d = dir.dim();
    let mut stats = TrajectoryStats {
        d,
        n: 0,
        position: to_site(&path[0]),
        proj: 0.0,
        min_proj: f64::INFINITY,
        max_proj: f64::NEG_INFINITY,
        min_proj_after_start: f64::INFINITY,
        max_visit_count: 0,
        sites: SiteTable::new(d),
        local_time: LevelHistogram::default(),
        path: PathStore {
            mode: PathMode::Full,
            points: Default::default(),
        },
    };
    for (j, x) in path.iter().enumerate() {
        let site = to_site(x);
        let prior = stats.sites.visit(&site);
        stats.max_visit_count = stats.max_visit_count.max(prior + 1);
        let proj = dir.project(x);
        stats.n = j as u64;
        stats.position = site;
        stats.proj = proj;
        stats.min_proj = stats.min_proj.min(proj);
        stats.max_proj = stats.max_proj.max(proj);
        if j >= 1 {
            stats.min_proj_after_start = stats.min_proj_after_start.min(proj);
        }
        stats.local_time.add(proj.floor() as i64);
        stats.path.push(PathPoint {
            step: j as u64,
            site,
            proj,
            first_visit: prior == 0,
        });
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StepDistribution;

    fn e1() -> Direction {
        Direction::axis(2, 0).unwrap()
    }

    fn straight() -> KernelSpec {
        KernelSpec::constant(StepDistribution::point_mass(vec![1, 0]).unwrap()).unwrap()
    }

    #[test]
    fn straight_path() {
        let mut rng = RngStream::new(0, 0);
        let s = simulate(
            &straight(),
            &e1(),
            10,
            &mut rng,
            &mut [],
            SimOptions::default(),
        )
        .unwrap();
        assert_eq!(s.position(), &[10, 0]);
        assert_eq!(s.range_size(), 11);
        for m in 0..=10 {
            assert_eq!(s.local_time(m), 1);
        }
        assert_eq!(s.local_time(11), 0);
        assert!(s.stayed_ahead());
        assert_eq!(rng.counter(), 10);
    }

    #[test]
    fn hand_counted_path() {
        let path = vec![vec![0, 0], vec![1, 0], vec![0, 0], vec![1, 0], vec![2, 0]];
        let s = stats_from_path(&path, &e1());
        assert_eq!(local_time(&s, 0), 2);
        assert_eq!(local_time(&s, 1), 2);
        assert_eq!(local_time(&s, 5), 0);
        assert_eq!(range_size(&s), 3);
        assert_eq!(s.visit_count(&[1, 0]), 2);
    }

    #[test]
    fn horizon_zero_has_only_origin() {
        let mut rng = RngStream::new(0, 0);
        let k = KernelSpec::standard_erw(2, 0.75).unwrap();
        let s = simulate(&k, &e1(), 0, &mut rng, &mut [], SimOptions::default()).unwrap();
        assert_eq!(s.range_size(), 1);
        assert_eq!(s.local_time(0), 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let k = KernelSpec::standard_erw(3, 0.7).unwrap();
        let dir = Direction::axis(3, 0).unwrap();
        let run = || {
            let mut rng = RngStream::new(123, 4);
            simulate(
                &k,
                &dir,
                5000,
                &mut rng,
                &mut [],
                SimOptions {
                    path: PathMode::Full,
                },
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.record(true), b.record(true));
        assert_eq!(a.path_projections(), b.path_projections());
        assert_eq!(a.visited_sites(), b.visited_sites());
    }

    #[test]
    fn accumulators_are_consistent() {
        let k = KernelSpec::standard_erw(2, 0.6).unwrap();
        let dir = Direction::normalized(&[1.0, 0.5]).unwrap();
        let mut rng = RngStream::new(8, 1);
        let s = simulate(
            &k,
            &dir,
            20_000,
            &mut rng,
            &mut [],
            SimOptions {
                path: PathMode::Full,
            },
        )
        .unwrap();
        let total: u64 = s.local_time_map().values().sum();
        assert_eq!(total, s.time() + 1);
        assert!(s.range_size() as u64 <= s.time() + 1);
        let visits: u64 = s.visited_sites().iter().map(|(_, c)| *c as u64).sum();
        assert_eq!(visits, s.time() + 1);
        let pts: Vec<&PathPoint> = s.path().collect();
        for w in pts.windows(2) {
            let step: i32 = (0..2).map(|i| (w[1].site[i] - w[0].site[i]).abs()).sum();
            assert_eq!(step, 1);
        }
        let firsts = pts.iter().filter(|p| p.first_visit).count();
        assert_eq!(firsts, s.range_size());
    }

    #[test]
    fn wide_keys_take_over_when_coordinates_overflow() {
        let mut t = SiteTable::new(2);
        let mut a = [0; MAX_DIM];
        a[0] = 5;
        assert_eq!(t.visit(&a), 0);
        assert_eq!(t.visit(&a), 1);
        let mut far = [0; MAX_DIM];
        far[1] = 1 << 22;
        assert_eq!(t.visit(&far), 0);
        assert!(t.use_wide);
        assert_eq!(t.visit(&a), 2);
        assert_eq!(t.len(), 2);
        let mut neg = [0; MAX_DIM];
        neg[0] = -7;
        neg[1] = -(1 << 19);
        let k = SiteTable::pack(2, &neg).unwrap();
        assert_eq!(SiteTable::unpack(2, k), neg);
    }

    #[test]
    fn ring_path_keeps_tail() {
        let mut rng = RngStream::new(0, 0);
        let s = simulate(
            &straight(),
            &e1(),
            10,
            &mut rng,
            &mut [],
            SimOptions {
                path: PathMode::Ring(3),
            },
        )
        .unwrap();
        let steps: Vec<u64> = s.path().map(|p| p.step).collect();
        assert_eq!(steps, vec![8, 9, 10]);
    }

    #[test]
    fn path_csv_header() {
        let mut rng = RngStream::new(0, 0);
        let s = simulate(
            &straight(),
            &e1(),
            2,
            &mut rng,
            &mut [],
            SimOptions {
                path: PathMode::Full,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_path_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,x1,x2,proj,first_visit\n0,0,0,0,1\n1,1,0,1,1\n2,2,0,2,1\n"
        );
    }

    #[test]
    fn entrance_time_examples() {
        let mut rng = RngStream::new(0, 0);
        let hit = entrance_time(&straight(), &e1(), |x| x[0] >= 3, 100, &mut rng).unwrap();
        assert_eq!(hit, Entrance::Hit { time: 3 });
        let hit = entrance_time(&straight(), &e1(), |x| x[0] == 0, 100, &mut rng).unwrap();
        assert_eq!(hit, Entrance::Hit { time: 0 });
        let sym = KernelSpec::symmetric(2).unwrap();
        let miss = entrance_time(&sym, &e1(), |x| x[0] <= -50, 20, &mut rng).unwrap();
        assert_eq!(
            miss,
            Entrance::NotHit {
                horizon: 20,
                censored: true
            }
        );
    }

    #[test]
    fn incomplete_table_is_rejected_before_stepping() {
        use crate::model::{ContextTable, TableEntry};
        let table = ContextTable {
            entries: vec![TableEntry {
                first_visit: true,
                in_cookie_set: true,
                outcomes: StepDistribution::point_mass(vec![1, 0]).unwrap(),
            }],
            overrides: vec![],
        };
        let k = KernelSpec::generalized(2, table).unwrap();
        let err = Walker::new(&k, &e1(), SimOptions::default()).err().unwrap();
        assert!(matches!(
            err,
            SimError::Model(ModelError::MissingContext {
                first_visit: false,
                ..
            })
        ));
    }
}
