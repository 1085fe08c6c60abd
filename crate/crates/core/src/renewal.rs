//! Regeneration times.
//!
//! For a path with projections `y_j = X_j . ell`:
//!
//! * `T_u` is the first `k >= 1` with `y_k >= u`,
//! * `D(s)` is the first `m >= s` with `y_m < y_s` (a "drop" below the
//!   candidate floor),
//! * starting from `R_0 = y_0`, candidates `S_{k+1} = T_{R_k + 1}` are opened;
//!   a candidate that is later undercut is killed and the record level is
//!   raised to `R_{k+1} = max(y_0..=y_D)`,
//! * the first candidate that is never undercut is `tau_1`, and
//!   `tau_{n+1} = tau_n + tau_1(path shifted to tau_n)`.
//!
//! [`RenewalDetector`] evaluates this in one pass. It keeps a chain of
//! nested detectors: level 0 runs from time 0; whenever the top level opens
//! a candidate at time `s`, a new level is started from `s` (the shifted
//! path). A drop below a candidate floor discards every level above it.
//! Floors strictly increase along the chain, so the discards pop from the
//! top and the whole pass is amortized O(1) per step.
//!
//! `D = infinity` cannot be decided in finite time: at the horizon the
//! unbroken candidates are confirmed, and estimators drop the last block.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::trajectory::{Observer, StepRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenewalError {
    #[error("contract violation: step {got} observed after step {last}")]
    OutOfOrder { last: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RenewalEvent {
    CandidateOpened {
        time: u64,
        floor: f64,
        depth: usize,
    },
    /// The candidate opened at `time` was undercut at `at`.
    CandidateKilled {
        time: u64,
        at: u64,
        depth: usize,
    },
}

pub type Events = SmallVec<[RenewalEvent; 2]>;

#[derive(Debug, Clone)]
struct Candidate {
    time: u64,
    floor: f64,
    site: Option<Vec<i32>>,
}

/// One level of the chain: the renewal state machine of the path shifted
/// to `base_time`.
#[derive(Debug, Clone)]
struct Level {
    base_time: u64,
    record: f64,
    /// Max projection over this level's own segment (up to the child's base).
    running_max: f64,
    candidate: Option<Candidate>,
}

#[derive(Debug, Clone, Default)]
pub struct RenewalDetector {
    chain: Vec<Level>,
    last_index: Option<u64>,
    global_max: f64,
    base_site: Option<Vec<i32>>,
}

impl RenewalDetector {
    pub fn new() -> Self {
        RenewalDetector::default()
    }

    /// Feeds `X_{step_index} . ell`; steps must arrive in order starting
    /// with the first observed time.
    pub fn observe(&mut self, step_index: u64, proj: f64) -> Result<Events, RenewalError> {
        self.observe_inner(step_index, proj, None)
    }

    /// Like [`observe`](Self::observe), also remembering the site so that
    /// block displacements can be reported.
    pub fn observe_site(
        &mut self,
        step_index: u64,
        proj: f64,
        site: &[i32],
    ) -> Result<Events, RenewalError> {
        self.observe_inner(step_index, proj, Some(site))
    }

    fn observe_inner(
        &mut self,
        idx: u64,
        proj: f64,
        site: Option<&[i32]>,
    ) -> Result<Events, RenewalError> {
        let mut events = Events::new();
        match self.last_index {
            None => {
                self.chain.push(Level {
                    base_time: idx,
                    record: proj,
                    running_max: proj,
                    candidate: None,
                });
                self.global_max = proj;
                self.base_site = site.map(<[i32]>::to_vec);
                self.last_index = Some(idx);
                return Ok(events);
            }
            Some(last) if idx != last + 1 => {
                return Err(RenewalError::OutOfOrder { last, got: idx });
            }
            _ => {}
        }
        self.last_index = Some(idx);
        self.global_max = self.global_max.max(proj);

        let mut killed = false;
        while self.chain.len() >= 2 {
            let parent = self.chain.len() - 2;
            let floor = self.chain[parent].candidate.as_ref().map(|c| c.floor);
            match floor {
                Some(f) if proj < f => {
                    let child = self.chain.pop().expect("chain has a child");
                    let p = self.chain.last_mut().expect("chain has a parent");
                    p.running_max = p.running_max.max(child.running_max);
                    let c = p.candidate.take().expect("parent holds a candidate");
                    events.push(RenewalEvent::CandidateKilled {
                        time: c.time,
                        at: idx,
                        depth: parent,
                    });
                    killed = true;
                }
                _ => break,
            }
        }

        let depth = self.chain.len() - 1;
        let top = self.chain.last_mut().expect("chain is never empty");
        top.running_max = top.running_max.max(proj);
        if killed {
            top.record = top.running_max;
        }
        if proj >= top.record + 1.0 {
            top.candidate = Some(Candidate {
                time: idx,
                floor: proj,
                site: site.map(<[i32]>::to_vec),
            });
            self.chain.push(Level {
                base_time: idx,
                record: proj,
                running_max: proj,
                candidate: None,
            });
            events.push(RenewalEvent::CandidateOpened {
                time: idx,
                floor: proj,
                depth,
            });
        }
        Ok(events)
    }

    /// Unbroken candidates at the current time, oldest first.
    pub fn live_candidates(&self) -> Vec<u64> {
        self.chain
            .iter()
            .filter_map(|l| l.candidate.as_ref().map(|c| c.time))
            .collect()
    }

    /// Confirms the unbroken candidates whose floor lies at least
    /// `confirm_margin` below the final record, and assembles the blocks.
    /// Does not consume the detector, so it can be called at checkpoints.
    pub fn finalize(&self, horizon: u64, confirm_margin: f64) -> RegenerationSequence {
        let last = self.last_index.unwrap_or(0);
        debug_assert!(self.last_index.is_none() || last == horizon);
        let mut taus = Vec::new();
        let mut projs = Vec::new();
        let mut sites: Option<Vec<Vec<i32>>> = self.base_site.as_ref().map(|_| Vec::new());
        for c in self.chain.iter().filter_map(|l| l.candidate.as_ref()) {
            if self.global_max - c.floor < confirm_margin {
                break;
            }
            taus.push(c.time);
            projs.push(c.floor);
            if let (Some(v), Some(s)) = (sites.as_mut(), c.site.as_ref()) {
                v.push(s.clone());
            }
        }
        let start = self.chain.first().map(|l| l.base_time).unwrap_or(0);
        RegenerationSequence::build(taus, projs, sites, horizon, start, last)
    }
}

impl Observer for RenewalDetector {
    fn on_step(&mut self, rec: &StepRecord<'_>) {
        self.observe_site(rec.index, rec.proj, rec.site)
            .expect("simulation feeds steps in order");
    }
}

/// One inter-regeneration block `tau_k -> tau_{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Index of the block's starting regeneration time (1-based).
    pub k: usize,
    pub tau_k: u64,
    pub dtau: u64,
    /// Empty when sites were not recorded.
    pub dx: Vec<i32>,
    pub dproj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Censoring {
    pub horizon: u64,
    /// A partial segment after the last confirmed time was discarded.
    pub tail_dropped: bool,
    /// The initial segment `0 -> tau_1` exists (it is never an i.i.d. block).
    pub first_block_present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerationSequence {
    pub taus: Vec<u64>,
    pub tau_projs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_sites: Option<Vec<Vec<i32>>>,
    pub blocks: Vec<Block>,
    pub censor: Censoring,
}

impl RegenerationSequence {
    fn build(
        taus: Vec<u64>,
        tau_projs: Vec<f64>,
        tau_sites: Option<Vec<Vec<i32>>>,
        horizon: u64,
        start: u64,
        last: u64,
    ) -> Self {
        let mut blocks = Vec::with_capacity(taus.len().saturating_sub(1));
        for k in 1..taus.len() {
            let dx = match &tau_sites {
                Some(s) => s[k].iter().zip(&s[k - 1]).map(|(a, b)| a - b).collect(),
                None => Vec::new(),
            };
            blocks.push(Block {
                k,
                tau_k: taus[k - 1],
                dtau: taus[k] - taus[k - 1],
                dx,
                dproj: tau_projs[k] - tau_projs[k - 1],
            });
        }
        let end = taus.last().copied().unwrap_or(start);
        RegenerationSequence {
            censor: Censoring {
                horizon,
                tail_dropped: end < last,
                first_block_present: !taus.is_empty(),
            },
            taus,
            tau_projs,
            tau_sites,
            blocks,
        }
    }

    /// Writes `k,tau_k,dtau,dx_1,...,dx_d,dproj`, prefixed by `prefix`
    /// columns when given (e.g. a replica index).
    pub fn write_blocks_csv<W: Write>(
        &self,
        mut w: W,
        d: usize,
        prefix: Option<(&str, u64)>,
        header: bool,
    ) -> io::Result<()> {
        if header {
            if let Some((name, _)) = prefix {
                write!(w, "{name},")?;
            }
            write!(w, "k,tau_k,dtau")?;
            for i in 1..=d {
                write!(w, ",dx_{i}")?;
            }
            writeln!(w, ",dproj")?;
        }
        for b in &self.blocks {
            if let Some((_, v)) = prefix {
                write!(w, "{v},")?;
            }
            write!(w, "{},{},{}", b.k, b.tau_k, b.dtau)?;
            if b.dx.is_empty() {
                for _ in 0..d {
                    write!(w, ",")?;
                }
            } else {
                for x in &b.dx {
                    write!(w, ",{x}")?;
                }
            }
            writeln!(w, ",{}", b.dproj)?;
        }
        Ok(())
    }
}

/// Literal evaluation of the definitions on a stored path, used as ground
/// truth in tests. `D = infinity` means "no drop before the end of the
/// path"; the result matches `finalize` with margin 0.
pub fn oracle_regeneration_times(projs: &[f64]) -> Vec<u64> {
    let mut taus = Vec::new();
    let mut base = 0usize;
    while base < projs.len() {
        match first_regeneration(&projs[base..]) {
            Some(t) => {
                base += t;
                taus.push(base as u64);
            }
            None => break,
        }
    }
    taus
}

fn first_regeneration(y: &[f64]) -> Option<usize> {
    let n = y.len();
    let hitting = |u: f64| (1..n).find(|&k| y[k] >= u);
    let drop_after = |s: usize| (s..n).find(|&m| y[m] < y[s]);
    // S_0 = 0, D_0 = 0 < infinity, so kappa >= 1
    let mut record = y[0];
    loop {
        let s = hitting(record + 1.0)?;
        match drop_after(s) {
            None => return Some(s),
            Some(d) => {
                record = y[..=d].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(projs: &[f64]) -> (RenewalDetector, Vec<RenewalEvent>) {
        let mut det = RenewalDetector::new();
        let mut events = Vec::new();
        for (i, p) in projs.iter().enumerate() {
            events.extend(det.observe(i as u64, *p).unwrap());
        }
        (det, events)
    }

    #[test]
    fn monotone_path_events() {
        let (_, ev) = stream(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(
            ev[0],
            RenewalEvent::CandidateOpened {
                time: 1,
                floor: 1.0,
                depth: 0
            }
        );
        assert!(ev
            .iter()
            .all(|e| matches!(e, RenewalEvent::CandidateOpened { .. })));
    }

    #[test]
    fn backtrack_path_events() {
        let (_, ev) = stream(&[0.0, 1.0, 0.0, 1.0, 2.0]);
        assert_eq!(
            ev,
            vec![
                RenewalEvent::CandidateOpened {
                    time: 1,
                    floor: 1.0,
                    depth: 0
                },
                RenewalEvent::CandidateKilled {
                    time: 1,
                    at: 2,
                    depth: 0
                },
                RenewalEvent::CandidateOpened {
                    time: 4,
                    floor: 2.0,
                    depth: 0
                },
            ]
        );
    }

    #[test]
    fn flat_path_has_no_events() {
        let (det, ev) = stream(&[0.0, 0.0, -1.0, 0.0, 0.5]);
        assert!(ev.is_empty());
        let seq = det.finalize(4, 0.0);
        assert!(seq.taus.is_empty());
    }

    #[test]
    fn monotone_unit_path_regenerates_every_step() {
        let projs: Vec<f64> = (0..=10).map(f64::from).collect();
        let (det, _) = stream(&projs);
        let seq = det.finalize(10, 0.0);
        assert_eq!(seq.taus, (1..=10).collect::<Vec<u64>>());
        assert_eq!(oracle_regeneration_times(&projs), seq.taus);
        assert!(!seq.censor.tail_dropped);
        assert!(seq.blocks.iter().all(|b| b.dtau == 1 && b.dproj == 1.0));
    }

    #[test]
    fn backtrack_then_monotone() {
        let mut projs = vec![0.0, 1.0, 0.0, 1.0];
        projs.extend((2..=12).map(f64::from));
        let (det, _) = stream(&projs);
        let seq = det.finalize(projs.len() as u64 - 1, 0.0);
        assert_eq!(seq.taus[0], 4);
        for (k, t) in seq.taus.iter().enumerate() {
            assert_eq!(*t, 4 + k as u64);
        }
        assert_eq!(oracle_regeneration_times(&projs), seq.taus);
    }

    #[test]
    fn ends_mid_backtrack() {
        let projs = [0.0, 1.0, 2.0, 1.0, 0.0, -1.0];
        let (det, _) = stream(&projs);
        let seq = det.finalize(5, 0.0);
        assert!(seq.taus.is_empty());
        assert!(seq.blocks.is_empty());
        assert!(seq.censor.tail_dropped);
        assert!(!seq.censor.first_block_present);
        assert!(oracle_regeneration_times(&projs).is_empty());
    }

    #[test]
    fn nested_candidates_survive_partial_drop() {
        // candidate at 1 (floor 1), child candidate at 3 (floor 2.5) killed
        // at 4 by a drop to 2; the level-0 candidate survives.
        let projs = [0.0, 1.0, 2.0, 2.5, 2.0, 3.0, 3.5, 4.0];
        let (det, _) = stream(&projs);
        let seq = det.finalize(7, 0.0);
        assert_eq!(seq.taus, oracle_regeneration_times(&projs));
        assert_eq!(seq.taus[0], 1);
        assert_eq!(seq.taus[1], 2);
    }

    #[test]
    fn margin_drops_recent_candidates() {
        let projs: Vec<f64> = (0..=10).map(f64::from).collect();
        let (det, _) = stream(&projs);
        let seq = det.finalize(10, 3.0);
        assert_eq!(seq.taus, (1..=7).collect::<Vec<u64>>());
        assert!(seq.censor.tail_dropped);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut det = RenewalDetector::new();
        det.observe(0, 0.0).unwrap();
        assert_eq!(
            det.observe(2, 1.0).unwrap_err(),
            RenewalError::OutOfOrder { last: 0, got: 2 }
        );
    }

    #[test]
    fn constant_path_oracle_is_empty() {
        assert!(oracle_regeneration_times(&[0.0; 50]).is_empty());
    }

    #[test]
    fn blocks_csv_layout() {
        let mut det = RenewalDetector::new();
        for j in 0..4i32 {
            det.observe_site(j as u64, j as f64, &[j, 0]).unwrap();
        }
        let seq = det.finalize(3, 0.0);
        let mut buf = Vec::new();
        seq.write_blocks_csv(&mut buf, 2, None, true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,tau_k,dtau,dx_1,dx_2,dproj\n1,1,1,1,0,1\n2,2,1,1,0,1\n"
        );
    }
}
