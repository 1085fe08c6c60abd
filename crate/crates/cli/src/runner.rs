//! Replica ensembles: one independent stream per replica, run in parallel,
//! merged in replica order.

use cookielab_core::model::KernelKind;
use cookielab_core::renewal::RegenerationSequence;
use cookielab_core::rng::derive_seed;
use cookielab_core::trajectory::{Observer, PathMode, SimError, SimOptions, StatsRecord, Walker};
use cookielab_core::{Direction, KernelSpec, RenewalDetector, RngStream};
use rayon::prelude::*;

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub kernel: KernelSpec,
    pub dir: Direction,
    /// Sorted checkpoint horizons; the runs extend to the last one.
    pub checkpoints: Vec<u64>,
    pub replicas: u64,
    pub master_seed: u64,
    pub confirm_margin: f64,
    pub renewal: bool,
    /// Leading replicas that keep their full path.
    pub keep_paths: u64,
    /// Keep the strip local-time histogram in each record.
    pub local_time_maps: bool,
}

impl EnsembleSpec {
    pub fn new(
        kernel: KernelSpec,
        dir: Direction,
        checkpoints: Vec<u64>,
        replicas: u64,
        master_seed: u64,
    ) -> Self {
        let mut checkpoints = checkpoints;
        checkpoints.sort_unstable();
        checkpoints.dedup();
        EnsembleSpec {
            kernel,
            dir,
            checkpoints,
            replicas,
            master_seed,
            confirm_margin: 0.0,
            renewal: true,
            keep_paths: 0,
            local_time_maps: false,
        }
    }

    pub fn without_renewal(mut self) -> Self {
        self.renewal = false;
        self
    }

    /// Kernel of one replica: random environments get their own seed per
    /// replica, so the ensemble samples the annealed law.
    pub fn replica_kernel(&self, replica: u64) -> KernelSpec {
        match self.kernel.kind() {
            KernelKind::Erwre(env) => self
                .kernel
                .with_environment_seed(derive_seed(env.master_seed(), replica)),
            _ => self.kernel.clone(),
        }
    }

    pub fn environment_seeds(&self) -> Option<Vec<u64>> {
        match self.kernel.kind() {
            KernelKind::Erwre(env) => Some(
                (0..self.replicas)
                    .map(|r| derive_seed(env.master_seed(), r))
                    .collect(),
            ),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub horizon: u64,
    pub record: StatsRecord,
    pub regen: Option<RegenerationSequence>,
}

#[derive(Debug, Clone)]
pub struct ReplicaRun {
    pub replica: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub path_csv: Option<Vec<u8>>,
}

impl ReplicaRun {
    pub fn at(&self, horizon: u64) -> &Checkpoint {
        self.checkpoints
            .iter()
            .find(|c| c.horizon == horizon)
            .expect("horizon is a checkpoint")
    }
}

pub fn run_replica(spec: &EnsembleSpec, replica: u64) -> Result<ReplicaRun, SimError> {
    let kernel = spec.replica_kernel(replica);
    let path = if replica < spec.keep_paths {
        PathMode::Full
    } else {
        PathMode::None
    };
    let mut walker = Walker::new(&kernel, &spec.dir, SimOptions { path })?;
    let mut rng = RngStream::new(spec.master_seed, replica);
    let mut det = spec.renewal.then(RenewalDetector::new);
    if let Some(d) = det.as_mut() {
        d.on_step(&walker.current());
    }
    let mut checkpoints = Vec::with_capacity(spec.checkpoints.len());
    for &h in &spec.checkpoints {
        match det.as_mut() {
            Some(d) => walker.run_to(h, &mut rng, &mut [d as &mut dyn Observer])?,
            None => walker.run_to(h, &mut rng, &mut [])?,
        }
        let regen = det.as_ref().map(|d| {
            let mut seq = d.finalize(h, spec.confirm_margin);
            seq.tau_sites = None;
            seq.tau_projs = Vec::new();
            seq
        });
        checkpoints.push(Checkpoint {
            horizon: h,
            record: walker.stats().record(spec.local_time_maps),
            regen,
        });
    }
    let path_csv = (replica < spec.keep_paths).then(|| {
        let mut buf = Vec::new();
        walker
            .stats()
            .write_path_csv(&mut buf)
            .expect("writing to memory");
        buf
    });
    Ok(ReplicaRun {
        replica,
        checkpoints,
        path_csv,
    })
}

/// Thread pool with `threads` workers (0: all cores).
pub fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Runs every replica; the result is in replica order whatever the
/// scheduling.
pub fn run_ensemble(
    spec: &EnsembleSpec,
    pool: &rayon::ThreadPool,
) -> Result<Vec<ReplicaRun>, CliError> {
    pool.install(|| {
        (0..spec.replicas)
            .into_par_iter()
            .map(|r| run_replica(spec, r))
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(CliError::from)
}

/// Like [`run_ensemble`] but keeps only `f(run)` per replica.
pub fn map_ensemble<T: Send>(
    spec: &EnsembleSpec,
    pool: &rayon::ThreadPool,
    f: impl Fn(ReplicaRun) -> T + Sync,
) -> Result<Vec<T>, CliError> {
    pool.install(|| {
        (0..spec.replicas)
            .into_par_iter()
            .map(|r| run_replica(spec, r).map(&f))
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_count_does_not_change_results() {
        let kernel = KernelSpec::standard_erw(2, 0.75).unwrap();
        let dir = Direction::axis(2, 0).unwrap();
        let spec = EnsembleSpec::new(kernel, dir, vec![100, 500], 16, 9);
        let a = run_ensemble(&spec, &pool(1).unwrap()).unwrap();
        let b = run_ensemble(&spec, &pool(4).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.replica, y.replica);
            for (cx, cy) in x.checkpoints.iter().zip(&y.checkpoints) {
                assert_eq!(cx.record, cy.record);
                assert_eq!(cx.regen, cy.regen);
            }
        }
    }

    #[test]
    fn checkpoints_are_prefixes_of_one_run() {
        let kernel = KernelSpec::standard_erw(2, 0.75).unwrap();
        let dir = Direction::axis(2, 0).unwrap();
        let both = run_replica(
            &EnsembleSpec::new(kernel.clone(), dir.clone(), vec![200, 400], 1, 3),
            0,
        )
        .unwrap();
        let short = run_replica(&EnsembleSpec::new(kernel, dir, vec![200], 1, 3), 0).unwrap();
        assert_eq!(both.at(200).record, short.at(200).record);
        assert_eq!(both.at(200).regen, short.at(200).regen);
    }
}
