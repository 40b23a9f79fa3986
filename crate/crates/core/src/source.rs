//! Memoizing ground-state provider shared by the sweep pipelines.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::cache::DiskCache;
use crate::eigensolve::{ground_state_with, GroundState, SectorPolicy, SolverConfig};
use crate::error::Result;
use crate::model::{Boundary, ChainParams, Hamiltonian, DEFAULT_MAX_SITES};

/// Anything that can hand out ground states for chain parameters.
pub trait GroundStateSource: Sync {
    fn ground_state(&self, params: &ChainParams<f64>) -> Result<Arc<GroundState<f64>>>;
}

type MemoKey = (usize, u64, u64, Boundary);

/// Exact-diagonalization source with an in-memory memo and an optional disk
/// cache behind it.
#[derive(Debug)]
pub struct Solver {
    config: SolverConfig,
    policy: SectorPolicy,
    max_sites: usize,
    memo: Mutex<HashMap<MemoKey, Arc<GroundState<f64>>>>,
    disk: Option<DiskCache>,
}

impl Default for Solver {
    fn default() -> Self {
        Solver::new(SolverConfig::default())
    }
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        Solver { config, policy: SectorPolicy::Auto, max_sites: DEFAULT_MAX_SITES, memo: Mutex::new(HashMap::new()), disk: None }
    }

    pub fn with_policy(mut self, policy: SectorPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_max_sites(mut self, max_sites: usize) -> Self {
        self.max_sites = max_sites;
        self
    }

    pub fn with_disk_cache(mut self, cache: DiskCache) -> Self {
        self.disk = Some(cache);
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn policy(&self) -> SectorPolicy {
        self.policy
    }

    pub fn disk_cache(&self) -> Option<&DiskCache> {
        self.disk.as_ref()
    }

    /// Drops memoized states (the disk cache is untouched).
    pub fn clear_memo(&self) {
        self.memo.lock().expect("memo lock poisoned").clear();
    }

    fn solve(&self, params: &ChainParams<f64>) -> Result<GroundState<f64>> {
        let key = self.disk.as_ref().map(|_| DiskCache::key(params, self.policy, &self.config));
        if let (Some(disk), Some(key)) = (&self.disk, &key) {
            if let Some(gs) = disk.load(key) {
                return Ok(gs);
            }
        }
        let h = Hamiltonian::with_capacity(*params, self.max_sites)?;
        let gs = ground_state_with(&h, self.policy, &self.config)?;
        if let (Some(disk), Some(key)) = (&self.disk, &key) {
            disk.store(key, &gs);
        }
        Ok(gs)
    }
}

impl GroundStateSource for Solver {
    fn ground_state(&self, params: &ChainParams<f64>) -> Result<Arc<GroundState<f64>>> {
        params.validate()?;
        let key = (params.n_sites, params.gamma.to_bits(), params.g.to_bits(), params.boundary);
        if let Some(gs) = self.memo.lock().expect("memo lock poisoned").get(&key) {
            return Ok(Arc::clone(gs));
        }
        // Solved outside the lock; concurrent duplicates are deterministic.
        let gs = Arc::new(self.solve(params)?);
        self.memo.lock().expect("memo lock poisoned").entry(key).or_insert_with(|| Arc::clone(&gs));
        Ok(gs)
    }
}
