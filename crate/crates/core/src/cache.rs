//! Content-addressed on-disk cache of ground states.
//!
//! Entries are keyed by a SHA-256 digest of the chain parameters, the sector
//! policy and every solver setting that can change the result. Each file
//! carries its own checksum; unreadable or corrupt entries count as misses and
//! are overwritten. Writes go through a temporary file and an atomic rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::eigensolve::{GroundState, SectorPolicy, SolverConfig};
use crate::error::Result;
use crate::model::{Boundary, ChainParams, Parity};

/// Environment variable that overrides the cache directory.
pub const CACHE_DIR_ENV: &str = "XYCONV_CACHE_DIR";

const MAGIC: &[u8; 5] = b"XYGS\x01";
const KEY_VERSION: &str = "xyconv-ground-state-v1";

/// Counters for one cache handle.
#[derive(Debug, Default)]
pub struct CacheStats {
    pub hits: AtomicU64,
    pub misses: AtomicU64,
    pub corrupt: AtomicU64,
    pub write_failures: AtomicU64,
}

#[derive(Debug)]
pub struct DiskCache {
    dir: PathBuf,
    stats: CacheStats,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(DiskCache { dir, stats: CacheStats::default() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn key(params: &ChainParams<f64>, policy: SectorPolicy, cfg: &SolverConfig) -> [u8; 32] {
        let boundary = match params.boundary {
            Boundary::Periodic => "periodic",
            Boundary::Open => "open",
        };
        let canonical = format!(
            "{KEY_VERSION}|n={}|gamma={:016x}|g={:016x}|boundary={boundary}|policy={policy:?}|tol={:016x}|max_iter={}|dense_max={}|degeneracy_tol={:016x}|seed={}",
            params.n_sites,
            params.gamma.to_bits(),
            params.g.to_bits(),
            cfg.tol.to_bits(),
            cfg.max_iter,
            cfg.dense_max_sites,
            cfg.degeneracy_tol.to_bits(),
            cfg.seed,
        );
        Sha256::digest(canonical.as_bytes()).into()
    }

    fn path_for(&self, key: &[u8; 32]) -> PathBuf {
        self.dir.join(format!("{}.gs", hex(key)))
    }

    /// Cached state, or `None` on a miss or a corrupt entry.
    pub fn load(&self, key: &[u8; 32]) -> Option<GroundState<f64>> {
        let bytes = match fs::read(self.path_for(key)) {
            Ok(b) => b,
            Err(_) => {
                self.stats.misses.fetch_add(1, Ordering::Relaxed);
                return None;
            }
        };
        match decode(&bytes, key) {
            Some(gs) => {
                self.stats.hits.fetch_add(1, Ordering::Relaxed);
                Some(gs)
            }
            None => {
                self.stats.corrupt.fetch_add(1, Ordering::Relaxed);
                self.stats.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Stores `gs`; failures are counted, not raised, since the cache is
    /// only an accelerator.
    pub fn store(&self, key: &[u8; 32], gs: &GroundState<f64>) {
        if self.try_store(key, gs).is_err() {
            self.stats.write_failures.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn try_store(&self, key: &[u8; 32], gs: &GroundState<f64>) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&encode(gs, key))?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path_for(key)).map_err(|e| e.error)?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(gs: &GroundState<f64>, key: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 32 + 8 * (6 + gs.vector.len()) + 2 + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(key);
    for x in [gs.energy, gs.gap, gs.residual, gs.sector_energies[0], gs.sector_energies[1]] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.push(matches!(gs.parity, Parity::Odd) as u8);
    out.push(gs.degenerate as u8);
    out.extend_from_slice(&(gs.vector.len() as u64).to_le_bytes());
    for x in &gs.vector {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn decode(bytes: &[u8], key: &[u8; 32]) -> Option<GroundState<f64>> {
    let body_len = bytes.len().checked_sub(32)?;
    let (body, digest) = bytes.split_at(body_len);
    if Sha256::digest(body).as_slice() != digest {
        return None;
    }
    let rest = body.strip_prefix(MAGIC.as_slice())?;
    let (stored_key, mut rest) = rest.split_at_checked(32)?;
    if stored_key != key {
        return None;
    }
    let mut f64s = [0.0; 5];
    for x in f64s.iter_mut() {
        let (head, tail) = rest.split_at_checked(8)?;
        *x = f64::from_le_bytes(head.try_into().ok()?);
        rest = tail;
    }
    let (flags, rest) = rest.split_at_checked(2)?;
    let parity = match flags[0] {
        0 => Parity::Even,
        1 => Parity::Odd,
        _ => return None,
    };
    let degenerate = match flags[1] {
        0 => false,
        1 => true,
        _ => return None,
    };
    let (len, rest) = rest.split_at_checked(8)?;
    let len = u64::from_le_bytes(len.try_into().ok()?) as usize;
    if rest.len() != len.checked_mul(8)? {
        return None;
    }
    let vector = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Some(GroundState { energy: f64s[0], vector, parity, gap: f64s[1], degenerate, residual: f64s[2], sector_energies: [f64s[3], f64s[4]] })
}
