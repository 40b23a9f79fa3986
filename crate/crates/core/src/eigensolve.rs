//! Ground states and low-lying levels of [`Hamiltonian`], resolved by parity.
//!
//! Each parity sector is solved separately: densely for small chains and by
//! Lanczos with full reorthogonalization otherwise. When the two sectors tie
//! (within [`SolverConfig::degeneracy_tol`]) the even-parity state is returned
//! and flagged degenerate; this is the `g → 0⁺` continuation of the unique
//! finite-chain ground state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::{self, LanczosConfig};
use crate::model::{embed_sector, Hamiltonian, Parity, DENSE_MAX_SITES};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SectorPolicy {
    /// Lower of the two sectors, even on ties.
    #[default]
    Auto,
    Even,
    Odd,
    /// No parity resolution; diagnostic only.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Chains up to this size are diagonalized densely per sector.
    pub dense_max_sites: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub degeneracy_tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { dense_max_sites: 8, max_iter: 500, tol: 1e-11, degeneracy_tol: 1e-10, seed: 0x5eed }
    }
}

impl SolverConfig {
    /// Tolerances clamped to what the scalar type can resolve.
    fn lanczos<T: Real>(&self) -> LanczosConfig<T> {
        LanczosConfig { max_iter: self.max_iter, tol: T::lit(self.tol.max(T::SOLVER_TOL)), ..LanczosConfig::default() }
    }

    fn degeneracy<T: Real>(&self) -> T {
        T::lit(self.degeneracy_tol).max(T::epsilon() * T::lit(1e4))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState<T> {
    pub energy: T,
    /// Unit-norm amplitudes over all `2^N` basis states.
    pub vector: Vec<T>,
    pub parity: Parity,
    /// `E₁ - E₀` over the full spectrum.
    pub gap: T,
    /// The two parity sectors tie within the degeneracy tolerance.
    pub degenerate: bool,
    pub residual: T,
    /// Lowest energy in the even and odd sectors.
    pub sector_energies: [T; 2],
}

#[derive(Debug, Clone)]
struct Level<T> {
    energy: T,
    vector: Vec<T>,
    residual: T,
}

pub fn ground_state<T: Real>(h: &Hamiltonian<T>, policy: SectorPolicy) -> Result<GroundState<T>> {
    ground_state_with(h, policy, &SolverConfig::default())
}

pub fn ground_state_with<T: Real>(h: &Hamiltonian<T>, policy: SectorPolicy, cfg: &SolverConfig) -> Result<GroundState<T>> {
    if policy == SectorPolicy::Full {
        return full_ground_state(h, cfg);
    }
    let even = sector_levels(h, Parity::Even, 2, cfg)?;
    let odd = sector_levels(h, Parity::Odd, 2, cfg)?;
    let (e0, o0) = (even[0].energy, odd[0].energy);
    let degenerate = (e0 - o0).abs() < cfg.degeneracy::<T>();

    let parity = match policy {
        SectorPolicy::Even => Parity::Even,
        SectorPolicy::Odd => Parity::Odd,
        _ if degenerate || e0 <= o0 => Parity::Even,
        _ => Parity::Odd,
    };
    let chosen = match parity {
        Parity::Even => &even,
        Parity::Odd => &odd,
    };

    let mut all: Vec<T> = even.iter().chain(odd.iter()).map(|l| l.energy).collect();
    all.sort_by(|a, b| a.total_order(b));
    let gap = if all.len() > 1 { all[1] - all[0] } else { T::infinity() };

    let mut vector = embed_sector(parity, &chosen[0].vector);
    fix_sign(&mut vector);
    Ok(GroundState { energy: chosen[0].energy, vector, parity, gap, degenerate, residual: chosen[0].residual, sector_energies: [e0, o0] })
}

/// The `k` lowest energies (ascending), `k ≤ 8`.
pub fn low_spectrum<T: Real>(h: &Hamiltonian<T>, k: usize) -> Result<Vec<T>> {
    low_spectrum_with(h, k, &SolverConfig::default())
}

pub fn low_spectrum_with<T: Real>(h: &Hamiltonian<T>, k: usize, cfg: &SolverConfig) -> Result<Vec<T>> {
    if k == 0 || k > 8 {
        return Err(Error::InvalidParameter(format!("low_spectrum supports 1 ≤ k ≤ 8, got {k}")));
    }
    if k > h.dimension() {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds the Hilbert space dimension {}", h.dimension())));
    }
    let mut all: Vec<T> = Vec::with_capacity(2 * k);
    for parity in [Parity::Even, Parity::Odd] {
        let want = k.min(h.sector_dimension());
        all.extend(sector_levels(h, parity, want, cfg)?.into_iter().map(|l| l.energy));
    }
    all.sort_by(|a, b| a.total_order(b));
    all.truncate(k);
    Ok(all)
}

fn sector_levels<T: Real>(h: &Hamiltonian<T>, parity: Parity, count: usize, cfg: &SolverConfig) -> Result<Vec<Level<T>>> {
    let dim = h.sector_dimension();
    let count = count.min(dim);
    if h.n_sites() <= cfg.dense_max_sites.min(DENSE_MAX_SITES + 1) {
        let m = h.sector_dense(parity)?;
        let (vals, vecs) = T::symmetric_eigen(m);
        let mut out = Vec::with_capacity(count);
        for c in 0..count {
            let vector: Vec<T> = (0..dim).map(|r| vecs[(r, c)]).collect();
            let residual = sector_residual(h, parity, vals[c], &vector);
            out.push(Level { energy: vals[c], vector, residual });
        }
        return Ok(out);
    }

    let lcfg = cfg.lanczos::<T>();
    let op = |x: &[T], y: &mut [T]| h.apply_sector(parity, x, y);
    let mut locked: Vec<Vec<T>> = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for level in 0..count {
        // A fresh start per level: a Krylov space grown from one vector only
        // sees a single direction of each degenerate eigenspace.
        let start = lanczos::seeded_start::<T>(dim, cfg.seed.wrapping_add(level as u64));
        let pair = lanczos::lowest_eigenpair(op, dim, &start, &locked, &lcfg)?;
        locked.push(pair.vector.clone());
        out.push(Level { energy: pair.value, vector: pair.vector, residual: pair.residual });
    }
    out.sort_by(|a, b| a.energy.total_order(&b.energy));
    Ok(out)
}

fn sector_residual<T: Real>(h: &Hamiltonian<T>, parity: Parity, e: T, v: &[T]) -> T {
    let mut hv = vec![T::zero(); v.len()];
    h.apply_sector(parity, v, &mut hv);
    hv.iter().zip(v).map(|(&a, &b)| (a - e * b) * (a - e * b)).sum::<T>().sqrt()
}

fn full_ground_state<T: Real>(h: &Hamiltonian<T>, cfg: &SolverConfig) -> Result<GroundState<T>> {
    let dim = h.dimension();
    let (levels, residual) = if h.n_sites() <= cfg.dense_max_sites.min(DENSE_MAX_SITES) {
        let (vals, vecs) = T::symmetric_eigen(h.to_dense()?);
        let v: Vec<T> = (0..dim).map(|r| vecs[(r, 0)]).collect();
        let hv = h.apply_vec(&v);
        let res = hv.iter().zip(&v).map(|(&a, &b)| (a - vals[0] * b) * (a - vals[0] * b)).sum::<T>().sqrt();
        (vec![(vals[0], v), (vals[1], Vec::new())], res)
    } else {
        let lcfg = cfg.lanczos::<T>();
        let start = lanczos::seeded_start::<T>(dim, cfg.seed);
        let op = |x: &[T], y: &mut [T]| h.apply(x, y);
        let first = lanczos::lowest_eigenpair(op, dim, &start, &[], &lcfg)?;
        let restart = lanczos::seeded_start::<T>(dim, cfg.seed.wrapping_add(1));
        let second = lanczos::lowest_eigenpair(op, dim, &restart, std::slice::from_ref(&first.vector), &lcfg)?;
        let res = first.residual;
        (vec![(first.value, first.vector), (second.value, Vec::new())], res)
    };
    let (energy, mut vector) = levels[0].clone();
    let gap = levels[1].0 - energy;
    fix_sign(&mut vector);
    let even_weight: T = vector.iter().enumerate().filter(|(s, _)| Parity::of_state(*s) == Parity::Even).map(|(_, &a)| a * a).sum();
    let parity = if even_weight >= T::lit(0.5) { Parity::Even } else { Parity::Odd };
    Ok(GroundState {
        energy,
        vector,
        parity,
        gap,
        degenerate: gap < cfg.degeneracy::<T>(),
        residual,
        sector_energies: [T::nan(), T::nan()],
    })
}

/// Makes the largest-magnitude amplitude positive.
fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{apply_parity, build_hamiltonian, ChainParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn krylov() -> SolverConfig {
        SolverConfig { dense_max_sites: 0, ..SolverConfig::default() }
    }

    fn dense() -> SolverConfig {
        SolverConfig { dense_max_sites: 12, ..SolverConfig::default() }
    }

    fn ham(n: usize, gamma: f64, g: f64) -> Hamiltonian<f64> {
        build_hamiltonian(ChainParams::periodic(n, gamma, g).unwrap()).unwrap()
    }

    fn check_invariants(h: &Hamiltonian<f64>, gs: &GroundState<f64>) {
        let nrm: f64 = gs.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((nrm - 1.0).abs() < 1e-12);
        let hv = h.apply_vec(&gs.vector);
        let res: f64 = hv.iter().zip(&gs.vector).map(|(a, b)| (a - gs.energy * b).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * gs.energy.abs().max(1.0), "residual {res}");
        let pv = apply_parity(&gs.vector);
        let s = gs.parity.sign() as f64;
        let dev: f64 = pv.iter().zip(&gs.vector).map(|(a, b)| (a - s * b).powi(2)).sum::<f64>().sqrt();
        assert!(dev <= 1e-10);
    }

    #[test]
    fn two_site_ising_at_zero_field() {
        let h = ham(2, 1.0, 0.0);
        for cfg in [dense(), krylov()] {
            let gs = ground_state_with(&h, SectorPolicy::Auto, &cfg).unwrap();
            assert!((gs.energy + 2.0).abs() < 1e-12);
            assert!(gs.degenerate);
            assert_eq!(gs.parity, Parity::Even);
            check_invariants(&h, &gs);
        }
        let levels = low_spectrum(&h, 2).unwrap();
        assert!((levels[0] + 2.0).abs() < 1e-12 && (levels[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn strong_field_polarizes() {
        let h = ham(10, 1.0, 10.0);
        let gs = ground_state(&h, SectorPolicy::Auto).unwrap();
        assert!(gs.vector[0].powi(2) > 0.99);
        assert_eq!(gs.parity, Parity::Even);
        check_invariants(&h, &gs);

        let h8 = ham(8, 1.0, 10.0);
        let e = ground_state_with(&h8, SectorPolicy::Auto, &dense()).unwrap().energy;
        assert!((e + 80.0).abs() <= 0.02 * 80.0);
    }

    #[test]
    fn zero_field_is_exactly_degenerate() {
        let h = ham(10, 1.0, 0.0);
        let levels = low_spectrum(&h, 2).unwrap();
        assert!(levels[1] - levels[0] < 1e-10);
        let gs = ground_state(&h, SectorPolicy::Auto).unwrap();
        assert!(gs.degenerate);
        assert_eq!(gs.parity, Parity::Even);
        assert!(gs.gap < 1e-10);
    }

    #[test]
    fn separable_circle_is_degenerate() {
        let h = ham(8, 3f64.sqrt() / 2.0, 0.5);
        let levels = low_spectrum_with(&h, 2, &dense()).unwrap();
        assert!(levels[1] - levels[0] < 1e-10, "{levels:?}");
    }

    #[test]
    fn paramagnet_is_gapped() {
        let levels = low_spectrum(&ham(6, 1.0, 2.0), 2).unwrap();
        assert!(levels[1] - levels[0] > 0.1);
    }

    #[test]
    fn dense_and_krylov_agree() {
        for &(n, gamma, g) in &[(4, 1.0, 0.7), (6, 0.5, 1.2), (8, 0.866, 0.3), (10, 1.0, 1.0)] {
            let h = ham(n, gamma, g);
            let a = ground_state_with(&h, SectorPolicy::Auto, &dense()).unwrap();
            let b = ground_state_with(&h, SectorPolicy::Auto, &krylov()).unwrap();
            assert!((a.energy - b.energy).abs() < 1e-10, "N={n}");
            assert_eq!(a.parity, b.parity);
            check_invariants(&h, &a);
            check_invariants(&h, &b);
            let overlap: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
            assert!((overlap.abs() - 1.0).abs() < 1e-9);

            let la = low_spectrum_with(&h, 6, &dense()).unwrap();
            let lb = low_spectrum_with(&h, 6, &krylov()).unwrap();
            for (x, y) in la.iter().zip(&lb) {
                assert!((x - y).abs() < 1e-9, "N={n}: {la:?} vs {lb:?}");
            }
        }
    }

    #[test]
    fn forced_sectors_and_full_policy() {
        let h = ham(6, 1.0, 0.4);
        let even = ground_state(&h, SectorPolicy::Even).unwrap();
        let odd = ground_state(&h, SectorPolicy::Odd).unwrap();
        assert_eq!(even.parity, Parity::Even);
        assert_eq!(odd.parity, Parity::Odd);
        assert!(even.energy < odd.energy);
        let full = ground_state(&h, SectorPolicy::Full).unwrap();
        assert!((full.energy - even.energy).abs() < 1e-12);
        assert!((full.gap - (odd.energy - even.energy)).abs() < 1e-10);
    }

    #[test]
    fn variational_bound_on_product_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = ham(8, 0.7, 0.9);
        let e0 = ground_state(&h, SectorPolicy::Auto).unwrap().energy;
        for _ in 0..20 {
            let angles: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..std::f64::consts::PI)).collect();
            let psi: Vec<f64> = (0..256usize)
                .map(|s| (0..8).map(|i| if s & (1 << i) == 0 { angles[i].cos() } else { angles[i].sin() }).product())
                .collect();
            assert!(e0 <= h.expectation(&psi) + 1e-12);
        }
    }

    #[test]
    fn low_spectrum_rejects_large_k() {
        assert!(low_spectrum(&ham(4, 1.0, 1.0), 9).is_err());
        assert!(low_spectrum(&ham(2, 1.0, 1.0), 0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let h = build_hamiltonian(ChainParams::<f32>::periodic(10, 1.0, 1.5).unwrap()).unwrap();
        let a = ground_state(&h, SectorPolicy::Auto).unwrap();
        let h64 = ham(10, 1.0, 1.5);
        let b = ground_state(&h64, SectorPolicy::Auto).unwrap();
        assert!((a.energy as f64 - b.energy).abs() < 1e-3);
    }
}
