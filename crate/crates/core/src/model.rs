//! XY / transverse-field Ising chain Hamiltonians.
//!
//! Basis states are integers with bit `i` holding spin `i` (site 0 is the
//! lowest bit). A clear bit is spin up, `σᶻ = +1`, so the fully polarized
//! large-field state is index 0.
//!
//! The Hamiltonian is
//!
//! ```text
//! H = -Σ_i [ (1+γ)/2 σˣ_i σˣ_{i+1} + (1-γ)/2 σʸ_i σʸ_{i+1} + g σᶻ_i ]
//! ```
//!
//! and `γ = 1` is the transverse-field Ising chain. The bond sum is taken
//! literally over `i = 0..N-1` for periodic chains, so a periodic chain of two
//! sites carries the bond (0,1) twice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::DMatrix;

/// Largest chain built unless a caller raises the limit explicitly.
pub const DEFAULT_MAX_SITES: usize = 24;

/// Largest chain for which a full `2^N × 2^N` dense matrix may be materialized.
pub const DENSE_MAX_SITES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

/// Eigenvalue of the global spin flip `Π_i σᶻ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_state(state: usize) -> Parity {
        if state.count_ones() % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }

    pub fn flipped(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    fn bit(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams<T> {
    pub n_sites: usize,
    pub gamma: T,
    pub g: T,
    #[serde(default)]
    pub boundary: Boundary,
}

impl<T: Real> ChainParams<T> {
    pub fn new(n_sites: usize, gamma: T, g: T, boundary: Boundary) -> Result<Self> {
        let p = ChainParams { n_sites, gamma, g, boundary };
        p.validate()?;
        Ok(p)
    }

    pub fn periodic(n_sites: usize, gamma: T, g: T) -> Result<Self> {
        Self::new(n_sites, gamma, g, Boundary::Periodic)
    }

    pub fn ising(n_sites: usize, g: T) -> Result<Self> {
        Self::periodic(n_sites, T::one(), g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::InvalidParameter(format!("n_sites must be at least 2, got {}", self.n_sites)));
        }
        if !self.gamma.is_finite() || self.gamma < T::zero() {
            return Err(Error::InvalidParameter(format!("gamma must be finite and non-negative, got {}", self.gamma)));
        }
        if !self.g.is_finite() || self.g < T::zero() {
            return Err(Error::InvalidParameter(format!("g must be finite and non-negative, got {}", self.g)));
        }
        Ok(())
    }

    /// Same chain at a different field.
    pub fn with_g(&self, g: T) -> Self {
        ChainParams { g, ..*self }
    }

    pub fn dimension(&self) -> usize {
        1usize << self.n_sites
    }
}

/// Matrix-free XY chain Hamiltonian, real in the computational basis.
#[derive(Debug, Clone)]
pub struct Hamiltonian<T> {
    params: ChainParams<T>,
    /// Pair masks `(1 << i) | (1 << j)` of every bond, duplicates kept.
    bonds: Vec<usize>,
    /// Flip amplitude for a parallel pair (`-γ`); antiparallel pairs flip with `-1`.
    parallel_amp: T,
}

/// Builds the Hamiltonian with the default site capacity.
pub fn build_hamiltonian<T: Real>(params: ChainParams<T>) -> Result<Hamiltonian<T>> {
    Hamiltonian::with_capacity(params, DEFAULT_MAX_SITES)
}

impl<T: Real> Hamiltonian<T> {
    pub fn with_capacity(params: ChainParams<T>, max_sites: usize) -> Result<Self> {
        params.validate()?;
        let max = max_sites.min(usize::BITS as usize - 2);
        if params.n_sites > max {
            return Err(Error::Capacity { requested: params.n_sites, max });
        }
        let n = params.n_sites;
        let n_bonds = match params.boundary {
            Boundary::Periodic => n,
            Boundary::Open => n - 1,
        };
        let bonds = (0..n_bonds).map(|i| (1usize << i) | (1usize << ((i + 1) % n))).collect();
        Ok(Hamiltonian { params, bonds, parallel_amp: -params.gamma })
    }

    pub fn params(&self) -> &ChainParams<T> {
        &self.params
    }

    pub fn n_sites(&self) -> usize {
        self.params.n_sites
    }

    pub fn dimension(&self) -> usize {
        self.params.dimension()
    }

    pub fn sector_dimension(&self) -> usize {
        self.dimension() / 2
    }

    /// `-g Σ σᶻ` on a basis state.
    #[inline]
    pub fn diagonal(&self, state: usize) -> T {
        let down = state.count_ones() as usize;
        let up = self.params.n_sites - down;
        -self.params.g * (T::from_usize_lossy(up) - T::from_usize_lossy(down))
    }

    #[inline]
    fn flip_amp(&self, state: usize, pair: usize) -> T {
        let both = (state & pair).count_ones();
        if both == 1 {
            -T::one()
        } else {
            self.parallel_amp
        }
    }

    /// `y = H x` on the full `2^N` space.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        let dim = self.dimension();
        assert_eq!(x.len(), dim, "input length must be 2^N");
        assert_eq!(y.len(), dim, "output length must be 2^N");
        for (s, ys) in y.iter_mut().enumerate() {
            let mut acc = self.diagonal(s) * x[s];
            for &pair in &self.bonds {
                acc += self.flip_amp(s, pair) * x[s ^ pair];
            }
            *ys = acc;
        }
    }

    pub fn apply_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); x.len()];
        self.apply(x, &mut y);
        y
    }

    /// `y = H x` inside one parity sector, in sector coordinates.
    pub fn apply_sector(&self, parity: Parity, x: &[T], y: &mut [T]) {
        let dim = self.sector_dimension();
        assert_eq!(x.len(), dim, "input length must be 2^(N-1)");
        assert_eq!(y.len(), dim, "output length must be 2^(N-1)");
        for (idx, ys) in y.iter_mut().enumerate() {
            let s = sector_state(idx, parity);
            let mut acc = self.diagonal(s) * x[idx];
            for &pair in &self.bonds {
                acc += self.flip_amp(s, pair) * x[(s ^ pair) >> 1];
            }
            *ys = acc;
        }
    }

    /// Dense `2^N × 2^N` matrix; refused beyond [`DENSE_MAX_SITES`].
    pub fn to_dense(&self) -> Result<DMatrix<T>> {
        if self.n_sites() > DENSE_MAX_SITES {
            return Err(Error::Capacity { requested: self.n_sites(), max: DENSE_MAX_SITES });
        }
        let dim = self.dimension();
        let mut m = DMatrix::from_element(dim, dim, T::zero());
        for s in 0..dim {
            m[(s, s)] += self.diagonal(s);
            for &pair in &self.bonds {
                m[(s, s ^ pair)] += self.flip_amp(s, pair);
            }
        }
        Ok(m)
    }

    /// Dense block of one parity sector in sector coordinates.
    pub fn sector_dense(&self, parity: Parity) -> Result<DMatrix<T>> {
        if self.n_sites() > DENSE_MAX_SITES + 1 {
            return Err(Error::Capacity { requested: self.n_sites(), max: DENSE_MAX_SITES + 1 });
        }
        let dim = self.sector_dimension();
        let mut m = DMatrix::from_element(dim, dim, T::zero());
        for idx in 0..dim {
            let s = sector_state(idx, parity);
            m[(idx, idx)] += self.diagonal(s);
            for &pair in &self.bonds {
                m[(idx, (s ^ pair) >> 1)] += self.flip_amp(s, pair);
            }
        }
        Ok(m)
    }

    /// `⟨x|H|x⟩` for a full-space vector.
    pub fn expectation(&self, x: &[T]) -> T {
        let hx = self.apply_vec(x);
        x.iter().zip(&hx).map(|(&a, &b)| a * b).sum()
    }
}

/// Basis state of sector coordinate `idx`: the high `N-1` bits are `idx`,
/// the lowest bit restores the requested parity.
#[inline]
pub fn sector_state(idx: usize, parity: Parity) -> usize {
    let low = (idx.count_ones() as usize & 1) ^ parity.bit();
    (idx << 1) | low
}

/// Embeds a sector vector into the full space.
pub fn embed_sector<T: Real>(parity: Parity, sector: &[T]) -> Vec<T> {
    let mut full = vec![T::zero(); sector.len() * 2];
    for (idx, &v) in sector.iter().enumerate() {
        full[sector_state(idx, parity)] = v;
    }
    full
}

/// Applies `Π_i σᶻ_i` to a full-space vector.
pub fn apply_parity<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().enumerate().map(|(s, &v)| if Parity::of_state(s) == Parity::Even { v } else { -v }).collect()
}

/// Field of the Ising chain equivalent to the 2-SAT-on-a-ring adiabatic
/// schedule `H(s) = (1-s) Σ (1 - σˣ_j) + s Σ ½ (1 - σᶻ_j σᶻ_{j+1})`.
///
/// Up to an additive constant, the basis rotation `x ↔ z` and an overall
/// factor `s/2`, `H(s)` is the Ising chain at `g = 2(1-s)/s`.
pub fn aqc_schedule_to_g<T: Real>(s: T) -> Result<T> {
    if !(s > T::zero() && s <= T::one()) {
        return Err(Error::Domain(format!("schedule parameter must lie in (0, 1], got {s}")));
    }
    let two = T::lit(2.0);
    // 2/s - 2 keeps s = 2/3 landing exactly on g = 1 in binary floating point.
    Ok(two / s - two)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn pauli(k: char) -> DMatrix<C> {
        let z = C::new(0.0, 0.0);
        let o = C::new(1.0, 0.0);
        let i = C::new(0.0, 1.0);
        match k {
            'i' => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
            'x' => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
            'y' => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
            'z' => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
            _ => unreachable!(),
        }
    }

    /// Kronecker product of single-site operators; site 0 is the least significant bit.
    fn site_op(n: usize, ops: &[(usize, char)]) -> DMatrix<C> {
        let mut m = DMatrix::from_element(1, 1, C::new(1.0, 0.0));
        for site in (0..n).rev() {
            let k = ops.iter().find(|(s, _)| *s == site).map(|(_, k)| *k).unwrap_or('i');
            m = m.kronecker(&pauli(k));
        }
        m
    }

    /// Literal Pauli-matrix construction, independent of the bit tricks above.
    fn reference_dense(p: &ChainParams<f64>) -> DMatrix<C> {
        let n = p.n_sites;
        let dim = 1 << n;
        let mut h = DMatrix::from_element(dim, dim, C::new(0.0, 0.0));
        let bonds = match p.boundary {
            Boundary::Periodic => n,
            Boundary::Open => n - 1,
        };
        for i in 0..bonds {
            let j = (i + 1) % n;
            let xx = site_op(n, &[(i, 'x')]) * site_op(n, &[(j, 'x')]);
            let yy = site_op(n, &[(i, 'y')]) * site_op(n, &[(j, 'y')]);
            h -= xx * C::new(0.5 * (1.0 + p.gamma), 0.0) + yy * C::new(0.5 * (1.0 - p.gamma), 0.0);
        }
        for i in 0..n {
            h -= site_op(n, &[(i, 'z')]) * C::new(p.g, 0.0);
        }
        h
    }

    fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    #[test]
    fn matches_literal_pauli_construction() {
        for &(n, gamma, g, boundary) in &[
            (2, 1.0, 0.0, Boundary::Periodic),
            (3, 0.3, 0.7, Boundary::Periodic),
            (4, 0.866, 0.5, Boundary::Periodic),
            (5, 0.0, 1.2, Boundary::Open),
            (4, 1.0, 2.0, Boundary::Open),
        ] {
            let p = ChainParams::new(n, gamma, g, boundary).unwrap();
            let ours = build_hamiltonian(p).unwrap().to_dense().unwrap();
            let reference = reference_dense(&p);
            for r in 0..ours.nrows() {
                for c in 0..ours.ncols() {
                    let d = reference[(r, c)] - C::new(ours[(r, c)], 0.0);
                    assert!(d.norm() < 1e-13, "N={n} γ={gamma} g={g} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn two_site_periodic_doubles_the_bond() {
        let h = build_hamiltonian(ChainParams::ising(2, 0.0).unwrap()).unwrap();
        let (vals, _) = f64::symmetric_eigen(h.to_dense().unwrap());
        let expected = [-2.0, -2.0, 2.0, 2.0];
        for (v, e) in vals.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12, "{vals:?}");
        }
    }

    #[test]
    fn diagonal_counts_up_minus_down() {
        let h = build_hamiltonian(ChainParams::ising(6, 0.37).unwrap()).unwrap();
        for s in 0..h.dimension() {
            let down = s.count_ones() as f64;
            let up = 6.0 - down;
            assert!((h.diagonal(s) + 0.37 * (up - down)).abs() < 1e-15);
        }
    }

    #[test]
    fn hermitian_and_parity_symmetric_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, gamma, g) in &[(6, 1.0, 0.5), (7, 0.4, 1.3), (8, 0.866, 0.5)] {
            let h = build_hamiltonian(ChainParams::periodic(n, gamma, g).unwrap()).unwrap();
            for _ in 0..10 {
                let u = random_vec(&mut rng, h.dimension());
                let v = random_vec(&mut rng, h.dimension());
                let lhs = dot(&u, &h.apply_vec(&v));
                let rhs = dot(&h.apply_vec(&u), &v);
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));

                let hp = h.apply_vec(&apply_parity(&v));
                let ph = apply_parity(&h.apply_vec(&v));
                let comm: Vec<f64> = hp.iter().zip(&ph).map(|(a, b)| a - b).collect();
                assert!(norm(&comm) <= 1e-12 * norm(&v));
            }
        }
    }

    #[test]
    fn xy_at_unit_anisotropy_is_ising() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 7;
        let g = 0.81;
        let h = build_hamiltonian(ChainParams::periodic(n, 1.0, g).unwrap()).unwrap();
        // Transverse-field Ising written directly: -Σ (σˣσˣ + g σᶻ).
        for _ in 0..10 {
            let v = random_vec(&mut rng, 1 << n);
            let mut ising = vec![0.0; 1 << n];
            for (s, out) in ising.iter_mut().enumerate() {
                let up = (0..n).filter(|i| s & (1 << i) == 0).count() as f64;
                let mut acc = -g * (2.0 * up - n as f64) * v[s];
                for i in 0..n {
                    acc -= v[s ^ (1 << i) ^ (1 << ((i + 1) % n))];
                }
                *out = acc;
            }
            let ours = h.apply_vec(&v);
            let diff = ours.iter().zip(&ising).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff <= 1e-14, "{diff}");
        }
    }

    #[test]
    fn sector_action_matches_full_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = build_hamiltonian(ChainParams::periodic(8, 0.6, 0.9).unwrap()).unwrap();
        for parity in [Parity::Even, Parity::Odd] {
            let x = random_vec(&mut rng, h.sector_dimension());
            let mut y = vec![0.0; x.len()];
            h.apply_sector(parity, &x, &mut y);
            let full = h.apply_vec(&embed_sector(parity, &x));
            assert_eq!(embed_sector(parity, &y).len(), full.len());
            for (a, b) in embed_sector(parity, &y).iter().zip(&full) {
                assert!((a - b).abs() < 1e-13);
            }
            let dense = h.sector_dense(parity).unwrap();
            for r in 0..x.len() {
                let acc: f64 = (0..x.len()).map(|c| dense[(r, c)] * x[c]).sum();
                assert!((acc - y[r]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn dense_matches_matrix_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = build_hamiltonian(ChainParams::periodic(6, 0.3, 1.1).unwrap()).unwrap();
        let m = h.to_dense().unwrap();
        let v = random_vec(&mut rng, 64);
        let y = h.apply_vec(&v);
        for r in 0..64 {
            let acc: f64 = (0..64).map(|c| m[(r, c)] * v[c]).sum();
            assert!((acc - y[r]).abs() <= 1e-13);
        }
    }

    #[test]
    fn sector_states_have_requested_parity() {
        for idx in 0..128 {
            assert_eq!(Parity::of_state(sector_state(idx, Parity::Even)), Parity::Even);
            assert_eq!(Parity::of_state(sector_state(idx, Parity::Odd)), Parity::Odd);
            assert_eq!(sector_state(idx, Parity::Even) >> 1, idx);
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let p = ChainParams::ising(25, 1.0).unwrap();
        assert_eq!(build_hamiltonian(p).unwrap_err(), Error::Capacity { requested: 25, max: 24 });
        assert!(Hamiltonian::with_capacity(ChainParams::ising(16, 1.0).unwrap(), 12).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ChainParams::ising(1, 1.0).is_err());
        assert!(ChainParams::periodic(4, -0.1, 1.0).is_err());
        assert!(ChainParams::periodic(4, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn aqc_mapping() {
        assert_eq!(aqc_schedule_to_g(2.0f64 / 3.0).unwrap(), 1.0);
        assert_eq!(aqc_schedule_to_g(1.0f64).unwrap(), 0.0);
        assert_eq!(aqc_schedule_to_g(0.5f64).unwrap(), 2.0);
        assert!((aqc_schedule_to_g(0.9f64).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert!(aqc_schedule_to_g(0.0f64).is_err());
        assert!(aqc_schedule_to_g(-0.2f64).is_err());
        assert!(aqc_schedule_to_g(1.5f64).is_err());
    }

    /// The rescaled 2-SAT ring Hamiltonian has the Ising spectrum at the mapped field.
    #[test]
    fn aqc_hamiltonian_is_rescaled_ising() {
        let n = 5;
        for &s in &[0.4, 2.0 / 3.0, 0.9] {
            let dim = 1 << n;
            let mut h = DMatrix::from_element(dim, dim, C::new(0.0, 0.0));
            for j in 0..n {
                h += (site_op(n, &[]) - site_op(n, &[(j, 'x')])) * C::new(1.0 - s, 0.0);
                let zz = site_op(n, &[(j, 'z'), ((j + 1) % n, 'z')]);
                h += (site_op(n, &[]) - zz) * C::new(0.5 * s, 0.0);
            }
            let mut levels: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            levels.sort_by(f64::total_cmp);
            let g = aqc_schedule_to_g(s).unwrap();
            let ising = build_hamiltonian(ChainParams::ising(n, g).unwrap()).unwrap();
            let (ising_levels, _) = f64::symmetric_eigen(ising.to_dense().unwrap());
            // H(s) = s/2 · H_I(g) + const.
            let shift = levels[0] - 0.5 * s * ising_levels[0];
            for (a, b) in levels.iter().zip(&ising_levels) {
                assert!((a - (0.5 * s * b + shift)).abs() < 1e-10, "s={s}");
            }
        }
    }
}
