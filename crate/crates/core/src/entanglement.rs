//! Bipartitions, entanglement spectra and Rényi entropies (base 2).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues below this fraction of `λ₁` do not count towards the rank.
pub const RANK_THRESHOLD: f64 = 1e-12;

/// `|α - 1|` below which the von Neumann entropy is returned.
pub const VON_NEUMANN_WINDOW: f64 = 1e-6;

/// Limit probes evaluated alongside a finite α grid.
pub const ALPHA_SENTINELS: [f64; 2] = [1e-6, 1e6];

/// Alice's sites as a bit mask over the chain (bit `i` = site `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bipartition {
    n_sites: usize,
    a_mask: u64,
}

impl Bipartition {
    pub fn from_mask(n_sites: usize, a_mask: u64) -> Result<Self> {
        if n_sites < 2 || n_sites > 63 {
            return Err(Error::Bipartition(format!("unsupported chain length {n_sites}")));
        }
        let full = (1u64 << n_sites) - 1;
        if a_mask & !full != 0 {
            return Err(Error::Bipartition(format!("mask {a_mask:#b} names sites beyond N = {n_sites}")));
        }
        let l = a_mask.count_ones() as usize;
        if l == 0 || l >= n_sites {
            return Err(Error::Bipartition(format!("Alice must hold between 1 and N-1 sites, got {l} of {n_sites}")));
        }
        Ok(Bipartition { n_sites, a_mask })
    }

    /// Sites `0..l`.
    pub fn contiguous(n_sites: usize, l: usize) -> Result<Self> {
        if l == 0 || l >= n_sites {
            return Err(Error::Bipartition(format!("block length must satisfy 1 ≤ L ≤ N-1, got L = {l}, N = {n_sites}")));
        }
        Self::from_mask(n_sites, (1u64 << l) - 1)
    }

    pub fn from_sites(n_sites: usize, sites: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &s in sites {
            if s >= n_sites {
                return Err(Error::Bipartition(format!("site {s} outside a chain of {n_sites}")));
            }
            mask |= 1 << s;
        }
        Self::from_mask(n_sites, mask)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn a_mask(&self) -> u64 {
        self.a_mask
    }

    pub fn a_size(&self) -> usize {
        self.a_mask.count_ones() as usize
    }

    pub fn complement(&self) -> Bipartition {
        let full = (1u64 << self.n_sites) - 1;
        Bipartition { n_sites: self.n_sites, a_mask: full & !self.a_mask }
    }

    /// Alice's sites form the block `0..L`.
    pub fn is_leading_block(&self) -> bool {
        self.a_mask == (1u64 << self.a_size()) - 1
    }

    /// `(row, column)` of basis state `s` in the Alice × Bob amplitude matrix.
    fn split(&self, s: usize) -> (usize, usize) {
        let (mut a, mut b) = (0usize, 0usize);
        let (mut ia, mut ib) = (0, 0);
        for site in 0..self.n_sites {
            let bit = (s >> site) & 1;
            if self.a_mask & (1 << site) != 0 {
                a |= bit << ia;
                ia += 1;
            } else {
                b |= bit << ib;
                ib += 1;
            }
        }
        (a, b)
    }

    fn check_state<T: Real>(&self, state: &[T]) -> Result<()> {
        if state.len() != 1usize << self.n_sites {
            return Err(Error::Bipartition(format!("state of length {} does not match a chain of {} sites", state.len(), self.n_sites)));
        }
        let norm2: T = state.iter().map(|&x| x * x).sum();
        if (norm2 - T::one()).abs() > T::lit(1e-10).max(T::epsilon() * T::lit(1e3)) {
            return Err(Error::Contract(format!("state is not normalized (‖ψ‖² = {norm2})")));
        }
        Ok(())
    }

    /// Amplitudes reshaped into a `2^L × 2^(N-L)` matrix.
    pub fn amplitude_matrix<T: Real>(&self, state: &[T]) -> Result<DMatrix<T>> {
        self.check_state(state)?;
        let rows = 1usize << self.a_size();
        let cols = 1usize << (self.n_sites - self.a_size());
        let mut m = DMatrix::from_element(rows, cols, T::zero());
        for (s, &amp) in state.iter().enumerate() {
            let (a, b) = self.split(s);
            m[(a, b)] = amp;
        }
        Ok(m)
    }
}

/// Eigenvalues of a reduced density matrix, descending, negatives clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementSpectrum<T> {
    values: Vec<T>,
}

impl<T: Real> EntanglementSpectrum<T> {
    /// Sorts descending and clamps rounding-level negatives; anything below
    /// `-1e-12` is rejected.
    pub fn new(mut values: Vec<T>) -> Result<Self> {
        let floor = -T::lit(1e-12).max(T::epsilon() * T::lit(10.0));
        for &v in &values {
            if v.is_nan() || v < floor {
                return Err(Error::Contract(format!("eigenvalue {v} is not a valid probability")));
            }
        }
        for v in values.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        values.sort_by(|a, b| b.total_order(a));
        Ok(EntanglementSpectrum { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `λ_k` with `k` counted from 1; zero past the end.
    pub fn lambda(&self, k: usize) -> T {
        assert!(k >= 1, "eigenvalue index is 1-based");
        self.values.get(k - 1).copied().unwrap_or(T::zero())
    }

    pub fn trace(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Number of eigenvalues at or above `RANK_THRESHOLD · λ₁`.
    pub fn effective_rank(&self) -> usize {
        self.kept().len()
    }

    /// Eigenvalues above the rank threshold, renormalized to unit sum.
    fn kept(&self) -> Vec<T> {
        let Some(&top) = self.values.first() else { return Vec::new() };
        let cut = top * T::lit(RANK_THRESHOLD);
        let kept: Vec<T> = self.values.iter().copied().filter(|&v| v > T::zero() && v >= cut).collect();
        let z: T = kept.iter().copied().sum();
        kept.into_iter().map(|v| v / z).collect()
    }
}

/// Partial trace over Bob: `ρ_A = Tr_B |ψ⟩⟨ψ|`.
pub fn reduced_density_matrix<T: Real>(state: &[T], part: &Bipartition) -> Result<DMatrix<T>> {
    let m = part.amplitude_matrix(state)?;
    let (rows, cols) = m.shape();
    let mut rho = DMatrix::from_element(rows, rows, T::zero());
    for i in 0..rows {
        for j in 0..=i {
            let mut acc = T::zero();
            for b in 0..cols {
                acc += m[(i, b)] * m[(j, b)];
            }
            rho[(i, j)] = acc;
            rho[(j, i)] = acc;
        }
    }
    Ok(rho)
}

/// Spectrum of a symmetric positive semidefinite matrix.
pub fn entanglement_spectrum<T: Real>(rho: &DMatrix<T>) -> Result<EntanglementSpectrum<T>> {
    if !rho.is_square() {
        return Err(Error::Contract("density matrix must be square".into()));
    }
    let n = rho.nrows();
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e3));
    for i in 0..n {
        for j in 0..i {
            if (rho[(i, j)] - rho[(j, i)]).abs() > tol {
                return Err(Error::Contract(format!("density matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let (vals, _) = T::symmetric_eigen(rho.clone());
    EntanglementSpectrum::new(vals)
}

/// Spectrum of `ρ_A` from the singular values of the amplitude matrix,
/// padded with zeros to `2^L` entries. Small eigenvalues come out with
/// absolute accuracy near `ε·σ_max·σ` rather than `ε`.
pub fn schmidt_spectrum<T: Real>(state: &[T], part: &Bipartition) -> Result<EntanglementSpectrum<T>> {
    let m = part.amplitude_matrix(state)?;
    let rows = m.nrows();
    let mut vals: Vec<T> = T::singular_values(m).into_iter().map(|s| s * s).collect();
    vals.resize(rows, T::zero());
    EntanglementSpectrum::new(vals)
}

/// Rényi entropy in bits, `S_α = log₂(Σ λ_i^α) / (1 - α)`.
///
/// Eigenvalues below the rank threshold are dropped and the rest
/// renormalized, so `α → 0` gives `log₂` of the effective rank. `α = ∞` is
/// accepted and gives `-log₂ λ₁`.
pub fn renyi_entropy<T: Real>(spec: &EntanglementSpectrum<T>, alpha: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::Domain(format!("Rényi parameter must be positive, got {alpha}")));
    }
    let p = spec.kept();
    if p.is_empty() {
        return Err(Error::Contract("empty spectrum".into()));
    }
    let ln2 = T::LN_2();
    let one = T::one();
    if alpha.is_infinite() {
        return Ok(-p[0].log2());
    }
    if (alpha - one).abs() < T::lit(VON_NEUMANN_WINDOW) {
        let h = p.iter().map(|&x| -x * x.ln()).sum::<T>();
        return Ok(h / ln2);
    }
    if alpha > T::lit(2.0) {
        // Factor out λ₁ so large powers stay representable.
        let top = p[0];
        let tail: T = p.iter().map(|&x| (x / top).powf(alpha)).sum();
        return Ok((alpha * top.ln() + tail.ln()) / ((one - alpha) * ln2));
    }
    // Σ p^α - 1 = Σ p (p^(α-1) - 1), accurate as α → 1.
    let excess: T = p.iter().map(|&x| x * ((alpha - one) * x.ln()).exp_m1()).sum();
    Ok(excess.ln_1p() / ((one - alpha) * ln2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenyiCurve<T> {
    pub alphas: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> RenyiCurve<T> {
    pub fn from_spectrum(spec: &EntanglementSpectrum<T>, alphas: &[T]) -> Result<Self> {
        let values = alphas.iter().map(|&a| renyi_entropy(spec, a)).collect::<Result<Vec<_>>>()?;
        Ok(RenyiCurve { alphas: alphas.to_vec(), values })
    }

    /// Largest increase of `S_α` between consecutive (ascending) α.
    pub fn max_monotonicity_violation(&self) -> T {
        let mut order: Vec<usize> = (0..self.alphas.len()).collect();
        order.sort_by(|&a, &b| self.alphas[a].total_order(&self.alphas[b]));
        order.windows(2).map(|w| self.values[w[1]] - self.values[w[0]]).fold(T::zero(), |acc, d| acc.max(d))
    }
}

pub fn renyi_curve<T: Real>(state: &[T], part: &Bipartition, alphas: &[T]) -> Result<RenyiCurve<T>> {
    let spec = schmidt_spectrum(state, part)?;
    RenyiCurve::from_spectrum(&spec, alphas)
}

/// `count` points log-spaced over `[lo, hi]`, endpoints included.
pub fn log_grid<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let step = (b - a) / T::from_usize_lossy(count - 1);
            (0..count)
                .map(|i| match i {
                    0 => lo,
                    _ if i + 1 == count => hi,
                    _ => (a + step * T::from_usize_lossy(i)).exp(),
                })
                .collect()
        }
    }
}

/// 60 log-spaced points over `[0.01, 100]`.
pub fn default_alpha_grid<T: Real>() -> Vec<T> {
    log_grid(T::lit(0.01), T::lit(100.0), 60)
}

/// `grid` plus the two limit sentinels, sorted ascending.
pub fn with_sentinels<T: Real>(grid: &[T]) -> Vec<T> {
    let mut out: Vec<T> = ALPHA_SENTINELS.iter().map(|&a| T::lit(a)).chain(grid.iter().copied()).collect();
    out.sort_by(|a, b| a.total_order(b));
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn product_state(n: usize) -> Vec<f64> {
        let mut v = vec![0.0; 1 << n];
        v[0] = 1.0;
        v
    }

    fn cat_state(n: usize) -> Vec<f64> {
        let mut v = vec![0.0; 1 << n];
        v[0] = 0.5f64.sqrt();
        v[(1 << n) - 1] = 0.5f64.sqrt();
        v
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / nrm).collect()
    }

    fn spec(vals: &[f64]) -> EntanglementSpectrum<f64> {
        EntanglementSpectrum::new(vals.to_vec()).unwrap()
    }

    #[test]
    fn product_state_is_rank_one() {
        let part = Bipartition::contiguous(6, 3).unwrap();
        let s = schmidt_spectrum(&product_state(6), &part).unwrap();
        assert_eq!(s.len(), 8);
        assert!((s.lambda(1) - 1.0).abs() < 1e-15);
        assert_eq!(s.effective_rank(), 1);
        let rho = reduced_density_matrix(&product_state(6), &part).unwrap();
        assert!((entanglement_spectrum(&rho).unwrap().lambda(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cat_state_has_two_halves() {
        for mask in [0b000001u64, 0b000111, 0b101010, 0b011110] {
            let part = Bipartition::from_mask(6, mask).unwrap();
            let s = schmidt_spectrum(&cat_state(6), &part).unwrap();
            assert!((s.lambda(1) - 0.5).abs() < 1e-14 && (s.lambda(2) - 0.5).abs() < 1e-14);
            assert!(s.values()[2..].iter().all(|&v| v < 1e-15));
        }
    }

    #[test]
    fn eigenvalues_are_squared_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = random_state(&mut rng, 4);
        let part = Bipartition::contiguous(4, 2).unwrap();
        // Independent reshape: row index = low two bits, column = high two bits.
        let m = DMatrix::from_fn(4, 4, |a, b| psi[a | (b << 2)]);
        let sv = m.svd(false, false).singular_values;
        let mut expected: Vec<f64> = sv.iter().map(|s| s * s).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        let rho = reduced_density_matrix(&psi, &part).unwrap();
        let from_rho = entanglement_spectrum(&rho).unwrap();
        let from_svd = schmidt_spectrum(&psi, &part).unwrap();
        for k in 0..4 {
            assert!((from_rho.values()[k] - expected[k]).abs() < 1e-13);
            assert!((from_svd.values()[k] - expected[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn maximally_mixed_qubit() {
        let rho = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let s = entanglement_spectrum(&rho).unwrap();
        assert_eq!(s.values(), &[0.5, 0.5]);
        assert!((renyi_entropy(&s, 2.0f64).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.5]);
        assert!(matches!(entanglement_spectrum(&asym), Err(Error::Contract(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[1.1, 0.0, 0.0, -0.1]);
        assert!(entanglement_spectrum(&neg).is_err());
        assert!(EntanglementSpectrum::new(vec![1.0, -1e-13]).is_ok());
        assert!(Bipartition::contiguous(6, 6).is_err());
        assert!(Bipartition::contiguous(6, 0).is_err());
        assert!(Bipartition::from_mask(4, 0b10000).is_err());
        let part = Bipartition::contiguous(4, 2).unwrap();
        assert!(schmidt_spectrum(&product_state(5), &part).is_err());
        assert!(schmidt_spectrum(&[2.0, 0.0, 0.0, 0.0], &Bipartition::contiguous(2, 1).unwrap()).is_err());
        assert!(renyi_entropy(&spec(&[1.0]), 0.0).is_err());
        assert!(renyi_entropy(&spec(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn renyi_limits() {
        let s = spec(&[0.6, 0.25, 0.1, 0.05]);
        let inf = renyi_entropy(&s, 1e6).unwrap();
        assert!((inf + 0.6f64.log2()).abs() < 1e-5);
        assert!((renyi_entropy(&s, f64::INFINITY).unwrap() + 0.6f64.log2()).abs() < 1e-15);
        let zero = renyi_entropy(&s, 1e-6).unwrap();
        assert!((zero - 2.0).abs() < 1e-4);
        let vn = -[0.6f64, 0.25, 0.1, 0.05].iter().map(|p| p * p.log2()).sum::<f64>();
        assert!((renyi_entropy(&s, 1.0).unwrap() - vn).abs() < 1e-14);
        assert!((renyi_entropy(&s, 1.0f64 + 1e-4).unwrap() - vn).abs() < 1e-3);
        let two = -(0.36f64 + 0.0625 + 0.01 + 0.0025).log2();
        assert!((renyi_entropy(&s, 2.0).unwrap() - two).abs() < 1e-14);
        // Both branches agree at the switch-over.
        let below = renyi_entropy(&s, 2.0 - 1e-9).unwrap();
        let above = renyi_entropy(&s, 2.0 + 1e-9).unwrap();
        assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn curves_for_reference_states() {
        let alphas = with_sentinels(&default_alpha_grid::<f64>());
        let part = Bipartition::contiguous(6, 2).unwrap();
        let cat = renyi_curve(&cat_state(6), &part, &alphas).unwrap();
        assert!(cat.values.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        let prod = renyi_curve(&product_state(6), &part, &alphas).unwrap();
        assert!(prod.values.iter().all(|&s| s.abs() < 1e-15));
    }

    #[test]
    fn complement_has_same_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let psi = random_state(&mut rng, 7);
        for mask in [0b0000011u64, 0b1010100, 0b0111000] {
            let part = Bipartition::from_mask(7, mask).unwrap();
            let a = schmidt_spectrum(&psi, &part).unwrap();
            let b = schmidt_spectrum(&psi, &part.complement()).unwrap();
            for k in 1..=a.len().max(b.len()) {
                assert!((a.lambda(k) - b.lambda(k)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn grid_shape() {
        let g = default_alpha_grid::<f64>();
        assert_eq!(g.len(), 60);
        assert!((g[0] - 0.01).abs() < 1e-15 && g[59] == 100.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let s = with_sentinels(&g);
        assert_eq!(s.len(), 62);
        assert_eq!(s[0], 1e-6);
        assert_eq!(s[61], 1e6);
    }

    fn arb_spectrum() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-9f64..1.0, 1..24).prop_map(|v| {
            let z: f64 = v.iter().sum();
            v.into_iter().map(|x| x / z).collect()
        })
    }

    proptest! {
        #[test]
        fn renyi_is_non_increasing_in_alpha(p in arb_spectrum()) {
            let s = spec(&p);
            let alphas = with_sentinels(&log_grid(0.01, 100.0, 120));
            let curve = RenyiCurve::from_spectrum(&s, &alphas).unwrap();
            prop_assert!(curve.max_monotonicity_violation() <= 1e-10);
            prop_assert!((s.trace() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn collision_entropy_matches_purity(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi = random_state(&mut rng, 6);
            let part = Bipartition::from_mask(6, 1 + (seed % 62)).unwrap();
            let rho = reduced_density_matrix(&psi, &part).unwrap();
            let purity: f64 = rho.iter().map(|x| x * x).sum();
            let s2 = renyi_entropy(&schmidt_spectrum(&psi, &part).unwrap(), 2.0).unwrap();
            prop_assert!((s2 + purity.log2()).abs() < 1e-10);
        }
    }
}
