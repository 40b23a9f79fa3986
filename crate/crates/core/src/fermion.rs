//! Free-fermion (Jordan–Wigner) solution of the periodic XY chain.
//!
//! Majorana operators are `a_{2i} = S_i σˣ_i` and `a_{2i+1} = S_i σʸ_i` with
//! the string `S_i = Π_{j<i} σᶻ_j`. In the even-parity sector the fermions see
//! antiperiodic boundary conditions, momenta `k = 2π(m + ½)/N`, and the
//! ground-state correlations `Γ_{jk} = ⟨-i a_j a_k⟩` follow from the
//! Bogoliubov angle `e^{iθ_k} = z_k/|z_k|`, `z_k = g - cos k + iγ sin k`.
//! Block entanglement spectra then factorize over the block's normal modes.

use nalgebra::DMatrix;

use crate::entanglement::{Bipartition, EntanglementSpectrum};
use crate::error::{Error, Result};
use crate::model::{Boundary, ChainParams};
use crate::scalar::Real;

/// Products below this fraction of `λ₁` are dropped from block spectra.
pub const PRUNE_THRESHOLD: f64 = 1e-16;

/// Distance from `g = 0` and from the separable circle inside which the
/// even-sector correlations are not trusted to describe the chain.
pub const DEGENERACY_MARGIN: f64 = 0.05;

/// Block spectra are padded with zeros to `2^L` up to this block size.
const PAD_MAX_SITES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FermionSector {
    /// Even spin parity; the only sector supported.
    Antiperiodic,
}

/// Majorana two-point function of the even-parity ground state.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub n_sites: usize,
    pub gamma: f64,
    pub g: f64,
    pub sector: FermionSector,
    /// `2N × 2N`, antisymmetric.
    pub matrix: DMatrix<f64>,
}

/// Whether the oracle is applicable at `params`; `Err(OracleDeclined)` with
/// the reason otherwise.
pub fn check_domain(params: &ChainParams<f64>) -> Result<()> {
    params.validate()?;
    if params.boundary != Boundary::Periodic {
        return Err(Error::OracleDeclined("only periodic chains are supported".into()));
    }
    if params.n_sites % 2 != 0 {
        return Err(Error::OracleDeclined(format!("odd chain length {}", params.n_sites)));
    }
    if params.g <= DEGENERACY_MARGIN {
        return Err(Error::OracleDeclined(format!("g = {} is within {DEGENERACY_MARGIN} of zero", params.g)));
    }
    if params.gamma < 1.0 {
        let circle = (1.0 - params.gamma * params.gamma).sqrt();
        if (params.g - circle).abs() <= DEGENERACY_MARGIN {
            return Err(Error::OracleDeclined(format!(
                "g = {} is within {DEGENERACY_MARGIN} of the separable circle at {circle}",
                params.g
            )));
        }
    }
    Ok(())
}

/// Momentum-space assembly of the even-sector correlations.
///
/// Only parameter validity is enforced here; [`check_domain`] decides
/// whether the even sector holds the ground state.
pub fn correlation_matrix(params: &ChainParams<f64>) -> Result<CorrelationMatrix> {
    params.validate()?;
    if params.boundary != Boundary::Periodic {
        return Err(Error::OracleDeclined("only periodic chains are supported".into()));
    }
    let n = params.n_sites;
    let nf = n as f64;
    let modes: Vec<(f64, f64)> = (0..n)
        .map(|m| {
            let k = 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / nf;
            let (re, im) = (params.g - k.cos(), params.gamma * k.sin());
            (k, im.atan2(re))
        })
        .collect();
    if modes.iter().any(|&(k, _)| {
        let (re, im) = (params.g - k.cos(), params.gamma * k.sin());
        re.hypot(im) < 1e-12
    }) {
        return Err(Error::OracleDeclined("a fermion mode is gapless at these parameters".into()));
    }
    // Correlations depend on the separation d = j - i only.
    let ab: Vec<f64> = (0..n).map(|d| modes.iter().map(|&(k, th)| (th - k * d as f64).cos()).sum::<f64>() / nf).collect();
    let ba: Vec<f64> = (0..n).map(|d| -modes.iter().map(|&(k, th)| (th + k * d as f64).cos()).sum::<f64>() / nf).collect();
    let mut matrix = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            // Separations that wrap pick up the antiperiodic sign.
            let (d, sign) = if j >= i { (j - i, 1.0) } else { (j + n - i, -1.0) };
            matrix[(2 * i, 2 * j + 1)] = sign * ab[d];
            matrix[(2 * i + 1, 2 * j)] = sign * ba[d];
        }
    }
    Ok(CorrelationMatrix { n_sites: n, gamma: params.gamma, g: params.g, sector: FermionSector::Antiperiodic, matrix })
}

impl CorrelationMatrix {
    /// `⟨σᶻ_i⟩`.
    pub fn sigma_z(&self, site: usize) -> f64 {
        self.matrix[(2 * site, 2 * site + 1)]
    }

    /// Largest `|Γ + Γᵀ|` entry.
    pub fn antisymmetry_error(&self) -> f64 {
        let m = &self.matrix;
        (m + m.transpose()).amax()
    }

    /// Block normal-mode amplitudes `ν_j ∈ [0, 1]`, descending, one per site.
    pub fn block_modes(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        if len == 0 || start + len > self.n_sites {
            return Err(Error::UnsupportedBlock(format!(
                "block [{start}, {}) does not fit a chain of {} sites",
                start + len,
                self.n_sites
            )));
        }
        let block = self.matrix.view((2 * start, 2 * start), (2 * len, 2 * len)).into_owned();
        let sv = f64::singular_values(block);
        // Singular values of a real antisymmetric matrix come in equal pairs.
        Ok(sv.iter().step_by(2).map(|&v| v.clamp(0.0, 1.0)).collect())
    }

    /// Entanglement spectrum of a contiguous block of `len` sites.
    ///
    /// Products are expanded mode by mode; partial products that can no
    /// longer reach `PRUNE_THRESHOLD · λ₁` are dropped. Spectra for blocks up
    /// to 20 sites are zero-padded to `2^L` entries.
    pub fn block_spectrum(&self, start: usize, len: usize) -> Result<EntanglementSpectrum<f64>> {
        let nu = self.block_modes(start, len)?;
        let mut values = vec![1.0f64];
        let mut top = 1.0f64;
        for &v in &nu {
            let (hi, lo) = ((1.0 + v) / 2.0, (1.0 - v) / 2.0);
            top *= hi;
            let cut = PRUNE_THRESHOLD * top;
            let mut next = Vec::with_capacity(values.len() * 2);
            for &x in &values {
                for y in [x * hi, x * lo] {
                    if y >= cut {
                        next.push(y);
                    }
                }
            }
            values = next;
        }
        if len <= PAD_MAX_SITES {
            values.resize(1 << len, 0.0);
        }
        EntanglementSpectrum::new(values)
    }

    /// Same as [`Self::block_spectrum`] for a cyclically contiguous mask; the
    /// state is translation invariant, so only the block length matters.
    pub fn spectrum_for(&self, part: &Bipartition) -> Result<EntanglementSpectrum<f64>> {
        if part.n_sites() != self.n_sites {
            return Err(Error::Bipartition(format!("bipartition is for {} sites, chain has {}", part.n_sites(), self.n_sites)));
        }
        let mask = part.a_mask();
        let full = (1u64 << self.n_sites) - 1;
        // A cyclic interval has exactly one 0→1 transition going around the ring.
        let rotated = ((mask << 1) | (mask >> (self.n_sites - 1))) & full;
        if (mask & !rotated).count_ones() != 1 {
            return Err(Error::UnsupportedBlock(format!("sites {mask:#b} do not form a contiguous block")));
        }
        self.block_spectrum(0, part.a_size())
    }

    /// Block Rényi entropy in bits straight from the mode amplitudes, with no
    /// enumeration of the spectrum.
    pub fn block_renyi(&self, start: usize, len: usize, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("Rényi parameter must be positive, got {alpha}")));
        }
        let nu = self.block_modes(start, len)?;
        let mut total = 0.0;
        for v in nu {
            let (p, q) = ((1.0 + v) / 2.0, (1.0 - v) / 2.0);
            total += if (alpha - 1.0).abs() < crate::entanglement::VON_NEUMANN_WINDOW {
                -[p, q].iter().filter(|&&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>()
            } else {
                (p.powf(alpha) + q.powf(alpha)).log2() / (1.0 - alpha)
            };
        }
        Ok(total)
    }
}
