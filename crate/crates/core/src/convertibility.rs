//! Sign structure of `∂_g S_α` and differential local convertibility.
//!
//! The derivative is a central difference between ground states at `g ± δ`.
//! A column of the sign map (fixed `g`, all α) is convertible when every
//! non-zero derivative shares one sign: all negative means the state at `g`
//! can be turned into the state at `g + dg` by LOCC with assisted
//! entanglement, all positive means the same for `g - dg`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entanglement::{renyi_entropy, schmidt_spectrum, Bipartition, EntanglementSpectrum};
use crate::error::{Error, Result};
use crate::model::{Boundary, ChainParams};
use crate::source::GroundStateSource;

pub const DEFAULT_DELTA: f64 = 1e-4;

/// Derivative estimates below this magnitude are reported as zero.
pub const ZERO_THRESHOLD: f64 = 1e-8;

/// Relative width at which the α₀ bisection stops.
pub const ALPHA0_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
    Zero,
}

impl Sign {
    pub fn of(value: f64) -> Sign {
        if value.abs() < ZERO_THRESHOLD {
            Sign::Zero
        } else if value > 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Positive => "positive",
            Sign::Negative => "negative",
            Sign::Zero => "zero",
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `∂_g S_α > 0` for every α: convertible towards smaller g.
    ConvertibleDecreasing,
    /// `∂_g S_α < 0` for every α: convertible towards larger g.
    ConvertibleIncreasing,
    NonConvertible,
    Degenerate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ConvertibleDecreasing => "convertible_decreasing",
            Verdict::ConvertibleIncreasing => "convertible_increasing",
            Verdict::NonConvertible => "non_convertible",
            Verdict::Degenerate => "degenerate",
        }
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        [Verdict::ConvertibleDecreasing, Verdict::ConvertibleIncreasing, Verdict::NonConvertible, Verdict::Degenerate]
            .into_iter()
            .find(|v| v.as_str() == s)
    }

    pub fn is_convertible(self) -> bool {
        matches!(self, Verdict::ConvertibleDecreasing | Verdict::ConvertibleIncreasing)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verdict for one column of signs. Zeros carry no information; a column
/// with nothing but zeros cannot be classified and is treated as degenerate.
pub fn classify(signs: &[Sign], degenerate: bool) -> Verdict {
    if degenerate {
        return Verdict::Degenerate;
    }
    let pos = signs.contains(&Sign::Positive);
    let neg = signs.contains(&Sign::Negative);
    match (pos, neg) {
        (true, true) => Verdict::NonConvertible,
        (true, false) => Verdict::ConvertibleDecreasing,
        (false, true) => Verdict::ConvertibleIncreasing,
        (false, false) => Verdict::Degenerate,
    }
}

/// `(s_plus - s_minus) / (2δ)`.
pub fn central_difference(s_plus: f64, s_minus: f64, delta: f64) -> f64 {
    (s_plus - s_minus) / (2.0 * delta)
}

/// Entanglement spectra of the ground states at `g - δ` and `g + δ`.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub g: f64,
    pub delta: f64,
    pub minus: EntanglementSpectrum<f64>,
    pub plus: EntanglementSpectrum<f64>,
    /// Either endpoint is degenerate, or the two endpoints sit in different
    /// parity sectors (a level crossing lies between them).
    pub degenerate: bool,
}

impl Stencil {
    pub fn new<S: GroundStateSource + ?Sized>(src: &S, params: &ChainParams<f64>, part: &Bipartition, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {delta}")));
        }
        if params.g - delta < 0.0 {
            return Err(Error::InvalidParameter(format!("g - delta must be non-negative (g = {}, delta = {delta})", params.g)));
        }
        if part.n_sites() != params.n_sites {
            return Err(Error::Bipartition(format!("bipartition is for {} sites, chain has {}", part.n_sites(), params.n_sites)));
        }
        let lo = src.ground_state(&params.with_g(params.g - delta))?;
        let hi = src.ground_state(&params.with_g(params.g + delta))?;
        Ok(Stencil {
            g: params.g,
            delta,
            minus: schmidt_spectrum(&lo.vector, part)?,
            plus: schmidt_spectrum(&hi.vector, part)?,
            degenerate: lo.degenerate || hi.degenerate || lo.parity != hi.parity,
        })
    }

    pub fn derivative(&self, alpha: f64) -> Result<f64> {
        let plus = renyi_entropy(&self.plus, alpha)?;
        let minus = renyi_entropy(&self.minus, alpha)?;
        Ok(central_difference(plus, minus, self.delta))
    }

    /// `S_α(g + δ) - S_α(g - δ)`.
    pub fn entropy_difference(&self, alpha: f64) -> Result<f64> {
        Ok(renyi_entropy(&self.plus, alpha)? - renyi_entropy(&self.minus, alpha)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub value: f64,
    pub sign: Sign,
    pub degenerate: bool,
}

pub fn ds_dg<S: GroundStateSource + ?Sized>(
    src: &S,
    params: &ChainParams<f64>,
    part: &Bipartition,
    alpha: f64,
    delta: f64,
) -> Result<Derivative> {
    let stencil = Stencil::new(src, params, part, delta)?;
    let value = stencil.derivative(alpha)?;
    Ok(Derivative { value, sign: Sign::of(value), degenerate: stencil.degenerate })
}

/// One `g` column of a sign map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignColumn {
    pub g: f64,
    /// `∂_g S_α` per α of the map's grid; empty if the column failed.
    pub derivatives: Vec<f64>,
    pub signs: Vec<Sign>,
    pub degenerate: bool,
    /// `None` when the column could not be computed.
    pub verdict: Option<Verdict>,
    /// Smallest α with a positive derivative.
    pub alpha_pos: Option<f64>,
    /// Smallest α with a negative derivative.
    pub alpha_neg: Option<f64>,
    pub error: Option<String>,
}

impl SignColumn {
    fn from_stencil(stencil: &Stencil, alphas: &[f64]) -> Result<Self> {
        let derivatives = alphas.iter().map(|&a| stencil.derivative(a)).collect::<Result<Vec<_>>>()?;
        let signs: Vec<Sign> = derivatives.iter().map(|&d| Sign::of(d)).collect();
        let witness = |s: Sign| signs.iter().position(|&x| x == s).map(|i| alphas[i]);
        Ok(SignColumn {
            g: stencil.g,
            alpha_pos: witness(Sign::Positive),
            alpha_neg: witness(Sign::Negative),
            verdict: Some(classify(&signs, stencil.degenerate)),
            degenerate: stencil.degenerate,
            derivatives,
            signs,
            error: None,
        })
    }

    fn failed(g: f64, err: Error) -> Self {
        SignColumn {
            g,
            derivatives: Vec::new(),
            signs: Vec::new(),
            degenerate: false,
            verdict: None,
            alpha_pos: None,
            alpha_neg: None,
            error: Some(err.to_string()),
        }
    }
}

/// Signs of `∂_g S_α` over an α × g grid at fixed γ and bipartition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignMap {
    pub gamma: f64,
    pub n_sites: usize,
    pub boundary: Boundary,
    pub part: Bipartition,
    pub g_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub delta: f64,
    pub columns: Vec<SignColumn>,
}

impl SignMap {
    /// Sign at `(alpha_grid[ia], g_grid[ig])`; `None` for a failed column.
    pub fn sign(&self, ia: usize, ig: usize) -> Option<Sign> {
        self.columns[ig].signs.get(ia).copied()
    }

    pub fn verdicts(&self) -> Vec<Option<Verdict>> {
        self.columns.iter().map(|c| c.verdict).collect()
    }

    pub fn failed_columns(&self) -> impl Iterator<Item = &SignColumn> {
        self.columns.iter().filter(|c| c.error.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec<'a> {
    pub gamma: f64,
    pub n_sites: usize,
    pub boundary: Boundary,
    pub g_grid: &'a [f64],
    pub alpha_grid: &'a [f64],
    pub delta: f64,
}

fn check_grid(name: &str, grid: &[f64], positive: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} grid is empty")));
    }
    if grid.iter().any(|x| !x.is_finite() || (positive && *x <= 0.0)) {
        return Err(Error::InvalidParameter(format!("{name} grid has invalid entries")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

/// Builds a sign map. Grid points run in parallel on the current rayon pool;
/// a solver failure marks its column as failed instead of aborting the map.
pub fn sign_map<S: GroundStateSource + ?Sized>(src: &S, spec: &SweepSpec<'_>, part: &Bipartition) -> Result<SignMap> {
    check_grid("g", spec.g_grid, false)?;
    check_grid("alpha", spec.alpha_grid, true)?;
    if spec.g_grid[0] < spec.delta {
        return Err(Error::InvalidParameter(format!(
            "g grid starts at {} below the finite-difference step {}",
            spec.g_grid[0], spec.delta
        )));
    }
    let base = ChainParams::new(spec.n_sites, spec.gamma, spec.g_grid[0], spec.boundary)?;
    if part.n_sites() != spec.n_sites {
        return Err(Error::Bipartition(format!("bipartition is for {} sites, chain has {}", part.n_sites(), spec.n_sites)));
    }
    let columns: Vec<SignColumn> = spec
        .g_grid
        .par_iter()
        .map(|&g| {
            Stencil::new(src, &base.with_g(g), part, spec.delta)
                .and_then(|s| SignColumn::from_stencil(&s, spec.alpha_grid))
                .unwrap_or_else(|e| SignColumn::failed(g, e))
        })
        .collect();
    Ok(SignMap {
        gamma: spec.gamma,
        n_sites: spec.n_sites,
        boundary: spec.boundary,
        part: *part,
        g_grid: spec.g_grid.to_vec(),
        alpha_grid: spec.alpha_grid.to_vec(),
        delta: spec.delta,
        columns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alpha0Result {
    pub g: f64,
    pub alpha0: Option<f64>,
    /// Final bracket around the sign change, or the searched interval when
    /// there is none.
    pub bracket: (f64, f64),
}

/// Locates the α at which `∂_g S_α` changes sign inside `bracket`.
///
/// A log-spaced scan finds the first sign change, which is then bisected in
/// `ln α` until the bracket is narrower than [`ALPHA0_REL_TOL`].
pub fn find_alpha0<S: GroundStateSource + ?Sized>(
    src: &S,
    params: &ChainParams<f64>,
    part: &Bipartition,
    delta: f64,
    bracket: (f64, f64),
) -> Result<Alpha0Result> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("invalid α bracket ({lo}, {hi})")));
    }
    let stencil = Stencil::new(src, params, part, delta)?;
    let sign_at = |a: f64| stencil.derivative(a).map(Sign::of);

    const SCAN: usize = 64;
    let grid = crate::entanglement::log_grid(lo, hi, SCAN);
    let mut prev: Option<(f64, Sign)> = None;
    let mut found = None;
    for &a in &grid {
        let s = sign_at(a)?;
        if s == Sign::Zero {
            continue;
        }
        if let Some((pa, ps)) = prev {
            if ps != s {
                found = Some((pa, ps, a));
                break;
            }
        }
        prev = Some((a, s));
    }
    let Some((mut a_lo, s_lo, mut a_hi)) = found else {
        return Ok(Alpha0Result { g: params.g, alpha0: None, bracket });
    };
    while a_hi / a_lo - 1.0 > ALPHA0_REL_TOL {
        let mid = (a_lo * a_hi).sqrt();
        match sign_at(mid)? {
            s if s == s_lo => a_lo = mid,
            Sign::Zero => break,
            _ => a_hi = mid,
        }
    }
    Ok(Alpha0Result { g: params.g, alpha0: Some((a_lo * a_hi).sqrt()), bracket: (a_lo, a_hi) })
}

/// Where the mixed-sign region of one γ row begins and ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryEstimate {
    pub gamma: f64,
    /// Smallest and largest g with a non-convertible verdict.
    pub mixed_range: Option<(f64, f64)>,
    /// Midpoint between the last convertible column below the mixed region
    /// and the first mixed column.
    pub lower_flip: Option<f64>,
    /// Midpoint between the last mixed column and the next classified one.
    pub upper_flip: Option<f64>,
    /// The separable circle `√(1 - γ²)` (zero for γ ≥ 1).
    pub separable_reference: f64,
    pub critical_reference: f64,
}

impl BoundaryEstimate {
    pub fn from_map(map: &SignMap) -> Self {
        let mixed: Vec<usize> = (0..map.columns.len()).filter(|&i| map.columns[i].verdict == Some(Verdict::NonConvertible)).collect();
        let separable_reference = (1.0 - map.gamma * map.gamma).max(0.0).sqrt();
        let mut est = BoundaryEstimate {
            gamma: map.gamma,
            mixed_range: None,
            lower_flip: None,
            upper_flip: None,
            separable_reference,
            critical_reference: 1.0,
        };
        let (Some(&first), Some(&last)) = (mixed.first(), mixed.last()) else { return est };
        let g = |i: usize| map.columns[i].g;
        est.mixed_range = Some((g(first), g(last)));
        let convertible = |i: usize| map.columns[i].verdict.is_some_and(Verdict::is_convertible);
        if (0..first).any(convertible) {
            est.lower_flip = Some(0.5 * (g(first - 1) + g(first)));
        }
        if ((last + 1)..map.columns.len()).any(convertible) {
            est.upper_flip = Some(0.5 * (g(last) + g(last + 1)));
        }
        est
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDiagram {
    pub maps: Vec<SignMap>,
    pub boundaries: Vec<BoundaryEstimate>,
}

/// Sign maps for each γ at one bipartition, with boundary estimates.
pub fn phase_diagram<S: GroundStateSource + ?Sized>(
    src: &S,
    gammas: &[f64],
    spec: &SweepSpec<'_>,
    part: &Bipartition,
) -> Result<PhaseDiagram> {
    check_grid("gamma", gammas, false)?;
    let maps = gammas.iter().map(|&gamma| sign_map(src, &SweepSpec { gamma, ..*spec }, part)).collect::<Result<Vec<_>>>()?;
    let boundaries = maps.iter().map(BoundaryEstimate::from_map).collect();
    Ok(PhaseDiagram { maps, boundaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::{ground_state, SectorPolicy};
    use crate::entanglement::{default_alpha_grid, entanglement_spectrum, reduced_density_matrix};
    use crate::model::build_hamiltonian;
    use crate::source::Solver;

    #[test]
    fn classification_rules() {
        use Sign::*;
        assert_eq!(classify(&[Negative, Negative, Zero], false), Verdict::ConvertibleIncreasing);
        assert_eq!(classify(&[Positive, Zero], false), Verdict::ConvertibleDecreasing);
        assert_eq!(classify(&[Positive, Negative], false), Verdict::NonConvertible);
        assert_eq!(classify(&[Negative], true), Verdict::Degenerate);
        assert_eq!(classify(&[Zero, Zero], false), Verdict::Degenerate);
        assert_eq!(Sign::of(5e-9), Zero);
        assert_eq!(Sign::of(-2e-8), Negative);
        for v in [Verdict::ConvertibleDecreasing, Verdict::ConvertibleIncreasing, Verdict::NonConvertible, Verdict::Degenerate] {
            assert_eq!(Verdict::parse(v.as_str()), Some(v));
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.as_str()));
        }
    }

    #[test]
    fn swapping_endpoints_flips_sign_exactly() {
        for (a, b) in [(0.731, 0.7299), (1e-3, 2e-3), (5.0, 5.0)] {
            assert_eq!(central_difference(a, b, 1e-4), -central_difference(b, a, 1e-4));
        }
    }

    fn direct_entropy(n: usize, g: f64, l: usize, alpha: f64) -> f64 {
        // Dense ground state and ρ_A eigenvalues, Rényi sum applied verbatim.
        let h = build_hamiltonian(ChainParams::ising(n, g).unwrap()).unwrap();
        let gs = ground_state(&h, SectorPolicy::Auto).unwrap();
        let rho = reduced_density_matrix(&gs.vector, &Bipartition::contiguous(n, l).unwrap()).unwrap();
        let lam = entanglement_spectrum(&rho).unwrap();
        lam.values().iter().filter(|&&x| x > 1e-14).map(|x| x.powf(alpha)).sum::<f64>().log2() / (1.0 - alpha)
    }

    #[test]
    fn derivative_signs_small_ising() {
        let solver = Solver::default();
        let part = Bipartition::contiguous(8, 4).unwrap();
        let d = |g: f64, a: f64| ds_dg(&solver, &ChainParams::ising(8, g).unwrap(), &part, a, DEFAULT_DELTA).unwrap();
        assert_eq!(d(1.5, 2.0).sign, Sign::Negative);
        assert_eq!(d(0.5, 0.2).sign, Sign::Positive);
        assert_eq!(d(0.5, 50.0).sign, Sign::Negative);
        let brute = (direct_entropy(8, 0.5 + 1e-3, 4, 50.0) - direct_entropy(8, 0.5 - 1e-3, 4, 50.0)) / 2e-3;
        assert!(brute < 0.0);
        assert!((d(0.5, 50.0).value - brute).abs() < 1e-3 * brute.abs().max(1.0));
    }

    #[test]
    fn halving_delta_keeps_signs() {
        let solver = Solver::default();
        let part = Bipartition::contiguous(8, 4).unwrap();
        let alphas = default_alpha_grid::<f64>();
        for g in [0.4, 0.8, 1.3] {
            let p = ChainParams::ising(8, g).unwrap();
            let full = Stencil::new(&solver, &p, &part, DEFAULT_DELTA).unwrap();
            let half = Stencil::new(&solver, &p, &part, DEFAULT_DELTA / 2.0).unwrap();
            for &a in &alphas {
                let (x, y) = (full.derivative(a).unwrap(), half.derivative(a).unwrap());
                assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0), "g={g} α={a}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn small_ising_sign_map() {
        let solver = Solver::default();
        let g_grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
        let alphas = default_alpha_grid::<f64>();
        let spec =
            SweepSpec { gamma: 1.0, n_sites: 8, boundary: Boundary::Periodic, g_grid: &g_grid, alpha_grid: &alphas, delta: DEFAULT_DELTA };
        let part = Bipartition::contiguous(8, 4).unwrap();
        let map = sign_map(&solver, &spec, &part).unwrap();
        assert_eq!(map.columns.len(), 40);
        for (ig, col) in map.columns.iter().enumerate() {
            assert_eq!(col.signs.len(), alphas.len());
            assert_eq!(map.sign(0, ig), Some(col.signs[0]));
            if col.g > 1.05 {
                assert_eq!(col.verdict, Some(Verdict::ConvertibleIncreasing), "g = {}", col.g);
            }
            if (0.3..=0.95).contains(&col.g) {
                assert_eq!(col.verdict, Some(Verdict::NonConvertible), "g = {}", col.g);
                let (ap, an) = (col.alpha_pos.unwrap(), col.alpha_neg.unwrap());
                let ip = alphas.iter().position(|&a| a == ap).unwrap();
                let ineg = alphas.iter().position(|&a| a == an).unwrap();
                assert!(col.derivatives[ip] > 0.0 && col.derivatives[ineg] < 0.0);
            }
        }
        let est = BoundaryEstimate::from_map(&map);
        assert!((est.upper_flip.unwrap() - 1.0).abs() <= 0.1);
    }

    #[test]
    fn alpha0_behaviour() {
        let solver = Solver::default();
        let part = Bipartition::contiguous(8, 4).unwrap();
        let at = |g: f64| find_alpha0(&solver, &ChainParams::ising(8, g).unwrap(), &part, DEFAULT_DELTA, (1.0 + 1e-3, 100.0)).unwrap();
        let a05 = at(0.5);
        let root = a05.alpha0.expect("sign change for g < 1");
        assert!(root > 1.0 && root < 100.0);
        assert!(a05.bracket.1 / a05.bracket.0 - 1.0 <= ALPHA0_REL_TOL);
        let p = ChainParams::ising(8, 0.5).unwrap();
        let lo = ds_dg(&solver, &p, &part, a05.bracket.0, DEFAULT_DELTA).unwrap().value;
        let hi = ds_dg(&solver, &p, &part, a05.bracket.1, DEFAULT_DELTA).unwrap().value;
        assert!(lo * hi < 0.0);
        assert!(at(0.2).alpha0.unwrap() > at(0.6).alpha0.unwrap());
        assert_eq!(at(1.5).alpha0, None);
    }

    #[test]
    fn invalid_requests() {
        let solver = Solver::default();
        let part = Bipartition::contiguous(6, 3).unwrap();
        let p = ChainParams::ising(6, 5e-5).unwrap();
        assert!(ds_dg(&solver, &p, &part, 2.0, DEFAULT_DELTA).is_err());
        let p = ChainParams::ising(6, 0.5).unwrap();
        assert!(ds_dg(&solver, &p, &part, 0.0, DEFAULT_DELTA).is_err());
        assert!(ds_dg(&solver, &p, &Bipartition::contiguous(8, 3).unwrap(), 2.0, DEFAULT_DELTA).is_err());
        let g = [0.5];
        let spec = SweepSpec { gamma: 1.0, n_sites: 6, boundary: Boundary::Periodic, g_grid: &g, alpha_grid: &[], delta: DEFAULT_DELTA };
        assert!(sign_map(&solver, &spec, &part).is_err());
        let a = [2.0, 1.0];
        assert!(sign_map(&solver, &SweepSpec { alpha_grid: &a, ..spec }, &part).is_err());
    }

    #[test]
    fn g_zero_column_is_degenerate() {
        let solver = Solver::default();
        let part = Bipartition::contiguous(8, 4).unwrap();
        let d = ds_dg(&solver, &ChainParams::ising(8, 1e-4).unwrap(), &part, 2.0, DEFAULT_DELTA).unwrap();
        assert!(d.degenerate);
    }
}
