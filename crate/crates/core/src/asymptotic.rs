//! Parameterized ground-state spectra deep in the ordered and disordered
//! phases, and the sign of `∂_g S_α` they imply.
//!
//! Ordered phase: `0.5 + δ`, `0.5 - ε`, and `2ⁿ - 2` equal tail eigenvalues
//! `(ε - δ)/(2ⁿ - 2)`. Disordered phase: `1 - δ' - ε'`, `ε'`, and a tail of
//! `δ'/(2ⁿ - 2)`. The derivatives of δ, ε (δ', ε') with respect to g are model
//! inputs.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::convertibility::Sign;
use crate::error::{Error, Result};

/// Number of sites held by Alice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteCount {
    Finite(u32),
    /// `n → ∞`: the tail eigenvalues vanish individually.
    Thermodynamic,
}

impl SiteCount {
    fn check(self) -> Result<()> {
        match self {
            SiteCount::Finite(n) if n < 2 => Err(Error::InvalidParameter(format!("Alice needs at least 2 sites, got {n}"))),
            _ => Ok(()),
        }
    }

    /// `ln(2ⁿ - 2)`, infinite in the thermodynamic limit.
    fn ln_tail_count(self) -> f64 {
        match self {
            SiteCount::Finite(n) => {
                let n = n as f64;
                n * std::f64::consts::LN_2 + (-(2f64).powf(1.0 - n)).ln_1p()
            }
            SiteCount::Thermodynamic => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FerroSpectrumModel {
    pub delta: f64,
    pub epsilon: f64,
    pub d_delta_dg: f64,
    pub d_epsilon_dg: f64,
    pub n: SiteCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParaSpectrumModel {
    pub delta_p: f64,
    pub epsilon_p: f64,
    pub d_delta_p_dg: f64,
    pub d_epsilon_p_dg: f64,
    pub n: SiteCount,
}

fn finite(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("model parameters must be finite".into()))
    }
}

impl FerroSpectrumModel {
    /// Requires `0 < δ < ε < 0.5` and `0 < ∂δ/∂g < ∂ε/∂g`.
    pub fn new(delta: f64, epsilon: f64, d_delta_dg: f64, d_epsilon_dg: f64, n: SiteCount) -> Result<Self> {
        let m = FerroSpectrumModel { delta, epsilon, d_delta_dg, d_epsilon_dg, n };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        finite(&[self.delta, self.epsilon, self.d_delta_dg, self.d_epsilon_dg])?;
        self.n.check()?;
        if !(0.0 < self.delta && self.delta < self.epsilon && self.epsilon < 0.5) {
            return Err(Error::InvalidParameter(format!("need 0 < δ < ε < 0.5, got δ = {}, ε = {}", self.delta, self.epsilon)));
        }
        if !(0.0 < self.d_delta_dg && self.d_delta_dg < self.d_epsilon_dg) {
            return Err(Error::InvalidParameter(format!("need 0 < ∂δ/∂g < ∂ε/∂g, got {} and {}", self.d_delta_dg, self.d_epsilon_dg)));
        }
        Ok(())
    }

    /// `r = 1 + (ε + δ)/(0.5 - ε)`, the ratio `(0.5 + δ)/(0.5 - ε)`.
    pub fn ratio(&self) -> f64 {
        1.0 + (self.epsilon + self.delta) / (0.5 - self.epsilon)
    }

    /// Closed-form root of the large-n bracket,
    /// `α₀ = 1 + ln(∂ε/∂δ) / ln r`.
    pub fn alpha0(&self) -> f64 {
        1.0 + (self.d_epsilon_dg / self.d_delta_dg).ln() / self.ratio().ln_1p_minus_one()
    }
}

/// `ln(r)` for `r` near one without cancellation.
trait LnRatio {
    fn ln_1p_minus_one(self) -> f64;
}

impl LnRatio for f64 {
    fn ln_1p_minus_one(self) -> f64 {
        (self - 1.0).ln_1p()
    }
}

impl ParaSpectrumModel {
    /// Requires `0 < δ' < ε' < 0.5`, `ε' < 1 - δ' - ε'` (the listed order of
    /// the eigenvalues) and both derivatives negative.
    pub fn new(delta_p: f64, epsilon_p: f64, d_delta_p_dg: f64, d_epsilon_p_dg: f64, n: SiteCount) -> Result<Self> {
        let m = ParaSpectrumModel { delta_p, epsilon_p, d_delta_p_dg, d_epsilon_p_dg, n };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        finite(&[self.delta_p, self.epsilon_p, self.d_delta_p_dg, self.d_epsilon_p_dg])?;
        self.n.check()?;
        if !(0.0 < self.delta_p && self.delta_p < self.epsilon_p && self.epsilon_p < 0.5) {
            return Err(Error::InvalidParameter(format!("need 0 < δ' < ε' < 0.5, got δ' = {}, ε' = {}", self.delta_p, self.epsilon_p)));
        }
        if !(self.epsilon_p < self.largest()) {
            return Err(Error::InvalidParameter(format!(
                "ε' = {} must stay below the leading eigenvalue {}",
                self.epsilon_p,
                self.largest()
            )));
        }
        if !(self.d_delta_p_dg < 0.0 && self.d_epsilon_p_dg < 0.0) {
            return Err(Error::InvalidParameter("both derivatives must be negative".into()));
        }
        Ok(())
    }

    pub fn largest(&self) -> f64 {
        1.0 - self.delta_p - self.epsilon_p
    }
}

/// `log₂ Σ λ^α` for the two leading eigenvalues plus a tail of total weight
/// `tail_mass` spread evenly over `2ⁿ - 2` entries.
fn log2_power_sum(top: [f64; 2], tail_mass: f64, n: SiteCount, alpha: f64) -> Result<f64> {
    let mut sum = top[0].powf(alpha) + top[1].powf(alpha);
    if tail_mass > 0.0 {
        let ln_count = n.ln_tail_count();
        let ln_tail = (1.0 - alpha) * ln_count + alpha * tail_mass.ln();
        if ln_tail.is_nan() {
            return Err(Error::Domain("tail term undefined in the thermodynamic limit".into()));
        }
        if ln_tail == f64::INFINITY {
            return Err(Error::Domain(format!("S_α diverges in the thermodynamic limit for α = {alpha} < 1")));
        }
        sum += ln_tail.exp();
    }
    Ok(sum.log2())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("α must be positive and finite, got {alpha}")));
    }
    if alpha == 1.0 {
        return Err(Error::Domain("α = 1 is excluded".into()));
    }
    Ok(())
}

/// Rényi entropy of the ordered-phase spectrum, without the model's
/// ordering checks (so `δ = ε` is allowed).
pub fn ferro_renyi(delta: f64, epsilon: f64, n: SiteCount, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    n.check()?;
    Ok(log2_power_sum([0.5 + delta, 0.5 - epsilon], epsilon - delta, n, alpha)? / (1.0 - alpha))
}

/// Rényi entropy of the disordered-phase spectrum, without ordering checks.
pub fn para_renyi(delta_p: f64, epsilon_p: f64, n: SiteCount, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    n.check()?;
    Ok(log2_power_sum([1.0 - delta_p - epsilon_p, epsilon_p], delta_p, n, alpha)? / (1.0 - alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumModel {
    Ferro(FerroSpectrumModel),
    Para(ParaSpectrumModel),
}

pub fn model_renyi(model: &SpectrumModel, alpha: f64) -> Result<f64> {
    match model {
        SpectrumModel::Ferro(m) => {
            m.validate()?;
            ferro_renyi(m.delta, m.epsilon, m.n, alpha)
        }
        SpectrumModel::Para(m) => {
            m.validate()?;
            para_renyi(m.delta_p, m.epsilon_p, m.n, alpha)
        }
    }
}

/// Exact `∂_g S_α` of the ordered-phase spectrum at finite n.
pub fn ferro_derivative(m: &FerroSpectrumModel, alpha: f64) -> Result<f64> {
    m.validate()?;
    check_alpha(alpha)?;
    let SiteCount::Finite(_) = m.n else {
        return Err(Error::Domain("the finite-n derivative needs a finite site count".into()));
    };
    // Every term is carried as a logarithm and scaled by the largest one.
    let ln_p = (0.5 + m.delta).ln();
    let ln_q = (0.5 - m.epsilon).ln();
    let ln_t = (m.epsilon - m.delta).ln() - m.n.ln_tail_count();
    let ln_terms = [alpha * ln_p, alpha * ln_q, (1.0 - alpha) * m.n.ln_tail_count() + alpha * (m.epsilon - m.delta).ln()];
    let top = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled_sum: f64 = ln_terms.iter().map(|&x| (x - top).exp()).sum();
    let term = |ln_x: f64| ((alpha - 1.0) * ln_x - top).exp();
    let t = term(ln_t);
    let bracket = m.d_delta_dg * (term(ln_p) - t) - m.d_epsilon_dg * (term(ln_q) - t);
    Ok(alpha / (1.0 - alpha) * bracket / (scaled_sum * std::f64::consts::LN_2))
}

/// Sign of `∂_g S_α` in the ordered phase as `n → ∞`.
///
/// Below α = 1 this is `α/((1-α)(ε-δ)) · (∂ε/∂g - ∂δ/∂g)`; above,
/// `(1/(1-α)) · [∂δ/∂g · r^(α-1) - ∂ε/∂g]`, compared in logarithms so large α
/// cannot overflow.
pub fn model_sign_ferro(m: &FerroSpectrumModel, alpha: f64) -> Result<Sign> {
    m.validate()?;
    check_alpha(alpha)?;
    if alpha < 1.0 {
        let value = alpha / ((1.0 - alpha) * (m.epsilon - m.delta)) * (m.d_epsilon_dg - m.d_delta_dg);
        return Ok(strict_sign(value));
    }
    // 1/(1-α) < 0 flips the sign of the bracket.
    let lhs = m.d_delta_dg.ln() + (alpha - 1.0) * m.ratio().ln_1p_minus_one();
    let rhs = m.d_epsilon_dg.ln();
    Ok(match lhs.total_cmp(&rhs) {
        std::cmp::Ordering::Greater => Sign::Negative,
        std::cmp::Ordering::Less => Sign::Positive,
        std::cmp::Ordering::Equal => Sign::Zero,
    })
}

/// Sign of `∂_g S_α` in the disordered phase from the factored form
/// `α/(1-α) · {∂δ'/∂g [(t'/λ₁)^(α-1) - 1] + ∂ε'/∂g [(ε'/λ₁)^(α-1) - 1]}`,
/// with `t' = δ'/(2ⁿ - 2)` and `λ₁ = 1 - δ' - ε'` (a positive factor
/// `λ₁^(α-1)/Σ` is dropped).
pub fn model_sign_para(m: &ParaSpectrumModel, alpha: f64) -> Result<Sign> {
    m.validate()?;
    check_alpha(alpha)?;
    let top = m.largest();
    let ln_tail_ratio = m.delta_p.ln() - m.n.ln_tail_count() - top.ln();
    let tail_term = ((alpha - 1.0) * ln_tail_ratio).exp_m1();
    let eps_term = ((alpha - 1.0) * (m.epsilon_p / top).ln()).exp_m1();
    let value = alpha / (1.0 - alpha) * (m.d_delta_p_dg * tail_term + m.d_epsilon_p_dg * eps_term);
    Ok(strict_sign(value))
}

fn strict_sign(value: f64) -> Sign {
    if value > 0.0 {
        Sign::Positive
    } else if value < 0.0 {
        Sign::Negative
    } else {
        Sign::Zero
    }
}

/// α₀ by bisection on [`model_sign_ferro`] in `ln α`, to relative width
/// `rel_tol`. `None` if the sign does not change across the bracket.
pub fn alpha0_bisect(m: &FerroSpectrumModel, bracket: (f64, f64), rel_tol: f64) -> Result<Option<f64>> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 1.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("bracket ({lo}, {hi}) must lie above 1")));
    }
    let s_lo = model_sign_ferro(m, lo)?;
    if s_lo == model_sign_ferro(m, hi)? {
        return Ok(None);
    }
    while hi / lo - 1.0 > rel_tol {
        let mid = (lo * hi).sqrt();
        if model_sign_ferro(m, mid)? == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some((lo * hi).sqrt()))
}

/// Ordered-phase instances with `δ ~ U(0, 0.5)`, `ε ~ U(δ, 0.5)`,
/// `∂ε/∂g ~ U(0, 1)`, `∂δ/∂g ~ U(0, ∂ε/∂g)`; draws on a boundary are redrawn.
pub fn random_ferro_models(rng: &mut dyn RngCore, count: usize, n: SiteCount) -> Vec<FerroSpectrumModel> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let delta: f64 = rng.random_range(0.0..0.5);
        let epsilon = rng.random_range(delta..0.5);
        let d_eps: f64 = rng.random_range(0.0..1.0);
        let d_delta = rng.random_range(0.0..d_eps.max(f64::MIN_POSITIVE));
        if let Ok(m) = FerroSpectrumModel::new(delta, epsilon, d_delta, d_eps, n) {
            out.push(m);
        }
    }
    out
}

/// Disordered-phase instances with `δ' ~ U(0, 0.5)`, `ε' ~ U(δ', 0.5)` and
/// derivatives `~ -U(0, 1)`, redrawn until the eigenvalue order holds.
pub fn random_para_models(rng: &mut dyn RngCore, count: usize, n: SiteCount) -> Vec<ParaSpectrumModel> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let delta_p = rng.random_range(0.0..0.5);
        let epsilon_p = rng.random_range(delta_p..0.5);
        let d_delta = -rng.random_range(0.0..1.0);
        let d_eps = -rng.random_range(0.0..1.0);
        if let Ok(m) = ParaSpectrumModel::new(delta_p, epsilon_p, d_delta, d_eps, n) {
            out.push(m);
        }
    }
    out
}
