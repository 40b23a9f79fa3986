//! Trajectories `λ_k(g)`, their maxima, and exponential fits of the maxima
//! versus chain length.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entanglement::{schmidt_spectrum, Bipartition};
use crate::error::{Error, Result};
use crate::model::ChainParams;
use crate::source::GroundStateSource;

/// Width below which golden-section refinement stops.
pub const REFINE_TOL: f64 = 1e-4;

/// Iteration cap and relative step threshold of the fit.
pub const FIT_MAX_ITER: usize = 200;
pub const FIT_STEP_TOL: f64 = 1e-10;

/// Condition number (of the column-scaled normal matrix) beyond which a fit
/// is rejected.
pub const FIT_MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMax {
    /// 1-based, descending order.
    pub k: usize,
    pub n_sites: usize,
    pub g_k: f64,
    pub lambda_at_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rms_residual: f64,
    /// Parameter covariance `σ² (JᵀJ)⁻¹` in the order (a, b, c); NaN when
    /// there are no degrees of freedom left.
    pub covariance: [[f64; 3]; 3],
    /// Condition estimate of the column-scaled normal matrix.
    pub condition: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ScalingFit {
    pub fn predict(&self, n: f64) -> f64 {
        model_value(&[self.a, self.b, self.c], n)
    }
}

/// `a·exp(-N/b) + c`.
pub fn model_value(p: &[f64; 3], n: f64) -> f64 {
    p[0] * (-n / p[1]).exp() + p[2]
}

/// Gradient of [`model_value`] with respect to (a, b, c).
pub fn model_jacobian(p: &[f64; 3], n: f64) -> [f64; 3] {
    let e = (-n / p[1]).exp();
    [e, p[0] * e * n / (p[1] * p[1]), 1.0]
}

/// `λ_k` of the ground state at one field.
pub fn eigenvalue_at<S: GroundStateSource + ?Sized>(src: &S, params: &ChainParams<f64>, part: &Bipartition, k: usize) -> Result<f64> {
    if k == 0 || k > 1 << part.a_size() {
        return Err(Error::InvalidParameter(format!("eigenvalue index {k} outside 1..=2^{}", part.a_size())));
    }
    let gs = src.ground_state(params)?;
    Ok(schmidt_spectrum(&gs.vector, part)?.lambda(k))
}

/// `(g, λ_k(g))` over a grid, computed in parallel and returned in grid order.
pub fn eigenvalue_trajectory<S: GroundStateSource + ?Sized>(
    src: &S,
    k: usize,
    params: &ChainParams<f64>,
    part: &Bipartition,
    g_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    g_grid.par_iter().map(|&g| eigenvalue_at(src, &params.with_g(g), part, k).map(|v| (g, v))).collect()
}

/// Refines the largest sampled point of a trajectory by golden-section
/// search on fresh evaluations inside the neighbouring grid interval.
pub fn find_trajectory_max<F>(trajectory: &[(f64, f64)], k: usize, n_sites: usize, eval: F) -> Result<TrajectoryMax>
where
    F: Fn(f64) -> Result<f64>,
{
    if trajectory.len() < 3 {
        return Err(Error::InvalidParameter("trajectory needs at least three points".into()));
    }
    let best = (0..trajectory.len()).max_by(|&i, &j| trajectory[i].1.total_cmp(&trajectory[j].1).then(j.cmp(&i))).expect("non-empty");
    if best == 0 || best + 1 == trajectory.len() {
        return Err(Error::BoundaryMax { g: trajectory[best].0, n_sites, k });
    }
    let (mut lo, mut hi) = (trajectory[best - 1].0, trajectory[best + 1].0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while hi - lo > REFINE_TOL {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    let (mut g_k, mut value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    // Never report something worse than the sampled maximum.
    if trajectory[best].1 > value {
        (g_k, value) = trajectory[best];
    }
    Ok(TrajectoryMax { k, n_sites, g_k, lambda_at_max: value })
}

/// Trajectory maximum for one chain, sampling `g_grid` first.
pub fn trajectory_max<S: GroundStateSource + ?Sized>(
    src: &S,
    k: usize,
    params: &ChainParams<f64>,
    part: &Bipartition,
    g_grid: &[f64],
) -> Result<TrajectoryMax> {
    let traj = eigenvalue_trajectory(src, k, params, part, g_grid)?;
    find_trajectory_max(&traj, k, params.n_sites, |g| eigenvalue_at(src, &params.with_g(g), part, k))
}

fn cost(p: &[f64; 3], points: &[(f64, f64)]) -> f64 {
    points.iter().map(|&(n, y)| (model_value(p, n) - y).powi(2)).sum()
}

fn normal_equations(p: &[f64; 3], points: &[(f64, f64)]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut grad = Vector3::zeros();
    for &(n, y) in points {
        let j = Vector3::from(model_jacobian(p, n));
        let r = model_value(p, n) - y;
        a += j * j.transpose();
        grad += j * r;
    }
    (a, grad)
}

/// Eigenvalue ratio of the normal matrix after scaling its diagonal to one.
fn scaled_condition(a: &Matrix3<f64>) -> f64 {
    let d = Vector3::from_fn(|i, _| {
        let x = a[(i, i)];
        if x > 0.0 {
            1.0 / x.sqrt()
        } else {
            0.0
        }
    });
    let scaled = Matrix3::from_fn(|i, j| a[(i, j)] * d[i] * d[j]);
    let ev = scaled.symmetric_eigenvalues();
    let (min, max) = (ev.min(), ev.max());
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Levenberg–Marquardt fit of `g_k(N) = a·exp(-N/b) + c`.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|(n, y)| !n.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidParameter("non-finite data point".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidParameter("chain lengths must be distinct".into()));
    }
    let (first, last) = (sorted[0], sorted[sorted.len() - 1]);
    let c0 = last.1;
    let mut p = [first.1 - c0, (last.0 - first.0) / 2.0, c0];
    let mut current = cost(&p, &sorted);
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < FIT_MAX_ITER {
        iterations += 1;
        let (a, grad) = normal_equations(&p, &sorted);
        let mut lhs = a;
        for i in 0..3 {
            lhs[(i, i)] += damping * a[(i, i)].max(1e-300);
        }
        let Some(step) = lhs.cholesky().map(|c| c.solve(&(-grad))) else {
            damping *= 10.0;
            continue;
        };
        let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
        let trial_cost = if trial[1] > 0.0 { cost(&trial, &sorted) } else { f64::INFINITY };
        if trial_cost <= current {
            let rel = step.norm() / Vector3::from(p).norm().max(f64::MIN_POSITIVE);
            p = trial;
            current = trial_cost;
            damping = (damping / 10.0).max(1e-15);
            if rel < FIT_STEP_TOL || current == 0.0 {
                converged = true;
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e16 {
                // No descent direction left at machine precision.
                converged = true;
                break;
            }
        }
    }

    let (a, _) = normal_equations(&p, &sorted);
    let condition = scaled_condition(&a);
    if !(condition < FIT_MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let m = sorted.len();
    let dof = m as f64 - 3.0;
    let sigma2 = if dof > 0.0 { current / dof } else { f64::NAN };
    let inv = a.try_inverse().ok_or(Error::IllConditioned { condition })?;
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sigma2 * inv[(i, j)];
        }
    }
    Ok(ScalingFit { a: p[0], b: p[1], c: p[2], rms_residual: (current / m as f64).sqrt(), covariance, condition, iterations, converged })
}

/// Gradient `Jᵀr` of the half sum of squares at `p`.
pub fn fit_gradient(p: &[f64; 3], points: &[(f64, f64)]) -> [f64; 3] {
    let (_, g) = normal_equations(p, points);
    [g[0], g[1], g[2]]
}

/// Trajectory maxima over several chain lengths (block `L = N/2`) and their
/// exponential fit.
pub fn scaling_study<S: GroundStateSource + ?Sized>(
    src: &S,
    k: usize,
    gamma: f64,
    sizes: &[usize],
    g_grid: &[f64],
) -> Result<(Vec<TrajectoryMax>, ScalingFit)> {
    let maxima = sizes
        .iter()
        .map(|&n| {
            let params = ChainParams::periodic(n, gamma, g_grid.first().copied().unwrap_or(0.0))?;
            let part = Bipartition::contiguous(n, n / 2)?;
            trajectory_max(src, k, &params, &part, g_grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = maxima.iter().map(|m| (m.n_sites as f64, m.g_k)).collect();
    let fit = fit_exponential(&points)?;
    Ok((maxima, fit))
}
