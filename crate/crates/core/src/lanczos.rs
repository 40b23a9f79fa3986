//! Lanczos iteration with full reorthogonalization for the lowest eigenpair of
//! a real symmetric operator, with optional deflation against locked vectors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct LanczosConfig<T> {
    /// Krylov dimension cap per cycle.
    pub max_iter: usize,
    /// Residual threshold, scaled by `max(1, |θ|)`.
    pub tol: T,
    /// How often the tridiagonal problem is solved to test convergence.
    pub check_every: usize,
    /// Explicit restarts from the current Ritz vector.
    pub max_cycles: usize,
}

impl<T: Real> Default for LanczosConfig<T> {
    fn default() -> Self {
        LanczosConfig { max_iter: 500, tol: T::lit(T::SOLVER_TOL), check_every: 4, max_cycles: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair<T> {
    pub value: T,
    pub vector: Vec<T>,
    pub residual: T,
    pub iterations: usize,
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalize<T: Real>(w: &mut [T], against: &[Vec<T>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for q in against {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

/// Deterministic start vector for a given seed and dimension.
pub fn seeded_start<T: Real>(dim: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| T::lit(rng.random_range(-0.5..0.5))).collect()
}

/// Lowest eigenpair of `op` on the orthogonal complement of `locked`.
///
/// `locked` must be orthonormal. The returned vector is unit-norm and
/// orthogonal to every locked vector.
pub fn lowest_eigenpair<T, F>(op: F, dim: usize, start: &[T], locked: &[Vec<T>], cfg: &LanczosConfig<T>) -> Result<Eigenpair<T>>
where
    T: Real,
    F: Fn(&[T], &mut [T]),
{
    let free_dim = dim.saturating_sub(locked.len());
    if free_dim == 0 {
        return Err(Error::InvalidParameter("no directions left after deflation".into()));
    }
    let m_max = cfg.max_iter.min(free_dim).max(1);
    let mut start = start.to_vec();
    let mut total_iter = 0;
    let mut best_residual = T::infinity();

    for _cycle in 0..cfg.max_cycles.max(1) {
        orthogonalize(&mut start, locked);
        let nrm = norm(&start);
        if !(nrm > T::epsilon()) {
            return Err(Error::Contract("start vector lies in the deflated subspace".into()));
        }
        start.iter_mut().for_each(|x| *x /= nrm);

        let mut basis: Vec<Vec<T>> = vec![start.clone()];
        let mut alphas: Vec<T> = Vec::with_capacity(m_max);
        let mut betas: Vec<T> = Vec::with_capacity(m_max);
        let mut w = vec![T::zero(); dim];
        let mut scale = T::zero();
        let mut ritz: Option<(T, Vec<T>)> = None;

        for j in 0..m_max {
            op(&basis[j], &mut w);
            total_iter += 1;
            let alpha = dot(&basis[j], &w);
            axpy(-alpha, &basis[j], &mut w);
            if j > 0 {
                axpy(-betas[j - 1], &basis[j - 1], &mut w);
            }
            orthogonalize(&mut w, &basis);
            orthogonalize(&mut w, locked);
            let beta = norm(&w);
            alphas.push(alpha);
            scale = scale.max(alpha.abs()).max(beta);

            let breakdown = beta <= T::epsilon() * T::lit(64.0) * scale.max(T::one());
            let last = j + 1 == m_max;
            if breakdown || last || (j + 1) % cfg.check_every == 0 {
                let (theta, y) = lowest_of_tridiagonal(&alphas, &betas);
                let estimate = beta * y[y.len() - 1].abs();
                if breakdown || last || estimate <= cfg.tol * theta.abs().max(T::one()) {
                    ritz = Some((theta, y));
                    break;
                }
            }
            betas.push(beta);
            let next: Vec<T> = w.iter().map(|&x| x / beta).collect();
            basis.push(next);
        }

        let (_, y) = ritz.expect("loop always ends with a Ritz pair");
        let mut x = vec![T::zero(); dim];
        for (coef, v) in y.iter().zip(&basis) {
            axpy(*coef, v, &mut x);
        }
        orthogonalize(&mut x, locked);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);

        op(&x, &mut w);
        let value = dot(&x, &w);
        axpy(-value, &x, &mut w);
        let residual = norm(&w);
        best_residual = best_residual.min(residual);
        if residual <= cfg.tol * value.abs().max(T::one()) {
            return Ok(Eigenpair { value, vector: x, residual, iterations: total_iter });
        }
        start = x;
    }

    Err(Error::NotConverged { iterations: total_iter, best_residual: best_residual.to_f64().unwrap_or(f64::NAN) })
}

/// Lowest eigenvalue and eigenvector of the symmetric tridiagonal matrix with
/// diagonal `alphas` and off-diagonal `betas` (`betas.len() + 1 == alphas.len()`).
fn lowest_of_tridiagonal<T: Real>(alphas: &[T], betas: &[T]) -> (T, Vec<T>) {
    let m = alphas.len();
    let mut t = DMatrix::from_element(m, m, T::zero());
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i + 1, i)] = betas[i];
            t[(i, i + 1)] = betas[i];
        }
    }
    let (vals, vecs) = T::symmetric_eigen(t);
    (vals[0], (0..m).map(|r| vecs[(r, 0)]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = d[i] * x[i];
            }
        }
    }

    #[test]
    fn finds_lowest_of_diagonal_operator() {
        let d: Vec<f64> = (0..300).map(|i| 1.0 + (i as f64) * 0.01).collect();
        let start = seeded_start(300, 1);
        let pair = lowest_eigenpair(diag_op(d), 300, &start, &[], &LanczosConfig::default()).unwrap();
        assert!((pair.value - 1.0).abs() < 1e-10);
        assert!(pair.vector[0].abs() > 1.0 - 1e-9);
    }

    #[test]
    fn deflation_recovers_degenerate_copy() {
        let mut d: Vec<f64> = (0..50).map(|i| 2.0 + i as f64).collect();
        d[7] = -1.0;
        d[23] = -1.0;
        let op = diag_op(d);
        let start = seeded_start(50, 2);
        let cfg = LanczosConfig::default();
        let first = lowest_eigenpair(&op, 50, &start, &[], &cfg).unwrap();
        let second = lowest_eigenpair(&op, 50, &start, std::slice::from_ref(&first.vector), &cfg).unwrap();
        assert!((first.value + 1.0).abs() < 1e-11);
        assert!((second.value + 1.0).abs() < 1e-11);
        assert!(dot(&first.vector, &second.vector).abs() < 1e-10);
        let third = lowest_eigenpair(&op, 50, &start, &[first.vector, second.vector], &cfg).unwrap();
        assert!((third.value - 2.0).abs() < 1e-11);
    }

    #[test]
    fn tiny_dimension_breaks_down_cleanly() {
        let op = |x: &[f64], y: &mut [f64]| {
            y[0] = 2.0 * x[0] + x[1];
            y[1] = x[0] + 2.0 * x[1];
        };
        let pair = lowest_eigenpair(op, 2, &[1.0, 0.3], &[], &LanczosConfig::default()).unwrap();
        assert!((pair.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_convergence_reports_best_residual() {
        let d: Vec<f64> = (0..400).map(|i| (i as f64).sqrt()).collect();
        let cfg = LanczosConfig { max_iter: 3, tol: 1e-14, check_every: 1, max_cycles: 1 };
        let err = lowest_eigenpair(diag_op(d), 400, &seeded_start(400, 3), &[], &cfg).unwrap_err();
        match err {
            Error::NotConverged { best_residual, .. } => assert!(best_residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
