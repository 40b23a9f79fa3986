//! Scalar abstraction shared by the numerical modules.
//!
//! Arithmetic is written against [`num_traits::Float`]; the two dense
//! factorizations the crate needs (symmetric eigendecomposition and singular
//! values) are routed through nalgebra per concrete type so generic code never
//! sees nalgebra's overlapping math methods.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::DMatrix;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + nalgebra::Scalar
{
    /// Default Krylov convergence threshold on the eigen-residual.
    const SOLVER_TOL: f64;

    /// Eigenvalues (ascending) and matching eigenvectors (columns) of a
    /// symmetric matrix. Only the lower triangle is read.
    fn symmetric_eigen(m: DMatrix<Self>) -> (Vec<Self>, DMatrix<Self>);

    /// Singular values in descending order.
    fn singular_values(m: DMatrix<Self>) -> Vec<Self>;

    /// IEEE total order, for sorting.
    fn total_order(&self, other: &Self) -> Ordering;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(x: usize) -> Self {
        Self::from_usize(x).expect("count representable in scalar type")
    }
}

macro_rules! impl_real {
    ($t:ty, $tol:expr) => {
        impl Real for $t {
            const SOLVER_TOL: f64 = $tol;

            fn symmetric_eigen(m: DMatrix<Self>) -> (Vec<Self>, DMatrix<Self>) {
                let n = m.nrows();
                let eig = m.symmetric_eigen();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
                let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
                (values, vectors)
            }

            fn total_order(&self, other: &Self) -> Ordering {
                self.total_cmp(other)
            }

            fn singular_values(m: DMatrix<Self>) -> Vec<Self> {
                let mut sv: Vec<Self> = m.svd(false, false).singular_values.iter().copied().collect();
                sv.sort_by(|a, b| b.total_cmp(a));
                sv
            }
        }
    };
}

impl_real!(f64, 1e-11);
impl_real!(f32, 1e-4);
