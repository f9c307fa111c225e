//! Extremal eigenvalues by power iteration on matrix-free operators.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, FnOperator, LinearOperator};
use crate::rng;

const START_SEED: u64 = 0x5eed_0f_9a11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Relative change of the Rayleigh quotient that ends the iteration.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 100_000,
        }
    }
}

/// Fixed pseudo-random start so every run is reproducible.
fn start_vector(dim: usize) -> Array1<f64> {
    rng::unit_vector(&mut rng::stream(START_SEED), dim)
}

/// Top eigenpair of a symmetric operator whose largest-magnitude eigenvalue
/// is its largest one (e.g. positive semidefinite operators).
///
/// Returns the Rayleigh quotient and the unit iterate. Zero operators return
/// `(0, start)`.
pub fn dominant_eigenpair<Op: LinearOperator + ?Sized>(
    op: &Op,
    opts: PowerOptions,
) -> Result<(f64, Array1<f64>)> {
    assert!(opts.tol > 0.0, "power iteration tolerance must be positive");
    let dim = op.ncols();
    let mut z = start_vector(dim);
    let mut previous: Option<f64> = None;
    let mut last = 0.0;
    for _ in 0..opts.max_iters {
        let w = op.apply(z.view());
        let rho = z.dot(&w);
        let len = norm(w.view());
        if len == 0.0 {
            return Ok((0.0, z));
        }
        if let Some(prev) = previous {
            if (rho - prev).abs() <= opts.tol * rho.abs() {
                return Ok((rho, w / len));
            }
        }
        z = w / len;
        previous = Some(rho);
        last = rho;
    }
    let rho = z.dot(&op.apply(z.view()));
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        previous: last,
        last: rho,
    })
}

/// `‖op‖₂`, as the square root of the top eigenvalue of `opᵀ op`.
pub fn spectral_norm<Op: LinearOperator + ?Sized>(op: &Op, opts: PowerOptions) -> Result<f64> {
    let gram = FnOperator::new(
        op.ncols(),
        op.ncols(),
        |z: ArrayView1<'_, f64>| op.apply_adjoint(op.apply(z).view()),
        |z: ArrayView1<'_, f64>| op.apply_adjoint(op.apply(z).view()),
    );
    let (rho, _) = dominant_eigenpair(&gram, opts)?;
    Ok(rho.max(0.0).sqrt())
}

/// `λ_min(S) = s − λ_max(sI − S)` with `s = ‖S‖`. `op` must be symmetric.
pub fn min_eigenvalue<Op: LinearOperator + ?Sized>(op: &Op, opts: PowerOptions) -> Result<f64> {
    let s = spectral_norm(op, opts)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let shifted = FnOperator::new(
        op.ncols(),
        op.ncols(),
        |z: ArrayView1<'_, f64>| &z * s - op.apply(z),
        |z: ArrayView1<'_, f64>| &z * s - op.apply(z),
    );
    let (top, _) = dominant_eigenpair(&shifted, opts)?;
    Ok(s - top)
}

/// `λ_max(S) = λ_max(S + sI) − s` with `s = ‖S‖`. `op` must be symmetric.
pub fn max_eigenvalue<Op: LinearOperator + ?Sized>(op: &Op, opts: PowerOptions) -> Result<f64> {
    let s = spectral_norm(op, opts)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let shifted = FnOperator::new(
        op.ncols(),
        op.ncols(),
        |z: ArrayView1<'_, f64>| &z * s + op.apply(z),
        |z: ArrayView1<'_, f64>| &z * s + op.apply(z),
    );
    let (top, _) = dominant_eigenpair(&shifted, opts)?;
    Ok(top - s)
}

/// Ascending eigenvalues of a dense symmetric matrix.
pub fn dense_symmetric_eigenvalues(s: &Array2<f64>) -> Vec<f64> {
    let n = s.nrows();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| s[[i, j]]);
    let mut eig: Vec<f64> = mat.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// An extremal eigenvalue and whether the dense solver had to supply it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremal {
    pub value: f64,
    pub dense: bool,
}

/// [`min_eigenvalue`] of a materialized matrix. When power iteration stalls
/// on a nearly degenerate spectrum the dense solver answers instead.
pub fn min_eigenvalue_or_dense(s: &Array2<f64>, opts: PowerOptions) -> Result<Extremal> {
    match min_eigenvalue(s, opts) {
        Ok(value) => Ok(Extremal { value, dense: false }),
        Err(Error::NonConvergence { .. }) => Ok(Extremal {
            value: dense_symmetric_eigenvalues(s).first().copied().unwrap_or(0.0),
            dense: true,
        }),
        Err(e) => Err(e),
    }
}

/// As [`min_eigenvalue_or_dense`], for [`max_eigenvalue`].
pub fn max_eigenvalue_or_dense(s: &Array2<f64>, opts: PowerOptions) -> Result<Extremal> {
    match max_eigenvalue(s, opts) {
        Ok(value) => Ok(Extremal { value, dense: false }),
        Err(Error::NonConvergence { .. }) => Ok(Extremal {
            value: dense_symmetric_eigenvalues(s).last().copied().unwrap_or(0.0),
            dense: true,
        }),
        Err(e) => Err(e),
    }
}
