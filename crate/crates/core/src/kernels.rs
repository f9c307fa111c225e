//! Closed-form expectations of the sign-dependent Gram operators under
//! `N(0, 1/m)` measurements.
//!
//! With `θ` the angle between `x` and `y` and `M` the swap matrix of their
//! unit directions,
//!
//! ```text
//! Φ = (π − 2θ)/π · I + 2 sin θ/π · M     E[A_xᵀ A_y]
//! Q = (π − θ)/(2π) · I + sin θ/(2π) · M   E[A₊,ₓᵀ A₊,ᵧ] = E[A₋,ₓᵀ A₋,ᵧ]
//! H = θ/(2π) · I − sin θ/(2π) · M         E[A₊,ₓᵀ A₋,ᵧ] = E[A₋,ₓᵀ A₊,ᵧ]
//! ```
//!
//! so `Φ = 2Q − 2H`. Every kernel is zero when `x` or `y` is zero.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, LinearOperator};

/// Below this `sin θ` the pair is treated as collinear and `M = ±x̂x̂ᵀ`.
const COLLINEAR_SIN: f64 = 1e-8;
/// Largest `|⟨x̂, ŷ⟩| − 1` accepted as rounding; beyond it the inputs were
/// not normalized.
const DOT_SLACK: f64 = 1e-9;
const UNIT_SLACK: f64 = 1e-9;

/// The angle between two nonzero vectors together with their directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnglePair {
    theta: f64,
    x_hat: Array1<f64>,
    y_hat: Array1<f64>,
}

impl AnglePair {
    /// Builds the pair from vectors that are already unit length.
    pub fn from_unit(x_hat: Array1<f64>, y_hat: Array1<f64>) -> Result<Self> {
        if x_hat.len() != y_hat.len() {
            return Err(Error::DimensionMismatch {
                what: "angle pair",
                expected: x_hat.len(),
                got: y_hat.len(),
            });
        }
        for v in [&x_hat, &y_hat] {
            let nv = norm(v.view());
            if (nv - 1.0).abs() > UNIT_SLACK {
                return Err(Error::NotUnit { norm: nv });
            }
        }
        let dot = x_hat.dot(&y_hat);
        if dot.abs() - 1.0 > DOT_SLACK {
            return Err(Error::NotNormalized { dot });
        }
        // arccos(⟨x̂, ŷ⟩), in a form that stays accurate near 0 and π
        let theta = 2.0 * norm((&x_hat - &y_hat).view()).atan2(norm((&x_hat + &y_hat).view()));
        Ok(Self {
            theta,
            x_hat,
            y_hat,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn x_hat(&self) -> &Array1<f64> {
        &self.x_hat
    }

    pub fn y_hat(&self) -> &Array1<f64> {
        &self.y_hat
    }

    pub fn dim(&self) -> usize {
        self.x_hat.len()
    }
}

pub fn angle_between(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<AnglePair> {
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 {
        return Err(Error::ZeroVector("x"));
    }
    if ny == 0.0 {
        return Err(Error::ZeroVector("y"));
    }
    AnglePair::from_unit(&x / nx, &y / ny)
}

/// The swap matrix of a pair in factored form: it acts on the plane spanned by
/// the orthonormal basis `(u₁, u₂)` as `[[cos θ, sin θ], [sin θ, −cos θ]]` and
/// annihilates its orthogonal complement.
#[derive(Debug, Clone)]
pub struct SwapOperator {
    cos: f64,
    sin: f64,
    u1: Array1<f64>,
    /// Zero in the collinear case.
    u2: Array1<f64>,
}

impl SwapOperator {
    pub fn new(pair: &AnglePair) -> Self {
        let u1 = pair.x_hat.clone();
        let cos = pair.theta.cos();
        let sin = pair.theta.sin();
        if sin < COLLINEAR_SIN {
            // M = ±x̂x̂ᵀ
            return Self {
                cos: cos.signum(),
                sin: 0.0,
                u1,
                u2: Array1::zeros(pair.dim()),
            };
        }
        let mut u2 = &pair.y_hat - &(&u1 * u1.dot(&pair.y_hat));
        let len = norm(u2.view());
        u2 /= len;
        Self { cos, sin, u1, u2 }
    }

    pub fn dim(&self) -> usize {
        self.u1.len()
    }

    pub fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let p1 = self.u1.dot(&z);
        let p2 = self.u2.dot(&z);
        &self.u1 * (self.cos * p1 + self.sin * p2) + &self.u2 * (self.sin * p1 - self.cos * p2)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let (a1, a2, b1, b2) = (self.u1[i], self.u2[i], self.u1[j], self.u2[j]);
                m[[i, j]] = self.cos * (a1 * b1 - a2 * b2) + self.sin * (a1 * b2 + a2 * b1);
            }
        }
        m
    }
}

pub fn swap_matrix(pair: &AnglePair) -> Array2<f64> {
    SwapOperator::new(pair).to_dense()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Phi,
    Q,
    H,
}

impl KernelKind {
    /// `(a, b)` in `a·I + b·M`.
    pub fn coefficients(self, theta: f64) -> (f64, f64) {
        let s = theta.sin();
        match self {
            KernelKind::Phi => ((PI - 2.0 * theta) / PI, 2.0 * s / PI),
            KernelKind::Q => ((PI - theta) / (2.0 * PI), s / (2.0 * PI)),
            KernelKind::H => (theta / (2.0 * PI), -s / (2.0 * PI)),
        }
    }
}

/// `a·I + b·M` without materializing `M`.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    identity_coef: f64,
    swap_coef: f64,
    /// `None` when `x` or `y` is zero: the kernel is the zero matrix.
    swap: Option<SwapOperator>,
    dim: usize,
}

impl KernelOperator {
    pub fn new(kind: KernelKind, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Self {
        assert_eq!(x.len(), y.len(), "kernel arguments must have equal length");
        match angle_between(x, y) {
            Ok(pair) => {
                let (a, b) = kind.coefficients(pair.theta);
                Self {
                    identity_coef: a,
                    swap_coef: b,
                    swap: Some(SwapOperator::new(&pair)),
                    dim: x.len(),
                }
            }
            Err(_) => Self::zero(x.len()),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            identity_coef: 0.0,
            swap_coef: 0.0,
            swap: None,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        match &self.swap {
            Some(swap) => &z * self.identity_coef + swap.apply(z) * self.swap_coef,
            None => Array1::zeros(self.dim),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.swap {
            Some(swap) => {
                Array2::eye(self.dim) * self.identity_coef + swap.to_dense() * self.swap_coef
            }
            None => Array2::zeros((self.dim, self.dim)),
        }
    }
}

impl LinearOperator for KernelOperator {
    fn nrows(&self) -> usize {
        self.dim
    }
    fn ncols(&self) -> usize {
        self.dim
    }
    fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        KernelOperator::apply(self, z)
    }
    fn apply_adjoint(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        KernelOperator::apply(self, w)
    }
}

/// A materialized kernel matrix.
#[derive(Debug, Clone)]
pub struct ExpectationKernel {
    pub kind: KernelKind,
    pub matrix: Array2<f64>,
    /// `None` when either argument was zero.
    pub source: Option<AnglePair>,
}

impl ExpectationKernel {
    fn build(kind: KernelKind, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Self {
        let op = KernelOperator::new(kind, x, y);
        Self {
            kind,
            matrix: op.to_dense(),
            source: angle_between(x, y).ok(),
        }
    }

    /// Dumps the matrix as comma-separated rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.matrix.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn phi(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> ExpectationKernel {
    ExpectationKernel::build(KernelKind::Phi, x, y)
}

pub fn q_kernel(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> ExpectationKernel {
    ExpectationKernel::build(KernelKind::Q, x, y)
}

pub fn h_kernel(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> ExpectationKernel {
    ExpectationKernel::build(KernelKind::H, x, y)
}
