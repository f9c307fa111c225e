//! Piecewise-linear relaxations of the sign indicators and the semidefinite
//! envelopes `G_low ⪯ A₊,ₓᵀ A₋,ᵧ ⪯ G_up` built from them.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelOperator};
use crate::linalg::{norm, symmetrize, weighted_gram, LinearOperator};
use crate::measurement::MeasurementEnsemble;

/// The four continuous relaxations of the sign indicators.
///
/// | variant      | bounds               | ramp on    |
/// |--------------|----------------------|------------|
/// | `PlusOuter`  | `1{t>0}` from above  | `(−ε, 0]`  |
/// | `PlusInner`  | `1{t>0}` from below  | `[0, ε)`   |
/// | `MinusOuter` | `1{t<0}` from below  | `(−ε, 0]`  |
/// | `MinusInner` | `1{t<0}` from above  | `[0, ε)`   |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relaxation {
    PlusOuter,
    PlusInner,
    MinusOuter,
    MinusInner,
}

pub fn relaxed_indicator(t: f64, which: Relaxation, eps: f64) -> f64 {
    debug_assert!(eps > 0.0);
    match which {
        Relaxation::PlusOuter => {
            if t <= -eps {
                0.0
            } else if t <= 0.0 {
                1.0 + t / eps
            } else {
                1.0
            }
        }
        Relaxation::PlusInner => {
            if t < 0.0 {
                0.0
            } else if t < eps {
                t / eps
            } else {
                1.0
            }
        }
        Relaxation::MinusOuter => {
            if t <= -eps {
                1.0
            } else if t <= 0.0 {
                -t / eps
            } else {
                0.0
            }
        }
        Relaxation::MinusInner => {
            if t < 0.0 {
                1.0
            } else if t < eps {
                1.0 - t / eps
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvelopeSide {
    Up,
    Low,
}

impl EnvelopeSide {
    fn relaxations(self) -> (Relaxation, Relaxation) {
        match self {
            EnvelopeSide::Up => (Relaxation::PlusOuter, Relaxation::MinusInner),
            EnvelopeSide::Low => (Relaxation::PlusInner, Relaxation::MinusOuter),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")))
    }
}

/// Row weights of the envelope: `φ(⟨vᵢ,x⟩)·ψ(⟨vᵢ,y⟩)` with the pair of
/// relaxations selected by `side`.
pub fn envelope_weights(
    v: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    eps: f64,
    side: EnvelopeSide,
) -> Array1<f64> {
    let (fx, fy) = side.relaxations();
    let vx = v.matvec(x);
    let vy = v.matvec(y);
    Array1::from_iter(
        vx.iter()
            .zip(vy.iter())
            .map(|(&s, &t)| relaxed_indicator(s, fx, eps) * relaxed_indicator(t, fy, eps)),
    )
}

/// `G_{V,side}(x, y) = Σ wᵢ vᵢvᵢᵀ`.
pub fn g_matrix(
    v: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    eps: f64,
    side: EnvelopeSide,
) -> Result<Array2<f64>> {
    check_eps(eps)?;
    let w = envelope_weights(v, x, y, eps, side);
    let mut g = weighted_gram(v.entries(), w.view());
    symmetrize(&mut g);
    Ok(g)
}

/// Matrix-free `z ↦ G_{V,side}(x, y) z`.
pub struct EnvelopeOperator<'a> {
    v: &'a MeasurementEnsemble,
    weights: Array1<f64>,
}

impl<'a> EnvelopeOperator<'a> {
    pub fn new(
        v: &'a MeasurementEnsemble,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
        eps: f64,
        side: EnvelopeSide,
    ) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            v,
            weights: envelope_weights(v, x, y, eps, side),
        })
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }
}

impl LinearOperator for EnvelopeOperator<'_> {
    fn nrows(&self) -> usize {
        self.v.n()
    }
    fn ncols(&self) -> usize {
        self.v.n()
    }
    fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let vz = self.v.matvec(z) * &self.weights;
        self.v.rmatvec(vz.view())
    }
    fn apply_adjoint(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        self.apply(w)
    }
}

/// `A₊,ₓᵀ A₋,ᵧ` materialized.
pub fn plus_minus_gram(
    v: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Array2<f64> {
    let vx = v.matvec(x);
    let vy = v.matvec(y);
    let w = Array1::from_iter(
        vx.iter()
            .zip(vy.iter())
            .map(|(&s, &t)| if s > 0.0 && t < 0.0 { 1.0 } else { 0.0 }),
    );
    let mut g = weighted_gram(v.entries(), w.view());
    symmetrize(&mut g);
    g
}

/// `(1/m)·uᵀ G_{V,side}(x, y) u = (1/m) Σ wᵢ ⟨vᵢ,u⟩²`, without forming `G`.
pub fn g_quadratic_form(
    v: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    u: ArrayView1<'_, f64>,
    eps: f64,
    side: EnvelopeSide,
) -> Result<f64> {
    check_eps(eps)?;
    let len = norm(u);
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnit { norm: len });
    }
    let w = envelope_weights(v, x, y, eps, side);
    let vu = v.matvec(u);
    let total: f64 = w.iter().zip(vu.iter()).map(|(wi, p)| wi * p * p).sum();
    Ok(total / v.m() as f64)
}

/// `uᵀ H_{x,y} u`.
pub fn h_quadratic_form(
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    u: ArrayView1<'_, f64>,
) -> Result<f64> {
    let len = norm(u);
    if (len - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnit { norm: len });
    }
    Ok(u.dot(&KernelOperator::new(KernelKind::H, x, y).apply(u)))
}
