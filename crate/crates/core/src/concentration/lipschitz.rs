//! The high-probability matrix set Θ and the ball system on which the
//! envelope quadratic form is pseudo-Lipschitz.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::concentration::relaxation::{g_quadratic_form, EnvelopeSide};
use crate::concentration::spectral::{spectral_norm, PowerOptions};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::measurement::{MeasurementEnsemble, VarianceConvention};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaMembership {
    pub in_theta: bool,
    pub norm: f64,
    pub max_row_norm: f64,
}

/// Checks `‖V‖ ≤ 3√m` and `maxᵢ ‖vᵢ‖ ≤ √(2n)`. Only meaningful for
/// unit-variance entries, so any other convention is rejected.
pub fn theta_membership(v: &MeasurementEnsemble) -> Result<ThetaMembership> {
    v.require(VarianceConvention::Unit)?;
    let (m, n) = (v.m() as f64, v.n() as f64);
    let op_norm = spectral_norm(v.entries(), PowerOptions::default())?;
    let max_row_norm = v
        .entries()
        .rows()
        .into_iter()
        .map(norm)
        .fold(0.0, f64::max);
    Ok(ThetaMembership {
        in_theta: op_norm <= 3.0 * m.sqrt() && max_row_norm <= (2.0 * n).sqrt(),
        norm: op_norm,
        max_row_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallCheck {
    pub member: bool,
    pub lhs: f64,
    pub threshold: f64,
}

/// `Σᵢ |⟨vᵢ,z⟩| ⟨vᵢ,u⟩² ≤ ε² m`.
pub fn pseudo_lipschitz_ball_check(
    v: &MeasurementEnsemble,
    z: ArrayView1<'_, f64>,
    u: ArrayView1<'_, f64>,
    eps: f64,
) -> Result<BallCheck> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let vz = v.matvec(z);
    let vu = v.matvec(u);
    let lhs: f64 = vz.iter().zip(vu.iter()).map(|(a, b)| a.abs() * b * b).sum();
    let threshold = eps * eps * v.m() as f64;
    Ok(BallCheck {
        member: lhs <= threshold,
        lhs,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLipschitzCheck {
    pub satisfied: bool,
    pub delta_g: f64,
    pub bound: f64,
}

/// Evaluates `|g_V(x,y,u) − g_V(x̃,ỹ,u)| ≤ 2ε` for the upper envelope.
///
/// `V ∉ Θ` or a perturbation outside the ball is a [`Error::Precondition`],
/// kept apart from an honest property failure (`satisfied == false`).
#[allow(clippy::too_many_arguments)]
pub fn pseudo_lipschitz_property_check(
    v: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    x_tilde: ArrayView1<'_, f64>,
    y_tilde: ArrayView1<'_, f64>,
    u: ArrayView1<'_, f64>,
    eps: f64,
) -> Result<PseudoLipschitzCheck> {
    let theta = theta_membership(v)?;
    if !theta.in_theta {
        return Err(Error::Precondition(format!(
            "ensemble outside Θ (norm {}, max row norm {})",
            theta.norm, theta.max_row_norm
        )));
    }
    for (label, diff) in [("x", &x - &x_tilde), ("y", &y - &y_tilde)] {
        let ball = pseudo_lipschitz_ball_check(v, diff.view(), u, eps)?;
        if !ball.member {
            return Err(Error::Precondition(format!(
                "{label} perturbation outside the ball: {} > {}",
                ball.lhs, ball.threshold
            )));
        }
    }
    let g = g_quadratic_form(v, x, y, u, eps, EnvelopeSide::Up)?;
    let g_tilde = g_quadratic_form(v, x_tilde, y_tilde, u, eps, EnvelopeSide::Up)?;
    let delta_g = (g - g_tilde).abs();
    let bound = 2.0 * eps;
    Ok(PseudoLipschitzCheck {
        satisfied: delta_g <= bound,
        delta_g,
        bound,
    })
}
