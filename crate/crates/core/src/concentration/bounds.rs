//! Monte Carlo checks of the strip expectation bound and of the envelope
//! bounds `G_up ⪯ mH + mε`, `G_low ⪰ mH − mε`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::relaxation::{g_matrix, EnvelopeSide};
use crate::concentration::spectral::{max_eigenvalue_or_dense, min_eigenvalue_or_dense, PowerOptions};
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelOperator};
use crate::linalg::{norm, symmetrize};
use crate::measurement::{MeasurementEnsemble, VarianceConvention};
use crate::rng;

pub const DEFAULT_SLACK: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripCheck {
    pub max_eig_estimate: f64,
    pub bound: f64,
    /// Standard error of the quadratic form along the top eigenvector.
    pub standard_error: f64,
    pub num_samples: usize,
    pub strip_hits: usize,
}

impl StripCheck {
    /// `estimate ≤ bound + k·SE`.
    pub fn within(&self, k: f64) -> bool {
        self.max_eig_estimate <= self.bound + k * self.standard_error
    }
}

/// Averages `1{−ε ≤ ⟨a,x⟩ ≤ 0} aaᵀ` over `num_samples` standard Gaussian `a`
/// and compares its top eigenvalue with `ε / (2‖x‖)`.
///
/// `a` is drawn as `g·x̂ + (I − x̂x̂ᵀ)w` with `g` scalar and `w` an independent
/// Gaussian vector, which has the same law; `w` is only drawn when `g` lands
/// in the strip.
pub fn indicator_strip_expectation_check(
    x: ArrayView1<'_, f64>,
    eps: f64,
    num_samples: usize,
    seed: u64,
) -> Result<StripCheck> {
    let len = norm(x);
    if len == 0.0 {
        return Err(Error::ZeroVector("x"));
    }
    if !(eps > 0.0) || num_samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need eps > 0 and num_samples ≥ 1 (got {eps}, {num_samples})"
        )));
    }
    let n = x.len();
    let x_hat = &x / len;
    let lower = -eps / len;
    let mut stream = rng::stream(seed);
    let mut hits: Vec<Array1<f64>> = Vec::new();
    for _ in 0..num_samples {
        let g: f64 = stream.sample(StandardNormal);
        if (lower..=0.0).contains(&g) {
            let w = rng::gaussian_vector(&mut stream, n);
            let perp = &w - &(&x_hat * x_hat.dot(&w));
            hits.push(perp + &(&x_hat * g));
        }
    }
    let mut sum = Array2::<f64>::zeros((n, n));
    for a in &hits {
        let col = a.view().insert_axis(ndarray::Axis(1));
        let row = a.view().insert_axis(ndarray::Axis(0));
        sum = sum + col.dot(&row);
    }
    let mut mean = sum / num_samples as f64;
    symmetrize(&mut mean);
    let opts = PowerOptions::default();
    let (estimate, top) = if hits.is_empty() {
        (0.0, x_hat.clone())
    } else {
        crate::concentration::spectral::dominant_eigenpair(&mean, opts)?
    };
    let values: Vec<f64> = hits.iter().map(|a| a.dot(&top).powi(2)).collect();
    let mean_q = values.iter().sum::<f64>() / num_samples as f64;
    let second = values.iter().map(|v| v * v).sum::<f64>() / num_samples as f64;
    let var = (second - mean_q * mean_q).max(0.0);
    Ok(StripCheck {
        max_eig_estimate: estimate,
        bound: eps / (2.0 * len),
        standard_error: (var / num_samples as f64).sqrt(),
        num_samples,
        strip_hits: hits.len(),
    })
}

/// Extremal eigenvalues of `G_up − mH` and `G_low − mH` at one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMargins {
    /// `λ_max(G_up − mH)`.
    pub upper: f64,
    /// `λ_min(G_low − mH)`.
    pub lower: f64,
    /// How many of the two came from the dense solver.
    pub dense_fallbacks: usize,
}

pub fn envelope_margins(
    a: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    eps: f64,
) -> Result<EnvelopeMargins> {
    let m = a.m() as f64;
    let mh = KernelOperator::new(KernelKind::H, x, y).to_dense() * m;
    let up = g_matrix(a, x, y, eps, EnvelopeSide::Up)? - &mh;
    let low = g_matrix(a, x, y, eps, EnvelopeSide::Low)? - &mh;
    let opts = PowerOptions {
        tol: 1e-10,
        max_iters: 200_000,
    };
    let upper = max_eigenvalue_or_dense(&up, opts)?;
    let lower = min_eigenvalue_or_dense(&low, opts)?;
    Ok(EnvelopeMargins {
        upper: upper.value,
        lower: lower.value,
        dense_fallbacks: usize::from(upper.dense) + usize::from(lower.dense),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBoundReport {
    pub m: usize,
    pub n: usize,
    pub eps: f64,
    pub slack: f64,
    pub num_pairs: usize,
    /// `m·ε·slack`.
    pub allowance: f64,
    /// Largest `λ_max(G_up − mH)` seen.
    pub worst_upper: f64,
    /// Smallest `λ_min(G_low − mH)` seen.
    pub worst_lower: f64,
    pub upper_violations: usize,
    pub lower_violations: usize,
    /// Pairs with `λ_max(G_up − mH) < λ_min(G_low − mH)`; always 0 unless
    /// the eigenvalue estimates are wrong.
    pub ordering_violations: usize,
    pub within_slack: bool,
    /// Eigenvalues the dense solver supplied after power iteration stalled.
    pub dense_fallbacks: usize,
}

/// Samples `num_pairs` sphere pairs and checks both envelope bounds with
/// allowance `m·ε·slack`.
pub fn g_upper_bound_check(
    a: &MeasurementEnsemble,
    eps: f64,
    num_pairs: usize,
    seed: u64,
    slack: f64,
) -> Result<EnvelopeBoundReport> {
    a.require(VarianceConvention::Unit)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if num_pairs == 0 || !(slack > 0.0) {
        return Err(Error::InvalidParameter(
            "need num_pairs ≥ 1 and a positive slack".into(),
        ));
    }
    let n = a.n();
    let mut stream = rng::stream(seed);
    let pairs: Vec<(Array1<f64>, Array1<f64>)> = (0..num_pairs)
        .map(|_| {
            let x = rng::unit_vector(&mut stream, n);
            let y = rng::unit_vector(&mut stream, n);
            (x, y)
        })
        .collect();
    let margins: Vec<EnvelopeMargins> = pairs
        .par_iter()
        .map(|(x, y)| envelope_margins(a, x.view(), y.view(), eps))
        .collect::<Result<_>>()?;
    let allowance = a.m() as f64 * eps * slack;
    let worst_upper = margins.iter().map(|g| g.upper).fold(f64::NEG_INFINITY, f64::max);
    let worst_lower = margins.iter().map(|g| g.lower).fold(f64::INFINITY, f64::min);
    let upper_violations = margins.iter().filter(|g| g.upper > allowance).count();
    let lower_violations = margins.iter().filter(|g| g.lower < -allowance).count();
    let ordering_violations = margins.iter().filter(|g| g.upper < g.lower).count();
    Ok(EnvelopeBoundReport {
        m: a.m(),
        n,
        eps,
        slack,
        num_pairs,
        allowance,
        worst_upper,
        worst_lower,
        upper_violations,
        lower_violations,
        ordering_violations,
        within_slack: upper_violations == 0 && lower_violations == 0,
        dense_fallbacks: margins.iter().map(|g| g.dense_fallbacks).sum(),
    })
}
