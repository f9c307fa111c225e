//! Amplitude Flow: objective, subgradient, spectral initialization and the
//! fixed-step subgradient iteration.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::concentration::spectral::{dominant_eigenpair, PowerOptions};
use crate::error::{Error, Result};
use crate::linalg::{norm, FnOperator};
use crate::measurement::{MeasurementEnsemble, SignSelector, VarianceConvention};

/// `f(x) = ½ Σᵢ (|⟨aᵢ,x⟩| − yᵢ)²`.
pub fn objective(a: &MeasurementEnsemble, y: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>) -> f64 {
    assert_eq!(y.len(), a.m(), "objective: y must have length m");
    let ax = a.matvec(x);
    0.5 * ax
        .iter()
        .zip(y.iter())
        .map(|(p, q)| (p.abs() - q).powi(2))
        .sum::<f64>()
}

/// `A_xᵀ(|Ax| − y)` with `sgn(0) = 0`.
pub fn subgradient(
    a: &MeasurementEnsemble,
    y: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
) -> Array1<f64> {
    assert_eq!(y.len(), a.m(), "subgradient: y must have length m");
    let ax = a.matvec(x);
    let selector = SignSelector::from_products(ax.view());
    let residual = ax.mapv(f64::abs) - &y;
    selector.apply_adjoint(a, residual.view())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dist {
    pub value: f64,
    /// `s` in `‖x − s·x*‖`; `+1` on ties.
    pub sign: f64,
}

/// `min(‖x − x*‖, ‖x + x*‖)` and the sign that attains it.
pub fn dist(x: ArrayView1<'_, f64>, x_star: ArrayView1<'_, f64>) -> Dist {
    let minus = norm((&x - &x_star).view());
    let plus = norm((&x + &x_star).view());
    if plus < minus {
        Dist {
            value: plus,
            sign: -1.0,
        }
    } else {
        Dist {
            value: minus,
            sign: 1.0,
        }
    }
}

/// Both forms of the regularity condition for a direction `v` and a target
/// offset `d`: `‖v − d‖ ≤ ½‖d‖` and `⟨v,d⟩ ≥ ⅜‖d‖² + ½‖v‖²`.
pub fn rc_forms(v: ArrayView1<'_, f64>, d: ArrayView1<'_, f64>) -> (bool, bool) {
    let dd = d.dot(&d);
    let vv = v.dot(&v);
    let vd = v.dot(&d);
    let diff = &v - &d;
    (
        diff.dot(&diff) <= 0.25 * dd,
        vd >= 0.375 * dd + 0.5 * vv,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// `‖v − (x − s·x*)‖`.
    pub lhs: f64,
    /// `½‖x − s·x*‖ + 2‖η‖`.
    pub rhs: f64,
    pub holds: bool,
    /// Noiseless inner-product form evaluated on the same `v` and offset.
    pub rc_inner_product_form: bool,
    /// `dist(x, x*) ≤ 0.001‖x*‖`, where the condition is expected to hold.
    pub in_regime: bool,
}

pub fn regularity_check(
    a: &MeasurementEnsemble,
    y: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
    x_star: ArrayView1<'_, f64>,
    eta_norm: f64,
) -> RegularityReport {
    let v = subgradient(a, y, x);
    let dd = dist(x, x_star);
    let d = &x - &(&x_star * dd.sign);
    let lhs = norm((&v - &d).view());
    let rhs = 0.5 * norm(d.view()) + 2.0 * eta_norm;
    let (_, inner) = rc_forms(v.view(), d.view());
    RegularityReport {
        lhs,
        rhs,
        holds: lhs <= rhs,
        rc_inner_product_form: inner,
        in_regime: dd.value <= 1e-3 * norm(x_star),
    }
}

pub const SPECTRAL_INIT_OPTIONS: PowerOptions = PowerOptions {
    tol: 1e-10,
    max_iters: 200,
};

/// Top eigenvector of `D = Σ yᵢ² aᵢaᵢᵀ` scaled by `‖y‖`.
pub fn spectral_init(a: &MeasurementEnsemble, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    spectral_init_with(a, y, SPECTRAL_INIT_OPTIONS)
}

pub fn spectral_init_with(
    a: &MeasurementEnsemble,
    y: ArrayView1<'_, f64>,
    opts: PowerOptions,
) -> Result<Array1<f64>> {
    a.require(VarianceConvention::OneOverM)?;
    if a.m() < a.n() {
        return Err(Error::InvalidParameter(format!(
            "spectral initialization needs m ≥ n (m={}, n={})",
            a.m(),
            a.n()
        )));
    }
    if y.len() != a.m() {
        return Err(Error::DimensionMismatch {
            what: "measurements",
            expected: a.m(),
            got: y.len(),
        });
    }
    let y2 = y.mapv(|t| t * t);
    let apply = |z: ArrayView1<'_, f64>| a.rmatvec((a.matvec(z) * &y2).view());
    let d = FnOperator::new(a.n(), a.n(), apply, apply);
    let (_, v) = dominant_eigenpair(&d, opts)?;
    Ok(v * norm(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once `|f(x_t) − f(x_{t+1})| ≤ tol · f(x_t)`.
    pub tol: f64,
    pub seed: u64,
    /// Keep every `iterate_stride`-th iterate (and the last); 0 keeps none.
    pub iterate_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iters: 500,
            tol: 1e-14,
            seed: 0,
            iterate_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step size must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be nonnegative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    /// `(iteration, x_t)` pairs kept according to the stride.
    pub iterates: Vec<(usize, Array1<f64>)>,
    /// Empty unless the ground truth was supplied.
    pub dist_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    pub x_final: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub final_dist: Option<f64>,
    pub final_objective: f64,
    pub iters: usize,
    pub termination: Termination,
}

impl SolverTrace {
    pub fn final_dist(&self) -> Option<f64> {
        self.dist_history.last().copied()
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            final_dist: self.final_dist(),
            final_objective: *self.objective_history.last().unwrap_or(&f64::NAN),
            iters: self.iterations,
            termination: self.termination,
        }
    }

    /// Columns `iter,dist,objective`; `dist` is blank without ground truth.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["iter", "dist", "objective"])?;
        for (t, f) in self.objective_history.iter().enumerate() {
            let d = self
                .dist_history
                .get(t)
                .map_or_else(String::new, |d| format!("{d:?}"));
            writer.write_record([t.to_string(), d, format!("{f:?}")])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.summary())?;
        Ok(())
    }
}

/// Runs `x_{t+1} = x_t − α·subgradient(x_t)` from `x0`.
///
/// Stops on a zero subgradient, on a relative objective change at most
/// `cfg.tol`, or after `cfg.max_iters` steps.
pub fn solve(
    a: &MeasurementEnsemble,
    y: ArrayView1<'_, f64>,
    x0: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
    x_star: Option<ArrayView1<'_, f64>>,
) -> Result<SolverTrace> {
    cfg.validate()?;
    if y.len() != a.m() {
        return Err(Error::DimensionMismatch {
            what: "measurements",
            expected: a.m(),
            got: y.len(),
        });
    }
    if x0.len() != a.n() {
        return Err(Error::DimensionMismatch {
            what: "initial point",
            expected: a.n(),
            got: x0.len(),
        });
    }
    if let Some(xs) = x_star {
        if xs.len() != a.n() {
            return Err(Error::DimensionMismatch {
                what: "ground truth",
                expected: a.n(),
                got: xs.len(),
            });
        }
    }

    let keep = |t: usize| cfg.iterate_stride > 0 && t % cfg.iterate_stride == 0;
    let mut x = x0.to_owned();
    let mut f = objective(a, y, x.view());
    let mut trace = SolverTrace {
        iterates: Vec::new(),
        dist_history: Vec::new(),
        objective_history: vec![f],
        termination: Termination::MaxIters,
        iterations: 0,
        x_final: x.clone(),
    };
    if let Some(xs) = x_star {
        trace.dist_history.push(dist(x.view(), xs).value);
    }
    if keep(0) {
        trace.iterates.push((0, x.clone()));
    }

    for t in 1..=cfg.max_iters {
        let v = subgradient(a, y, x.view());
        if v.iter().all(|&c| c == 0.0) {
            trace.termination = Termination::Converged;
            break;
        }
        x.scaled_add(-cfg.alpha, &v);
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { iteration: t });
        }
        let f_new = objective(a, y, x.view());
        if !f_new.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        trace.iterations = t;
        trace.objective_history.push(f_new);
        if let Some(xs) = x_star {
            trace.dist_history.push(dist(x.view(), xs).value);
        }
        if keep(t) {
            trace.iterates.push((t, x.clone()));
        }
        let converged = (f - f_new).abs() <= cfg.tol * f;
        f = f_new;
        if converged {
            trace.termination = Termination::Converged;
            break;
        }
    }
    if cfg.iterate_stride > 0 && trace.iterates.last().map(|(t, _)| *t) != Some(trace.iterations) {
        trace.iterates.push((trace.iterations, x.clone()));
    }
    trace.x_final = x;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{forward_model, VarianceConvention};
    use crate::rng;
    use ndarray::array;

    fn instance(m: usize, n: usize, seed: u64) -> (MeasurementEnsemble, Array1<f64>, Array1<f64>) {
        let a = MeasurementEnsemble::sample(m, n, VarianceConvention::OneOverM, seed).unwrap();
        let x_star = rng::unit_vector(&mut rng::stream(seed + 1), n);
        let inst = forward_model(&a, &x_star, &Array1::zeros(m)).unwrap();
        (a, x_star, inst.y)
    }

    #[test]
    fn objective_trivial_cases() {
        let (a, x_star, y) = instance(30, 4, 1);
        assert!(objective(&a, y.view(), x_star.view()) < 1e-28);
        assert!(objective(&a, y.view(), (-&x_star).view()) < 1e-28);
        let zero = Array1::zeros(30);
        let x = array![0.3, -1.0, 2.0, 0.5];
        let ax = a.matvec(x.view());
        assert!((objective(&a, zero.view(), x.view()) - 0.5 * ax.dot(&ax)).abs() < 1e-12);
    }

    #[test]
    fn subgradient_vanishes_at_truth_and_scales() {
        let (a, x_star, y) = instance(30, 4, 2);
        assert!(norm(subgradient(&a, y.view(), x_star.view()).view()) < 1e-14);
        let x = array![0.3, -1.0, 2.0, 0.5];
        let g = subgradient(&a, y.view(), x.view());
        let g2 = subgradient(&a, (&y * 2.0).view(), (&x * 2.0).view());
        assert!(norm((&g2 - &(&g * 2.0)).view()) < 1e-12);
    }

    #[test]
    fn dist_cases() {
        let x = array![1.0, 0.0];
        assert_eq!(dist(x.view(), x.view()).value, 0.0);
        let d = dist((-&x).view(), x.view());
        assert_eq!(d.value, 0.0);
        assert_eq!(d.sign, -1.0);
        let perp = dist(array![0.0, 1.0].view(), x.view());
        assert!((perp.value - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(perp.sign, 1.0);
    }

    #[test]
    fn rc_forms_agree() {
        let mut stream = rng::stream(5);
        for _ in 0..500 {
            let d = rng::gaussian_vector(&mut stream, 3);
            let v = &d + &(rng::gaussian_vector(&mut stream, 3) * 0.5);
            let (a, b) = rc_forms(v.view(), d.view());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn regularity_at_truth() {
        let (a, x_star, y) = instance(30, 4, 3);
        let r = regularity_check(&a, y.view(), x_star.view(), x_star.view(), 0.0);
        assert!(r.lhs < 1e-14);
        assert_eq!(r.rhs, 0.0);
        assert!(r.in_regime);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fixed_point_terminates_immediately() {
        let (a, x_star, y) = instance(40, 4, 4);
        let trace = solve(&a, y.view(), x_star.view(), &SolverConfig::default(), Some(x_star.view()))
            .unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert_eq!(trace.iterations, 0);
        assert_eq!(trace.dist_history, vec![0.0]);
        assert_eq!(trace.x_final, x_star);
    }

    #[test]
    fn spectral_init_scales_with_y() {
        let (a, _, y) = instance(200, 5, 6);
        let x0 = spectral_init(&a, y.view()).unwrap();
        let x1 = spectral_init(&a, (&y * 3.0).view()).unwrap();
        assert!(norm((&x1 - &(&x0 * 3.0)).view()) < 1e-8 * norm(x1.view()));
        let unit = a.with_convention(VarianceConvention::Unit);
        assert!(spectral_init(&unit, y.view()).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let a = MeasurementEnsemble::from_entries(
            array![[1e200, 0.0], [0.0, 1e200]],
            VarianceConvention::OneOverM,
        )
        .unwrap();
        let y = array![0.0, 0.0];
        let x0 = array![1.0, 1.0];
        let err = solve(&a, y.view(), x0.view(), &SolverConfig::default(), None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { iteration: 1 }));
    }

    #[test]
    fn trace_exports() {
        let (a, x_star, y) = instance(60, 3, 9);
        let x0 = spectral_init(&a, y.view()).unwrap();
        let cfg = SolverConfig {
            max_iters: 5,
            iterate_stride: 2,
            ..SolverConfig::default()
        };
        let trace = solve(&a, y.view(), x0.view(), &cfg, Some(x_star.view())).unwrap();
        assert_eq!(trace.dist_history.len(), trace.iterations + 1);
        let kept: Vec<usize> = trace.iterates.iter().map(|(t, _)| *t).collect();
        assert_eq!(kept, vec![0, 2, 4, 5]);
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,dist,objective\n0,"));
        assert_eq!(text.lines().count(), 7);
        let mut json = Vec::new();
        trace.write_summary_json(&mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["iters"], 5);
        assert_eq!(v["termination"], "max_iters");
    }
}
