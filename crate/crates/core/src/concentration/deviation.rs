//! Deviation of the sign-dependent Gram operators from their expectations,
//! at single pairs and as an empirical probe of the supremum over all pairs.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectral::{spectral_norm, PowerOptions};
use crate::error::{Error, Result};
use crate::kernels::{angle_between, KernelKind, KernelOperator};
use crate::linalg::{norm, symmetrize, weighted_gram, FnOperator};
use crate::measurement::{sgn, MeasurementEnsemble, VarianceConvention};
use crate::rng;

/// Which empirical operator is compared with which kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationFamily {
    /// `A_xᵀ A_y` against `Φ`.
    FullMdc,
    /// `A₊,ₓᵀ A₊,ᵧ` against `Q`.
    PlusPlus,
    /// `A₋,ₓᵀ A₋,ᵧ` against `Q`.
    MinusMinus,
    /// `A₊,ₓᵀ A₋,ᵧ` against `H`.
    PlusMinus,
    /// `A₋,ₓᵀ A₊,ᵧ` against `H`.
    MinusPlus,
}

impl DeviationFamily {
    pub const ALL: [DeviationFamily; 5] = [
        DeviationFamily::FullMdc,
        DeviationFamily::PlusPlus,
        DeviationFamily::MinusMinus,
        DeviationFamily::PlusMinus,
        DeviationFamily::MinusPlus,
    ];

    pub const SPLITS: [DeviationFamily; 4] = [
        DeviationFamily::PlusPlus,
        DeviationFamily::MinusMinus,
        DeviationFamily::PlusMinus,
        DeviationFamily::MinusPlus,
    ];

    pub fn kernel_kind(self) -> KernelKind {
        match self {
            DeviationFamily::FullMdc => KernelKind::Phi,
            DeviationFamily::PlusPlus | DeviationFamily::MinusMinus => KernelKind::Q,
            DeviationFamily::PlusMinus | DeviationFamily::MinusPlus => KernelKind::H,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviationFamily::FullMdc => "full_mdc",
            DeviationFamily::PlusPlus => "plus_plus",
            DeviationFamily::MinusMinus => "minus_minus",
            DeviationFamily::PlusMinus => "plus_minus",
            DeviationFamily::MinusPlus => "minus_plus",
        }
    }

    /// Row weights `wᵢ` such that the empirical operator is `Σ wᵢ aᵢaᵢᵀ`,
    /// given the products `Ax` and `Ay`.
    pub fn row_weights(self, ax: ArrayView1<'_, f64>, ay: ArrayView1<'_, f64>) -> Array1<f64> {
        fn pos(t: f64) -> f64 {
            if t > 0.0 { 1.0 } else { 0.0 }
        }
        fn neg(t: f64) -> f64 {
            if t < 0.0 { 1.0 } else { 0.0 }
        }
        let (fx, fy): (fn(f64) -> f64, fn(f64) -> f64) = match self {
            DeviationFamily::FullMdc => (sgn, sgn),
            DeviationFamily::PlusPlus => (pos, pos),
            DeviationFamily::MinusMinus => (neg, neg),
            DeviationFamily::PlusMinus => (pos, neg),
            DeviationFamily::MinusPlus => (neg, pos),
        };
        Array1::from_iter(ax.iter().zip(ay.iter()).map(|(&s, &t)| fx(s) * fy(t)))
    }
}

/// Evaluates deviations against one ensemble, reusing `AᵀA` across pairs.
///
/// The empirical operator `Σ wᵢ aᵢaᵢᵀ` is assembled as `c·AᵀA + Σ (wᵢ − c) aᵢaᵢᵀ`
/// with `c ∈ {−1, 0, 1}` chosen to touch the fewest rows, then the spectral
/// norm of the `n × n` difference is taken by power iteration.
pub struct DeviationEvaluator<'a> {
    ensemble: &'a MeasurementEnsemble,
    gram: Array2<f64>,
    opts: PowerOptions,
}

impl<'a> DeviationEvaluator<'a> {
    pub fn new(ensemble: &'a MeasurementEnsemble) -> Result<Self> {
        ensemble.require(VarianceConvention::OneOverM)?;
        let a = ensemble.entries();
        let mut gram = a.t().dot(a);
        symmetrize(&mut gram);
        Ok(Self {
            ensemble,
            gram,
            opts: PowerOptions {
                tol: 1e-10,
                max_iters: 200_000,
            },
        })
    }

    pub fn with_options(mut self, opts: PowerOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn ensemble(&self) -> &MeasurementEnsemble {
        self.ensemble
    }

    pub fn empirical(
        &self,
        family: DeviationFamily,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
    ) -> Array2<f64> {
        let ax = self.ensemble.matvec(x);
        let ay = self.ensemble.matvec(y);
        let w = family.row_weights(ax.view(), ay.view());
        let touched = |c: f64| w.iter().filter(|&&wi| wi != c).count();
        let c = [0.0, 1.0, -1.0]
            .into_iter()
            .min_by_key(|&c| touched(c))
            .unwrap_or(0.0);
        let rest = w.mapv(|wi| wi - c);
        let mut out = weighted_gram(self.ensemble.entries(), rest.view());
        if c != 0.0 {
            out.scaled_add(c, &self.gram);
        }
        symmetrize(&mut out);
        out
    }

    pub fn deviation(
        &self,
        family: DeviationFamily,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
    ) -> Result<f64> {
        let kernel = KernelOperator::new(family.kernel_kind(), x, y).to_dense();
        let diff = self.empirical(family, x, y) - kernel;
        spectral_norm(&diff, self.opts)
    }

    /// Same quantity without forming any `n × n` matrix: the operator
    /// `z ↦ Aᵀ(w ⊙ Az) − K z` is applied directly.
    pub fn deviation_matrix_free(
        &self,
        family: DeviationFamily,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
    ) -> Result<f64> {
        let a = self.ensemble;
        let w = family.row_weights(a.matvec(x).view(), a.matvec(y).view());
        let kernel = KernelOperator::new(family.kernel_kind(), x, y);
        let apply = |z: ArrayView1<'_, f64>| {
            let az = a.matvec(z) * &w;
            a.rmatvec(az.view()) - kernel.apply(z)
        };
        let op = FnOperator::new(a.n(), a.n(), apply, apply);
        spectral_norm(&op, self.opts)
    }

    /// Deviation of the full operator together with the four split deviations.
    pub fn decomposition(
        &self,
        x: ArrayView1<'_, f64>,
        y: ArrayView1<'_, f64>,
    ) -> Result<(f64, [f64; 4])> {
        let full = self.deviation(DeviationFamily::FullMdc, x, y)?;
        let mut parts = [0.0; 4];
        for (slot, family) in parts.iter_mut().zip(DeviationFamily::SPLITS) {
            *slot = self.deviation(family, x, y)?;
        }
        Ok((full, parts))
    }
}

/// `‖(empirical operator) − (kernel)‖₂` for one pair.
pub fn mdc_deviation(
    a: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    family: DeviationFamily,
) -> Result<f64> {
    DeviationEvaluator::new(a)?.deviation(family, x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_index: usize,
    pub theta: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

/// Sampled and locally refined deviation statistics for one ensemble.
///
/// `max_dev` and `refined_max_dev` are empirical lower bounds on the
/// supremum over all pairs, not the supremum itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub m: usize,
    pub n: usize,
    pub kind: DeviationFamily,
    pub num_pairs: usize,
    pub refine_steps: usize,
    pub max_dev: f64,
    pub mean_dev: f64,
    pub quantiles: Vec<Quantile>,
    pub refined_max_dev: f64,
    pub seed: u64,
    #[serde(skip)]
    pub pairs: Vec<PairRecord>,
}

impl ConcentrationReport {
    /// Per-pair CSV with columns `pair_index,theta,deviation`.
    pub fn write_pairs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for record in &self.pairs {
            writer.serialize(record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

const QUANTILE_LEVELS: [f64; 4] = [0.5, 0.9, 0.99, 1.0];
const REFINE_START_RADIUS: f64 = 0.3;
const REFINE_DECAY: f64 = 0.9;
const REFINE_PATIENCE: usize = 10;

/// Linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], level: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = level.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn perturb<R: Rng>(rng: &mut R, v: &Array1<f64>, radius: f64) -> Array1<f64> {
    let step = rng::unit_vector(rng, v.len()) * radius;
    let moved = v + &step;
    let len = norm(moved.view());
    if len == 0.0 {
        v.clone()
    } else {
        moved / len
    }
}

/// Samples `num_pairs` pairs uniformly on the sphere, then spends
/// `refine_steps` evaluations on random local ascent from the worst pair:
/// both points are perturbed by a step of the current radius and renormalized,
/// improvements are kept, and the radius shrinks by `0.9` after every ten
/// consecutive non-improving steps.
///
/// Pair evaluations run on the current rayon pool; pairs are drawn before the
/// parallel section and statistics are reduced in index order, so the report
/// does not depend on the number of workers.
pub fn empirical_sup_deviation(
    a: &MeasurementEnsemble,
    kind: DeviationFamily,
    num_pairs: usize,
    refine_steps: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if num_pairs == 0 {
        return Err(Error::InvalidParameter("num_pairs must be at least 1".into()));
    }
    let eval = DeviationEvaluator::new(a)?;
    let n = a.n();
    let mut stream = rng::stream(seed);
    let pairs: Vec<(Array1<f64>, Array1<f64>)> = (0..num_pairs)
        .map(|_| {
            let x = rng::unit_vector(&mut stream, n);
            let y = rng::unit_vector(&mut stream, n);
            (x, y)
        })
        .collect();
    let devs: Vec<f64> = pairs
        .par_iter()
        .map(|(x, y)| eval.deviation(kind, x.view(), y.view()))
        .collect::<Result<_>>()?;

    let records: Vec<PairRecord> = pairs
        .iter()
        .zip(devs.iter())
        .enumerate()
        .map(|(pair_index, ((x, y), &deviation))| PairRecord {
            pair_index,
            theta: angle_between(x.view(), y.view()).map_or(f64::NAN, |p| p.theta()),
            deviation,
        })
        .collect();

    let (mut worst_idx, mut max_dev) = (0, devs[0]);
    for (i, &d) in devs.iter().enumerate() {
        if d > max_dev {
            worst_idx = i;
            max_dev = d;
        }
    }
    let mean_dev = devs.iter().sum::<f64>() / devs.len() as f64;
    let mut sorted = devs.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = QUANTILE_LEVELS
        .iter()
        .map(|&level| Quantile {
            level,
            value: quantile(&sorted, level),
        })
        .collect();

    let (mut bx, mut by) = pairs[worst_idx].clone();
    let mut best = max_dev;
    let mut radius = REFINE_START_RADIUS;
    let mut misses = 0;
    for _ in 0..refine_steps {
        let cx = perturb(&mut stream, &bx, radius);
        let cy = perturb(&mut stream, &by, radius);
        let d = eval.deviation(kind, cx.view(), cy.view())?;
        if d > best {
            best = d;
            bx = cx;
            by = cy;
            misses = 0;
        } else {
            misses += 1;
            if misses == REFINE_PATIENCE {
                radius *= REFINE_DECAY;
                misses = 0;
            }
        }
    }

    Ok(ConcentrationReport {
        m: a.m(),
        n,
        kind,
        num_pairs,
        refine_steps,
        max_dev,
        mean_dev,
        quantiles,
        refined_max_dev: best,
        seed,
        pairs: records,
    })
}
