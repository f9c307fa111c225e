//! Gaussian measurement ensembles, the phaseless forward model and the
//! sign-dependent measurement operators.
//!
//! For a point `x`, the signed operator is `A_x = diag(sgn(Ax)) A` with
//! `sgn(0) = 0`, and the split operators keep only the rows where `⟨aᵢ, x⟩`
//! is strictly positive (`Side::Plus`) or strictly negative (`Side::Minus`).
//! All of them are applied matrix-free: one product with `A` followed by an
//! entrywise mask.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LinearOperator;
use crate::rng;

/// Variance of the i.i.d. Gaussian entries.
///
/// `OneOverM` entries are exactly the `Unit` entries of the same seed divided
/// by `√m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    OneOverM,
    Unit,
}

impl VarianceConvention {
    pub fn variance(self, m: usize) -> f64 {
        match self {
            VarianceConvention::OneOverM => 1.0 / m as f64,
            VarianceConvention::Unit => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VarianceConvention::OneOverM => "one_over_m",
            VarianceConvention::Unit => "unit",
        }
    }
}

impl fmt::Display for VarianceConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarianceConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_over_m" => Ok(VarianceConvention::OneOverM),
            "unit" => Ok(VarianceConvention::Unit),
            other => Err(Error::Format(format!("unknown variance convention {other:?}"))),
        }
    }
}

/// An `m × n` measurement matrix, stored dense and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    entries: Array2<f64>,
    convention: VarianceConvention,
    /// `None` for hand-built fixtures.
    seed: Option<u64>,
}

impl MeasurementEnsemble {
    /// Draws i.i.d. `N(0, 1/m)` or `N(0, 1)` entries from the stream of `seed`.
    pub fn sample(m: usize, n: usize, convention: VarianceConvention, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::ZeroDimension { m, n });
        }
        let mut stream = rng::stream(seed);
        let scale = match convention {
            VarianceConvention::OneOverM => 1.0 / (m as f64).sqrt(),
            VarianceConvention::Unit => 1.0,
        };
        let entries = Array2::from_shape_simple_fn((m, n), || {
            stream.sample::<f64, _>(StandardNormal) * scale
        });
        Ok(Self {
            entries,
            convention,
            seed: Some(seed),
        })
    }

    /// Wraps a hand-built matrix. The convention is declared, not checked.
    pub fn from_entries(entries: Array2<f64>, convention: VarianceConvention) -> Result<Self> {
        let (m, n) = entries.dim();
        if m == 0 || n == 0 {
            return Err(Error::ZeroDimension { m, n });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("ensemble entries must be finite".into()));
        }
        Ok(Self {
            entries: entries.as_standard_layout().into_owned(),
            convention,
            seed: None,
        })
    }

    /// `A = I_n`, an exact isometry (`AᵀA = I`).
    pub fn identity(n: usize) -> Result<Self> {
        Self::from_entries(Array2::eye(n), VarianceConvention::OneOverM)
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn convention(&self) -> VarianceConvention {
        self.convention
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.entries.row(i)
    }

    /// `A z`.
    pub fn matvec(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(z.len(), self.n(), "matvec: vector length must equal n");
        self.entries.dot(&z)
    }

    /// `Aᵀ w`.
    pub fn rmatvec(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(w.len(), self.m(), "rmatvec: vector length must equal m");
        self.entries.t().dot(&w)
    }

    /// Same draw under the other variance convention: multiplies by `√m`
    /// (`OneOverM → Unit`) or divides by it (`Unit → OneOverM`).
    pub fn with_convention(&self, target: VarianceConvention) -> Self {
        let root_m = (self.m() as f64).sqrt();
        let entries = match (self.convention, target) {
            (a, b) if a == b => self.entries.clone(),
            (VarianceConvention::OneOverM, VarianceConvention::Unit) => &self.entries * root_m,
            _ => &self.entries / root_m,
        };
        Self {
            entries,
            convention: target,
            seed: self.seed,
        }
    }

    pub fn require(&self, convention: VarianceConvention) -> Result<()> {
        if self.convention == convention {
            Ok(())
        } else {
            Err(Error::WrongConvention {
                expected: convention,
                got: self.convention,
            })
        }
    }

    /// Writes the ensemble as CSV: a header row `m,n,convention,seed`, one
    /// row with those values (`seed` is `none` for fixtures), then the `m`
    /// matrix rows. Floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "m,n,convention,seed")?;
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(out, "{},{},{},{}", self.m(), self.n(), self.convention, seed)?;
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing {what}")))?
                .map_err(Error::from)
        };
        let header = next_line("header")?;
        if header.trim() != "m,n,convention,seed" {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let meta = next_line("metadata row")?;
        let fields: Vec<&str> = meta.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!("metadata row has {} fields", fields.len())));
        }
        let parse_count = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Format(format!("bad dimension {s:?}: {e}")))
        };
        let m = parse_count(fields[0])?;
        let n = parse_count(fields[1])?;
        let convention: VarianceConvention = fields[2].parse()?;
        let seed = match fields[3] {
            "none" => None,
            s => Some(
                s.parse::<u64>()
                    .map_err(|e| Error::Format(format!("bad seed {s:?}: {e}")))?,
            ),
        };
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            let line = next_line("matrix row")?;
            let before = data.len();
            for tok in line.trim().split(',') {
                let v = tok
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {i}: bad value {tok:?}: {e}")))?;
                data.push(v);
            }
            if data.len() - before != n {
                return Err(Error::Format(format!("row {i} has {} values, expected {n}", data.len() - before)));
            }
        }
        let entries = Array2::from_shape_vec((m, n), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut ensemble = Self::from_entries(entries, convention)?;
        ensemble.seed = seed;
        Ok(ensemble)
    }
}

/// Ground truth, noise and observed amplitudes `y = |A x*| + η`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRetrievalInstance {
    pub x_star: Array1<f64>,
    pub eta: Array1<f64>,
    pub y: Array1<f64>,
}

impl PhaseRetrievalInstance {
    /// Largest entrywise gap between the stored `y` and `|A x*| + η`.
    pub fn max_inconsistency(&self, a: &MeasurementEnsemble) -> f64 {
        let fresh = a.matvec(self.x_star.view()).mapv(f64::abs) + &self.eta;
        fresh
            .iter()
            .zip(self.y.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

pub fn forward_model(
    a: &MeasurementEnsemble,
    x_star: &Array1<f64>,
    eta: &Array1<f64>,
) -> Result<PhaseRetrievalInstance> {
    if x_star.len() != a.n() {
        return Err(Error::DimensionMismatch {
            what: "signal",
            expected: a.n(),
            got: x_star.len(),
        });
    }
    if eta.len() != a.m() {
        return Err(Error::DimensionMismatch {
            what: "noise",
            expected: a.m(),
            got: eta.len(),
        });
    }
    if x_star.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroSignal);
    }
    let y = a.matvec(x_star.view()).mapv(f64::abs) + eta;
    Ok(PhaseRetrievalInstance {
        x_star: x_star.clone(),
        eta: eta.clone(),
        y,
    })
}

/// Noise with a Gaussian direction rescaled to `‖η‖ = rho · x_star_norm`.
pub fn bounded_noise(m: usize, rho: f64, x_star_norm: f64, seed: u64) -> Result<Array1<f64>> {
    if !(rho >= 0.0) {
        return Err(Error::NegativeNoise(rho));
    }
    if rho == 0.0 {
        return Ok(Array1::zeros(m));
    }
    let mut stream = rng::stream(seed);
    let direction = rng::unit_vector(&mut stream, m);
    Ok(direction * (rho * x_star_norm))
}

/// `sgn` with `sgn(0) = 0`, decided by strict comparisons.
pub fn sgn(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Entrywise signs of `Ax`, each in `{-1, 0, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSelector {
    signs: Array1<f64>,
}

impl SignSelector {
    pub fn from_products(ax: ArrayView1<'_, f64>) -> Self {
        Self {
            signs: ax.mapv(sgn),
        }
    }

    pub fn signs(&self) -> &Array1<f64> {
        &self.signs
    }

    /// `diag(s) A z`.
    pub fn apply(&self, a: &MeasurementEnsemble, z: ArrayView1<'_, f64>) -> Array1<f64> {
        a.matvec(z) * &self.signs
    }

    /// `Aᵀ diag(s) w`.
    pub fn apply_adjoint(&self, a: &MeasurementEnsemble, w: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(w.len(), a.m(), "apply_adjoint: vector length must equal m");
        a.rmatvec((&w * &self.signs).view())
    }
}

pub fn sign_pattern(a: &MeasurementEnsemble, x: ArrayView1<'_, f64>) -> SignSelector {
    SignSelector::from_products(a.matvec(x).view())
}

/// `A_x z = diag(sgn(Ax)) A z`.
pub fn apply_signed(
    a: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
) -> Array1<f64> {
    sign_pattern(a, x).apply(a, z)
}

/// `A_xᵀ w = Aᵀ diag(sgn(Ax)) w`.
pub fn apply_signed_adjoint(
    a: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
) -> Array1<f64> {
    sign_pattern(a, x).apply_adjoint(a, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

/// Row indicator of the split operator: `1{⟨aᵢ,x⟩ > 0}` or `1{⟨aᵢ,x⟩ < 0}`.
pub fn split_mask(ax: ArrayView1<'_, f64>, side: Side) -> Array1<f64> {
    match side {
        Side::Plus => ax.mapv(|t| if t > 0.0 { 1.0 } else { 0.0 }),
        Side::Minus => ax.mapv(|t| if t < 0.0 { 1.0 } else { 0.0 }),
    }
}

/// `A_{±,x} z`: rows of `Az` kept where `⟨aᵢ,x⟩` has the requested strict sign.
pub fn apply_split(
    a: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
    side: Side,
) -> Array1<f64> {
    let mask = split_mask(a.matvec(x).view(), side);
    a.matvec(z) * &mask
}

/// `A_{±,x}ᵀ w`.
pub fn apply_split_adjoint(
    a: &MeasurementEnsemble,
    x: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
    side: Side,
) -> Array1<f64> {
    let mask = split_mask(a.matvec(x).view(), side);
    a.rmatvec((&w * &mask).view())
}

/// `A_x` as a matrix-free operator.
pub struct SignedOperator<'a> {
    ensemble: &'a MeasurementEnsemble,
    selector: SignSelector,
}

impl<'a> SignedOperator<'a> {
    pub fn new(ensemble: &'a MeasurementEnsemble, x: ArrayView1<'_, f64>) -> Self {
        Self {
            ensemble,
            selector: sign_pattern(ensemble, x),
        }
    }
}

impl LinearOperator for SignedOperator<'_> {
    fn nrows(&self) -> usize {
        self.ensemble.m()
    }
    fn ncols(&self) -> usize {
        self.ensemble.n()
    }
    fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        self.selector.apply(self.ensemble, z)
    }
    fn apply_adjoint(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        self.selector.apply_adjoint(self.ensemble, w)
    }
}

/// Column-wise sample variances, used to sanity-check the sampler.
pub fn column_variances(a: &MeasurementEnsemble) -> Array1<f64> {
    let m = a.m() as f64;
    let mean = a.entries().sum_axis(ndarray::Axis(0)) / m;
    let mut var = Array1::zeros(a.n());
    for row in a.entries().rows() {
        let d = &row - &mean;
        var += &(&d * &d);
    }
    var / (m - 1.0)
}
