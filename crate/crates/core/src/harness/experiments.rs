//! The six experiments. Each one fans trials out over the current rayon pool,
//! collects them in `(m, trial)` order and derives its checks from the
//! collected records only.

use std::path::Path;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::stats::{fit_rate, isotonic_increasing, median, RATE_WINDOW};
use super::{fmt_f64, fmt_opt, timed, trial_seed, Check, ExperimentReport, Table};
use crate::concentration::bounds::g_upper_bound_check;
use crate::concentration::deviation::{empirical_sup_deviation, DeviationEvaluator, DeviationFamily};
use crate::concentration::lipschitz::theta_membership;
use crate::concentration::relaxation::{g_matrix, plus_minus_gram, EnvelopeSide};
use crate::concentration::spectral::{min_eigenvalue_or_dense, Extremal, PowerOptions};
use crate::error::Result;
use crate::linalg::norm;
use crate::measurement::{bounded_noise, forward_model, MeasurementEnsemble, VarianceConvention};
use crate::rng::{self, child_seed};
use crate::solver::{dist, regularity_check, rc_forms, solve, spectral_init, SolverConfig, Termination};

/// Type-erased view of a finished run, for the command-line driver.
pub trait Outcome {
    fn checks(&self) -> &[Check];
    fn write_to(&self, dir: &Path) -> Result<()>;
    fn write_timings(&self, path: &Path) -> Result<()>;
    fn summary_json(&self) -> Result<String>;
}

impl<R: Serialize, A: Serialize> Outcome for ExperimentReport<R, A> {
    fn checks(&self) -> &[Check] {
        &self.checks
    }
    fn write_to(&self, dir: &Path) -> Result<()> {
        ExperimentReport::write_to(self, dir)
    }
    fn write_timings(&self, path: &Path) -> Result<()> {
        ExperimentReport::write_timings(self, path)
    }
    fn summary_json(&self) -> Result<String> {
        ExperimentReport::summary_json(self)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Box<dyn Outcome + Send>> {
    Ok(match cfg.experiment {
        ExperimentKind::Convergence => Box::new(run_convergence(cfg)?),
        ExperimentKind::NoiseFloor => Box::new(run_noise_floor(cfg)?),
        ExperimentKind::PhaseTransition => Box::new(run_phase_transition(cfg)?),
        ExperimentKind::MdcScaling => Box::new(run_mdc_scaling(cfg)?),
        ExperimentKind::Regularity => Box::new(run_regularity_sweep(cfg)?),
        ExperimentKind::Sandwich => Box::new(run_sandwich_audit(cfg)?),
    })
}

// sub-stream indices inside one trial
const ENSEMBLE: u64 = 0;
const SIGNAL: u64 = 1;
const NOISE: u64 = 2;
const SAMPLES: u64 = 3;

fn grid(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    cfg.m_values
        .iter()
        .flat_map(|&m| (0..cfg.trials).map(move |k| (m, k)))
        .collect()
}

/// Runs `f` for every `(m, trial)` cell in order, returning results and
/// per-cell wall-clock times.
fn run_grid<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(usize, usize, u64) -> Result<T> + Sync,
) -> Result<(Vec<T>, Vec<f64>)> {
    let cells = grid(cfg);
    let out: Vec<(Result<T>, f64)> = cells
        .par_iter()
        .map(|&(m, k)| timed(|| f(m, k, trial_seed(cfg.master_seed, m, k))))
        .collect();
    let mut results = Vec::with_capacity(out.len());
    let mut times = Vec::with_capacity(out.len());
    for (r, t) in out {
        results.push(r?);
        times.push(t);
    }
    Ok((results, times))
}

struct Problem {
    a: MeasurementEnsemble,
    x_star: Array1<f64>,
    eta_norm: f64,
    y: Array1<f64>,
}

fn draw_problem(cfg: &ExperimentConfig, m: usize, seed: u64) -> Result<Problem> {
    let a = MeasurementEnsemble::sample(
        m,
        cfg.n,
        VarianceConvention::OneOverM,
        child_seed(seed, ENSEMBLE),
    )?;
    let x_star = rng::unit_vector(&mut rng::stream(child_seed(seed, SIGNAL)), cfg.n);
    let eta = bounded_noise(m, cfg.noise_rho, 1.0, child_seed(seed, NOISE))?;
    let eta_norm = norm(eta.view());
    let inst = forward_model(&a, &x_star, &eta)?;
    Ok(Problem {
        a,
        x_star,
        eta_norm,
        y: inst.y,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub noise_norm: f64,
    pub init_dist: Option<f64>,
    pub final_dist: Option<f64>,
    pub min_dist: Option<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub success: bool,
    pub fitted_rate: Option<f64>,
    pub max_step_ratio: Option<f64>,
    /// Set when the trial could not run to completion.
    pub failure: Option<String>,
    #[serde(skip)]
    pub history: Vec<(f64, f64)>,
}

fn recovery_trial(cfg: &ExperimentConfig, m: usize, trial: usize, seed: u64) -> Result<RecoveryRecord> {
    let p = draw_problem(cfg, m, seed)?;
    let mut record = RecoveryRecord {
        m,
        trial,
        seed,
        noise_norm: p.eta_norm,
        init_dist: None,
        final_dist: None,
        min_dist: None,
        iterations: 0,
        termination: None,
        success: false,
        fitted_rate: None,
        max_step_ratio: None,
        failure: None,
        history: Vec::new(),
    };
    let x0 = if cfg.start_at_truth {
        p.x_star.clone()
    } else {
        match spectral_init(&p.a, p.y.view()) {
            Ok(x0) => x0,
            Err(e) => {
                record.failure = Some(format!("spectral initialization: {e}"));
                return Ok(record);
            }
        }
    };
    let solver_cfg = SolverConfig {
        alpha: cfg.alpha,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        seed,
        iterate_stride: 0,
    };
    let trace = match solve(&p.a, p.y.view(), x0.view(), &solver_cfg, Some(p.x_star.view())) {
        Ok(t) => t,
        Err(e) => {
            record.failure = Some(format!("solver: {e}"));
            return Ok(record);
        }
    };
    let d = &trace.dist_history;
    record.init_dist = d.first().copied();
    record.final_dist = d.last().copied();
    record.min_dist = d.iter().copied().reduce(f64::min);
    record.iterations = trace.iterations;
    record.termination = Some(trace.termination);
    record.success = record.final_dist.is_some_and(|f| f <= cfg.success_tol);
    if let Some(fit) = fit_rate(d, 1.0, RATE_WINDOW.0, RATE_WINDOW.1) {
        record.fitted_rate = Some(fit.rate);
        record.max_step_ratio = Some(fit.max_step_ratio);
    }
    record.history = d
        .iter()
        .copied()
        .zip(trace.objective_history.iter().copied())
        .collect();
    Ok(record)
}

fn history_table(records: &[RecoveryRecord]) -> Table {
    let mut table = Table::new("iterations.csv", &["m", "trial", "iter", "dist", "objective"]);
    for r in records {
        for (t, (d, f)) in r.history.iter().enumerate() {
            table.push(vec![
                r.m.to_string(),
                r.trial.to_string(),
                t.to_string(),
                fmt_f64(*d),
                fmt_f64(*f),
            ]);
        }
    }
    table
}

fn trials_table(records: &[RecoveryRecord]) -> Table {
    let mut table = Table::new(
        "trials.csv",
        &[
            "m",
            "trial",
            "seed",
            "init_dist",
            "final_dist",
            "min_dist",
            "iterations",
            "success",
            "fitted_rate",
        ],
    );
    for r in records {
        table.push(vec![
            r.m.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_opt(r.init_dist),
            fmt_opt(r.final_dist),
            fmt_opt(r.min_dist),
            r.iterations.to_string(),
            r.success.to_string(),
            fmt_opt(r.fitted_rate),
        ]);
    }
    table
}

fn for_m<'a, T>(records: &'a [T], m: usize, key: impl Fn(&T) -> usize + 'a) -> impl Iterator<Item = &'a T> + 'a {
    records.iter().filter(move |r| key(r) == m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub m: usize,
    pub success_rate: f64,
    pub median_fitted_rate: Option<f64>,
    pub worst_fitted_rate: Option<f64>,
    pub rate_bound: f64,
}

pub fn run_convergence(
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport<RecoveryRecord, Vec<ConvergenceSummary>>> {
    let (records, times) = run_grid(cfg, |m, k, seed| recovery_trial(cfg, m, k, seed))?;
    let bound = 1.0 - cfg.alpha / 2.0;
    let mut aggregates = Vec::new();
    let mut checks = Vec::new();
    for &m in &cfg.m_values {
        let rows: Vec<&RecoveryRecord> = for_m(&records, m, |r| r.m).collect();
        let rates: Vec<f64> = rows
            .iter()
            .filter(|r| r.success)
            .filter_map(|r| r.fitted_rate)
            .collect();
        let success_rate = rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64;
        let worst = rates.iter().copied().reduce(f64::max);
        aggregates.push(ConvergenceSummary {
            m,
            success_rate,
            median_fitted_rate: (!rates.is_empty()).then(|| median(&rates)),
            worst_fitted_rate: worst,
            rate_bound: bound,
        });
        if cfg.noise_rho == 0.0 {
            let over = rates.iter().filter(|&&r| r > bound).count();
            checks.push(Check::new(
                &format!("fitted_rate_within_bound_m{m}"),
                over == 0,
                format!(
                    "{over} of {} successful trials fit a rate above {bound}; worst {}",
                    rates.len(),
                    fmt_opt(worst)
                ),
            ));
        }
    }
    let tables = vec![trials_table(&records), history_table(&records)];
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        aggregates,
        checks,
        tables,
        wall_clock_ms: times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloorSummary {
    pub m: usize,
    pub noise_rho: f64,
    pub median_min_dist: f64,
    pub worst_min_dist: f64,
    /// `4‖η‖` with `‖x*‖ = 1`.
    pub floor_bound: f64,
    pub within_bound: usize,
    pub trials: usize,
}

/// Absolute allowance on top of `4‖η‖` for rounding in the noiseless case.
pub const FLOOR_ABS_SLACK: f64 = 1e-12;

pub fn run_noise_floor(
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport<RecoveryRecord, Vec<NoiseFloorSummary>>> {
    let (records, times) = run_grid(cfg, |m, k, seed| recovery_trial(cfg, m, k, seed))?;
    let mut aggregates = Vec::new();
    let mut checks = Vec::new();
    for &m in &cfg.m_values {
        let rows: Vec<&RecoveryRecord> = for_m(&records, m, |r| r.m).collect();
        let mins: Vec<f64> = rows.iter().map(|r| r.min_dist.unwrap_or(f64::INFINITY)).collect();
        let within = rows
            .iter()
            .zip(&mins)
            .filter(|(r, &d)| d <= 4.0 * r.noise_norm + FLOOR_ABS_SLACK)
            .count();
        let s = NoiseFloorSummary {
            m,
            noise_rho: cfg.noise_rho,
            median_min_dist: median(&mins),
            worst_min_dist: mins.iter().copied().fold(0.0, f64::max),
            floor_bound: 4.0 * cfg.noise_rho,
            within_bound: within,
            trials: rows.len(),
        };
        checks.push(Check::new(
            &format!("noise_floor_m{m}"),
            within == rows.len(),
            format!(
                "{within}/{} trials reach min dist ≤ 4‖η‖ = {}",
                rows.len(),
                s.floor_bound
            ),
        ));
        aggregates.push(s);
    }
    let tables = vec![trials_table(&records), history_table(&records)];
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        aggregates,
        checks,
        tables,
        wall_clock_ms: times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransitionSummary {
    pub m_over_n: Vec<f64>,
    pub success_rate: Vec<f64>,
    pub isotonic_fit: Vec<f64>,
    pub max_isotonic_gap: f64,
    /// `2·√(0.25 / trials)`, twice the worst-case binomial standard error.
    pub noise_allowance: f64,
}

pub fn run_phase_transition(
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport<RecoveryRecord, PhaseTransitionSummary>> {
    let (records, times) = run_grid(cfg, |m, k, seed| recovery_trial(cfg, m, k, seed))?;
    let mut ratios = Vec::new();
    let mut rates = Vec::new();
    let mut table = Table::new("phase_transition.csv", &["m_over_n", "success_rate"]);
    for &m in &cfg.m_values {
        let rows: Vec<&RecoveryRecord> = for_m(&records, m, |r| r.m).collect();
        let rate = rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64;
        let ratio = m as f64 / cfg.n as f64;
        table.push(vec![fmt_f64(ratio), fmt_f64(rate)]);
        ratios.push(ratio);
        rates.push(rate);
    }
    let iso = isotonic_increasing(&rates);
    let gap = rates
        .iter()
        .zip(&iso)
        .map(|(r, i)| (r - i).abs())
        .fold(0.0, f64::max);
    let allowance = 2.0 * (0.25 / cfg.trials as f64).sqrt();
    let checks = vec![Check::new(
        "success_rate_monotone",
        gap <= allowance,
        format!("largest gap to the isotonic fit {gap} (allowance {allowance})"),
    )];
    let tables = vec![table, trials_table(&records)];
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        aggregates: PhaseTransitionSummary {
            m_over_n: ratios,
            success_rate: rates,
            isotonic_fit: iso,
            max_isotonic_gap: gap,
            noise_allowance: allowance,
        },
        checks,
        tables,
        wall_clock_ms: times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub family: DeviationFamily,
    pub max_dev: f64,
    pub mean_dev: f64,
    pub median_dev: f64,
    pub refined_max_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdcRecord {
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub families: Vec<FamilyResult>,
    pub audit_pairs: usize,
    /// Pairs where the full deviation exceeds the sum of the four split
    /// deviations by more than `1e-10`.
    pub audit_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdcSummary {
    /// Trials whose full refined deviation strictly decreases along `m_values`.
    pub decreasing_trials: usize,
    pub trials: usize,
    /// Full deviation of the identity fixture `A = I_n` over pairs with
    /// `x = y`, where it is an exact isometry.
    pub identity_diagonal_max_dev: f64,
    /// Full deviation of the same fixture over independent pairs, which is
    /// not zero.
    pub identity_offdiagonal_max_dev: f64,
}

const AUDIT_PAIRS: usize = 100;
const IDENTITY_PAIRS: usize = 100;

pub fn run_mdc_scaling(cfg: &ExperimentConfig) -> Result<ExperimentReport<MdcRecord, MdcSummary>> {
    run_mdc_scaling_families(cfg, &DeviationFamily::ALL)
}

/// As [`run_mdc_scaling`], restricted to `families`.
pub fn run_mdc_scaling_families(
    cfg: &ExperimentConfig,
    families: &[DeviationFamily],
) -> Result<ExperimentReport<MdcRecord, MdcSummary>> {
    let (records, times) = run_grid(cfg, |m, k, seed| {
        let a = MeasurementEnsemble::sample(
            m,
            cfg.n,
            VarianceConvention::OneOverM,
            child_seed(seed, ENSEMBLE),
        )?;
        let mut results = Vec::new();
        for (i, &family) in families.iter().enumerate() {
            let report = empirical_sup_deviation(
                &a,
                family,
                cfg.pairs,
                cfg.refine_steps,
                child_seed(seed, SAMPLES + i as u64),
            )?;
            results.push(FamilyResult {
                family,
                max_dev: report.max_dev,
                mean_dev: report.mean_dev,
                median_dev: report.quantiles[0].value,
                refined_max_dev: report.refined_max_dev,
            });
        }
        let eval = DeviationEvaluator::new(&a)?;
        let mut stream = rng::stream(child_seed(seed, SIGNAL));
        let audit_pairs = AUDIT_PAIRS.min(cfg.pairs);
        let mut audit_violations = 0;
        for _ in 0..audit_pairs {
            let x = rng::unit_vector(&mut stream, cfg.n);
            let y = rng::unit_vector(&mut stream, cfg.n);
            let (full, parts) = eval.decomposition(x.view(), y.view())?;
            if full > parts.iter().sum::<f64>() + 1e-10 {
                audit_violations += 1;
            }
        }
        Ok(MdcRecord {
            m,
            trial: k,
            seed,
            families: results,
            audit_pairs,
            audit_violations,
        })
    })?;

    let identity = MeasurementEnsemble::identity(cfg.n)?;
    let eval = DeviationEvaluator::new(&identity)?;
    let mut stream = rng::stream(child_seed(cfg.master_seed, u64::MAX));
    let (mut diag, mut off) = (0.0f64, 0.0f64);
    for _ in 0..IDENTITY_PAIRS {
        let x = rng::unit_vector(&mut stream, cfg.n);
        let y = rng::unit_vector(&mut stream, cfg.n);
        diag = diag.max(eval.deviation(DeviationFamily::FullMdc, x.view(), x.view())?);
        off = off.max(eval.deviation(DeviationFamily::FullMdc, x.view(), y.view())?);
    }

    let mut table = Table::new(
        "mdc_scaling.csv",
        &["ensemble", "trial", "m_over_n", "family", "max_dev", "refined_max_dev"],
    );
    for r in &records {
        for f in &r.families {
            table.push(vec![
                "gaussian".into(),
                r.trial.to_string(),
                fmt_f64(r.m as f64 / cfg.n as f64),
                f.family.as_str().into(),
                fmt_f64(f.max_dev),
                fmt_f64(f.refined_max_dev),
            ]);
        }
    }
    for (label, value) in [("identity_diagonal", diag), ("identity_offdiagonal", off)] {
        table.push(vec![
            label.into(),
            "0".into(),
            "1.0".into(),
            DeviationFamily::FullMdc.as_str().into(),
            fmt_f64(value),
            fmt_f64(value),
        ]);
    }

    let mut decreasing = 0;
    let mut checks = Vec::new();
    if families.contains(&DeviationFamily::FullMdc) {
        for k in 0..cfg.trials {
            let seq: Vec<f64> = cfg
                .m_values
                .iter()
                .map(|&m| {
                    records
                        .iter()
                        .find(|r| r.m == m && r.trial == k)
                        .and_then(|r| r.families.iter().find(|f| f.family == DeviationFamily::FullMdc))
                        .map_or(f64::NAN, |f| f.refined_max_dev)
                })
                .collect();
            if seq.windows(2).all(|w| w[1] < w[0]) {
                decreasing += 1;
            }
        }
        checks.push(Check::new(
            "full_mdc_decreasing_in_m",
            decreasing as f64 >= 0.9 * cfg.trials as f64,
            format!("{decreasing}/{} trials strictly decreasing", cfg.trials),
        ));
    }
    let violations: usize = records.iter().map(|r| r.audit_violations).sum();
    checks.push(Check::new(
        "decomposition_triangle_inequality",
        violations == 0,
        format!("{violations} audited pairs violate full ≤ sum of splits"),
    ));
    checks.push(Check::new(
        "identity_fixture_diagonal_zero",
        diag <= 1e-12,
        format!("identity fixture, x = y: max deviation {diag}"),
    ));
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        aggregates: MdcSummary {
            decreasing_trials: decreasing,
            trials: cfg.trials,
            identity_diagonal_max_dev: diag,
            identity_offdiagonal_max_dev: off,
        },
        checks,
        tables: vec![table],
        wall_clock_ms: times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusResult {
    pub radius: f64,
    pub samples: usize,
    pub violations: usize,
    /// Samples where the norm and inner-product forms disagree.
    pub form_disagreements: usize,
    /// Largest `lhs / rhs`.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityRecord {
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub noise_norm: f64,
    pub truth_holds: bool,
    pub radii: Vec<RadiusResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularitySummary {
    pub samples: usize,
    pub violations: usize,
    pub form_disagreements: usize,
    pub worst_ratio: f64,
}

pub fn run_regularity_sweep(
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport<RegularityRecord, RegularitySummary>> {
    let (records, times) = run_grid(cfg, |m, k, seed| {
        let p = draw_problem(cfg, m, seed)?;
        let truth = regularity_check(&p.a, p.y.view(), p.x_star.view(), p.x_star.view(), p.eta_norm);
        let mut stream = rng::stream(child_seed(seed, SAMPLES));
        let mut radii = Vec::new();
        for &r in &cfg.radii {
            let mut out = RadiusResult {
                radius: r,
                samples: 0,
                violations: 0,
                form_disagreements: 0,
                worst_ratio: 0.0,
            };
            for sign in [1.0, -1.0] {
                for _ in 0..cfg.samples {
                    let u = rng::unit_vector(&mut stream, cfg.n);
                    let x = &p.x_star * sign + &(u * r);
                    let report = regularity_check(&p.a, p.y.view(), x.view(), p.x_star.view(), p.eta_norm);
                    let d = dist(x.view(), p.x_star.view());
                    let offset = &x - &(&p.x_star * d.sign);
                    let v = crate::solver::subgradient(&p.a, p.y.view(), x.view());
                    let (norm_form, inner_form) = rc_forms(v.view(), offset.view());
                    out.samples += 1;
                    out.violations += usize::from(!report.holds);
                    out.form_disagreements += usize::from(norm_form != inner_form);
                    out.worst_ratio = out.worst_ratio.max(report.lhs / report.rhs);
                }
            }
            radii.push(out);
        }
        Ok(RegularityRecord {
            m,
            trial: k,
            seed,
            noise_norm: p.eta_norm,
            truth_holds: truth.holds,
            radii,
        })
    })?;

    let all = records.iter().flat_map(|r| r.radii.iter());
    let summary = all.fold(
        RegularitySummary {
            samples: 0,
            violations: 0,
            form_disagreements: 0,
            worst_ratio: 0.0,
        },
        |mut s, r| {
            s.samples += r.samples;
            s.violations += r.violations;
            s.form_disagreements += r.form_disagreements;
            s.worst_ratio = s.worst_ratio.max(r.worst_ratio);
            s
        },
    );
    let mut table = Table::new(
        "regularity.csv",
        &["m", "trial", "radius", "samples", "violations", "worst_ratio"],
    );
    for rec in &records {
        for r in &rec.radii {
            table.push(vec![
                rec.m.to_string(),
                rec.trial.to_string(),
                fmt_f64(r.radius),
                r.samples.to_string(),
                r.violations.to_string(),
                fmt_f64(r.worst_ratio),
            ]);
        }
    }
    let truth_ok = records.iter().all(|r| r.truth_holds);
    let checks = vec![
        Check::new(
            "regularity_condition",
            summary.violations == 0,
            format!("{} of {} samples violate the condition", summary.violations, summary.samples),
        ),
        Check::new(
            "regularity_forms_agree",
            summary.form_disagreements == 0,
            format!("{} samples where the two forms disagree", summary.form_disagreements),
        ),
        Check::new("regularity_at_truth", truth_ok, "x = x* sample in every trial".into()),
    ];
    Ok(ExperimentReport {
        config: cfg.clone(),
        records,
        aggregates: summary,
        checks,
        tables: vec![table],
        wall_clock_ms: times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRecord {
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub in_theta: bool,
    pub operator_norm: f64,
    pub max_row_norm: f64,
    pub sandwich_pairs: usize,
    pub sandwich_violations: usize,
    /// Smallest of `λ_min(G_up − A₊ᵀA₋)` and `λ_min(A₊ᵀA₋ − G_low)`.
    pub worst_sandwich_eigenvalue: f64,
    pub allowance: f64,
    pub worst_upper: f64,
    pub worst_lower: f64,
    pub ordering_violations: usize,
    pub within_slack: bool,
    /// Eigenvalues taken from the dense solver after power iteration stalled.
    pub dense_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichSummary {
    pub sandwich_violations: usize,
    pub theta_trials: usize,
    pub excluded_trials: usize,
    /// Fraction of all trials whose envelope bounds hold within the slack.
    pub within_slack_rate: f64,
    /// The same fraction over trials in Θ; `None` when no trial is in Θ.
    pub theta_within_slack_rate: Option<f64>,
    pub dense_fallbacks: usize,
}

pub const SANDWICH_TOL: f64 = 1e-10;

/// `(λ_min(G_up − A₊ᵀA₋), λ_min(A₊ᵀA₋ − G_low))` at one pair.
pub fn sandwich_eigenvalues(
    v: &MeasurementEnsemble,
    x: &Array1<f64>,
    y: &Array1<f64>,
    eps: f64,
) -> Result<(Extremal, Extremal)> {
    let mid = plus_minus_gram(v, x.view(), y.view());
    let up = g_matrix(v, x.view(), y.view(), eps, EnvelopeSide::Up)?;
    let low = g_matrix(v, x.view(), y.view(), eps, EnvelopeSide::Low)?;
    let opts = PowerOptions::default();
    Ok((
        min_eigenvalue_or_dense(&(&up - &mid), opts)?,
        min_eigenvalue_or_dense(&(&mid - &low), opts)?,
    ))
}

pub fn run_sandwich_audit(
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport<SandwichRecord, SandwichSummary>> {
    let (records, times) = run_grid(cfg, |m, k, seed| {
        let v = MeasurementEnsemble::sample(m, cfg.n, VarianceConvention::Unit, child_seed(seed, ENSEMBLE))?;
        let theta = theta_membership(&v)?;
        let mut stream = rng::stream(child_seed(seed, SAMPLES));
        let mut violations = 0;
        let mut worst = f64::INFINITY;
        let mut dense = 0;
        for _ in 0..cfg.pairs {
            let x = rng::unit_vector(&mut stream, cfg.n);
            let y = rng::unit_vector(&mut stream, cfg.n);
            let (a, b) = sandwich_eigenvalues(&v, &x, &y, cfg.eps)?;
            worst = worst.min(a.value.min(b.value));
            violations += usize::from(a.value < -SANDWICH_TOL || b.value < -SANDWICH_TOL);
            dense += usize::from(a.dense) + usize::from(b.dense);
        }
        let bounds = g_upper_bound_check(&v, cfg.eps, cfg.pairs, child_seed(seed, SIGNAL), cfg.slack)?;
        Ok(SandwichRecord {
            m,
            trial: k,
            seed,
            in_theta: theta.in_theta,
            operator_norm: theta.norm,
            max_row_norm: theta.max_row_norm,
            sandwich_pairs: cfg.pairs,
            sandwich_violations: violations,
            worst_sandwich_eigenvalue: worst,
            allowance: bounds.allowance,
            worst_upper: bounds.worst_upper,
            worst_lower: bounds.worst_lower,
            ordering_violations: bounds.ordering_violations,
            within_slack: bounds.within_slack,
            dense_fallbacks: dense + bounds.dense_fallbacks,
        })
    })?;
    let sandwich_violations: usize = records.iter().map(|r| r.sandwich_violations).sum();
    let in_theta: Vec<&SandwichRecord> = records.iter().filter(|r| r.in_theta).collect();
    let within = records.iter().filter(|r| r.within_slack).count();
    let rate = within as f64 / records.len() as f64;
    let theta_rate = (!in_theta.is_empty())
        .then(|| in_theta.iter().filter(|r| r.within_slack).count() as f64 / in_theta.len() as f64);
    let ordering: usize = records.iter().map(|r| r.ordering_violations).sum();
    let mut table = Table::new(
        "sandwich.csv",
        &[
            "m",
            "trial",
            "in_theta",
            "sandwich_violations",
            "worst_sandwich_eigenvalue",
            "allowance",
            "worst_upper",
            "worst_lower",
            "within_slack",
            "dense_fallbacks",
        ],
    );
    for r in &records {
        table.push(vec![
            r.m.to_string(),
            r.trial.to_string(),
            r.in_theta.to_string(),
            r.sandwich_violations.to_string(),
            fmt_f64(r.worst_sandwich_eigenvalue),
            fmt_f64(r.allowance),
            fmt_f64(r.worst_upper),
            fmt_f64(r.worst_lower),
            r.within_slack.to_string(),
            r.dense_fallbacks.to_string(),
        ]);
    }
    let checks = vec![
        Check::new(
            "deterministic_sandwich",
            sandwich_violations == 0,
            format!("{sandwich_violations} pairs break G_low ⪯ A₊ᵀA₋ ⪯ G_up"),
        ),
        Check::new(
            "envelope_ordering",
            ordering == 0,
            format!("{ordering} pairs with λ_max(G_up − mH) < λ_min(G_low − mH)"),
        ),
        Check::new(
            "envelope_bounds_within_slack",
            rate >= 0.9,
            format!(
                "{within}/{} trials within slack {}; {} of them in Θ",
                records.len(),
                cfg.slack,
                in_theta.len()
            ),
        ),
    ];
    Ok(ExperimentReport {
        config: cfg.clone(),
        aggregates: SandwichSummary {
            sandwich_violations,
            theta_trials: in_theta.len(),
            excluded_trials: records.len() - in_theta.len(),
            within_slack_rate: rate,
            theta_within_slack_rate: theta_rate,
            dense_fallbacks: records.iter().map(|r| r.dense_fallbacks).sum(),
        },
        records,
        checks,
        tables: vec![table],
        wall_clock_ms: times,
    })
}
