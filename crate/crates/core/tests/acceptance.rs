//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 4 9`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;

use ampflow::concentration::deviation::DeviationFamily;
use ampflow::concentration::lipschitz::{
    pseudo_lipschitz_ball_check, pseudo_lipschitz_property_check, theta_membership,
};
use ampflow::concentration::relaxation::{
    g_matrix, plus_minus_gram, relaxed_indicator, EnvelopeSide, Relaxation,
};
use ampflow::harness::experiments::{run_mdc_scaling_families, sandwich_eigenvalues};
use ampflow::harness::stats::{window_step_violations, RATE_WINDOW};
use ampflow::harness::{self, ExperimentConfig, ExperimentKind};
use ampflow::kernels::{angle_between, h_kernel, phi, q_kernel, swap_matrix};
use ampflow::measurement::{bounded_noise, forward_model, MeasurementEnsemble, VarianceConvention};
use ampflow::rng::child_seed;
use ampflow::solver::{objective, subgradient};

use common::{frobenius, gaussian, jacobi_eigenvalues, l2, max_abs, unit};

type Verdict = (bool, String);

struct Criterion {
    id: u32,
    name: &'static str,
    budget_s: Option<f64>,
    run: fn() -> Verdict,
}

fn main() -> ExitCode {
    // panics are reported on the criterion's own line
    panic::set_hook(Box::new(|_| {}));
    let criteria = [
        Criterion { id: 1, name: "kernel identities", budget_s: Some(10.0), run: kernel_identities },
        Criterion { id: 2, name: "expectation oracles", budget_s: Some(60.0), run: expectation_oracles },
        Criterion { id: 3, name: "subgradient finite differences", budget_s: Some(30.0), run: subgradient_fd },
        Criterion { id: 4, name: "deterministic sandwich", budget_s: Some(120.0), run: deterministic_sandwich },
        Criterion { id: 5, name: "pseudo-Lipschitz property", budget_s: Some(120.0), run: pseudo_lipschitz },
        Criterion { id: 6, name: "convergence rate", budget_s: Some(120.0), run: convergence_rate },
        Criterion { id: 7, name: "noise floor", budget_s: Some(120.0), run: noise_floor },
        Criterion { id: 8, name: "regularity condition", budget_s: Some(60.0), run: regularity },
        Criterion { id: 9, name: "MDC scaling", budget_s: Some(600.0), run: mdc_scaling },
        Criterion { id: 10, name: "Θ membership", budget_s: Some(60.0), run: theta_rate },
        Criterion { id: 11, name: "phase transition", budget_s: Some(600.0), run: phase_transition },
        Criterion { id: 12, name: "reproducibility across workers", budget_s: None, run: reproducibility },
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(c.run)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let secs = start.elapsed().as_secs_f64();
        let in_time = c.budget_s.map_or(true, |b| secs < b);
        let budget = c.budget_s.map_or(String::new(), |b| format!(" < {b}s"));
        let time_note = if in_time { "" } else { " OVER BUDGET" };
        let pass = ok && in_time;
        println!(
            "{} criterion {:>2} ({}): {} [{secs:.1}s{budget}{time_note}]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail
        );
        ran += 1;
        failed += usize::from(!pass);
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn kernel_identities() -> Verdict {
    let mut r = common::rng(101);
    let (mut decomp, mut special, mut swap) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..1000 {
        let n = [2, 3, 10, 50][i % 4];
        let x = gaussian(&mut r, n) * r.gen_range(-3.0f64..3.0).exp();
        let y = gaussian(&mut r, n) * r.gen_range(-3.0f64..3.0).exp();
        let (p, q, h) = (phi(x.view(), y.view()).matrix, q_kernel(x.view(), y.view()).matrix, h_kernel(x.view(), y.view()).matrix);
        decomp = decomp.max(max_abs(&(&p - &(&q * 2.0) + &(&h * 2.0))));

        let eye = Array2::<f64>::eye(n);
        let neg = -&x;
        special = special
            .max(max_abs(&(&phi(x.view(), x.view()).matrix - &eye)))
            .max(max_abs(&(&phi(x.view(), neg.view()).matrix + &eye)))
            .max(max_abs(&h_kernel(x.view(), x.view()).matrix))
            .max(max_abs(&(&q_kernel(x.view(), x.view()).matrix - &(&eye * 0.5))));

        let pair = angle_between(x.view(), y.view()).expect("nonzero pair");
        let m = swap_matrix(&pair);
        let xh = &x / l2(x.view());
        let yh = &y / l2(y.view());
        swap = swap
            .max(l2((m.dot(&xh) - &yh).view()))
            .max(l2((m.dot(&yh) - &xh).view()));
        if n > 2 {
            let e2 = &yh - &(&xh * yh.dot(&xh));
            let e2 = &e2 / l2(e2.view());
            let z = gaussian(&mut r, n);
            let z = &z - &(&xh * z.dot(&xh));
            let z = &z - &(&e2 * z.dot(&e2));
            swap = swap.max(l2(m.dot(&z).view()) / l2(z.view()));
        }
    }
    (
        decomp <= 1e-13 && special <= 1e-13 && swap <= 1e-10,
        format!("max |Φ − 2Q + 2H| {decomp:.2e}; special cases {special:.2e}; swap action {swap:.2e}"),
    )
}

fn expectation_oracles() -> Verdict {
    let (n, m, k) = (5, 40, 2000);
    let mut r = common::rng(202);
    let x = gaussian(&mut r, n);
    let y = gaussian(&mut r, n);
    let mut full = Array2::<f64>::zeros((n, n));
    let mut plus_plus = Array2::<f64>::zeros((n, n));
    let mut plus_minus = Array2::<f64>::zeros((n, n));
    for t in 0..k {
        let a = MeasurementEnsemble::sample(m, n, VarianceConvention::OneOverM, child_seed(202, t))
            .expect("ensemble");
        let e = a.entries();
        let ax = e.dot(&x);
        let ay = e.dot(&y);
        full += &common::weighted_outer_sum(e, |i| common::sign(ax[i]) * common::sign(ay[i]));
        plus_plus += &common::weighted_outer_sum(e, |i| f64::from(u8::from(ax[i] > 0.0 && ay[i] > 0.0)));
        plus_minus += &common::weighted_outer_sum(e, |i| f64::from(u8::from(ax[i] > 0.0 && ay[i] < 0.0)));
    }
    let kf = k as f64;
    let d_phi = frobenius(&(&full / kf - &phi(x.view(), y.view()).matrix));
    let d_q = frobenius(&(&plus_plus / kf - &q_kernel(x.view(), y.view()).matrix));
    let d_h = frobenius(&(&plus_minus / kf - &h_kernel(x.view(), y.view()).matrix));
    (
        d_phi <= 0.1 && d_q <= 0.1 && d_h <= 0.1,
        format!("Frobenius distance Φ {d_phi:.4}, Q {d_q:.4}, H {d_h:.4} over {k} ensembles"),
    )
}

fn subgradient_fd() -> Verdict {
    let (m, n, h) = (60, 8, 1e-6);
    let mut r = common::rng(303);
    let mut worst = 0.0f64;
    let mut redraws = 0;
    for t in 0..200u64 {
        let a = MeasurementEnsemble::sample(m, n, VarianceConvention::OneOverM, child_seed(303, t))
            .expect("ensemble");
        let x_star = unit(&mut r, n);
        let eta = bounded_noise(m, 0.05, 1.0, child_seed(304, t)).expect("noise");
        let y = forward_model(&a, &x_star, &eta).expect("instance").y;
        let row_max = a.entries().rows().into_iter().map(l2).fold(0.0, f64::max);
        let x = loop {
            let x = gaussian(&mut r, n);
            let margin = a.matvec(x.view()).iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
            if margin > 1e3 * h * row_max {
                break x;
            }
            redraws += 1;
        };
        let g = subgradient(&a, y.view(), x.view());
        let fd = Array1::from_iter((0..n).map(|j| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            (objective(&a, y.view(), xp.view()) - objective(&a, y.view(), xm.view())) / (2.0 * h)
        }));
        worst = worst.max(l2((&fd - &g).view()) / l2(g.view()));
    }
    (
        worst <= 1e-5,
        format!("worst relative error {worst:.2e} over 200 points ({redraws} margin redraws)"),
    )
}

fn deterministic_sandwich() -> Verdict {
    let mut r = common::rng(404);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for t in 0..500u64 {
        let n = 2 + (t as usize % 19);
        let m = r.gen_range(n..=10 * n);
        let v = MeasurementEnsemble::sample(m, n, VarianceConvention::Unit, child_seed(404, t))
            .expect("ensemble");
        let x = gaussian(&mut r, n) * r.gen_range(0.1..3.0);
        let y = gaussian(&mut r, n) * r.gen_range(0.1..3.0);
        let eps = r.gen_range(0.01..1.0);
        let mid = plus_minus_gram(&v, x.view(), y.view());
        let up = g_matrix(&v, x.view(), y.view(), eps, EnvelopeSide::Up).expect("G_up");
        let low = g_matrix(&v, x.view(), y.view(), eps, EnvelopeSide::Low).expect("G_low");
        let a = jacobi_eigenvalues(&(&up - &mid))[0];
        let b = jacobi_eigenvalues(&(&mid - &low))[0];
        let (pa, pb) = sandwich_eigenvalues(&v, &x, &y, eps).expect("power iteration");
        let lo = a.min(b).min(pa.value).min(pb.value);
        worst = worst.min(lo);
        violations += usize::from(lo < -1e-10);
    }

    let mut grid_violations = 0;
    for eps in [1e-3, 0.1, 0.5, 1.0] {
        let pts = 10_000;
        for i in 0..pts {
            let t = -2.0 * eps + 4.0 * eps * i as f64 / (pts - 1) as f64;
            for t in [t, 0.0, eps, -eps] {
                let plus = f64::from(u8::from(t > 0.0));
                let minus = f64::from(u8::from(t < 0.0));
                let po = relaxed_indicator(t, Relaxation::PlusOuter, eps);
                let pi = relaxed_indicator(t, Relaxation::PlusInner, eps);
                let mo = relaxed_indicator(t, Relaxation::MinusOuter, eps);
                let mi = relaxed_indicator(t, Relaxation::MinusInner, eps);
                let ok = (0.0..=1.0).contains(&po)
                    && (0.0..=1.0).contains(&pi)
                    && (0.0..=1.0).contains(&mo)
                    && (0.0..=1.0).contains(&mi)
                    && pi <= plus
                    && plus <= po
                    && mo <= minus
                    && minus <= mi;
                grid_violations += usize::from(!ok);
            }
        }
    }
    (
        violations == 0 && grid_violations == 0,
        format!(
            "{violations}/500 tuples break the sandwich (worst eigenvalue {worst:.2e}); \
             {grid_violations} grid points break the relaxation ordering"
        ),
    )
}

fn pseudo_lipschitz() -> Verdict {
    let (m, n) = (500, 50);
    let per_ensemble = 10;
    let mut r = common::rng(505);
    let (mut trials, mut violations, mut excluded, mut index) = (0, 0, 0, 0u64);
    let mut worst_ratio = 0.0f64;
    while trials < 1000 {
        let v = MeasurementEnsemble::sample(m, n, VarianceConvention::Unit, child_seed(505, index))
            .expect("ensemble");
        index += 1;
        if !theta_membership(&v).expect("theta").in_theta {
            excluded += 1;
            continue;
        }
        for _ in 0..per_ensemble {
            let eps = r.gen_range(0.05..0.5);
            let x = gaussian(&mut r, n) * r.gen_range(0.1..3.0) / (n as f64).sqrt();
            let y = gaussian(&mut r, n) * r.gen_range(0.1..3.0) / (n as f64).sqrt();
            let u = unit(&mut r, n);
            let to_boundary = |z: Array1<f64>| {
                let ball = pseudo_lipschitz_ball_check(&v, z.view(), u.view(), eps).expect("ball");
                z * (ball.threshold / ball.lhs * (1.0 - 1e-12))
            };
            let x_tilde = &x + &to_boundary(gaussian(&mut r, n));
            let y_tilde = &y + &to_boundary(gaussian(&mut r, n));
            let check = pseudo_lipschitz_property_check(
                &v,
                x.view(),
                y.view(),
                x_tilde.view(),
                y_tilde.view(),
                u.view(),
                eps,
            )
            .expect("preconditions hold by construction");
            worst_ratio = worst_ratio.max(check.delta_g / check.bound);
            violations += usize::from(!check.satisfied);
            trials += 1;
        }
    }
    (
        violations == 0,
        format!(
            "{violations}/{trials} trials exceed 2ε (largest |Δg|/2ε {worst_ratio:.3}); \
             {excluded} ensembles outside Θ skipped"
        ),
    )
}

fn recovery_config(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(kind);
    cfg.n = 100;
    cfg.m_values = vec![1000];
    cfg.alpha = 1.0;
    cfg.trials = 20;
    cfg
}

fn convergence_rate() -> Verdict {
    let cfg = recovery_config(ExperimentKind::Convergence);
    let report = harness::run_convergence(&cfg).expect("run");
    let mut reached = 0;
    let mut step_violations = 0;
    let mut worst_ratio = 0.0f64;
    for rec in &report.records {
        let d: Vec<f64> = rec.history.iter().map(|p| p.0).collect();
        if d.iter().take(101).any(|&v| v <= 1e-6) {
            reached += 1;
        }
        step_violations += window_step_violations(&d, 1.0, RATE_WINDOW.0, RATE_WINDOW.1, 0.5, 1e-12);
        worst_ratio = worst_ratio.max(rec.max_step_ratio.unwrap_or(0.0));
    }
    (
        reached >= 19 && step_violations == 0,
        format!(
            "{reached}/20 trials reach 1e-6 within 100 iterations; {step_violations} window steps \
             exceed 0.5·dist (largest step ratio {worst_ratio:.3})"
        ),
    )
}

fn noise_floor() -> Verdict {
    let mut cfg = recovery_config(ExperimentKind::NoiseFloor);
    cfg.noise_rho = 0.01;
    let report = harness::run_noise_floor(&cfg).expect("run");
    let within = report
        .records
        .iter()
        .filter(|r| r.min_dist.is_some_and(|d| d <= 4.0 * r.noise_norm))
        .count();
    let worst = report
        .records
        .iter()
        .map(|r| r.min_dist.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    (
        within >= 19,
        format!("{within}/20 trials reach min dist ≤ 4‖η‖ = 0.04 (worst {worst:.4})"),
    )
}

fn regularity() -> Verdict {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Regularity);
    cfg.n = 50;
    cfg.m_values = vec![1000];
    cfg.noise_rho = 0.0;
    cfg.trials = 1;
    cfg.samples = 100;
    cfg.radii = vec![1e-3];
    let report = harness::run_regularity_sweep(&cfg).expect("run");
    let s = &report.aggregates;
    (
        s.samples == 200 && s.violations == 0 && s.form_disagreements == 0,
        format!(
            "{} violations, {} form disagreements over {} samples (worst ratio {:.3})",
            s.violations, s.form_disagreements, s.samples, s.worst_ratio
        ),
    )
}

fn mdc_scaling() -> Verdict {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::MdcScaling);
    cfg.n = 50;
    cfg.m_values = vec![500, 2500, 10_000];
    cfg.trials = 10;
    cfg.pairs = 10_000;
    cfg.refine_steps = 200;
    let report = run_mdc_scaling_families(&cfg, &[DeviationFamily::FullMdc]).expect("run");
    let refined = |m: usize, k: usize| {
        report
            .records
            .iter()
            .find(|r| r.m == m && r.trial == k)
            .map(|r| r.families[0].refined_max_dev)
            .expect("record")
    };
    let mut decreasing = 0;
    let mut worst_last = 0.0f64;
    for k in 0..cfg.trials {
        let seq: Vec<f64> = cfg.m_values.iter().map(|&m| refined(m, k)).collect();
        decreasing += usize::from(seq.windows(2).all(|w| w[1] < w[0]));
        worst_last = worst_last.max(seq[2]);
    }
    (
        decreasing >= 9 && worst_last <= 0.5,
        format!(
            "{decreasing}/10 seeds strictly decreasing; largest refined deviation at m = 200n {worst_last:.3}"
        ),
    )
}

fn theta_rate() -> Verdict {
    let members = (0..200u64)
        .filter(|&k| {
            let v = MeasurementEnsemble::sample(500, 50, VarianceConvention::Unit, child_seed(1010, k))
                .expect("ensemble");
            theta_membership(&v).expect("theta").in_theta
        })
        .count();
    let rate = members as f64 / 200.0;
    (rate >= 0.99, format!("membership rate {rate:.3} ({members}/200)"))
}

fn phase_transition() -> Verdict {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::PhaseTransition);
    cfg.n = 100;
    cfg.m_values = (1..=12).map(|k| 100 * k).collect();
    cfg.trials = 20;
    let report = harness::run_phase_transition(&cfg).expect("run");
    let rates = &report.aggregates.success_rate;
    let monotone = report.checks.iter().all(|c| c.passed);
    (
        rates[0] <= 0.1 && rates[9] >= 0.9 && monotone,
        format!(
            "success rates {rates:?}; isotonic gap {:.3} (allowance {:.3})",
            report.aggregates.max_isotonic_gap, report.aggregates.noise_allowance
        ),
    )
}

fn small_config(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(kind);
    cfg.n = 10;
    cfg.trials = 4;
    cfg.pairs = 30;
    cfg.refine_steps = 5;
    cfg.samples = 10;
    cfg.m_values = match kind {
        ExperimentKind::PhaseTransition => vec![10, 30, 60],
        ExperimentKind::MdcScaling => vec![50, 100],
        _ => vec![80],
    };
    cfg
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("read"))
        })
        .collect()
}

fn reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut mismatches = Vec::new();
    let mut files = 0;
    for kind in ExperimentKind::ALL {
        let cfg = small_config(kind);
        let mut outputs = Vec::new();
        for workers in [1, 2, 0] {
            let dir = tmp.path().join(format!("{}-{workers}", kind.as_str()));
            let outcome = harness::with_workers(workers, || harness::run(&cfg))
                .expect("pool")
                .expect("run");
            outcome.write_to(&dir).expect("write");
            outputs.push(snapshot(&dir));
        }
        files += outputs[0].len();
        if outputs.iter().any(|o| o != &outputs[0]) {
            mismatches.push(kind.as_str());
        }
    }
    (
        mismatches.is_empty(),
        format!(
            "{files} output files compared across 1, 2 and all workers; mismatching experiments: {mismatches:?}"
        ),
    )
}
