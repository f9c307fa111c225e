//! Experiment configuration: per-experiment defaults, overlaid by a flat TOML
//! file, overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Convergence,
    NoiseFloor,
    PhaseTransition,
    MdcScaling,
    Regularity,
    Sandwich,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Convergence,
        ExperimentKind::NoiseFloor,
        ExperimentKind::PhaseTransition,
        ExperimentKind::MdcScaling,
        ExperimentKind::Regularity,
        ExperimentKind::Sandwich,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::NoiseFloor => "noise-floor",
            ExperimentKind::PhaseTransition => "phase-transition",
            ExperimentKind::MdcScaling => "mdc-scaling",
            ExperimentKind::Regularity => "regularity",
            ExperimentKind::Sandwich => "sandwich",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Fully resolved settings of one run. Serialized verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub m_values: Vec<usize>,
    pub alpha: f64,
    pub noise_rho: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub output_path: PathBuf,
    pub tol: f64,
    pub max_iters: usize,
    /// Relative final distance counted as a successful recovery.
    pub success_tol: f64,
    /// Sampled pairs per ensemble (mdc-scaling, sandwich).
    pub pairs: usize,
    pub refine_steps: usize,
    /// Samples per radius and sign branch (regularity).
    pub samples: usize,
    /// Relative distances to the truth probed by the regularity sweep.
    pub radii: Vec<f64>,
    pub eps: f64,
    pub slack: f64,
    /// Start the solver at the ground truth instead of the spectral estimate.
    pub start_at_truth: bool,
}

/// Any subset of the fields, as read from a file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub experiment: Option<ExperimentKind>,
    pub n: Option<usize>,
    pub m_values: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub noise_rho: Option<f64>,
    pub trials: Option<usize>,
    pub master_seed: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub success_tol: Option<f64>,
    pub pairs: Option<usize>,
    pub refine_steps: Option<usize>,
    pub samples: Option<usize>,
    pub radii: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub slack: Option<f64>,
    pub start_at_truth: Option<bool>,
}

impl PartialConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Fields set in `other` replace fields set in `self`.
    pub fn overlay(self, other: PartialConfig) -> PartialConfig {
        PartialConfig {
            experiment: other.experiment.or(self.experiment),
            n: other.n.or(self.n),
            m_values: other.m_values.or(self.m_values),
            alpha: other.alpha.or(self.alpha),
            noise_rho: other.noise_rho.or(self.noise_rho),
            trials: other.trials.or(self.trials),
            master_seed: other.master_seed.or(self.master_seed),
            output_path: other.output_path.or(self.output_path),
            tol: other.tol.or(self.tol),
            max_iters: other.max_iters.or(self.max_iters),
            success_tol: other.success_tol.or(self.success_tol),
            pairs: other.pairs.or(self.pairs),
            refine_steps: other.refine_steps.or(self.refine_steps),
            samples: other.samples.or(self.samples),
            radii: other.radii.or(self.radii),
            eps: other.eps.or(self.eps),
            slack: other.slack.or(self.slack),
            start_at_truth: other.start_at_truth.or(self.start_at_truth),
        }
    }
}

struct Defaults {
    n: usize,
    ratios: &'static [usize],
    noise_rho: f64,
    trials: usize,
    pairs: usize,
    refine_steps: usize,
}

fn defaults(kind: ExperimentKind) -> Defaults {
    const PHASE_RATIOS: [usize; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
    let base = Defaults {
        n: 100,
        ratios: &[10],
        noise_rho: 0.0,
        trials: 20,
        pairs: 500,
        refine_steps: 0,
    };
    match kind {
        ExperimentKind::Convergence => base,
        ExperimentKind::NoiseFloor => Defaults {
            noise_rho: 0.01,
            ..base
        },
        ExperimentKind::PhaseTransition => Defaults {
            ratios: &PHASE_RATIOS,
            ..base
        },
        ExperimentKind::MdcScaling => Defaults {
            n: 50,
            ratios: &[10, 50, 200],
            trials: 1,
            pairs: 10_000,
            refine_steps: 200,
            ..base
        },
        ExperimentKind::Regularity => Defaults {
            n: 50,
            ratios: &[20],
            trials: 1,
            ..base
        },
        ExperimentKind::Sandwich => Defaults {
            n: 20,
            ratios: &[200],
            trials: 10,
            ..base
        },
    }
}

impl ExperimentConfig {
    /// Defaults for `kind`, then `file`, then `cli`. An `experiment` key that
    /// names a different experiment than `kind` is a config error.
    pub fn resolve(kind: ExperimentKind, file: PartialConfig, cli: PartialConfig) -> Result<Self> {
        let p = file.overlay(cli);
        if let Some(other) = p.experiment {
            if other != kind {
                return Err(Error::Config(format!(
                    "config file is for `{other}` but `{kind}` was requested"
                )));
            }
        }
        let d = defaults(kind);
        let n = p.n.unwrap_or(d.n);
        let cfg = ExperimentConfig {
            experiment: kind,
            n,
            m_values: p
                .m_values
                .unwrap_or_else(|| d.ratios.iter().map(|r| r * n).collect()),
            alpha: p.alpha.unwrap_or(1.0),
            noise_rho: p.noise_rho.unwrap_or(d.noise_rho),
            trials: p.trials.unwrap_or(d.trials),
            master_seed: p.master_seed.unwrap_or(1),
            output_path: p
                .output_path
                .unwrap_or_else(|| PathBuf::from("out").join(kind.as_str())),
            tol: p.tol.unwrap_or(1e-14),
            max_iters: p.max_iters.unwrap_or(500),
            success_tol: p.success_tol.unwrap_or(1e-5),
            pairs: p.pairs.unwrap_or(d.pairs),
            refine_steps: p.refine_steps.unwrap_or(d.refine_steps),
            samples: p.samples.unwrap_or(100),
            radii: p.radii.unwrap_or_else(|| vec![1e-4, 1e-3]),
            eps: p.eps.unwrap_or(0.2),
            slack: p.slack.unwrap_or(1.5),
            start_at_truth: p.start_at_truth.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults(kind: ExperimentKind) -> Self {
        Self::resolve(kind, PartialConfig::default(), PartialConfig::default())
            .expect("built-in defaults are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.m_values.is_empty() {
            return bad("m_values must not be empty".into());
        }
        if self.m_values.contains(&0) {
            return bad("every m must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.noise_rho >= 0.0) {
            return bad(format!("noise_rho must be nonnegative, got {}", self.noise_rho));
        }
        if !(self.tol >= 0.0) || !(self.success_tol > 0.0) {
            return bad("tol must be nonnegative and success_tol positive".into());
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.slack > 0.0) {
            return bad(format!("slack must be positive, got {}", self.slack));
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("radii must be positive".into());
        }
        match self.experiment {
            ExperimentKind::Convergence
            | ExperimentKind::NoiseFloor
            | ExperimentKind::PhaseTransition
                if self.m_values.iter().any(|&m| m < self.n) =>
            {
                bad("spectral initialization needs every m ≥ n".into())
            }
            ExperimentKind::MdcScaling if self.m_values.windows(2).any(|w| w[0] >= w[1]) => {
                bad("mdc-scaling needs strictly ascending m_values".into())
            }
            ExperimentKind::MdcScaling | ExperimentKind::Sandwich if self.pairs == 0 => {
                bad("pairs must be at least 1".into())
            }
            ExperimentKind::Regularity if self.samples == 0 || self.radii.is_empty() => {
                bad("regularity needs samples ≥ 1 and at least one radius".into())
            }
            _ => Ok(()),
        }
    }
}
