//! Empirical checks of the concentration statements behind the convergence
//! guarantee.

pub mod bounds;
pub mod deviation;
pub mod lipschitz;
pub mod relaxation;
pub mod spectral;

pub use bounds::{
    envelope_margins, g_upper_bound_check, indicator_strip_expectation_check, EnvelopeBoundReport,
    EnvelopeMargins, StripCheck, DEFAULT_SLACK,
};
pub use deviation::{
    empirical_sup_deviation, mdc_deviation, ConcentrationReport, DeviationEvaluator,
    DeviationFamily, PairRecord, Quantile,
};
pub use lipschitz::{
    pseudo_lipschitz_ball_check, pseudo_lipschitz_property_check, theta_membership, BallCheck,
    PseudoLipschitzCheck, ThetaMembership,
};
pub use relaxation::{
    envelope_weights, g_matrix, g_quadratic_form, h_quadratic_form, plus_minus_gram,
    relaxed_indicator, EnvelopeOperator, EnvelopeSide, Relaxation,
};
pub use spectral::{
    dense_symmetric_eigenvalues, dominant_eigenpair, max_eigenvalue, max_eigenvalue_or_dense,
    min_eigenvalue, min_eigenvalue_or_dense, spectral_norm, Extremal, PowerOptions,
};
