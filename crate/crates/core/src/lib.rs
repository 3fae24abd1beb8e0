//! Ordinal one-sided b-matching: mechanisms that see only rankings, exact
//! analytic guarantees for them, and Monte Carlo estimators of their distortion.
//!
//! Valuations and optima are generic over [`Value`] (`f32`, `f64`, exact
//! rationals); analytic curves are generic over [`Real`]. The aliases below fix
//! the common choices.

pub mod analytics;
pub mod distributions;
pub mod error;
pub mod estimator;
pub mod mechanisms;
pub mod model;
pub mod opt;
pub mod rng;
pub mod scalar;

pub use distributions::{sample_profile, uf_audit, AgentAudit, DistributionSpec, UfAuditReport};
pub use error::{Error, Result};
pub use estimator::{
    estimate_assignment_probs, estimate_distortion, gap_report, run_lb_secretary, run_lb_theorem1,
    EstimateReport, Estimator, GapReport, LowerBoundReport, ProbMatrixReport, SecretaryBoundReport,
};
pub use mechanisms::{run_mechanism, MechanismKind, MechanismSpec, PreparedMechanism};
pub use model::{
    complete_matching, derive_preferences, social_welfare, Instance, Matching, PreferenceProfile,
    ValuationProfile,
};
pub use opt::{brute_force_opt, optimal_matching, OptResult};
pub use rng::RandomStream;
pub use scalar::{CompensatedSum, Real, Value};

/// Exact rational scalar used by the oracle paths.
pub type Rational = num_rational::Ratio<i64>;

pub type Valuations = ValuationProfile<f64>;
pub type ExactValuations = ValuationProfile<Rational>;
pub type Opt = OptResult<f64>;
pub type ExactOpt = OptResult<Rational>;
pub type GapPoint = analytics::GapCurvePoint<f64>;
