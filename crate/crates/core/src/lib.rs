// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod marginal;
pub mod mc;
pub mod mean;
pub mod model;
pub mod predictive;
pub mod prior;
pub mod quadrature;
pub mod regress;
pub mod risk;
pub mod subspace;
pub mod template;

pub use error::{Error, Result};
pub use marginal::{marginal_eval, marginal_log_density, mixture_weights, MarginalEval};
pub use mc::RiskEstimate;
pub use mean::{estimate_mean, estimate_mean_checked, quadratic_gap_unbiased, MeanEstimate, MeanEstimator, QuadraticGap};
pub use model::ModelConfig;
pub use predictive::{
    logpdf_bayes, logpdf_empirical_bayes, logpdf_uniform, pseudo_marginal_normalization, sample_predictive,
    shrinkage_factor, PredictiveDensity, PredictiveKind,
};
pub use prior::{Mixture, Prior};
pub use subspace::{project_onto, Subspace};
pub use risk::{
    density_slice, kl_gap_via_marginals, kl_loss_mc, kl_risk_mc, minimaxity_scan, quadratic_risk_mc, risk_curve,
    risk_identity_check, RiskCurveConfig, RiskCurveRow,
};
pub use template::EstimatorTemplate;
pub use regress::{
    kl_gap_reg_mc, kl_risk_reg_mc, least_squares, logpdf_bayes_reg, logpdf_uniform_reg, simultaneous_diagonalize,
    trace_condition_check, LeastSquares, LinearModel, PriorScaling, RegressionPrior, Rotation, TraceReport,
};
