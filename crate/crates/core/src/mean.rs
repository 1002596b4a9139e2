//! Point estimators of `mu` from a single observation `X ~ N_p(mu, v I)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::marginal::{marginal_eval, mixture_weights, norm_sq};
use crate::prior::{Mixture, Prior};
use crate::subspace::Subspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanEstimator {
    /// `x` itself.
    Mle,
    /// `P_B x + (1 - c v / |x - P_B x|^2) (x - P_B x)` with `c = p - d - 2`.
    JamesStein {
        center: Subspace,
        #[serde(default)]
        positive_part: bool,
    },
    /// Posterior mean `x + v grad log m(x; v)`.
    BayesMean { prior: Prior },
    /// Posterior-probability weighted combination of the component posterior means.
    MultipleShrinkage { prior: Mixture },
}

/// Output of [`estimate_mean_checked`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub value: Vec<f64>,
    /// Set when a James-Stein rule met `x` exactly on its target and returned
    /// the target.
    pub at_target: bool,
}

impl MeanEstimator {
    /// James-Stein toward the origin of `R^p`.
    pub fn james_stein(p: usize, positive_part: bool) -> Result<Self> {
        Ok(MeanEstimator::JamesStein {
            center: Subspace::origin(p)?,
            positive_part,
        })
    }

    /// Lindley's rule: James-Stein toward `span{1_p}`.
    pub fn lindley(p: usize, positive_part: bool) -> Result<Self> {
        Ok(MeanEstimator::JamesStein {
            center: Subspace::span_ones(p)?,
            positive_part,
        })
    }

    pub fn label(&self) -> String {
        match self {
            MeanEstimator::Mle => "mle".into(),
            MeanEstimator::JamesStein { center, positive_part } => {
                let base = if *positive_part { "js+" } else { "js" };
                if center.dim() == 0 {
                    base.into()
                } else {
                    format!("{base}@subspace(d={})", center.dim())
                }
            }
            MeanEstimator::BayesMean { prior } => format!("bayes[{}]", prior.label()),
            MeanEstimator::MultipleShrinkage { prior } => {
                format!("multiple[{}]", Prior::Mixture(prior.clone()).label())
            }
        }
    }
}

/// `mu_hat(x)`; see [`estimate_mean_checked`].
pub fn estimate_mean(est: &MeanEstimator, x: &[f64], v: f64) -> Result<Vec<f64>> {
    estimate_mean_checked(est, x, v).map(|e| e.value)
}

/// `mu_hat(x)` together with the at-target diagnostic.
pub fn estimate_mean_checked(est: &MeanEstimator, x: &[f64], v: f64) -> Result<MeanEstimate> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!("variance v = {v} must be positive")));
    }
    if x.iter().any(|xi| !xi.is_finite()) {
        return Err(Error::NonFinite("observation x".into()));
    }
    let plain = |value| {
        Ok(MeanEstimate {
            value,
            at_target: false,
        })
    };
    match est {
        MeanEstimator::Mle => plain(x.to_vec()),
        MeanEstimator::JamesStein { center, positive_part } => james_stein(center, *positive_part, x, v),
        MeanEstimator::BayesMean { prior } => plain(posterior_mean(prior, x, v)?),
        MeanEstimator::MultipleShrinkage { prior } => {
            let weights = mixture_weights(prior, x, v)?;
            let mut out = vec![0.0; x.len()];
            for (w, c) in weights.iter().zip(prior.components()) {
                if *w == 0.0 {
                    continue;
                }
                for (o, m) in out.iter_mut().zip(posterior_mean(c, x, v)?) {
                    *o += w * m;
                }
            }
            plain(out)
        }
    }
}

fn posterior_mean(prior: &Prior, x: &[f64], v: f64) -> Result<Vec<f64>> {
    let eval = marginal_eval(prior, x, v)?;
    Ok(x.iter().zip(&eval.grad_log_m).map(|(xi, g)| xi + v * g).collect())
}

fn james_stein(center: &Subspace, positive_part: bool, x: &[f64], v: f64) -> Result<MeanEstimate> {
    check_len(center.ambient_dim(), x.len())?;
    let k = center.codim();
    if k < 3 {
        return Err(Error::InvalidParameter(format!(
            "James-Stein needs p - d >= 3, got p - d = {k}"
        )));
    }
    let target = center.project(x)?;
    let e: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a - b).collect();
    let r2 = norm_sq(&e);
    // residuals at rounding level of the projection count as exactly on target
    let floor = (64.0 * f64::EPSILON).powi(2) * (norm_sq(x) + norm_sq(center.offset()));
    if r2 <= floor {
        // x lies in B, so it is its own projection
        return Ok(MeanEstimate {
            value: x.to_vec(),
            at_target: true,
        });
    }
    let mut factor = 1.0 - (k - 2) as f64 * v / r2;
    if positive_part {
        factor = factor.max(0.0);
    }
    Ok(MeanEstimate {
        value: target.iter().zip(&e).map(|(t, ei)| t + factor * ei).collect(),
        at_target: false,
    })
}

/// Pointwise unbiased estimate of `R_Q(mu, x) - R_Q(mu, mu_hat_pi)` for the
/// Bayes rule `mu_hat_pi(x) = x + v grad log m(x; v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticGap {
    /// `v^2 (|grad log m|^2 - 2 lap m / m)`
    pub value: f64,
    /// `-4 v^2 lap sqrt(m) / sqrt(m)`
    pub sqrt_form: f64,
}

pub fn quadratic_gap_unbiased(prior: &Prior, x: &[f64], v: f64) -> Result<QuadraticGap> {
    let eval = marginal_eval(prior, x, v)?;
    let v2 = v * v;
    let value = v2 * (eval.grad_norm_sq() - 2.0 * eval.laplacian_m_over_m);
    let sqrt_form = -4.0 * v2 * eval.laplacian_sqrt_m_over_sqrt_m;
    let scale = value.abs().max(sqrt_form.abs()).max(v2 * eval.laplacian_m_over_m.abs());
    if (value - sqrt_form).abs() > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "quadratic gap forms disagree: {value} vs {sqrt_form}"
        )));
    }
    Ok(QuadraticGap { value, sqrt_form })
}
