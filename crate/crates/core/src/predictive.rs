//! Predictive densities `p_hat(y | x)` for `Y ~ N_p(mu, v_y I)` given
//! `X ~ N_p(mu, v_x I)`.
//!
//! A Bayes rule is the uniform-prior density `N_p(x, (v_x + v_y) I)`
//! reweighted by the marginal ratio `m(w; v_w) / m(x; v_x)`, where `w` is the
//! precision-weighted average of `x` and `y`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::marginal::{log_sum_exp, marginal_eval, marginal_log_density, norm_sq};
use crate::mc::{fill_normal, mc_scalar, RiskEstimate};
use crate::model::ModelConfig;
use crate::prior::{Mixture, Prior};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Proposal draws per requested sample in importance resampling.
pub const POOL_FACTOR: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictiveKind {
    /// `N_p(x, (v_x + v_y) I)`.
    Uniform,
    Bayes { prior: Prior },
    /// Mixture Bayes rule written as a posterior-weighted combination of the
    /// component rules.
    MultipleShrinkage { prior: Mixture },
    /// `N_p(c x, (v_y + c v_x) I)` with `c = (1 - k v_x / |x|^2)_+`.
    EmpiricalBayes { k: f64 },
    /// The true density `N_p(mu, v_y I)`.
    Oracle { mu: Vec<f64> },
}

impl PredictiveKind {
    /// The default empirical Bayes rule, `k = p - 2`.
    pub fn empirical_bayes(p: usize) -> Self {
        PredictiveKind::EmpiricalBayes {
            k: p as f64 - 2.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            PredictiveKind::Uniform => "uniform".into(),
            PredictiveKind::Bayes { prior } => prior.label(),
            PredictiveKind::MultipleShrinkage { prior } => Prior::Mixture(prior.clone()).label(),
            PredictiveKind::EmpiricalBayes { k } => format!("eb(k={k})"),
            PredictiveKind::Oracle { .. } => "oracle".into(),
        }
    }
}

/// A predictive density conditioned on one observation `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDensity {
    kind: PredictiveKind,
    model: ModelConfig,
    x: Vec<f64>,
    /// `log m(x; v_x)` for Bayes kinds; per-component `log w_i m_i(x; v_x)`
    /// for multiple shrinkage.
    cached: Vec<f64>,
}

impl PredictiveDensity {
    pub fn new(kind: PredictiveKind, model: ModelConfig, x: &[f64]) -> Result<Self> {
        check_len(model.p(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conditioning point x".into()));
        }
        let cached = match &kind {
            PredictiveKind::Bayes { prior } => {
                prior.check_dimension(model.p())?;
                vec![marginal_log_density(prior, x, model.v_x())?]
            }
            PredictiveKind::MultipleShrinkage { prior } => {
                let mut logs = Vec::with_capacity(prior.len());
                for (w, c) in prior.weights().iter().zip(prior.components()) {
                    c.check_dimension(model.p())?;
                    logs.push(if *w > 0.0 {
                        w.ln() + marginal_log_density(c, x, model.v_x())?
                    } else {
                        f64::NEG_INFINITY
                    });
                }
                if log_sum_exp(&logs) == f64::NEG_INFINITY {
                    return Err(Error::DegenerateMixture);
                }
                logs
            }
            PredictiveKind::EmpiricalBayes { k } => {
                if !(*k >= 0.0 && k.is_finite()) {
                    return Err(Error::InvalidParameter(format!("empirical Bayes k = {k} must be nonnegative")));
                }
                Vec::new()
            }
            PredictiveKind::Oracle { mu } => {
                check_len(model.p(), mu.len())?;
                Vec::new()
            }
            PredictiveKind::Uniform => Vec::new(),
        };
        Ok(Self {
            kind,
            model,
            x: x.to_vec(),
            cached,
        })
    }

    pub fn kind(&self) -> &PredictiveKind {
        &self.kind
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// `log p_hat(y | x)`.
    pub fn logpdf(&self, y: &[f64]) -> Result<f64> {
        check_len(self.model.p(), y.len())?;
        match &self.kind {
            PredictiveKind::Uniform => logpdf_uniform(&self.model, &self.x, y),
            PredictiveKind::Bayes { .. } | PredictiveKind::MultipleShrinkage { .. } => {
                Ok(self.log_ratio(y)? + logpdf_uniform(&self.model, &self.x, y)?)
            }
            PredictiveKind::EmpiricalBayes { k } => logpdf_empirical_bayes(&self.model, *k, &self.x, y),
            PredictiveKind::Oracle { mu } => Ok(log_isotropic_normal(y, mu, self.model.v_y())),
        }
    }

    /// `log p_hat(y | x) - log p_hat_U(y | x)`.
    pub fn log_ratio(&self, y: &[f64]) -> Result<f64> {
        check_len(self.model.p(), y.len())?;
        match &self.kind {
            PredictiveKind::Uniform => Ok(0.0),
            PredictiveKind::Bayes { prior } => {
                let w = self.model.w_statistic(&self.x, y);
                Ok(marginal_log_density(prior, &w, self.model.v_w())? - self.cached[0])
            }
            PredictiveKind::MultipleShrinkage { prior } => {
                // log sum_i p(B_i | x) p_hat_i(y | x) / p_hat_U(y | x)
                let w = self.model.w_statistic(&self.x, y);
                let total = log_sum_exp(&self.cached);
                let mut terms = Vec::with_capacity(prior.len());
                for ((c, lx), wt) in prior.components().iter().zip(&self.cached).zip(prior.weights()) {
                    if *lx == f64::NEG_INFINITY {
                        continue;
                    }
                    let post = lx - total;
                    let component_ratio = marginal_log_density(c, &w, self.model.v_w())? - (lx - wt.ln());
                    terms.push(post + component_ratio);
                }
                Ok(log_sum_exp(&terms))
            }
            PredictiveKind::EmpiricalBayes { .. } | PredictiveKind::Oracle { .. } => {
                Ok(self.logpdf(y)? - logpdf_uniform(&self.model, &self.x, y)?)
            }
        }
    }

    /// Mean of the density in `y`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        let vx = self.model.v_x();
        match &self.kind {
            PredictiveKind::Uniform => Ok(self.x.clone()),
            PredictiveKind::Bayes { prior } => {
                let e = marginal_eval(prior, &self.x, vx)?;
                Ok(self.x.iter().zip(&e.grad_log_m).map(|(a, g)| a + vx * g).collect())
            }
            PredictiveKind::MultipleShrinkage { prior } => {
                let e = marginal_eval(&Prior::Mixture(prior.clone()), &self.x, vx)?;
                Ok(self.x.iter().zip(&e.grad_log_m).map(|(a, g)| a + vx * g).collect())
            }
            PredictiveKind::EmpiricalBayes { k } => {
                let c = eb_coefficient(*k, vx, &self.x);
                Ok(self.x.iter().map(|a| c * a).collect())
            }
            PredictiveKind::Oracle { mu } => Ok(mu.clone()),
        }
    }

    /// Draws `count` samples using `rng`.
    ///
    /// Gaussian kinds are sampled exactly. Bayes kinds use importance
    /// resampling from `p_hat_U` with the exact marginal-ratio weights; the
    /// draw fails if the effective sample size of the proposal pool falls
    /// below `count`.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let p = self.model.p();
        let gaussian = |center: Vec<f64>, var: f64, rng: &mut R| {
            let sd = var.sqrt();
            (0..count)
                .map(|_| {
                    let mut z = vec![0.0; p];
                    fill_normal(rng, &mut z);
                    z.iter().zip(&center).map(|(zi, c)| c + sd * zi).collect()
                })
                .collect()
        };
        match &self.kind {
            PredictiveKind::Uniform => Ok(gaussian(self.x.clone(), self.model.v_x() + self.model.v_y(), rng)),
            PredictiveKind::Oracle { mu } => Ok(gaussian(mu.clone(), self.model.v_y(), rng)),
            PredictiveKind::EmpiricalBayes { k } => {
                let c = eb_coefficient(*k, self.model.v_x(), &self.x);
                let center = self.x.iter().map(|a| c * a).collect();
                Ok(gaussian(center, self.model.v_y() + c * self.model.v_x(), rng))
            }
            PredictiveKind::Bayes { .. } | PredictiveKind::MultipleShrinkage { .. } => {
                let pool = self.importance_sample(POOL_FACTOR * count.max(1), rng)?;
                if pool.ess < count as f64 {
                    return Err(Error::LowEffectiveSampleSize {
                        ess: pool.ess,
                        required: count as f64,
                    });
                }
                let index = WeightedIndex::new(&pool.weights)
                    .map_err(|e| Error::Numerical(format!("importance weights: {e}")))?;
                Ok((0..count).map(|_| pool.ys[index.sample(rng)].clone()).collect())
            }
        }
    }

    /// `n` proposal draws from `p_hat_U(. | x)` with self-normalized weights
    /// proportional to `p_hat / p_hat_U`.
    pub fn importance_sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<WeightedSample> {
        let p = self.model.p();
        let sd = (self.model.v_x() + self.model.v_y()).sqrt();
        let mut ys = Vec::with_capacity(n);
        let mut logw = Vec::with_capacity(n);
        for _ in 0..n {
            let mut z = vec![0.0; p];
            fill_normal(rng, &mut z);
            let y: Vec<f64> = z.iter().zip(&self.x).map(|(zi, xi)| xi + sd * zi).collect();
            logw.push(self.log_ratio(&y)?);
            ys.push(y);
        }
        let total = log_sum_exp(&logw);
        if !total.is_finite() {
            return Err(Error::NonFinite("importance weights".into()));
        }
        let weights: Vec<f64> = logw.iter().map(|l| (l - total).exp()).collect();
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        Ok(WeightedSample { ys, weights, ess })
    }
}

/// Proposal draws with self-normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub ys: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `1 / sum w_i^2`
    pub ess: f64,
}

/// `count` draws from `density`, reproducible from `seed`.
pub fn sample_predictive(density: &PredictiveDensity, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    density.sample(count, &mut rng)
}

pub(crate) fn log_isotropic_normal(y: &[f64], mean: &[f64], var: f64) -> f64 {
    let d2: f64 = y.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * y.len() as f64 * (LN_2PI + var.ln()) - 0.5 * d2 / var
}

/// `log N_p(y; x, (v_x + v_y) I)`.
pub fn logpdf_uniform(model: &ModelConfig, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(model.p(), x.len())?;
    check_len(model.p(), y.len())?;
    Ok(log_isotropic_normal(y, x, model.v_x() + model.v_y()))
}

/// `b(x, y) = m(w; v_w) / m(x; v_x)`.
pub fn shrinkage_factor(prior: &Prior, model: &ModelConfig, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(model.p(), x.len())?;
    check_len(model.p(), y.len())?;
    let w = model.w_statistic(x, y);
    Ok((marginal_log_density(prior, &w, model.v_w())? - marginal_log_density(prior, x, model.v_x())?).exp())
}

/// `log p_hat_pi(y | x) = log b(x, y) + log p_hat_U(y | x)`.
pub fn logpdf_bayes(prior: &Prior, model: &ModelConfig, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(model.p(), x.len())?;
    check_len(model.p(), y.len())?;
    let w = model.w_statistic(x, y);
    let log_b = marginal_log_density(prior, &w, model.v_w())? - marginal_log_density(prior, x, model.v_x())?;
    Ok(log_b + logpdf_uniform(model, x, y)?)
}

fn eb_coefficient(k: f64, v_x: f64, x: &[f64]) -> f64 {
    let r2 = norm_sq(x);
    if r2 == 0.0 {
        0.0
    } else {
        (1.0 - k * v_x / r2).max(0.0)
    }
}

/// Log-density of `N_p(c x, (v_y + c v_x) I)` with `c = (1 - k v_x / |x|^2)_+`.
pub fn logpdf_empirical_bayes(model: &ModelConfig, k: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(model.p(), x.len())?;
    check_len(model.p(), y.len())?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("empirical Bayes k = {k} must be nonnegative")));
    }
    let c = eb_coefficient(k, model.v_x(), x);
    let center: Vec<f64> = x.iter().map(|a| c * a).collect();
    Ok(log_isotropic_normal(y, &center, model.v_y() + c * model.v_x()))
}

/// Log of the positive-part James-Stein pseudo-marginal: `k_p |z|^{-(p-2)}`
/// when `|z|^2 / v >= p - 2`, else `v^{-(p-2)/2} exp(-|z|^2 / (2v))`, with
/// `k_p = (e / (p-2))^{-(p-2)/2}`.
pub fn log_pseudo_marginal_js(z: &[f64], v: f64) -> Result<f64> {
    let p = z.len();
    if p < 3 {
        return Err(Error::InvalidParameter("the James-Stein pseudo-marginal needs p >= 3".into()));
    }
    let q = (p - 2) as f64;
    let r2 = norm_sq(z);
    if r2 / v >= q {
        let ln_kp = -0.5 * q * (1.0 - q.ln());
        Ok(ln_kp - 0.5 * q * r2.ln())
    } else {
        Ok(-0.5 * q * v.ln() - 0.5 * r2 / v)
    }
}

/// Monte-Carlo estimate of `int m_JS+(w; v_w) / m_JS+(x; v_x) p_hat_U(y | x) dy`,
/// the total mass of the density obtained by plugging the pseudo-marginal
/// into the marginal-ratio form. A genuine marginal would give exactly 1.
pub fn pseudo_marginal_normalization(model: &ModelConfig, x: &[f64], replicates: usize, seed: u64) -> Result<RiskEstimate> {
    check_len(model.p(), x.len())?;
    let denom = log_pseudo_marginal_js(x, model.v_x())?;
    let sd = (model.v_x() + model.v_y()).sqrt();
    let p = model.p();
    mc_scalar(replicates, seed, 0, |rng| {
        let mut z = vec![0.0; p];
        fill_normal(rng, &mut z);
        let y: Vec<f64> = z.iter().zip(x).map(|(zi, xi)| xi + sd * zi).collect();
        let w = model.w_statistic(x, &y);
        Ok((log_pseudo_marginal_js(&w, model.v_w())? - denom).exp())
    })
}

/// Monte-Carlo estimate of `int p_hat(y | x) dy` by importance sampling from
/// `p_hat_U(. | x)`.
pub fn total_mass_mc(density: &PredictiveDensity, replicates: usize, seed: u64) -> Result<RiskEstimate> {
    let p = density.model().p();
    let sd = (density.model().v_x() + density.model().v_y()).sqrt();
    let x = density.x();
    mc_scalar(replicates, seed, 0, |rng| {
        let mut z = vec![0.0; p];
        fill_normal(rng, &mut z);
        let y: Vec<f64> = z.iter().zip(x).map(|(zi, xi)| xi + sd * zi).collect();
        Ok(density.log_ratio(&y)?.exp())
    })
}
