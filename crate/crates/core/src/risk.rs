//! Monte-Carlo risk evaluation.
//!
//! All estimators compared at one parameter value share their Gaussian draws,
//! and the marginal form of the KL gap uses the same draw `Z` for
//! `W = mu + sqrt(v_w) Z` and `X = mu + sqrt(v_x) Z`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::marginal::{marginal_eval, marginal_log_density};
use crate::mc::{fill_normal, mc_scalar, mc_vec, RiskEstimate};
use crate::mean::{estimate_mean, quadratic_gap_unbiased, MeanEstimator};
use crate::model::ModelConfig;
use crate::predictive::{log_isotropic_normal, logpdf_uniform, PredictiveDensity, PredictiveKind};
use crate::prior::Prior;
use crate::quadrature::GaussLegendre;
use crate::template::{EstimatorTemplate, Instance};

/// Order of the Gauss-Legendre rule for the variance integral.
pub const IDENTITY_NODES: usize = 32;

fn shifted(mu: &[f64], scale: f64, z: &[f64]) -> Vec<f64> {
    mu.iter().zip(z).map(|(m, zi)| m + scale * zi).collect()
}

/// KL loss `int p(y | mu) log[p(y | mu) / p_hat(y | x)] dy` of one fitted
/// density, sampling `Y ~ N(mu, v_y I)`.
pub fn kl_loss_mc(
    model: &ModelConfig,
    mu: &[f64],
    density: &PredictiveDensity,
    replicates: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    check_len(model.p(), mu.len())?;
    let sy = model.v_y().sqrt();
    mc_scalar(replicates, seed, 0, |rng| {
        let mut z = vec![0.0; model.p()];
        fill_normal(rng, &mut z);
        let y = shifted(mu, sy, &z);
        Ok(log_isotropic_normal(&y, mu, model.v_y()) - density.logpdf(&y)?)
    })
}

/// Risks of several estimators on common draws, plus the paired differences
/// `risk[0] - risk[i]` against the first one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub risks: Vec<RiskEstimate>,
    pub gaps: Vec<RiskEstimate>,
}

fn sweep_from(mut values: Vec<RiskEstimate>, n: usize) -> Sweep {
    let gaps = values.split_off(n);
    Sweep { risks: values, gaps }
}

/// KL risks `E_X L(mu, p_hat(. | X))` of each kind, with one draw of `Y` per
/// draw of `X`.
pub fn kl_risk_mc(
    model: &ModelConfig,
    mu: &[f64],
    kinds: &[PredictiveKind],
    replicates: usize,
    seed: u64,
) -> Result<Sweep> {
    check_len(model.p(), mu.len())?;
    let n = kinds.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no estimators to compare".into()));
    }
    let (sx, sy) = (model.v_x().sqrt(), model.v_y().sqrt());
    let p = model.p();
    let values = mc_vec(replicates, seed, 0, 2 * n, |rng, out| {
        let mut z = vec![0.0; 2 * p];
        fill_normal(rng, &mut z);
        let x = shifted(mu, sx, &z[..p]);
        let y = shifted(mu, sy, &z[p..]);
        let truth = log_isotropic_normal(&y, mu, model.v_y());
        for (i, kind) in kinds.iter().enumerate() {
            let d = PredictiveDensity::new(kind.clone(), *model, &x)?;
            out[i] = truth - d.logpdf(&y)?;
        }
        for i in 0..n {
            out[n + i] = out[0] - out[i];
        }
        Ok(())
    })?;
    Ok(sweep_from(values, n))
}

/// `R_KL(mu, p_hat_U) - R_KL(mu, p_hat_pi) = E log m(W; v_w) - E log m(X; v_x)`.
pub fn kl_gap_via_marginals(
    prior: &Prior,
    model: &ModelConfig,
    mu: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    check_len(model.p(), mu.len())?;
    prior.check_dimension(model.p())?;
    let (sx, sw) = (model.v_x().sqrt(), model.v_w().sqrt());
    mc_scalar(replicates, seed, 0, |rng| {
        let mut z = vec![0.0; model.p()];
        fill_normal(rng, &mut z);
        let w = shifted(mu, sw, &z);
        let x = shifted(mu, sx, &z);
        Ok(marginal_log_density(prior, &w, model.v_w())? - marginal_log_density(prior, &x, model.v_x())?)
    })
}

/// Quadratic risks `E |mu_hat(X) - mu|^2` on common draws, with paired
/// differences against the first estimator.
pub fn quadratic_risk_sweep(
    estimators: &[MeanEstimator],
    mu: &[f64],
    v: f64,
    replicates: usize,
    seed: u64,
) -> Result<Sweep> {
    let n = estimators.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no estimators to compare".into()));
    }
    let s = v.sqrt();
    let values = mc_vec(replicates, seed, 0, 2 * n, |rng, out| {
        let mut z = vec![0.0; mu.len()];
        fill_normal(rng, &mut z);
        let x = shifted(mu, s, &z);
        for (i, est) in estimators.iter().enumerate() {
            let m = estimate_mean(est, &x, v)?;
            out[i] = m.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
        }
        for i in 0..n {
            out[n + i] = out[0] - out[i];
        }
        Ok(())
    })?;
    Ok(sweep_from(values, n))
}

/// `E |mu_hat(X) - mu|^2` for `X ~ N(mu, v I)`.
pub fn quadratic_risk_mc(est: &MeanEstimator, mu: &[f64], v: f64, replicates: usize, seed: u64) -> Result<RiskEstimate> {
    Ok(quadratic_risk_sweep(std::slice::from_ref(est), mu, v, replicates, seed)?.risks[0])
}

/// Both sides of the KL/quadratic risk identity
/// `E log m(W; v_w) - E log m(X; v_x) = 1/2 int_{v_w}^{v_x} E_v[|grad log m|^2 - 2 lap m / m] dv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: RiskEstimate,
    pub rhs: RiskEstimate,
}

impl IdentityCheck {
    /// `|lhs - rhs|` in units of the combined standard error.
    pub fn z_score(&self) -> f64 {
        let d = self.lhs.mean - self.rhs.mean;
        if d == 0.0 {
            return 0.0;
        }
        d.abs() / (self.lhs.std_error.powi(2) + self.rhs.std_error.powi(2)).sqrt()
    }
}

/// Evaluates the identity with two independent streams. The right side uses
/// a `nodes`-point Gauss-Legendre rule in `v`; each replicate evaluates the
/// unbiased quadratic gap at every node on one shared draw.
pub fn risk_identity_check(
    prior: &Prior,
    model: &ModelConfig,
    mu: &[f64],
    nodes: usize,
    replicates: usize,
    seed: u64,
) -> Result<IdentityCheck> {
    let lhs = kl_gap_via_marginals(prior, model, mu, replicates, seed)?;
    let rule: Vec<(f64, f64)> = GaussLegendre::new(nodes).on_interval(model.v_w(), model.v_x()).collect();
    let rhs = mc_scalar(replicates, seed, 1, |rng| {
        let mut z = vec![0.0; mu.len()];
        fill_normal(rng, &mut z);
        let mut acc = 0.0;
        for &(v, weight) in &rule {
            let x = shifted(mu, v.sqrt(), &z);
            // the quadratic gap at variance v carries a factor v^2
            acc += weight * quadratic_gap_unbiased(prior, &x, v)?.value / (v * v);
        }
        Ok(0.5 * acc)
    })?;
    Ok(IdentityCheck { lhs, rhs })
}

/// Finite-difference and analytic forms of `d/dv E log m(mu + sqrt(v) Z; v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub finite_difference: RiskEstimate,
    pub analytic: RiskEstimate,
}

/// Compares a central difference (step `h`, common draws) of the expected
/// log-marginal with `E[lap m / m - |grad log m|^2 / 2]`.
pub fn log_marginal_slope_check(
    prior: &Prior,
    mu: &[f64],
    v: f64,
    h: f64,
    replicates: usize,
    seed: u64,
) -> Result<SlopeCheck> {
    if !(h > 0.0 && h < v) {
        return Err(Error::InvalidParameter(format!("step h = {h} must lie in (0, v)")));
    }
    let finite_difference = mc_scalar(replicates, seed, 0, |rng| {
        let mut z = vec![0.0; mu.len()];
        fill_normal(rng, &mut z);
        let up = marginal_log_density(prior, &shifted(mu, (v + h).sqrt(), &z), v + h)?;
        let down = marginal_log_density(prior, &shifted(mu, (v - h).sqrt(), &z), v - h)?;
        Ok((up - down) / (2.0 * h))
    })?;
    let analytic = mc_scalar(replicates, seed, 1, |rng| {
        let mut z = vec![0.0; mu.len()];
        fill_normal(rng, &mut z);
        let e = marginal_eval(prior, &shifted(mu, v.sqrt(), &z), v)?;
        Ok(e.laplacian_m_over_m - 0.5 * e.grad_norm_sq())
    })?;
    Ok(SlopeCheck {
        finite_difference,
        analytic,
    })
}

/// A point and variance at which a condition was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub z: Vec<f64>,
    pub v: f64,
    pub value: f64,
}

/// Outcome of checking `f(z, v) <= tolerance` over a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub holds: bool,
    /// Location of the largest value found.
    pub worst: Witness,
}

/// Sign scan of the two sufficient conditions for minimaxity over
/// `v in [v_w, v_x]`: superharmonic `m` and superharmonic `sqrt(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxReport {
    /// `lap m / m <= tol`
    pub superharmonic_m: Condition,
    /// `lap sqrt(m) / sqrt(m) <= tol`
    pub superharmonic_sqrt_m: Condition,
    pub points: usize,
    pub variances: Vec<f64>,
}

/// Evaluates both conditions at every point for `v_grid` variances spread
/// evenly over `[v_w, v_x]`.
pub fn minimaxity_scan(
    prior: &Prior,
    model: &ModelConfig,
    points: &[Vec<f64>],
    v_grid: usize,
    tolerance: f64,
) -> Result<MinimaxReport> {
    if points.is_empty() || v_grid == 0 {
        return Err(Error::InvalidParameter("minimaxity scan needs points and a variance grid".into()));
    }
    let variances: Vec<f64> = if v_grid == 1 {
        vec![model.v_x()]
    } else {
        (0..v_grid)
            .map(|i| model.v_w() + (model.v_x() - model.v_w()) * i as f64 / (v_grid - 1) as f64)
            .collect()
    };
    let blank = || Witness {
        z: Vec::new(),
        v: f64::NAN,
        value: f64::NEG_INFINITY,
    };
    let (mut wm, mut ws) = (blank(), blank());
    for z in points {
        check_len(model.p(), z.len())?;
        for &v in &variances {
            let e = marginal_eval(prior, z, v)?;
            if e.laplacian_m_over_m > wm.value {
                wm = Witness {
                    z: z.clone(),
                    v,
                    value: e.laplacian_m_over_m,
                };
            }
            if e.laplacian_sqrt_m_over_sqrt_m > ws.value {
                ws = Witness {
                    z: z.clone(),
                    v,
                    value: e.laplacian_sqrt_m_over_sqrt_m,
                };
            }
        }
    }
    Ok(MinimaxReport {
        superharmonic_m: Condition {
            holds: wm.value <= tolerance,
            worst: wm,
        },
        superharmonic_sqrt_m: Condition {
            holds: ws.value <= tolerance,
            worst: ws,
        },
        points: points.len(),
        variances,
    })
}

/// `count` scan points in `R^p`: the origin, then uniformly random directions
/// at radii spread evenly over `(0, max_radius]`.
pub fn scan_points<R: Rng + ?Sized>(p: usize, count: usize, max_radius: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; p]];
    for i in 1..count {
        let mut d = vec![0.0; p];
        fill_normal(rng, &mut d);
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = max_radius * i as f64 / (count - 1) as f64;
        out.push(d.iter().map(|x| r * x / norm).collect());
    }
    out
}

/// Direction of the mean ray `mu = c * direction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ray {
    /// `1_p`
    Ones,
    /// First coordinate axis.
    E1,
}

impl Ray {
    pub fn point(self, c: f64, p: usize) -> Vec<f64> {
        match self {
            Ray::Ones => vec![c; p],
            Ray::E1 => {
                let mut v = vec![0.0; p];
                v[0] = c;
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskCurveConfig {
    pub v_x: f64,
    pub v_y: f64,
    pub dims: Vec<usize>,
    pub estimators: Vec<EstimatorTemplate>,
    pub ray: Ray,
    pub c_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

/// KL risk gap of one estimator against `p_hat_U` at `mu = c * ray`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurveRow {
    pub c: f64,
    pub p: usize,
    pub estimator: String,
    pub gap: f64,
    pub se: f64,
    pub replicates: usize,
    pub seed: u64,
}

fn validate_grid(c_grid: &[f64]) -> Result<()> {
    if c_grid.is_empty() {
        return Err(Error::InvalidParameter("the c-grid is empty".into()));
    }
    if c_grid.iter().any(|c| !c.is_finite()) || c_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("the c-grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Gap curves for every `(p, estimator, c)`.
///
/// Prior-based estimators use the marginal form of the gap; empirical Bayes
/// rules use paired KL risks. All grid points reuse the same draws, so each
/// curve is smooth in `c`.
pub fn risk_curve(cfg: &RiskCurveConfig) -> Result<Vec<RiskCurveRow>> {
    validate_grid(&cfg.c_grid)?;
    if cfg.dims.is_empty() || cfg.dims.contains(&0) {
        return Err(Error::InvalidParameter("dims must be nonempty and positive".into()));
    }
    let mut rows = Vec::new();
    for &p in &cfg.dims {
        let model = ModelConfig::new(p, cfg.v_x, cfg.v_y)?;
        for template in &cfg.estimators {
            let instance = template.instantiate(p, cfg.v_x)?;
            for &c in &cfg.c_grid {
                let mu = cfg.ray.point(c, p);
                let est = match &instance {
                    Instance::Prior(prior) => kl_gap_via_marginals(prior, &model, &mu, cfg.replicates, cfg.seed)?,
                    Instance::EmpiricalBayes { k } => {
                        let kinds = [PredictiveKind::Uniform, PredictiveKind::EmpiricalBayes { k: *k }];
                        kl_risk_mc(&model, &mu, &kinds, cfg.replicates, cfg.seed)?.gaps[1]
                    }
                };
                rows.push(RiskCurveRow {
                    c,
                    p,
                    estimator: template.to_string(),
                    gap: est.mean,
                    se: est.std_error,
                    replicates: cfg.replicates,
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySliceConfig {
    pub model: ModelConfig,
    pub prior: Prior,
    pub x: Vec<f64>,
    /// Coordinates varied along the two grid axes; all others are zero.
    pub axes: [usize; 2],
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub y1: f64,
    pub y2: f64,
    pub p_uniform: f64,
    pub p_bayes: f64,
}

/// `p_hat_U` and `p_hat_pi` over a planar grid of `y`.
pub fn density_slice(cfg: &DensitySliceConfig) -> Result<Vec<SliceRow>> {
    let p = cfg.model.p();
    check_len(p, cfg.x.len())?;
    let [a, b] = cfg.axes;
    if a >= p || b >= p || a == b {
        return Err(Error::InvalidParameter(format!("slice axes {a}, {b} invalid in dimension {p}")));
    }
    if cfg.y1.is_empty() || cfg.y2.is_empty() {
        return Err(Error::InvalidParameter("the slice grid is empty".into()));
    }
    let density = PredictiveDensity::new(
        PredictiveKind::Bayes {
            prior: cfg.prior.clone(),
        },
        cfg.model,
        &cfg.x,
    )?;
    let mut rows = Vec::with_capacity(cfg.y1.len() * cfg.y2.len());
    let mut y = vec![0.0; p];
    for &y1 in &cfg.y1 {
        for &y2 in &cfg.y2 {
            y[a] = y1;
            y[b] = y2;
            let lu = logpdf_uniform(&cfg.model, &cfg.x, &y)?;
            let lb = density.logpdf(&y)?;
            rows.push(SliceRow {
                y1,
                y2,
                p_uniform: lu.exp(),
                p_bayes: lb.exp(),
            });
        }
    }
    Ok(rows)
}
