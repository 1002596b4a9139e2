//! Prior marginals `m(z; v) = int N_p(z; mu, v I) pi(mu) dmu` and their
//! derivatives.
//!
//! Every spherically symmetric family is a scale mixture of centred normals,
//! so the marginal at radius `r` in effective dimension `k` is a one-dimensional
//! integral over the mixing scale. Gradients and Laplacians come from
//! differentiating under that integral:
//!
//! ```text
//! grad m   = -e * int g(s) N_k(r; 0, tau) / tau ds          (e = z - P_B z)
//! lap  m   = 2 d/dv m                                       (heat equation)
//! ```
//!
//! The Laplacian is evaluated in its heat-equation form (integrated by parts
//! over the mixing scale), which has no cancellation in the tails where the
//! marginal is close to harmonic.


use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::prior::{Mixture, Prior};
use crate::quadrature::{integrate, Tolerance};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Series/limit switch for the harmonic closed form: below this value of
/// `r^2 / (2 v)` the incomplete-gamma ratio is taken from its Taylor limit.
pub const HARMONIC_SMALL_ARG: f64 = 1e-8;

/// Tolerance used for the Strawderman mixing integral.
pub const MIXING_TOLERANCE: Tolerance = Tolerance::new(1e-300, 1e-10);

/// Value, gradient and Laplacian ratios of a marginal at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEval {
    pub log_m: f64,
    pub grad_log_m: Vec<f64>,
    /// `lap m / m`
    pub laplacian_m_over_m: f64,
    /// `lap sqrt(m) / sqrt(m) = lap m / (2 m) - |grad log m|^2 / 4`
    pub laplacian_sqrt_m_over_sqrt_m: f64,
}

impl MarginalEval {
    fn new(log_m: f64, grad_log_m: Vec<f64>, laplacian_m_over_m: f64) -> Self {
        let g2: f64 = grad_log_m.iter().map(|g| g * g).sum();
        Self {
            log_m,
            grad_log_m,
            laplacian_m_over_m,
            laplacian_sqrt_m_over_sqrt_m: 0.5 * laplacian_m_over_m - 0.25 * g2,
        }
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.grad_log_m.iter().map(|g| g * g).sum()
    }
}

/// Radial part of a spherically symmetric marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Radial {
    pub log_m: f64,
    /// `grad log m = -slope * e`
    pub slope: f64,
    pub lap_over_m: f64,
}

/// `log m(z; v)`.
pub fn marginal_log_density(prior: &Prior, z: &[f64], v: f64) -> Result<f64> {
    check_variance(v)?;
    match prior {
        Prior::Uniform => Ok(0.0),
        Prior::Harmonic | Prior::Strawderman { .. } | Prior::Normal { .. } => {
            prior.check_dimension(z.len())?;
            radial_log_m(prior, z.len(), norm_sq(z), v)
        }
        Prior::Recentered { base, subspace } => {
            prior.check_dimension(z.len())?;
            let e = subspace.residual(z)?;
            radial_log_m(base, subspace.codim(), norm_sq(&e), v)
        }
        Prior::Mixture(m) => {
            let logs = component_log_terms(m, z, v)?;
            let lse = log_sum_exp(&logs);
            if lse == f64::NEG_INFINITY {
                return Err(Error::DegenerateMixture);
            }
            Ok(lse)
        }
    }
}

/// Value, gradient and Laplacians of `m(z; v)`.
pub fn marginal_eval(prior: &Prior, z: &[f64], v: f64) -> Result<MarginalEval> {
    check_variance(v)?;
    match prior {
        Prior::Uniform => Ok(MarginalEval::new(0.0, vec![0.0; z.len()], 0.0)),
        Prior::Harmonic | Prior::Strawderman { .. } | Prior::Normal { .. } => {
            prior.check_dimension(z.len())?;
            let rad = radial_eval(prior, z.len(), norm_sq(z), v)?;
            let grad = z.iter().map(|zi| -rad.slope * zi).collect();
            Ok(MarginalEval::new(rad.log_m, grad, rad.lap_over_m))
        }
        Prior::Recentered { base, subspace } => {
            prior.check_dimension(z.len())?;
            let e = subspace.residual(z)?;
            let rad = radial_eval(base, subspace.codim(), norm_sq(&e), v)?;
            let grad = e.iter().map(|ei| -rad.slope * ei).collect();
            Ok(MarginalEval::new(rad.log_m, grad, rad.lap_over_m))
        }
        Prior::Mixture(m) => {
            let evals: Vec<Option<MarginalEval>> = m
                .weights()
                .iter()
                .zip(m.components())
                .map(|(&w, c)| if w > 0.0 { marginal_eval(c, z, v).map(Some) } else { Ok(None) })
                .collect::<Result<_>>()?;
            let logs: Vec<f64> = evals
                .iter()
                .zip(m.weights())
                .map(|(e, w)| e.as_ref().map_or(f64::NEG_INFINITY, |e| w.ln() + e.log_m))
                .collect();
            let log_m = log_sum_exp(&logs);
            if log_m == f64::NEG_INFINITY {
                return Err(Error::DegenerateMixture);
            }
            let mut grad = vec![0.0; z.len()];
            let mut lap = 0.0;
            for (e, l) in evals.iter().zip(&logs) {
                let Some(e) = e else { continue };
                let post = (l - log_m).exp();
                for (g, gi) in grad.iter_mut().zip(&e.grad_log_m) {
                    *g += post * gi;
                }
                lap += post * e.laplacian_m_over_m;
            }
            Ok(MarginalEval::new(log_m, grad, lap))
        }
    }
}

/// Posterior component probabilities `w_i m_i(z; v) / sum_j w_j m_j(z; v)`.
pub fn mixture_weights(mixture: &Mixture, z: &[f64], v: f64) -> Result<Vec<f64>> {
    check_variance(v)?;
    let logs = component_log_terms(mixture, z, v)?;
    let total = log_sum_exp(&logs);
    if total == f64::NEG_INFINITY {
        return Err(Error::DegenerateMixture);
    }
    Ok(logs.iter().map(|l| (l - total).exp()).collect())
}

fn component_log_terms(m: &Mixture, z: &[f64], v: f64) -> Result<Vec<f64>> {
    m.weights()
        .iter()
        .zip(m.components())
        .map(|(&w, c)| {
            if w > 0.0 {
                Ok(w.ln() + marginal_log_density(c, z, v)?)
            } else {
                Ok(f64::NEG_INFINITY)
            }
        })
        .collect()
}

fn check_variance(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("variance v = {v} must be positive")))
    }
}

pub(crate) fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log N_k(r; 0, tau)` for a point at squared radius `r2`.
pub(crate) fn log_normal_radial(k: usize, r2: f64, tau: f64) -> f64 {
    -0.5 * k as f64 * (LN_2PI + tau.ln()) - 0.5 * r2 / tau
}

fn radial_log_m(base: &Prior, k: usize, r2: f64, v: f64) -> Result<f64> {
    match base {
        Prior::Normal { nu } => Ok(log_normal_radial(k, r2, v + nu)),
        Prior::Harmonic => Ok(harmonic_log_j(k, 0, r2, v)),
        Prior::Strawderman { a, v0 } => Ok(strawderman(*a, *v0, k, r2, v, false)?.log_m),
        _ => unreachable!("radial evaluation of a non-spherical prior"),
    }
}

pub(crate) fn radial_eval(base: &Prior, k: usize, r2: f64, v: f64) -> Result<Radial> {
    match base {
        Prior::Normal { nu } => {
            let tau = v + nu;
            Ok(Radial {
                log_m: log_normal_radial(k, r2, tau),
                slope: 1.0 / tau,
                lap_over_m: r2 / (tau * tau) - k as f64 / tau,
            })
        }
        Prior::Harmonic => {
            let log_m = harmonic_log_j(k, 0, r2, v);
            let slope = (harmonic_log_j(k, 1, r2, v) - log_m).exp();
            // lap m = 2 dm/dv = -2 N_k(r; 0, v)
            let lap_over_m = -2.0 * (log_normal_radial(k, r2, v) - log_m).exp();
            Ok(Radial {
                log_m,
                slope,
                lap_over_m,
            })
        }
        Prior::Strawderman { a, v0 } => strawderman(*a, *v0, k, r2, v, true),
        _ => unreachable!("radial evaluation of a non-spherical prior"),
    }
}

/// `log J_j` with `J_j = int_v^inf u^{-j} N_k(r; 0, u) du`.
///
/// With `a = j + k/2 - 1` and `x = r^2 / (2v)`,
/// `J_j = (2 pi)^{-k/2} v^{-a} gamma(a, x) / x^a`, where `gamma` is the lower
/// incomplete gamma function. `J_0` is the harmonic marginal.
pub(crate) fn harmonic_log_j(k: usize, j: usize, r2: f64, v: f64) -> f64 {
    let a = j as f64 + 0.5 * k as f64 - 1.0;
    let x = 0.5 * r2 / v;
    -0.5 * k as f64 * LN_2PI - a * v.ln() + ln_scaled_lower_gamma(a, x)
}

/// `ln(gamma(a, x) / x^a)`, finite and smooth down to `x = 0`.
pub fn ln_scaled_lower_gamma(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x < HARMONIC_SMALL_ARG {
        // gamma(a, x) / x^a = 1/a - x/(a+1) + O(x^2)
        return (1.0 / a - x / (a + 1.0)).ln();
    }
    if x <= a + 1.0 {
        // gamma(a, x) = x^a e^{-x} sum_n x^n / (a (a+1) ... (a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        return sum.ln() - x;
    }
    // upper tail Q(a, x) <= 1/2 here, so 1 - Q has no cancellation
    ln_gamma(a) + (-gamma_ur(a, x)).ln_1p() - a * x.ln()
}

/// Strawderman mixing integral on `t = (1 + s)^{-1/2}` in `(0, 1)`.
///
/// With `tau = v + s v0` the integrands are, in log space,
/// `g N ds = 2 t^{1-2a} N_k(r; 0, tau) dt` for the marginal, the same divided
/// by `tau` for the gradient, and `2 t^{3-2a} N_k dt` for the heat-equation
/// Laplacian `lap m = (2 / v0) [ (2 - a) int (1+s)^{a-3} N ds - N_k(r; 0, v) ]`.
/// As `s -> inf` the marginal integrand behaves like `t^{k-2a+1}`, bounded for
/// `a <= 2` and `k >= 3`.
fn strawderman(a: f64, v0: f64, k: usize, r2: f64, v: f64, derivatives: bool) -> Result<Radial> {
    let kf = k as f64;
    let log_f = |t: f64| -> (f64, f64, f64) {
        if t <= 0.0 {
            return (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        }
        let s = (1.0 - t * t) / (t * t);
        let tau = v + s * v0;
        let ln_n = log_normal_radial(k, r2, tau) + std::f64::consts::LN_2;
        let ln_t = t.ln();
        ((1.0 - 2.0 * a) * ln_t + ln_n, tau, (3.0 - 2.0 * a) * ln_t + ln_n)
    };

    // breakpoints around the peak of tau^{-k/2} exp(-r^2 / (2 tau)), which sits
    // near tau = r^2 / k and has unit width in log(tau)
    let tau_peak = (r2 / kf).max(v);
    let mut breaks = vec![0.0, 1.0];
    for f in [0.05, 0.2, 1.0, 5.0, 20.0, 100.0] {
        let tau = tau_peak * f;
        if tau > v {
            let s = (tau - v) / v0;
            breaks.push((1.0 + s).powf(-0.5));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() < 1e-12);

    let mut shift = f64::NEG_INFINITY;
    for i in 0..64 {
        shift = shift.max(log_f((i as f64 + 0.5) / 64.0).0);
    }
    for w in breaks.windows(2) {
        shift = shift.max(log_f(0.5 * (w[0] + w[1])).0);
    }
    if !shift.is_finite() {
        return Err(Error::NonFinite("Strawderman mixing integrand".into()));
    }

    let mut total = [0.0; 3];
    for w in breaks.windows(2) {
        let est = if derivatives {
            integrate(
                |t| {
                    let (l0, tau, lk) = log_f(t);
                    let e0 = (l0 - shift).exp();
                    [e0, e0 / tau, (lk - shift).exp()]
                },
                w[0],
                w[1],
                MIXING_TOLERANCE,
            )?
            .value
        } else {
            let e = integrate(|t| [(log_f(t).0 - shift).exp()], w[0], w[1], MIXING_TOLERANCE)?;
            [e.value[0], 0.0, 0.0]
        };
        for j in 0..3 {
            total[j] += est[j];
        }
    }
    if !(total[0] > 0.0) {
        return Err(Error::NonFinite("Strawderman marginal underflowed".into()));
    }
    let log_m = shift + total[0].ln();
    if !derivatives {
        return Ok(Radial {
            log_m,
            slope: 0.0,
            lap_over_m: 0.0,
        });
    }
    let slope = total[1] / total[0];
    let boundary = (log_normal_radial(k, r2, v) - log_m).exp();
    let lap_over_m = 2.0 / v0 * ((2.0 - a) * total[2] / total[0] - boundary);
    Ok(Radial {
        log_m,
        slope,
        lap_over_m,
    })
}
