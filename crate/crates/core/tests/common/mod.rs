//! Test-only oracles. None of these call into the library's quadrature or
//! marginal code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<R: Rng>(rng: &mut R, p: usize, scale: f64) -> Vec<f64> {
    (0..p).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum()
}

/// Haar-random orthogonal matrix via QR of a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DMatrix::from_diagonal(&r.diagonal().map(|d| d.signum()));
    q * signs
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

/// Double-exponential (tanh-sinh) quadrature on a finite interval, halving
/// the step until successive levels agree to `tol` (relative to the sum of
/// absolute contributions).
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mut h: f64 = 1.0;
    let eval = |t: f64| -> (f64, f64) {
        let s = 0.5 * PI * t.sinh();
        let x = s.tanh();
        let w = 0.5 * PI * t.cosh() / s.cosh().powi(2);
        // complement 1 - |x| computed without cancellation
        let comp = 1.0 / (s.abs().exp() * s.cosh());
        if w == 0.0 || comp == 0.0 {
            return (0.0, 0.0);
        }
        let u = if x >= 0.0 { b - half * comp } else { a + half * comp };
        if u <= a || u >= b {
            return (0.0, 0.0);
        }
        let v = f(u) * w;
        (v, v.abs())
    };
    let tmax = 6.5;
    let mut sum = eval(0.0).0;
    let mut k = 1;
    while (k as f64) * h <= tmax {
        let t = k as f64 * h;
        sum += eval(t).0 + eval(-t).0;
        k += 1;
    }
    let mut estimate = sum * h * half;
    for _ in 0..12 {
        h *= 0.5;
        let mut added = 0.0;
        let mut abs_added = 0.0;
        let mut k = 1;
        while (k as f64) * h <= tmax {
            let t = k as f64 * h;
            let (p1, a1) = eval(t);
            let (p2, a2) = eval(-t);
            added += p1 + p2;
            abs_added += a1 + a2;
            k += 2;
        }
        sum += added;
        let next = sum * h * half;
        let scale = next.abs().max(abs_added * h * half);
        if (next - estimate).abs() <= tol * scale.max(f64::MIN_POSITIVE) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// `int_0^inf f` split at the given interior points, the last piece mapped
/// through `s = c + (1 - t) / t` so that the far tail sits near `t = 0`,
/// where doubles resolve it.
pub fn half_line<F: Fn(f64) -> f64>(f: F, cuts: &[f64], tol: f64) -> f64 {
    let mut pts = vec![0.0];
    pts.extend(cuts.iter().copied().filter(|c| *c > 0.0));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += tanh_sinh(&f, w[0], w[1], tol);
    }
    let last = *pts.last().unwrap();
    let tail = |t: f64| {
        let s = last + (1.0 - t) / t;
        if !s.is_finite() || t * t == 0.0 {
            return 0.0;
        }
        f(s) / (t * t)
    };
    total + tanh_sinh(tail, 0.0, 1.0, tol)
}

pub fn ln_normal_k(k: usize, r2: f64, tau: f64) -> f64 {
    -0.5 * k as f64 * (2.0 * PI * tau).ln() - 0.5 * r2 / tau
}

/// `int_0^inf N_k(r; 0, (v + s v0) I) (1 + s)^{a-2} ds` by direct quadrature in `s`.
pub fn scale_mixture_oracle(a: f64, v0: f64, k: usize, r2: f64, v: f64) -> f64 {
    ln_scale_mixture_oracle(a, v0, k, r2, v).exp()
}

/// Logarithm of [`scale_mixture_oracle`].
pub fn ln_scale_mixture_oracle(a: f64, v0: f64, k: usize, r2: f64, v: f64) -> f64 {
    let peak = (r2 / k as f64 - v).max(0.0) / v0;
    ln_tanh_sinh_log_scaled(
        |s| ln_normal_k(k, r2, v + s * v0) + (a - 2.0) * (1.0 + s).ln(),
        &[peak * 0.1, peak + 1e-3, peak * 10.0 + 1.0],
    )
}

/// `log int_0^inf exp(g(s)) ds` with the integrand rescaled by its maximum on a probe grid.
fn ln_tanh_sinh_log_scaled<G: Fn(f64) -> f64>(g: G, cuts: &[f64]) -> f64 {
    let mut shift = f64::NEG_INFINITY;
    for i in 0..200 {
        let s = (i as f64 * 0.1).exp() - 1.0;
        shift = shift.max(g(s));
    }
    for c in cuts {
        shift = shift.max(g(*c));
    }
    shift + half_line(|s| (g(s) - shift).exp(), cuts, 1e-13).ln()
}

/// Harmonic marginal `int_0^inf N_k(r; 0, (v + s) I) ds`.
pub fn harmonic_oracle(k: usize, r2: f64, v: f64) -> f64 {
    scale_mixture_oracle(2.0, 1.0, k, r2, v)
}

/// Central difference step `max(1, |z|) eps^{1/3}`.
pub fn fd_step(scale: f64) -> f64 {
    scale.max(1.0) * f64::EPSILON.powf(1.0 / 3.0)
}

/// Spherical-coordinates oracle for `int f(|mu|) N_p(mu; c, v I) dmu` and the
/// matching integral of `mu_parallel f(|mu|) N_p(mu; c, v I)`, the component of
/// `mu` along `c`. `ln_prior(r)` is the log prior density at radius `r`.
/// Two layers: radius, then polar angle against `c`.
pub fn radial_moments<P: Fn(f64) -> f64>(ln_prior: P, c: &[f64], v: f64) -> (f64, f64) {
    let p = c.len();
    let big_r = norm_sq(c).sqrt();
    let sigma = v.sqrt();
    let r_max = big_r + 14.0 * sigma;
    // |S^{p-2}|: the sphere left after fixing the polar angle
    let area = 2.0 * PI.powf(0.5 * (p as f64 - 1.0)) / gamma_half(p - 1);
    let cache = RefCell::new(HashMap::<u64, f64>::new());
    let ln_prior = |r: f64| -> f64 {
        if let Some(v) = cache.borrow().get(&r.to_bits()) {
            return *v;
        }
        let v = ln_prior(r);
        cache.borrow_mut().insert(r.to_bits(), v);
        v
    };
    let inner = |r: f64, moment: bool| -> f64 {
        // exp(-(r^2 + R^2 - 2 r R cos)/2v) = exp(-(r - R)^2/2v) exp(-r R (1 - cos)/v)
        let base = -(r - big_r).powi(2) / (2.0 * v);
        let kappa = r * big_r / v;
        let ang = tanh_sinh(
            |theta| {
                let (s, cth) = theta.sin_cos();
                let w = s.powi(p as i32 - 2) * (-kappa * (1.0 - cth)).exp();
                if moment {
                    w * r * cth
                } else {
                    w
                }
            },
            0.0,
            PI,
            1e-13,
        );
        let lp = ln_prior(r);
        if !lp.is_finite() {
            // r^2 underflowed; the r^{p-1} volume factor beats any r^{-(p-2)} pole
            return 0.0;
        }
        (base + lp + (p as f64 - 1.0) * r.ln()).exp() * ang
    };
    let cuts: Vec<f64> = [big_r - 6.0 * sigma, big_r, big_r + 6.0 * sigma]
        .into_iter()
        .filter(|x| *x > 0.0 && *x < r_max)
        .collect();
    let mut pts = vec![0.0];
    pts.extend(cuts);
    pts.push(r_max);
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for w in pts.windows(2) {
        m0 += tanh_sinh(|r| inner(r, false), w[0], w[1], 1e-12);
        m1 += tanh_sinh(|r| inner(r, true), w[0], w[1], 1e-12);
    }
    let norm = area / (2.0 * PI * v).powf(0.5 * p as f64);
    (m0 * norm, m1 * norm)
}

/// `Gamma(n / 2)`
fn gamma_half(n: usize) -> f64 {
    let mut g = if n % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut k = if n % 2 == 0 { 2 } else { 1 };
    while k < n {
        g *= 0.5 * k as f64;
        k += 2;
    }
    g
}

/// Posterior mean `E[mu | x]` for a spherically symmetric prior, by the
/// two-layer radial oracle.
pub fn posterior_mean_oracle<P: Fn(f64) -> f64>(ln_prior: P, x: &[f64], v: f64) -> Vec<f64> {
    let (m0, m1) = radial_moments(ln_prior, x, v);
    let r = norm_sq(x).sqrt();
    x.iter().map(|xi| xi / r * m1 / m0).collect()
}

/// Log density of the Strawderman prior at radius `r`, by quadrature in `s`.
pub fn ln_strawderman_prior(a: f64, v0: f64, p: usize, r: f64) -> f64 {
    ln_scale_mixture_oracle(a, v0, p, r * r, 1e-300)
}

/// Chi-square density with `k` degrees of freedom.
pub fn chi2_pdf(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let h = 0.5 * k as f64;
    ((h - 1.0) * x.ln() - 0.5 * x - h * 2f64.ln() - gamma_half(k).ln()).exp()
}

/// `log int exp(ln_f(mu)) dmu` over `R^p` for an integrand symmetric about the
/// line through the origin along the unit vector `axis`. Two layers: radius,
/// then polar angle from `axis`; `ln_f` is evaluated at genuine points of `R^p`.
/// The mass is expected near radius `center` with spread `sigma`.
pub fn ln_axial_integral<F: Fn(&[f64]) -> f64>(ln_f: F, axis: &[f64], center: f64, sigma: f64) -> f64 {
    let p = axis.len();
    // a unit vector orthogonal to the axis
    let mut e = vec![0.0; p];
    let j = (0..p).min_by(|&a, &b| axis[a].abs().total_cmp(&axis[b].abs())).unwrap();
    e[j] = 1.0;
    let dot: f64 = e.iter().zip(axis).map(|(a, b)| a * b).sum();
    for (ei, ai) in e.iter_mut().zip(axis) {
        *ei -= dot * ai;
    }
    let en = norm_sq(&e).sqrt();
    e.iter_mut().for_each(|x| *x /= en);
    let point = |r: f64, theta: f64| -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        axis.iter().zip(&e).map(|(a, b)| r * (c * a + s * b)).collect()
    };
    let shift = ln_f(&point(center.max(0.0), 0.0));
    let area = 2.0 * PI.powf(0.5 * (p as f64 - 1.0)) / gamma_half(p - 1);
    let inner = |r: f64| -> f64 {
        tanh_sinh(
            |theta| {
                let v = ln_f(&point(r, theta)) - shift + (p as f64 - 1.0) * r.ln();
                if !v.is_finite() {
                    // only at r ~ 0, where the volume factor dominates
                    0.0
                } else {
                    v.exp() * theta.sin().powi(p as i32 - 2)
                }
            },
            0.0,
            PI,
            1e-12,
        )
    };
    let r_max = center + 14.0 * sigma;
    let mut pts = vec![0.0];
    pts.extend(
        [center - 6.0 * sigma, center, center + 6.0 * sigma]
            .into_iter()
            .filter(|x| *x > 0.0 && *x < r_max),
    );
    pts.push(r_max);
    let total: f64 = pts.windows(2).map(|w| tanh_sinh(inner, w[0], w[1], 1e-11)).sum();
    shift + (area * total).ln()
}

/// `log p_hat(y | x)` for the scale-mixture prior `mu | s ~ N(0, s v0 I)`,
/// `s ~ (1 + s)^{a-2}`, from the joint law of `(X, Y)` given `s`: each
/// coordinate pair is bivariate normal with covariance
/// `[[v_x + s v0, s v0], [s v0, v_y + s v0]]`.
pub fn ln_predictive_scale_mixture_oracle(a: f64, v0: f64, x: &[f64], y: &[f64], vx: f64, vy: f64) -> f64 {
    let p = x.len();
    let (xx, yy) = (norm_sq(x), norm_sq(y));
    let xy: f64 = x.iter().zip(y).map(|(u, w)| u * w).sum();
    let joint = |s: f64| {
        let t = s * v0;
        let det = vx * vy + t * (vx + vy);
        let q = ((vy + t) * xx - 2.0 * t * xy + (vx + t) * yy) / det;
        -(p as f64) * (2.0 * PI).ln() - 0.5 * p as f64 * det.ln() - 0.5 * q + (a - 2.0) * (1.0 + s).ln()
    };
    let pk = |r2: f64, v: f64| (r2 / p as f64 - v).max(0.0) / v0;
    let cuts = [pk(xx, vx), pk(yy, vy), pk(xx, vx) * 10.0 + 1.0, pk(yy, vy) * 10.0 + 1.0];
    let num = ln_tanh_sinh_log_scaled(joint, &cuts);
    num - ln_scale_mixture_oracle(a, v0, p, xx, vx)
}
