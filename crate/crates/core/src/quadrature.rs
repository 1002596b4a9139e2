//! One-dimensional quadrature.
//!
//! Every marginal in this crate reduces to a one-dimensional integral over a
//! mixing scale, so a single globally adaptive Gauss–Kronrod (7/15) engine
//! carries all of them. It integrates several integrands sharing the same
//! abscissae at once, which is how the marginal, its gradient and its
//! Laplacian are obtained from one subdivision pattern.
//!
//! Fixed-order Gauss–Legendre rules are provided for smooth integrands on a
//! known interval (the variance integral of the risk identity).

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the 7-point rule embedded at XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_intervals: 1000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-10, 1e-10)
    }
}

/// Integral estimates with their error bounds, one entry per integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = err.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

fn kronrod<const N: usize, F>(f: &mut F, a: f64, b: f64) -> Segment<N>
where
    F: FnMut(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv1 = [[0.0; N]; 7];
    let mut fv2 = [[0.0; N]; 7];

    let fc = f(center);
    let mut res_k = [0.0; N];
    let mut res_g = [0.0; N];
    let mut res_abs = [0.0; N];
    for j in 0..N {
        res_k[j] = fc[j] * WGK[7];
        res_g[j] = fc[j] * WG[3];
        res_abs[j] = res_k[j].abs();
    }
    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[i] = f1;
        fv2[i] = f2;
        for j in 0..N {
            let sum = f1[j] + f2[j];
            res_k[j] += WGK[i] * sum;
            res_abs[j] += WGK[i] * (f1[j].abs() + f2[j].abs());
            if i % 2 == 1 {
                res_g[j] += WG[i / 2] * sum;
            }
        }
    }

    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for j in 0..N {
        let mean = res_k[j] * 0.5;
        let mut res_asc = WGK[7] * (fc[j] - mean).abs();
        for i in 0..7 {
            res_asc += WGK[i] * ((fv1[i][j] - mean).abs() + (fv2[i][j] - mean).abs());
        }
        let h = half.abs();
        value[j] = res_k[j] * half;
        error[j] = rescale_error((res_k[j] - res_g[j]) * half, res_abs[j] * h, res_asc * h);
    }
    Segment { a, b, value, error }
}

/// Globally adaptive Gauss–Kronrod integration of `N` integrands over `[a, b]`.
///
/// The interval with the largest (normalized) error is bisected until every
/// component satisfies `error <= max(tol.abs, tol.rel * |value|)`. The
/// endpoints are never evaluated, so integrable endpoint singularities are
/// allowed.
pub fn integrate<const N: usize, F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    let first = kronrod(&mut f, a, b);
    let mut segments = vec![first];
    let mut evaluations = 15;

    loop {
        let mut value = [0.0; N];
        let mut error = [0.0; N];
        for s in &segments {
            for j in 0..N {
                value[j] += s.value[j];
                error[j] += s.error[j];
            }
        }
        if value.iter().chain(error.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadrature integrand".into()));
        }
        let bound: [f64; N] = std::array::from_fn(|j| tol.abs.max(tol.rel * value[j].abs()));
        if (0..N).all(|j| error[j] <= bound[j]) {
            return Ok(Estimate {
                value,
                error,
                evaluations,
            });
        }
        if segments.len() >= tol.max_intervals {
            let (achieved, requested) = (0..N)
                .map(|j| (error[j], bound[j]))
                .max_by(|x, y| (x.0 / x.1).total_cmp(&(y.0 / y.1)))
                .unwrap_or((f64::NAN, f64::NAN));
            return Err(Error::Convergence { achieved, requested });
        }

        // bisect the segment contributing the largest share of the error budget
        let (worst, _) = segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let share = (0..N)
                    .map(|j| s.error[j] / bound[j].max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                (i, share)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("at least one segment");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if !(mid > s.a && mid < s.b) {
            let achieved = s.error.iter().copied().fold(0.0, f64::max);
            return Err(Error::Convergence {
                achieved,
                requested: bound.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
        segments.push(kronrod(&mut f, s.a, mid));
        segments.push(kronrod(&mut f, mid, s.b));
        evaluations += 30;
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let est = integrate(|x| [f(x)], a, b, tol)?;
    Ok((est.value[0], est.error[0]))
}

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Chebyshev-like initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
