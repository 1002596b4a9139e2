//! Predictive densities for the linear model `X ~ N_m(A beta, I)`,
//! `Y ~ N_n(B beta, I)`.
//!
//! With `Sigma_A = (A'A)^{-1}` and `Sigma_C = (A'A + B'B)^{-1}` there is a
//! `W` with `Sigma_A = W W'` and `Sigma_C = W D W'`, `D` diagonal. In the
//! coordinates `z = W^{-1} beta` the least-squares fits have covariances `I`
//! and `D`, and priors on `beta` are written as priors on `z`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::marginal::{log_sum_exp, norm_sq};
use crate::mc::{fill_normal, mc_scalar, mc_vec, RiskEstimate};
use crate::prior::Prior;
use crate::quadrature::{integrate, Tolerance};
use crate::risk::{Condition, Sweep, Witness};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MIXING_TOLERANCE: Tolerance = Tolerance::new(1e-300, 1e-10);

/// Design matrices of the two regressions, with the factorizations every
/// evaluation needs.
#[derive(Debug, Clone)]
pub struct LinearModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    ata_chol: Cholesky<f64, Dyn>,
    c_chol: Cholesky<f64, Dyn>,
    sigma_a: DMatrix<f64>,
    sigma_c: DMatrix<f64>,
    rotation: Rotation,
}

/// `Sigma_A = W W'`, `Sigma_C = W diag(d) W'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    w: DMatrix<f64>,
    w_inv: DMatrix<f64>,
    d: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinearModel {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for LinearModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawLinearModel::deserialize(de)?;
        LinearModel::from_rows(&raw.a, &raw.b).map_err(serde::de::Error::custom)
    }
}

impl Serialize for LinearModel {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        RawLinearModel {
            a: rows(&self.a),
            b: rows(&self.b),
        }
        .serialize(ser)
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidParameter(format!("rows of {what} have unequal lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl LinearModel {
    /// `a` is `m x p` with full column rank, `b` is `n x p`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let p = a.ncols();
        if p == 0 || a.nrows() < p {
            return Err(Error::InvalidParameter(format!(
                "A must have at least as many rows as columns (got {} x {p})",
                a.nrows()
            )));
        }
        check_len(p, b.ncols())?;
        if b.nrows() == 0 {
            return Err(Error::InvalidParameter("B needs at least one row".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        let sv = a.clone().svd(false, false).singular_values;
        let (lo, hi) = (sv.min(), sv.max());
        if hi == 0.0 || lo <= 1e-10 * hi {
            return Err(Error::RankDeficient {
                ratio: if hi == 0.0 { 0.0 } else { lo / hi },
            });
        }
        let ata = a.tr_mul(&a);
        let c = &ata + b.tr_mul(&b);
        let ata_chol = Cholesky::new(ata).ok_or_else(|| Error::Numerical("A'A is not positive definite".into()))?;
        let c_chol = Cholesky::new(c).ok_or_else(|| Error::Numerical("A'A + B'B is not positive definite".into()))?;
        let sigma_a = ata_chol.inverse();
        let sigma_c = c_chol.inverse();
        let rotation = diagonalize(&sigma_a, &sigma_c)?;
        Ok(Self {
            a,
            b,
            ata_chol,
            c_chol,
            sigma_a,
            sigma_c,
            rotation,
        })
    }

    /// Builds the model from row-major design matrices.
    pub fn from_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(a, "A")?, matrix_from_rows(b, "B")?)
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma_a(&self) -> &DMatrix<f64> {
        &self.sigma_a
    }

    pub fn sigma_c(&self) -> &DMatrix<f64> {
        &self.sigma_c
    }

    /// The rotation computed at construction.
    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }
}

impl Rotation {
    /// Validates a user-supplied factorization of `model`.
    pub fn new(model: &LinearModel, w: DMatrix<f64>, d: Vec<f64>) -> Result<Self> {
        let p = model.p();
        if w.nrows() != p || w.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: w.nrows(),
            });
        }
        check_len(p, d.len())?;
        if d.iter().any(|di| !(*di > 0.0 && *di <= 1.0)) {
            return Err(Error::InvalidParameter("rotation scales must lie in (0, 1]".into()));
        }
        let w_inv = w
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("W is singular".into()))?;
        let rot = Self { w, w_inv, d };
        let (ra, rc) = rot.residuals(model);
        if ra > 1e-8 || rc > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "W does not diagonalize the model (relative residuals {ra:.2e}, {rc:.2e})"
            )));
        }
        Ok(rot)
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn w_inv(&self) -> &DMatrix<f64> {
        &self.w_inv
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// True when `B'B = 0` numerically, so that every `d_i = 1`.
    pub fn is_degenerate(&self) -> bool {
        self.d.iter().all(|d| *d >= 1.0 - 1e-12)
    }

    /// Relative residuals `|Sigma_A - W W'| / |Sigma_A|` and
    /// `|Sigma_C - W D W'| / |Sigma_C|` (Frobenius norms).
    pub fn residuals(&self, model: &LinearModel) -> (f64, f64) {
        let wwt = &self.w * self.w.transpose();
        let wd = &self.w * DMatrix::from_diagonal(&DVector::from_column_slice(&self.d));
        let wdwt = wd * self.w.transpose();
        (
            (model.sigma_a() - wwt).norm() / model.sigma_a().norm(),
            (model.sigma_c() - wdwt).norm() / model.sigma_c().norm(),
        )
    }

    /// `W^{-1} v`.
    pub fn to_rotated(&self, v: &[f64]) -> Vec<f64> {
        (&self.w_inv * DVector::from_column_slice(v)).iter().copied().collect()
    }
}

/// Cholesky `Sigma_A = L L'`, then `L^{-1} Sigma_C L^{-T} = Q D Q'` and `W = L Q`.
fn diagonalize(sigma_a: &DMatrix<f64>, sigma_c: &DMatrix<f64>) -> Result<Rotation> {
    let l = Cholesky::new(sigma_a.clone())
        .ok_or_else(|| Error::Numerical("Sigma_A is not positive definite".into()))?
        .unpack();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Cholesky factor of Sigma_A is singular".into()))?;
    let mut inner = &l_inv * sigma_c * l_inv.transpose();
    inner = (&inner + inner.transpose()) * 0.5;
    let eig = SymmetricEigen::new(inner);
    let p = sigma_a.nrows();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut d = Vec::with_capacity(p);
    let mut q = DMatrix::zeros(p, p);
    for (col, &i) in order.iter().enumerate() {
        let di = eig.eigenvalues[i];
        if !(di > 0.0 && di <= 1.0 + 1e-10) {
            return Err(Error::Numerical(format!("simultaneous diagonalization produced d = {di}")));
        }
        d.push(di.min(1.0));
        q.set_column(col, &eig.eigenvectors.column(i));
    }
    let w = l * q;
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("W is singular".into()))?;
    Ok(Rotation { w, w_inv, d })
}

/// Returns the model's rotation `(W, D)`.
pub fn simultaneous_diagonalize(model: &LinearModel) -> Rotation {
    model.rotation.clone()
}

/// Least-squares fit with its residual sum of squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    pub beta_hat: Vec<f64>,
    pub rss: f64,
}

/// Fit of `x` on `A`, or of the stacked `(x, y)` on `(A; B)` when `y` is given.
pub fn least_squares(model: &LinearModel, x: &[f64], y: Option<&[f64]>) -> Result<LeastSquares> {
    check_len(model.m(), x.len())?;
    let xv = DVector::from_column_slice(x);
    let mut rhs = model.a.tr_mul(&xv);
    let beta = match y {
        None => model.ata_chol.solve(&rhs),
        Some(y) => {
            check_len(model.n(), y.len())?;
            rhs += model.b.tr_mul(&DVector::from_column_slice(y));
            model.c_chol.solve(&rhs)
        }
    };
    let mut rss = (&xv - &model.a * &beta).norm_squared();
    if let Some(y) = y {
        rss += (DVector::from_column_slice(y) - &model.b * &beta).norm_squared();
    }
    Ok(LeastSquares {
        beta_hat: beta.iter().copied().collect(),
        rss,
    })
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `log p_hat_U(y | x) = -n/2 log 2pi + 1/2 log|A'A| - 1/2 log|A'A + B'B| - (RSS_xy - RSS_x) / 2`.
pub fn logpdf_uniform_reg(model: &LinearModel, x: &[f64], y: &[f64]) -> Result<f64> {
    let fx = least_squares(model, x, None)?;
    let fxy = least_squares(model, x, Some(y))?;
    Ok(-0.5 * model.n() as f64 * LN_2PI + 0.5 * log_det(&model.ata_chol) - 0.5 * log_det(&model.c_chol)
        - 0.5 * (fxy.rss - fx.rss))
}

/// How a spherically symmetric prior is placed on `beta`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScaling {
    /// `pi(|(Sigma_A - Sigma_C)^{-1/2} beta|)`, i.e. `pi(|(I - D)^{-1/2} z|)`.
    /// Harmonic priors of this form satisfy the trace condition exactly.
    /// Requires `B'B` positive definite.
    #[default]
    RiskMetric,
    /// `pi(|W^{-1} beta|)`.
    Rotated,
}

/// A prior on `beta`: a mean-problem prior and the scaling that maps `beta`
/// into its coordinates. Point-recentering offsets are given in `beta`
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionPrior {
    pub prior: Prior,
    #[serde(default)]
    pub scaling: PriorScaling,
}

impl RegressionPrior {
    pub fn new(prior: Prior, scaling: PriorScaling) -> Self {
        Self { prior, scaling }
    }

    /// The scaled harmonic prior.
    pub fn harmonic() -> Self {
        Prior::Harmonic.into()
    }
}

impl From<Prior> for RegressionPrior {
    fn from(prior: Prior) -> Self {
        Self {
            prior,
            scaling: PriorScaling::default(),
        }
    }
}

/// `log p_hat_pi(y | x) = log m(z_xy; D) - log m(z_x; I) + log p_hat_U(y | x)`
/// with `z = W^{-1} beta_hat`, using the model's own rotation.
pub fn logpdf_bayes_reg(prior: &RegressionPrior, model: &LinearModel, x: &[f64], y: &[f64]) -> Result<f64> {
    logpdf_bayes_reg_with(prior, model, &model.rotation, x, y)
}

/// [`logpdf_bayes_reg`] with an explicit rotation.
pub fn logpdf_bayes_reg_with(
    prior: &RegressionPrior,
    model: &LinearModel,
    rot: &Rotation,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let fx = least_squares(model, x, None)?;
    let fxy = least_squares(model, x, Some(y))?;
    let ones = vec![1.0; model.p()];
    let num = marginal_in(prior, rot, &fxy.beta_hat, rot.d(), false)?.log_m;
    let den = marginal_in(prior, rot, &fx.beta_hat, &ones, false)?.log_m;
    Ok(num - den + logpdf_uniform_reg(model, x, y)?)
}

/// Marginal of a regression prior at `beta_hat` when `W^{-1} beta_hat` has
/// covariance `diag(v)` around `W^{-1} beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMarginal {
    pub log_m: f64,
    /// `trace{H(m) (Sigma_A - Sigma_C)} / m`, up to the factor `|W|^{-1}`.
    pub trace_m: f64,
    /// `trace{H(sqrt m) (Sigma_A - Sigma_C)} / sqrt(m)`, same factor.
    pub trace_sqrt_m: f64,
}

/// Evaluates `m` and both trace functionals with `z`-covariance `diag(v)`.
pub fn regression_marginal(prior: &RegressionPrior, model: &LinearModel, beta: &[f64], v: &[f64]) -> Result<RegressionMarginal> {
    let e = marginal_in(prior, &model.rotation, beta, v, true)?;
    let g: f64 = e.weights.iter().zip(&e.grad_log_m).map(|(c, g)| c * g * g).sum();
    Ok(RegressionMarginal {
        log_m: e.log_m,
        trace_m: e.hessian,
        trace_sqrt_m: 0.5 * e.hessian - 0.25 * g,
    })
}

/// Marginal in a prior's working coordinates: gradient of `log m`,
/// `sum_i c_i (d^2 m / dz_i^2) / m` and the weights `c_i`.
#[derive(Debug, Clone)]
struct DiagonalEval {
    log_m: f64,
    grad_log_m: Vec<f64>,
    hessian: f64,
    weights: Vec<f64>,
}

fn marginal_in(prior: &RegressionPrior, rot: &Rotation, beta: &[f64], v: &[f64], derivatives: bool) -> Result<DiagonalEval> {
    let p = rot.d().len();
    check_len(p, beta.len())?;
    check_len(p, v.len())?;
    // the uniform marginal does not depend on the scaling
    if prior.scaling == PriorScaling::RiskMetric
        && prior.prior != Prior::Uniform
        && rot.d().iter().any(|d| *d >= 1.0 - 1e-12)
    {
        return Err(Error::InvalidParameter(
            "risk-metric scaling needs B'B positive definite".into(),
        ));
    }
    scaled_marginal(&prior.prior, prior.scaling, rot, beta, v, derivatives)
}

fn scaled_marginal(
    prior: &Prior,
    scaling: PriorScaling,
    rot: &Rotation,
    beta: &[f64],
    v: &[f64],
    derivatives: bool,
) -> Result<DiagonalEval> {
    let p = beta.len();
    match prior {
        Prior::Mixture(mix) => {
            let mut evals = Vec::with_capacity(mix.len());
            let mut logs = Vec::with_capacity(mix.len());
            for (w, comp) in mix.weights().iter().zip(mix.components()) {
                if *w == 0.0 {
                    continue;
                }
                let e = scaled_marginal(comp, scaling, rot, beta, v, derivatives)?;
                logs.push(w.ln() + e.log_m);
                evals.push(e);
            }
            let log_m = log_sum_exp(&logs);
            if log_m == f64::NEG_INFINITY {
                return Err(Error::DegenerateMixture);
            }
            let mut grad = vec![0.0; p];
            let mut hessian = 0.0;
            for (e, l) in evals.iter().zip(&logs) {
                let post = (l - log_m).exp();
                for (g, gi) in grad.iter_mut().zip(&e.grad_log_m) {
                    *g += post * gi;
                }
                hessian += post * e.hessian;
            }
            Ok(DiagonalEval {
                log_m,
                grad_log_m: grad,
                hessian,
                weights: evals.pop().map_or_else(|| vec![0.0; p], |e| e.weights),
            })
        }
        Prior::Recentered { base, subspace } => {
            if subspace.dim() != 0 {
                return Err(Error::InvalidParameter(
                    "regression priors support recentering at points only".into(),
                ));
            }
            check_len(p, subspace.ambient_dim())?;
            let shifted: Vec<f64> = beta.iter().zip(subspace.offset()).map(|(b, o)| b - o).collect();
            scaled_marginal(base, scaling, rot, &shifted, v, derivatives)
        }
        _ => {
            let z = rot.to_rotated(beta);
            match scaling {
                PriorScaling::Rotated => {
                    let c: Vec<f64> = rot.d().iter().map(|d| 1.0 - d).collect();
                    diagonal_marginal(prior, &z, v, c, derivatives)
                }
                PriorScaling::RiskMetric => {
                    // z' = (I - D)^{-1/2} z has covariance diag(v / (1 - d)); the
                    // trace functional becomes the plain Laplacian in z'.
                    let zs: Vec<f64> = z.iter().zip(rot.d()).map(|(z, d)| z / (1.0 - d).sqrt()).collect();
                    let vs: Vec<f64> = v.iter().zip(rot.d()).map(|(v, d)| v / (1.0 - d)).collect();
                    diagonal_marginal(prior, &zs, &vs, vec![1.0; p], derivatives)
                }
            }
        }
    }
}

/// Marginal of a spherically symmetric (or uniform) prior at `z` under
/// covariance `diag(v)`, with Hessian weights `c`.
fn diagonal_marginal(prior: &Prior, z: &[f64], v: &[f64], c: Vec<f64>, derivatives: bool) -> Result<DiagonalEval> {
    let p = z.len();
    match prior {
        Prior::Uniform => Ok(DiagonalEval {
            log_m: 0.0,
            grad_log_m: vec![0.0; p],
            hessian: 0.0,
            weights: c,
        }),
        Prior::Normal { nu } => {
            let mut log_m = 0.0;
            let mut grad = Vec::with_capacity(p);
            let mut hessian = 0.0;
            for i in 0..p {
                let tau = v[i] + nu;
                log_m += -0.5 * (LN_2PI + tau.ln()) - 0.5 * z[i] * z[i] / tau;
                grad.push(-z[i] / tau);
                hessian += c[i] * (z[i] * z[i] / (tau * tau) - 1.0 / tau);
            }
            Ok(DiagonalEval {
                log_m,
                grad_log_m: grad,
                hessian,
                weights: c,
            })
        }
        Prior::Harmonic => {
            prior.check_dimension(p)?;
            scale_mixture(2.0, 1.0, z, v, c, derivatives)
        }
        Prior::Strawderman { a, v0 } => {
            prior.check_dimension(p)?;
            scale_mixture(*a, *v0, z, v, c, derivatives)
        }
        _ => Err(Error::InvalidParameter(format!(
            "prior {} is not supported in regression",
            prior.label()
        ))),
    }
}

/// `int_0^inf prod_i N(z_i; 0, v_i + s v0) (1 + s)^{a-2} ds` on `t = (1 + s)^{-1/2}`,
/// where the integrand behaves like `t^{p - 2a + 1}` as `s -> inf`;
/// the harmonic prior is `a = 2`, `v0 = 1`.
fn scale_mixture(a: f64, v0: f64, z: &[f64], v: &[f64], c: Vec<f64>, derivatives: bool) -> Result<DiagonalEval> {
    let p = z.len();
    let s_of = |t: f64| (1.0 - t * t) / (t * t);
    let log_f = |t: f64| -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let s = s_of(t);
        let mut l = std::f64::consts::LN_2 - (2.0 * a - 1.0) * t.ln();
        for i in 0..p {
            let tau = v[i] + s * v0;
            l += -0.5 * (LN_2PI + tau.ln()) - 0.5 * z[i] * z[i] / tau;
        }
        l
    };
    let vmax = v.iter().copied().fold(0.0, f64::max);
    let tau_peak = (norm_sq(z) / p as f64).max(vmax);
    let mut breaks = vec![0.0, 1.0];
    for f in [0.05, 0.2, 1.0, 5.0, 20.0, 100.0] {
        breaks.push((1.0 + tau_peak * f / v0).powf(-0.5));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() < 1e-12);

    let mut shift = f64::NEG_INFINITY;
    for i in 0..64 {
        shift = shift.max(log_f((i as f64 + 0.5) / 64.0));
    }
    for w in breaks.windows(2) {
        shift = shift.max(log_f(0.5 * (w[0] + w[1])));
    }
    if !shift.is_finite() {
        return Err(Error::NonFinite("scale-mixture integrand".into()));
    }
    let weight = |t: f64| ((log_f(t) - shift).exp(), s_of(t));
    let piecewise = |f: &dyn Fn(f64) -> f64, tol: Tolerance| -> Result<f64> {
        let mut total = 0.0;
        for w in breaks.windows(2) {
            total += integrate(|t| [f(t)], w[0], w[1], tol)?.value[0];
        }
        Ok(total)
    };

    let mass = piecewise(&|t| weight(t).0, MIXING_TOLERANCE)?;
    if !(mass > 0.0) {
        return Err(Error::NonFinite("scale-mixture marginal underflowed".into()));
    }
    let log_m = shift + mass.ln();
    if !derivatives {
        return Ok(DiagonalEval {
            log_m,
            grad_log_m: Vec::new(),
            hessian: f64::NAN,
            weights: c,
        });
    }
    // The Hessian integrand changes sign, so its tolerance is anchored to the mass.
    let tol = Tolerance::new(1e-11 * mass, 1e-10);
    let hessian = piecewise(
        &|t| {
            let (e, s) = weight(t);
            if e == 0.0 {
                return 0.0;
            }
            let mut h = 0.0;
            for i in 0..p {
                let tau = v[i] + s * v0;
                h += c[i] * (z[i] * z[i] / (tau * tau) - 1.0 / tau);
            }
            e * h
        },
        tol,
    )? / mass;
    let mut grad = Vec::with_capacity(p);
    for i in 0..p {
        let g = piecewise(
            &|t| {
                let (e, s) = weight(t);
                if e == 0.0 {
                    0.0
                } else {
                    e / (v[i] + s * v0)
                }
            },
            tol,
        )?;
        grad.push(-z[i] * g / mass);
    }
    Ok(DiagonalEval {
        log_m,
        grad_log_m: grad,
        hessian,
        weights: c,
    })
}

/// Sign scan of the regression minimaxity conditions:
/// `trace{H(f) (Sigma_A - Sigma_C)} <= 0` for `f = m` and `f = sqrt(m)`,
/// with `m` the marginal under covariance `W V_w W'`, `V_w = w I + (1 - w) D`.
///
/// In rotated coordinates the trace is `sum_i (1 - d_i) d^2 f / dz_i^2` up to
/// the positive factor `1 / |W|`; values are reported divided by `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub condition_m: Condition,
    pub condition_sqrt_m: Condition,
    pub points: usize,
    pub w_grid: Vec<f64>,
}

pub fn trace_condition_check(
    prior: &RegressionPrior,
    model: &LinearModel,
    points: &[Vec<f64>],
    w_grid: &[f64],
    tolerance: f64,
) -> Result<TraceReport> {
    if points.is_empty() || w_grid.is_empty() {
        return Err(Error::InvalidParameter("trace check needs points and a w-grid".into()));
    }
    if w_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidParameter("w-grid values must lie in [0, 1]".into()));
    }
    let d = model.rotation.d();
    let blank = || Witness {
        z: Vec::new(),
        v: f64::NAN,
        value: f64::NEG_INFINITY,
    };
    let (mut wm, mut ws) = (blank(), blank());
    for beta in points {
        check_len(model.p(), beta.len())?;
        for &w in w_grid {
            let v: Vec<f64> = d.iter().map(|d| w + (1.0 - w) * d).collect();
            let e = regression_marginal(prior, model, beta, &v)?;
            if e.trace_m > wm.value {
                wm = Witness {
                    z: beta.clone(),
                    v: w,
                    value: e.trace_m,
                };
            }
            if e.trace_sqrt_m > ws.value {
                ws = Witness {
                    z: beta.clone(),
                    v: w,
                    value: e.trace_sqrt_m,
                };
            }
        }
    }
    Ok(TraceReport {
        condition_m: Condition {
            holds: wm.value <= tolerance,
            worst: wm,
        },
        condition_sqrt_m: Condition {
            holds: ws.value <= tolerance,
            worst: ws,
        },
        points: points.len(),
        w_grid: w_grid.to_vec(),
    })
}

/// `R_KL(beta, p_hat_U) - R_KL(beta, p_hat_pi) = E log m(z_xy; D) - E log m(z_x; I)`
/// with common draws `z_x = W^{-1} beta + e`, `z_xy = W^{-1} beta + sqrt(D) e`.
pub fn kl_gap_reg_mc(prior: &RegressionPrior, model: &LinearModel, beta: &[f64], replicates: usize, seed: u64) -> Result<RiskEstimate> {
    let p = model.p();
    check_len(p, beta.len())?;
    let rot = &model.rotation;
    let ones = vec![1.0; p];
    let sqrt_d: Vec<f64> = rot.d().iter().map(|d| d.sqrt()).collect();
    mc_scalar(replicates, seed, 0, |rng| {
        let mut e = vec![0.0; p];
        fill_normal(rng, &mut e);
        // beta_hat = beta + W e maps to z = W^{-1} beta + e
        let we = (&rot.w * DVector::from_column_slice(&e)).iter().copied().collect::<Vec<_>>();
        let sde: Vec<f64> = e.iter().zip(&sqrt_d).map(|(a, b)| a * b).collect();
        let wsde = (&rot.w * DVector::from_column_slice(&sde)).iter().copied().collect::<Vec<_>>();
        let bx: Vec<f64> = beta.iter().zip(&we).map(|(a, b)| a + b).collect();
        let bxy: Vec<f64> = beta.iter().zip(&wsde).map(|(a, b)| a + b).collect();
        Ok(marginal_in(prior, rot, &bxy, rot.d(), false)?.log_m - marginal_in(prior, rot, &bx, &ones, false)?.log_m)
    })
}

fn gaussian_log_ratio_loss(y: &[f64], mean: &DVector<f64>) -> f64 {
    -0.5 * y.len() as f64 * LN_2PI - 0.5 * y.iter().zip(mean.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// KL risks of `p_hat_U` and the Bayes rule under `prior`, sampling `X` and `Y`
/// directly; `gaps[1]` is the paired difference `R(U) - R(pi)`.
pub fn kl_risk_reg_mc(prior: &RegressionPrior, model: &LinearModel, beta: &[f64], replicates: usize, seed: u64) -> Result<Sweep> {
    let p = model.p();
    check_len(p, beta.len())?;
    let bv = DVector::from_column_slice(beta);
    let ax = &model.a * &bv;
    let by = &model.b * &bv;
    let (m, n) = (model.m(), model.n());
    let values = mc_vec(replicates, seed, 0, 4, |rng, out| {
        let mut e = vec![0.0; m + n];
        fill_normal(rng, &mut e);
        let x: Vec<f64> = ax.iter().zip(&e[..m]).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = by.iter().zip(&e[m..]).map(|(a, b)| a + b).collect();
        let truth = gaussian_log_ratio_loss(&y, &by);
        out[0] = truth - logpdf_uniform_reg(model, &x, &y)?;
        out[1] = truth - logpdf_bayes_reg(prior, model, &x, &y)?;
        out[2] = 0.0;
        out[3] = out[0] - out[1];
        Ok(())
    })?;
    Ok(Sweep {
        risks: values[..2].to_vec(),
        gaps: values[2..].to_vec(),
    })
}

/// Monte-Carlo estimate of `int p_hat_pi(y | x) dy`, sampling from the
/// regression `p_hat_U(. | x) = N(B beta_hat_x, I + B Sigma_A B')`.
pub fn total_mass_reg_mc(prior: &RegressionPrior, model: &LinearModel, x: &[f64], replicates: usize, seed: u64) -> Result<RiskEstimate> {
    let fx = least_squares(model, x, None)?;
    let center = &model.b * DVector::from_column_slice(&fx.beta_hat);
    let cov = DMatrix::identity(model.n(), model.n()) + &model.b * &model.sigma_a * model.b.transpose();
    let l = Cholesky::new(cov)
        .ok_or_else(|| Error::Numerical("predictive covariance is not positive definite".into()))?
        .unpack();
    let n = model.n();
    mc_scalar(replicates, seed, 0, |rng| {
        let mut e = vec![0.0; n];
        fill_normal(rng, &mut e);
        let y = &center + &l * DVector::from_column_slice(&e);
        let y: Vec<f64> = y.iter().copied().collect();
        Ok((logpdf_bayes_reg(prior, model, x, &y)? - logpdf_uniform_reg(model, x, &y)?).exp())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model_from(a: &[f64], m: usize, b: &[f64], n: usize, p: usize) -> LinearModel {
        LinearModel::new(DMatrix::from_row_slice(m, p, a), DMatrix::from_row_slice(n, p, b)).unwrap()
    }

    #[test]
    fn identity_design_least_squares() {
        let model = model_from(&[1.0, 0.0, 0.0, 1.0], 2, &[1.0, 0.0, 0.0, 1.0], 2, 2);
        let f = least_squares(&model, &[3.0, -1.0], None).unwrap();
        assert_eq!(f.beta_hat, vec![3.0, -1.0]);
        assert_eq!(f.rss, 0.0);
        let rot = simultaneous_diagonalize(&model);
        for d in rot.d() {
            assert_relative_eq!(*d, 0.5, epsilon = 1e-14);
        }
        let wtw = rot.w().tr_mul(rot.w());
        assert!((wtw - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn scalar_joint_fit() {
        let model = model_from(&[1.0], 1, &[1.0], 1, 1);
        let f = least_squares(&model, &[2.0], Some(&[5.0])).unwrap();
        assert_relative_eq!(f.beta_hat[0], 3.5, epsilon = 1e-15);
        assert_relative_eq!(f.rss, 4.5, epsilon = 1e-14);
        // log N(y; x, 2)
        let l = logpdf_uniform_reg(&model, &[2.0], &[5.0]).unwrap();
        assert_relative_eq!(l, -0.5 * (4.0 * std::f64::consts::PI).ln() - 9.0 / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_b_is_degenerate() {
        let model = model_from(&[1.0, 2.0, 0.0, 1.0, 3.0, 1.0], 3, &[0.0, 0.0], 1, 2);
        let rot = simultaneous_diagonalize(&model);
        assert!(rot.is_degenerate());
        assert!(rot.d().iter().all(|d| (*d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let err = LinearModel::new(a, DMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn uniform_prior_matches_uniform_density() {
        let model = model_from(&[1.0, 0.5, 0.2, 1.0, 0.3, -0.4, 2.0, 1.0, 0.0], 3, &[1.0, 1.0, 1.0, 0.0, 1.0, 2.0], 2, 3);
        let x = [0.3, -1.0, 2.0];
        let y = [1.0, 0.5];
        assert_eq!(
            logpdf_bayes_reg(&Prior::Uniform.into(), &model, &x, &y).unwrap(),
            logpdf_uniform_reg(&model, &x, &y).unwrap()
        );
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{"a": [[1, 0], [0, 1], [1, 1]], "b": [[1, 2]]}"#;
        let model: LinearModel = serde_json::from_str(json).unwrap();
        assert_eq!((model.m(), model.n(), model.p()), (3, 1, 2));
        let again: LinearModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(again.a(), model.a());
        assert!(serde_json::from_str::<LinearModel>(r#"{"a": [[1]], "b": [[1]], "c": 1}"#).is_err());
    }
}
