//! Prior families on the mean `mu`.
//!
//! Improper priors carry fixed normalizations so that log-marginals are
//! reproducible: the uniform prior is identically 1, the harmonic prior is the
//! unit-weight scale mixture `int_0^inf N_p(mu; 0, s I) ds` (a constant
//! multiple of `|mu|^{-(p-2)}`), and the Strawderman prior is the unnormalized
//! mixture `mu | s ~ N(0, s v0 I)` with weight `(1 + s)^{a-2}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::Subspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "RawPrior")]
pub enum Prior {
    /// `pi(mu) = 1`; its marginal is identically 1.
    Uniform,
    /// Harmonic prior in the effective dimension of the evaluation.
    Harmonic,
    /// `mu | s ~ N(0, s v0 I)`, `s ~ (1 + s)^{a-2}`.
    Strawderman { a: f64, v0: f64 },
    /// `mu ~ N(0, nu I)`.
    Normal { nu: f64 },
    /// A spherically symmetric prior applied to `mu - P_B mu`, uniform along `B`.
    Recentered { base: Box<Prior>, subspace: Subspace },
    Mixture(Mixture),
}

/// Finite mixture `sum_i w_i pi_i` with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Prior>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    weights: Vec<f64>,
    components: Vec<Prior>,
}

impl TryFrom<RawMixture> for Mixture {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        Mixture::new(raw.weights, raw.components)
    }
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawPrior {
    Uniform,
    Harmonic,
    Strawderman {
        a: f64,
        #[serde(default = "default_v0")]
        v0: f64,
    },
    Normal {
        nu: f64,
    },
    Recentered {
        base: Box<Prior>,
        subspace: Subspace,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<Prior>,
    },
}

fn default_v0() -> f64 {
    1.0
}

impl TryFrom<RawPrior> for Prior {
    type Error = Error;

    fn try_from(raw: RawPrior) -> Result<Self> {
        let prior = match raw {
            RawPrior::Uniform => Prior::Uniform,
            RawPrior::Harmonic => Prior::Harmonic,
            RawPrior::Strawderman { a, v0 } => Prior::Strawderman { a, v0 },
            RawPrior::Normal { nu } => Prior::Normal { nu },
            RawPrior::Recentered { base, subspace } => Prior::Recentered { base, subspace },
            RawPrior::Mixture {
                weights,
                components,
            } => Prior::Mixture(Mixture::new(weights, components)?),
        };
        prior.validate()?;
        Ok(prior)
    }
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Prior>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}, not 1")));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self {
            weights,
            components,
        })
    }

    /// Equal-weight mixture of `base` recentered at each of `targets`.
    pub fn recentered(base: Prior, targets: Vec<Subspace>) -> Result<Self> {
        let n = targets.len();
        let components = targets
            .into_iter()
            .map(|s| Prior::recentered(base.clone(), s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![1.0 / n.max(1) as f64; n], components)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Prior] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

impl Prior {
    pub fn strawderman(a: f64, v0: f64) -> Result<Self> {
        let p = Prior::Strawderman { a, v0 };
        p.validate()?;
        Ok(p)
    }

    pub fn normal(nu: f64) -> Result<Self> {
        let p = Prior::Normal { nu };
        p.validate()?;
        Ok(p)
    }

    pub fn recentered(base: Prior, subspace: Subspace) -> Result<Self> {
        let p = Prior::Recentered {
            base: Box::new(base),
            subspace,
        };
        p.validate()?;
        Ok(p)
    }

    /// Shorthand for the prior recentered at the point `b`.
    pub fn centered_at(self, b: Vec<f64>) -> Result<Self> {
        Self::recentered(self, Subspace::point(b)?)
    }

    /// Whether the prior depends on `mu` only through `|mu|`.
    pub fn is_spherically_symmetric(&self) -> bool {
        matches!(self, Prior::Harmonic | Prior::Strawderman { .. } | Prior::Normal { .. })
    }

    /// Checks parameter ranges (dimension-free checks only).
    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Uniform | Prior::Harmonic => Ok(()),
            Prior::Strawderman { a, v0 } => {
                if !(0.0..=2.0).contains(a) {
                    return Err(Error::InvalidParameter(format!("Strawderman a = {a} outside [0, 2]")));
                }
                if !(*v0 > 0.0 && v0.is_finite()) {
                    return Err(Error::InvalidParameter(format!("Strawderman v0 = {v0} must be positive")));
                }
                Ok(())
            }
            Prior::Normal { nu } => {
                if *nu > 0.0 && nu.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("normal prior variance nu = {nu} must be positive")))
                }
            }
            Prior::Recentered { base, .. } => {
                if !base.is_spherically_symmetric() {
                    return Err(Error::InvalidParameter(
                        "recentering requires a spherically symmetric base (harmonic, strawderman or normal)".into(),
                    ));
                }
                base.validate()
            }
            Prior::Mixture(m) => m.components.iter().try_for_each(Prior::validate),
        }
    }

    /// Checks that the marginal is finite in ambient dimension `p`.
    pub fn check_dimension(&self, p: usize) -> Result<()> {
        match self {
            Prior::Uniform | Prior::Normal { .. } => Ok(()),
            Prior::Harmonic | Prior::Strawderman { .. } => radial_finite(self, p),
            Prior::Recentered { base, subspace } => {
                if subspace.ambient_dim() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: subspace.ambient_dim(),
                    });
                }
                radial_finite(base, subspace.codim())
            }
            Prior::Mixture(m) => m.components.iter().try_for_each(|c| c.check_dimension(p)),
        }
    }

    /// Short human-readable label used in reports and CSV output.
    pub fn label(&self) -> String {
        match self {
            Prior::Uniform => "uniform".into(),
            Prior::Harmonic => "harmonic".into(),
            Prior::Strawderman { a, v0 } => format!("strawderman(a={a},v0={v0})"),
            Prior::Normal { nu } => format!("normal(nu={nu})"),
            Prior::Recentered { base, subspace } => {
                if subspace.dim() == 0 {
                    format!("{}@point", base.label())
                } else {
                    format!("{}@subspace(d={})", base.label(), subspace.dim())
                }
            }
            Prior::Mixture(m) => {
                let parts: Vec<String> = m
                    .weights
                    .iter()
                    .zip(&m.components)
                    .map(|(w, c)| format!("{}:{w}", c.label()))
                    .collect();
                format!("mixture[{}]", parts.join(","))
            }
        }
    }
}

fn radial_finite(base: &Prior, k: usize) -> Result<()> {
    match base {
        Prior::Harmonic if k < 3 => Err(Error::NonFiniteMarginal(format!(
            "harmonic prior needs effective dimension >= 3, got {k}"
        ))),
        // the mixing integral converges at s -> inf iff k/2 + 1 > a
        Prior::Strawderman { a, .. } if (k as f64) / 2.0 + 1.0 <= *a => Err(Error::NonFiniteMarginal(format!(
            "Strawderman prior with a = {a} has an infinite marginal in dimension {k}"
        ))),
        _ => Ok(()),
    }
}
