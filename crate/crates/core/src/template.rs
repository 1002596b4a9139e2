//! Dimension-free estimator descriptions.
//!
//! Curves sweep several dimensions at once, so priors are named by templates
//! that are instantiated for each `p`:
//!
//! ```text
//! uniform | harmonic | normal[nu=1] | strawderman[a=0.5,v0=1] | strawderman[a=0.5] | eb | eb[k=3]
//! harmonic@2ones        recentered at 2 * 1_p
//! harmonic@-1.5e1       recentered at -1.5 * e_1
//! harmonic@lindley      recentered at span{1_p}
//! mixture:harmonic@2ones:0.5,harmonic@-2ones:0.5
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{Mixture, Prior};
use crate::subspace::Subspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorTemplate {
    Prior(PriorTemplate),
    /// Empirical Bayes rule; `k = p - 2` when unset.
    EmpiricalBayes { k: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorTemplate {
    Uniform,
    Spherical { base: BaseTemplate, target: Target },
    Mixture(Vec<(PriorTemplate, f64)>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseTemplate {
    Harmonic,
    Normal { nu: f64 },
    /// `v0 = None` takes the model's `v_x`.
    Strawderman { a: f64, v0: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Origin,
    /// `scale * 1_p`
    Ones(f64),
    /// `scale * e_i` (1-based index)
    Axis(f64, usize),
    /// `span{1_p}`
    Lindley,
}

/// An estimator template made concrete for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Prior(Prior),
    EmpiricalBayes { k: f64 },
}

impl EstimatorTemplate {
    /// Resolves the template for dimension `p`; `v_x` is the default Strawderman `v0`.
    pub fn instantiate(&self, p: usize, v_x: f64) -> Result<Instance> {
        match self {
            EstimatorTemplate::Prior(t) => Ok(Instance::Prior(t.instantiate(p, v_x)?)),
            EstimatorTemplate::EmpiricalBayes { k } => Ok(Instance::EmpiricalBayes {
                k: k.unwrap_or(p as f64 - 2.0),
            }),
        }
    }
}

impl PriorTemplate {
    pub fn instantiate(&self, p: usize, v_x: f64) -> Result<Prior> {
        match self {
            PriorTemplate::Uniform => Ok(Prior::Uniform),
            PriorTemplate::Spherical { base, target } => {
                let base = match *base {
                    BaseTemplate::Harmonic => Prior::Harmonic,
                    BaseTemplate::Normal { nu } => Prior::normal(nu)?,
                    BaseTemplate::Strawderman { a, v0 } => Prior::strawderman(a, v0.unwrap_or(v_x))?,
                };
                let prior = match *target {
                    Target::Origin => base,
                    Target::Ones(s) => base.centered_at(vec![s; p])?,
                    Target::Axis(s, i) => {
                        if i == 0 || i > p {
                            return Err(Error::InvalidParameter(format!("axis e{i} outside dimension {p}")));
                        }
                        let mut b = vec![0.0; p];
                        b[i - 1] = s;
                        base.centered_at(b)?
                    }
                    Target::Lindley => Prior::recentered(base, Subspace::span_ones(p)?)?,
                };
                prior.check_dimension(p)?;
                Ok(prior)
            }
            PriorTemplate::Mixture(parts) => {
                let mut weights = Vec::with_capacity(parts.len());
                let mut components = Vec::with_capacity(parts.len());
                for (t, w) in parts {
                    components.push(t.instantiate(p, v_x)?);
                    weights.push(*w);
                }
                Ok(Prior::Mixture(Mixture::new(weights, components)?))
            }
        }
    }
}

fn bad(s: &str, why: &str) -> Error {
    Error::InvalidParameter(format!("cannot parse estimator template `{s}`: {why}"))
}

/// Splits `s` at commas that are not inside brackets.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

/// `name[k1=v1,k2=v2]` into the name and its parameters.
fn parse_params(s: &str) -> Result<(&str, Vec<(&str, f64)>)> {
    let Some(open) = s.find('[') else {
        return Ok((s, Vec::new()));
    };
    let inner = s[open + 1..].strip_suffix(']').ok_or_else(|| bad(s, "missing `]`"))?;
    let mut params = Vec::new();
    for kv in inner.split(',').filter(|kv| !kv.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(s, "parameters are written key=value"))?;
        let v: f64 = v.trim().parse().map_err(|_| bad(s, "parameter value is not a number"))?;
        params.push((k.trim(), v));
    }
    Ok((&s[..open], params))
}

fn take(params: &mut Vec<(&str, f64)>, key: &str) -> Option<f64> {
    let i = params.iter().position(|(k, _)| *k == key)?;
    Some(params.remove(i).1)
}

fn parse_target(s: &str, t: &str) -> Result<Target> {
    if t == "lindley" {
        return Ok(Target::Lindley);
    }
    if t == "0" || t == "origin" {
        return Ok(Target::Origin);
    }
    let scale = |num: &str| -> Result<f64> {
        match num {
            "" => Ok(1.0),
            "-" => Ok(-1.0),
            n => n.parse().map_err(|_| bad(s, "target scale is not a number")),
        }
    };
    if let Some(num) = t.strip_suffix("ones") {
        return Ok(Target::Ones(scale(num)?));
    }
    if let Some(pos) = t.rfind('e') {
        if let Ok(i) = t[pos + 1..].parse::<usize>() {
            return Ok(Target::Axis(scale(&t[..pos])?, i));
        }
    }
    Err(bad(s, "target must be lindley, origin, <c>ones or <c>e<i>"))
}

fn parse_prior(s: &str) -> Result<PriorTemplate> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("mixture:") {
        let mut parts = Vec::new();
        for comp in split_top_level(rest) {
            let (t, w) = comp.rsplit_once(':').ok_or_else(|| bad(s, "mixture components are written template:weight"))?;
            let w: f64 = w.trim().parse().map_err(|_| bad(s, "mixture weight is not a number"))?;
            let t = parse_prior(t)?;
            if matches!(t, PriorTemplate::Mixture(_)) {
                return Err(bad(s, "mixtures cannot be nested"));
            }
            parts.push((t, w));
        }
        return Ok(PriorTemplate::Mixture(parts));
    }
    let (head, target) = match s.split_once('@') {
        Some((h, t)) => (h, parse_target(s, t.trim())?),
        None => (s, Target::Origin),
    };
    let (name, mut params) = parse_params(head.trim())?;
    let base = match name {
        "uniform" if params.is_empty() && target == Target::Origin => return Ok(PriorTemplate::Uniform),
        "uniform" => return Err(bad(s, "the uniform prior takes no parameters or target")),
        "harmonic" => BaseTemplate::Harmonic,
        "normal" => BaseTemplate::Normal {
            nu: take(&mut params, "nu").ok_or_else(|| bad(s, "normal needs nu"))?,
        },
        "strawderman" => BaseTemplate::Strawderman {
            a: take(&mut params, "a").ok_or_else(|| bad(s, "strawderman needs a"))?,
            v0: take(&mut params, "v0"),
        },
        _ => return Err(bad(s, "unknown prior family")),
    };
    if let Some((k, _)) = params.first() {
        return Err(bad(s, &format!("unknown parameter `{k}`")));
    }
    Ok(PriorTemplate::Spherical { base, target })
}

impl FromStr for EstimatorTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "eb" || s.starts_with("eb[") {
            let (_, mut params) = parse_params(s)?;
            let k = take(&mut params, "k");
            if !params.is_empty() {
                return Err(bad(s, "eb takes only k"));
            }
            if k.is_some_and(|k| !(k >= 0.0)) {
                return Err(bad(s, "k must be nonnegative"));
            }
            return Ok(EstimatorTemplate::EmpiricalBayes { k });
        }
        Ok(EstimatorTemplate::Prior(parse_prior(s)?))
    }
}

impl TryFrom<String> for EstimatorTemplate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorTemplate> for String {
    fn from(t: EstimatorTemplate) -> Self {
        t.to_string()
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Origin => Ok(()),
            Target::Ones(s) => write!(f, "@{}ones", scale_text(*s)),
            Target::Axis(s, i) => write!(f, "@{}e{i}", scale_text(*s)),
            Target::Lindley => write!(f, "@lindley"),
        }
    }
}

fn scale_text(s: f64) -> String {
    if s == 1.0 {
        String::new()
    } else if s == -1.0 {
        "-".into()
    } else {
        format!("{s}")
    }
}

impl fmt::Display for PriorTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorTemplate::Uniform => write!(f, "uniform"),
            PriorTemplate::Spherical { base, target } => {
                match base {
                    BaseTemplate::Harmonic => write!(f, "harmonic")?,
                    BaseTemplate::Normal { nu } => write!(f, "normal[nu={nu}]")?,
                    BaseTemplate::Strawderman { a, v0: Some(v0) } => write!(f, "strawderman[a={a},v0={v0}]")?,
                    BaseTemplate::Strawderman { a, v0: None } => write!(f, "strawderman[a={a}]")?,
                }
                write!(f, "{target}")
            }
            PriorTemplate::Mixture(parts) => {
                write!(f, "mixture:")?;
                for (i, (t, w)) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}:{w}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for EstimatorTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorTemplate::Prior(t) => write!(f, "{t}"),
            EstimatorTemplate::EmpiricalBayes { k: None } => write!(f, "eb"),
            EstimatorTemplate::EmpiricalBayes { k: Some(k) } => write!(f, "eb[k={k}]"),
        }
    }
}
