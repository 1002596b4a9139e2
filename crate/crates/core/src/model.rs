use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension and variances of the observation `X ~ N_p(mu, v_x I)` and the
/// future observation `Y ~ N_p(mu, v_y I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", deny_unknown_fields)]
pub struct ModelConfig {
    p: usize,
    v_x: f64,
    v_y: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    p: usize,
    v_x: f64,
    v_y: f64,
}

impl TryFrom<RawModel> for ModelConfig {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        Self::new(raw.p, raw.v_x, raw.v_y)
    }
}

impl ModelConfig {
    pub fn new(p: usize, v_x: f64, v_y: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("dimension p must be at least 1".into()));
        }
        if !(v_x > 0.0 && v_x.is_finite()) || !(v_y > 0.0 && v_y.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "variances must be positive and finite (v_x = {v_x}, v_y = {v_y})"
            )));
        }
        Ok(Self { p, v_x, v_y })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn v_x(&self) -> f64 {
        self.v_x
    }

    pub fn v_y(&self) -> f64 {
        self.v_y
    }

    /// Variance of the sufficient statistic `W = (v_y X + v_x Y) / (v_x + v_y)`.
    pub fn v_w(&self) -> f64 {
        self.v_x * self.v_y / (self.v_x + self.v_y)
    }

    /// `W` for an observed pair `(x, y)`.
    pub fn w_statistic(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let s = self.v_x + self.v_y;
        x.iter()
            .zip(y)
            .map(|(xi, yi)| (self.v_y * xi + self.v_x * yi) / s)
            .collect()
    }
}
