use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// An affine subspace `B = offset + span(basis)` of `R^p` used as a shrinkage
/// target. A zero-column basis is a single point.
///
/// The basis is re-orthonormalized by QR at construction so that the
/// projection `P_B z = offset + Q Q^T (z - offset)` is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSubspace", into = "RawSubspace")]
pub struct Subspace {
    offset: Vec<f64>,
    basis: DMatrix<f64>,
}

/// JSON form: `offset` of length p and `basis` as p rows of d entries
/// (row-major); an empty `basis` denotes a point.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubspace {
    offset: Vec<f64>,
    #[serde(default)]
    basis: Vec<Vec<f64>>,
}

impl TryFrom<RawSubspace> for Subspace {
    type Error = Error;

    fn try_from(raw: RawSubspace) -> Result<Self> {
        let p = raw.offset.len();
        if raw.basis.is_empty() || raw.basis.iter().all(|r| r.is_empty()) {
            return Self::point(raw.offset);
        }
        check_len(p, raw.basis.len())?;
        let d = raw.basis[0].len();
        if raw.basis.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParameter("basis rows have unequal lengths".into()));
        }
        let m = DMatrix::from_fn(p, d, |i, j| raw.basis[i][j]);
        Self::new(raw.offset, m)
    }
}

impl From<Subspace> for RawSubspace {
    fn from(s: Subspace) -> Self {
        let basis = if s.dim() == 0 {
            Vec::new()
        } else {
            (0..s.ambient_dim())
                .map(|i| s.basis.row(i).iter().copied().collect())
                .collect()
        };
        RawSubspace {
            offset: s.offset,
            basis,
        }
    }
}

impl Subspace {
    /// The single point `b`.
    pub fn point(b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::InvalidParameter("subspace offset must be nonempty".into()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subspace offset".into()));
        }
        let p = b.len();
        Ok(Self {
            offset: b,
            basis: DMatrix::zeros(p, 0),
        })
    }

    /// The origin of `R^p`.
    pub fn origin(p: usize) -> Result<Self> {
        Self::point(vec![0.0; p])
    }

    /// `offset + span(columns of spanning)`; `spanning` must have full column
    /// rank and fewer columns than rows.
    pub fn new(offset: Vec<f64>, spanning: DMatrix<f64>) -> Result<Self> {
        let p = offset.len();
        check_len(p, spanning.nrows())?;
        let d = spanning.ncols();
        if d == 0 {
            return Self::point(offset);
        }
        if d >= p {
            return Err(Error::InvalidParameter(format!(
                "subspace dimension {d} must be below the ambient dimension {p}"
            )));
        }
        if offset.iter().chain(spanning.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subspace definition".into()));
        }
        let qr = spanning.qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..d).map(|i| r[(i, i)].abs()).collect();
        let largest = diag.iter().copied().fold(0.0, f64::max);
        let smallest = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if largest == 0.0 || smallest <= 1e-10 * largest {
            return Err(Error::InvalidParameter("subspace basis is rank deficient".into()));
        }
        Ok(Self {
            offset,
            basis: qr.q(),
        })
    }

    /// `span{1_p}`, the target of Lindley's estimator.
    pub fn span_ones(p: usize) -> Result<Self> {
        Self::new(vec![0.0; p], DMatrix::from_element(p, 1, 1.0))
    }

    pub fn ambient_dim(&self) -> usize {
        self.offset.len()
    }

    /// Dimension `d` of the subspace.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Dimension of the orthogonal complement, `p - d`.
    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.dim()
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Orthonormal basis, `p x d`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `P_B z`, the closest point of `B` to `z`.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ambient_dim(), z.len())?;
        Ok(self.project_unchecked(z))
    }

    /// `z - P_B z`.
    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ambient_dim(), z.len())?;
        let proj = self.project_unchecked(z);
        Ok(z.iter().zip(&proj).map(|(a, b)| a - b).collect())
    }

    pub(crate) fn project_unchecked(&self, z: &[f64]) -> Vec<f64> {
        if self.dim() == 0 {
            return self.offset.clone();
        }
        let centered = DVector::from_iterator(z.len(), z.iter().zip(&self.offset).map(|(a, b)| a - b));
        let coords = self.basis.tr_mul(&centered);
        let inside = &self.basis * coords;
        self.offset.iter().zip(inside.iter()).map(|(o, v)| o + v).collect()
    }
}

/// Standalone form of [`Subspace::project`].
pub fn project_onto(subspace: &Subspace, z: &[f64]) -> Result<Vec<f64>> {
    subspace.project(z)
}
