//! State representation shared by every module.
//!
//! Vector states hold their coordinates directly. Symmetric matrix states are
//! stored as the row-major upper triangle (`n(n+1)/2` entries) together with a
//! shape tag, so the set-valued maps, barriers and the λ-engine all work on a
//! single flat type.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance applied when a full matrix is packed into a state.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateShape {
    Vector,
    SymMatrix { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    coords: Vec<f64>,
    shape: StateShape,
}

impl StateVector {
    pub fn vector(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::model("state dimension must be at least 1"));
        }
        Ok(Self {
            coords,
            shape: StateShape::Vector,
        })
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            coords: vec![x],
            shape: StateShape::Vector,
        }
    }

    /// Packs a symmetric matrix. Fails when `m` is not square or not symmetric.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::model(format!(
                "matrix state must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::model(format!(
                        "matrix state is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self::pack_symmetric(m))
    }

    /// Packs the upper triangle of `m` without checking symmetry; entries are
    /// averaged with their mirror to absorb rounding.
    pub(crate) fn pack_symmetric(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut coords = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                coords.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        Self {
            coords,
            shape: StateShape::SymMatrix { n },
        }
    }

    /// Rebuilds a state with the same shape as `self` from raw coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != self.coords.len() {
            return Err(Error::model(format!(
                "coordinate count {} does not match state dimension {}",
                coords.len(),
                self.coords.len()
            )));
        }
        Ok(Self {
            coords,
            shape: self.shape,
        })
    }

    pub fn from_parts(coords: Vec<f64>, shape: StateShape) -> Result<Self> {
        let expected = match shape {
            StateShape::Vector => coords.len().max(1),
            StateShape::SymMatrix { n } => n * (n + 1) / 2,
        };
        if coords.is_empty() || coords.len() != expected {
            return Err(Error::model(format!(
                "{} coordinates cannot form a state of shape {shape:?}",
                coords.len()
            )));
        }
        Ok(Self { coords, shape })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn shape(&self) -> StateShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self.shape, StateShape::SymMatrix { .. })
    }

    /// Unpacks a matrix state. Fails for vector states.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let StateShape::SymMatrix { n } = self.shape else {
            return Err(Error::model("expected a matrix state, got a vector"));
        };
        let mut m = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = self.coords[k];
                m[(j, i)] = self.coords[k];
                k += 1;
            }
        }
        Ok(m)
    }

    pub fn trace(&self) -> Result<f64> {
        let StateShape::SymMatrix { n } = self.shape else {
            return Err(Error::model("trace is only defined for matrix states"));
        };
        let mut k = 0;
        let mut tr = 0.0;
        for i in 0..n {
            tr += self.coords[k];
            k += n - i;
        }
        Ok(tr)
    }

    /// Positive definiteness through leading principal minors.
    pub fn is_positive_definite(&self) -> Result<bool> {
        let m = self.to_matrix()?;
        let n = m.nrows();
        for k in 1..=n {
            let minor = m.view((0, 0), (k, k)).into_owned().determinant();
            if minor <= 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `theta * self + (1 - theta) * other`.
    pub fn blend(&self, other: &Self, theta: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        Ok(Self {
            coords,
            shape: self.shape,
        })
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape || self.coords.len() != other.coords.len() {
            return Err(Error::model(format!(
                "state shapes differ: {:?}/{} vs {:?}/{}",
                self.shape,
                self.coords.len(),
                other.shape,
                other.coords.len()
            )));
        }
        Ok(())
    }
}
