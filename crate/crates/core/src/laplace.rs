//! Laplace transform `L(x) = E[e^{<x, X>}]` of the increment law, its
//! derivatives, and its behavior at infinity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cone::ConeSpec;
use crate::error::{Error, Result};
use crate::linalg::{add, dot, norm};
use crate::step::{improper_direction, Mode, StepMeasure, EXP_GUARD};

/// Steps with `|<u, s>|` below this lie on `u^⊥`.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LaplaceModel {
    Finite {
        measure: StepMeasure,
    },
    /// Gaussian increments with the given drift and identity covariance.
    Gaussian {
        drift: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Diverges,
    Limit(f64),
}

impl LaplaceModel {
    pub fn finite(measure: StepMeasure) -> Result<Self> {
        if measure.mode() != Mode::Probability {
            return Err(Error::CountingMode);
        }
        Ok(LaplaceModel::Finite { measure })
    }

    pub fn gaussian(drift: Vec<f64>) -> Result<Self> {
        if drift.is_empty() || drift.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "drift must be a finite nonempty vector".into(),
            ));
        }
        Ok(LaplaceModel::Gaussian { drift })
    }

    pub fn dim(&self) -> usize {
        match self {
            LaplaceModel::Finite { measure } => measure.dim(),
            LaplaceModel::Gaussian { drift } => drift.len(),
        }
    }

    pub fn measure(&self) -> Option<&StepMeasure> {
        match self {
            LaplaceModel::Finite { measure } => Some(measure),
            LaplaceModel::Gaussian { .. } => None,
        }
    }

    /// Exponents `<x, s>` (finite) after the overflow guard.
    fn exponents(measure: &StepMeasure, x: &[f64]) -> Result<Vec<f64>> {
        let e: Vec<f64> = measure.steps().iter().map(|s| dot(x, s)).collect();
        match e.iter().find(|v| v.abs() > EXP_GUARD || !v.is_finite()) {
            Some(&bad) => Err(Error::Overflow { exponent: bad }),
            None => Ok(e),
        }
    }

    fn gaussian_exponent(drift: &[f64], x: &[f64]) -> Result<f64> {
        let e = 0.5 * dot(x, x) + dot(x, drift);
        if e.abs() > EXP_GUARD || !e.is_finite() {
            return Err(Error::Overflow { exponent: e });
        }
        Ok(e)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), x.len())?;
        match self {
            LaplaceModel::Finite { measure } => {
                let e = Self::exponents(measure, x)?;
                Ok(e.iter()
                    .zip(measure.weights())
                    .map(|(e, w)| w * e.exp())
                    .sum())
            }
            LaplaceModel::Gaussian { drift } => Ok(Self::gaussian_exponent(drift, x)?.exp()),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), x.len())?;
        match self {
            LaplaceModel::Finite { measure } => {
                let e = Self::exponents(measure, x)?;
                let mut g = vec![0.0; self.dim()];
                for ((s, w), e) in measure.steps().iter().zip(measure.weights()).zip(&e) {
                    let f = w * e.exp();
                    for (gi, si) in g.iter_mut().zip(s) {
                        *gi += f * si;
                    }
                }
                Ok(g)
            }
            LaplaceModel::Gaussian { drift } => {
                let l = Self::gaussian_exponent(drift, x)?.exp();
                Ok(add(x, drift).iter().map(|v| v * l).collect())
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Error::check_dim(self.dim(), x.len())?;
        let d = self.dim();
        match self {
            LaplaceModel::Finite { measure } => {
                let e = Self::exponents(measure, x)?;
                let mut h = DMatrix::zeros(d, d);
                for ((s, w), e) in measure.steps().iter().zip(measure.weights()).zip(&e) {
                    let f = w * e.exp();
                    for i in 0..d {
                        for j in 0..d {
                            h[(i, j)] += f * s[i] * s[j];
                        }
                    }
                }
                Ok(h)
            }
            LaplaceModel::Gaussian { drift } => {
                let l = Self::gaussian_exponent(drift, x)?.exp();
                let y = add(x, drift);
                Ok(DMatrix::from_fn(d, d, |i, j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    (id + y[i] * y[j]) * l
                }))
            }
        }
    }

    /// Behavior of `t -> L(x + t u)` as `t -> ∞` for a unit vector `u`:
    /// divergence when some step has `<u, s> > 0`, otherwise the limit is the
    /// mass of the boundary slice `u^⊥` weighted by `e^{<x, s>}`.
    pub fn classify_direction(&self, u: &[f64], x: &[f64]) -> Result<Direction> {
        Error::check_dim(self.dim(), u.len())?;
        Error::check_dim(self.dim(), x.len())?;
        if (norm(u) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "direction must be a unit vector".into(),
            ));
        }
        let measure = match self {
            LaplaceModel::Finite { measure } => measure,
            LaplaceModel::Gaussian { .. } => return Ok(Direction::Diverges),
        };
        if measure.steps().iter().any(|s| dot(u, s) > BOUNDARY_TOL) {
            return Ok(Direction::Diverges);
        }
        let mut limit = 0.0;
        for (s, w) in measure.steps().iter().zip(measure.weights()) {
            if dot(u, s).abs() <= BOUNDARY_TOL {
                let e = dot(x, s);
                if e.abs() > EXP_GUARD {
                    return Err(Error::Overflow { exponent: e });
                }
                limit += w * e.exp();
            }
        }
        Ok(Direction::Limit(limit))
    }

    /// A direction `u` of `cone` along which `L` fails to grow, if any.
    pub fn global_min_obstruction(&self, cone: &ConeSpec) -> Result<Option<Vec<f64>>> {
        Error::check_dim(self.dim(), cone.dim())?;
        match self {
            LaplaceModel::Finite { measure } => {
                if !measure.check_h1() {
                    return Err(Error::H1Violated);
                }
                improper_direction(measure.steps(), cone)
            }
            LaplaceModel::Gaussian { .. } => Ok(None),
        }
    }

    /// Whether `L` attains its infimum on `cone` (playing the role of the dual cone).
    pub fn has_global_min_on_cone(&self, cone: &ConeSpec) -> Result<bool> {
        Ok(self.global_min_obstruction(cone)?.is_none())
    }
}
