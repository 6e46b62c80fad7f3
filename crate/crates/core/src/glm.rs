//! Canonical exponential families: cumulant, mean and variance maps,
//! log-likelihood, score, and response sampling.

use rand::Rng;
use rand_distr::{Distribution, Open01, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Logistic natural parameters are clamped to this magnitude before
/// exponentiation; the mean is 0 or 1 to machine precision beyond it.
pub const LOGISTIC_THETA_CLAMP: f64 = 40.0;

/// `exp` overflows shortly after this.
pub const POISSON_THETA_MAX: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Logistic,
    Linear,
    Poisson,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "binomial" | "logit" => Ok(Self::Logistic),
            "linear" | "gaussian" | "normal" => Ok(Self::Linear),
            "poisson" => Ok(Self::Poisson),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Logistic => "logistic",
            Self::Linear => "linear",
            Self::Poisson => "poisson",
        })
    }
}

/// An exponential-family member with canonical link and known dispersion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Family {
    kind: FamilyKind,
    dispersion: f64,
}

impl Family {
    pub fn logistic() -> Self {
        Self {
            kind: FamilyKind::Logistic,
            dispersion: 1.0,
        }
    }

    pub fn poisson() -> Self {
        Self {
            kind: FamilyKind::Poisson,
            dispersion: 1.0,
        }
    }

    /// Gaussian linear model with known error variance `dispersion`.
    pub fn linear(dispersion: f64) -> Result<Self> {
        if !(dispersion > 0.0 && dispersion.is_finite()) {
            return Err(Error::Config(format!(
                "dispersion must be positive and finite, got {dispersion}"
            )));
        }
        Ok(Self {
            kind: FamilyKind::Linear,
            dispersion,
        })
    }

    /// Logistic and Poisson ignore `dispersion` (fixed at 1).
    pub fn from_kind(kind: FamilyKind, dispersion: f64) -> Result<Self> {
        match kind {
            FamilyKind::Logistic => Ok(Self::logistic()),
            FamilyKind::Poisson => Ok(Self::poisson()),
            FamilyKind::Linear => Self::linear(dispersion),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    /// Cumulant `b(θ)`.
    pub fn cumulant(&self, theta: f64) -> f64 {
        match self.kind {
            // log(1 + e^θ) without overflow
            FamilyKind::Logistic => theta.max(0.0) + (-theta.abs()).exp().ln_1p(),
            FamilyKind::Linear => 0.5 * theta * theta,
            FamilyKind::Poisson => theta.exp(),
        }
    }

    /// `b'(θ)`.
    pub fn mean(&self, theta: f64) -> Result<f64> {
        match self.kind {
            FamilyKind::Logistic => {
                let t = theta.clamp(-LOGISTIC_THETA_CLAMP, LOGISTIC_THETA_CLAMP);
                Ok(if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                })
            }
            FamilyKind::Linear => Ok(theta),
            FamilyKind::Poisson => poisson_exp(theta),
        }
    }

    /// `b''(θ)`.
    pub fn variance(&self, theta: f64) -> Result<f64> {
        match self.kind {
            FamilyKind::Logistic => {
                let t = theta.clamp(-LOGISTIC_THETA_CLAMP, LOGISTIC_THETA_CLAMP);
                let e = (-t.abs()).exp();
                Ok(e / ((1.0 + e) * (1.0 + e)))
            }
            FamilyKind::Linear => Ok(1.0),
            FamilyKind::Poisson => poisson_exp(theta),
        }
    }

    /// Checks that every response lies in the family's support.
    pub fn validate_response(&self, y: &[f64]) -> Result<()> {
        for (row, &v) in y.iter().enumerate() {
            let reason = if !v.is_finite() {
                Some("not finite")
            } else {
                match self.kind {
                    FamilyKind::Logistic if v != 0.0 && v != 1.0 => Some("must be 0 or 1"),
                    FamilyKind::Poisson if v < 0.0 || v.fract() != 0.0 => {
                        Some("must be a nonnegative integer")
                    }
                    _ => None,
                }
            };
            if let Some(reason) = reason {
                return Err(Error::InvalidResponse {
                    row,
                    reason: format!("{v} {reason}"),
                });
            }
        }
        Ok(())
    }
}

fn poisson_exp(theta: f64) -> Result<f64> {
    if theta > POISSON_THETA_MAX {
        Err(Error::Saturation { theta })
    } else {
        Ok(theta.exp())
    }
}

/// Natural parameter vector `θ = X β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor(Vec<f64>);

impl LinearPredictor {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(theta))
    }

    pub fn from_design(x: &DenseMatrix, beta: &[f64]) -> Result<Self> {
        Self::new(x.mul_vec(beta)?)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Response vector validated against a family's support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector(Vec<f64>);

impl ResponseVector {
    pub fn new(family: &Family, y: Vec<f64>) -> Result<Self> {
        family.validate_response(&y)?;
        Ok(Self(y))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn mean_map(family: &Family, theta: &LinearPredictor) -> Result<Vec<f64>> {
    theta.as_slice().iter().map(|&t| family.mean(t)).collect()
}

/// Diagonal of `Σ(θ)`.
pub fn variance_map(family: &Family, theta: &LinearPredictor) -> Result<Vec<f64>> {
    theta
        .as_slice()
        .iter()
        .map(|&t| family.variance(t))
        .collect()
}

fn check_dims(x: &DenseMatrix, y: &ResponseVector, beta: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has {} entries",
            x.rows(),
            y.len()
        )));
    }
    if x.cols() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but beta has {} entries",
            x.cols(),
            beta.len()
        )));
    }
    Ok(())
}

/// `n⁻¹ [yᵀ X β − 1ᵀ b(X β)]`.
pub fn log_likelihood(
    family: &Family,
    x: &DenseMatrix,
    y: &ResponseVector,
    beta: &[f64],
) -> Result<f64> {
    check_dims(x, y, beta)?;
    let theta = x.mul_vec(beta)?;
    Ok(log_likelihood_at(family, y.as_slice(), &theta))
}

pub(crate) fn log_likelihood_at(family: &Family, y: &[f64], theta: &[f64]) -> f64 {
    let n = y.len() as f64;
    let total: f64 = y
        .iter()
        .zip(theta)
        .map(|(yi, t)| yi * t - family.cumulant(*t))
        .sum();
    total / n
}

/// `Xᵀ (y − μ(X β))`. The dispersion does not enter.
pub fn score(
    family: &Family,
    x: &DenseMatrix,
    y: &ResponseVector,
    beta: &[f64],
) -> Result<Vec<f64>> {
    check_dims(x, y, beta)?;
    let theta = LinearPredictor::new(x.mul_vec(beta)?)?;
    let mu = mean_map(family, &theta)?;
    let resid: Vec<f64> = y.as_slice().iter().zip(&mu).map(|(a, b)| a - b).collect();
    x.tr_mul_vec(&resid)
}

/// Independent draws `y_i ~ family(θ_i)`.
pub fn sample_response<R: Rng + ?Sized>(
    family: &Family,
    theta: &LinearPredictor,
    rng: &mut R,
) -> Result<ResponseVector> {
    let mut y = Vec::with_capacity(theta.len());
    match family.kind {
        FamilyKind::Logistic => {
            for &t in theta.as_slice() {
                let mu = family.mean(t)?;
                let u: f64 = Open01.sample(rng);
                y.push(if u < mu { 1.0 } else { 0.0 });
            }
        }
        FamilyKind::Linear => {
            let sd = family.dispersion.sqrt();
            for &t in theta.as_slice() {
                let z: f64 = StandardNormal.sample(rng);
                y.push(t + sd * z);
            }
        }
        FamilyKind::Poisson => {
            for &t in theta.as_slice() {
                let lambda = family.mean(t)?;
                let draw = Poisson::new(lambda)
                    .map_err(|e| Error::Config(format!("poisson rate {lambda}: {e}")))?
                    .sample(rng);
                y.push(draw);
            }
        }
    }
    Ok(ResponseVector(y))
}
