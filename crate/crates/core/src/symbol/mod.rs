//! Time-dependent matrix symbols `A(t, ω)` on unit directions.
//!
//! Homogeneity is realized by construction: the symbol at `ξ = r·ω` is
//! `r·A(t, ω)`, so evaluators only ever see unit directions.

mod charpoly;
mod families;
mod registry;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

pub use charpoly::{char_poly_coeffs, char_poly_derivative, CharPolyCoeffs};
pub use families::{Companion, CompanionTerm, CoupledWave, Generic, GenericTerm, Wave2};
pub use registry::{SymbolRegistry, SymbolSpec};

use crate::error::{LabError, Result};
use crate::linalg::CMat;
use crate::Sign;

/// A unit vector in `ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub const NORM_TOL: f64 = 1e-14;

    pub fn new(components: Vec<f64>) -> Result<Self> {
        let norm = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if components.is_empty() || !norm.is_finite() || (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(LabError::Domain { norm });
        }
        Ok(Direction(components))
    }

    /// Normalizes a nonzero vector onto the sphere.
    pub fn normalized(components: &[f64]) -> Result<Self> {
        let norm = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(LabError::Domain { norm });
        }
        Ok(Direction(components.iter().map(|x| x / norm).collect()))
    }

    pub fn e1(n: usize) -> Self {
        let mut v = vec![0.0; n.max(1)];
        v[0] = 1.0;
        Direction(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn reflected(&self) -> Self {
        Direction(self.0.iter().map(|x| -x).collect())
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = LabError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Vec<f64> {
        d.0
    }
}

pub trait Symbol: Debug + Send + Sync {
    fn family(&self) -> &'static str;

    /// Matrix size `m`.
    fn dim(&self) -> usize;

    /// Space dimension `n`.
    fn space_dim(&self) -> usize;

    fn matrix(&self, t: f64, omega: &Direction) -> CMat;

    /// `∂_t A`. Default: central difference with step `1e-5·(1+|t|)`.
    fn matrix_dt(&self, t: f64, omega: &Direction) -> CMat {
        let h = 1e-5 * (1.0 + t.abs());
        (self.matrix(t + h, omega) - self.matrix(t - h, omega)) / crate::linalg::c64(2.0 * h, 0.0)
    }

    /// `A_±(ω)` when every coefficient has a known limit.
    fn limit(&self, _sign: Sign, _omega: &Direction) -> Option<CMat> {
        None
    }

    /// True when `A(t, −ω) = A(t, ω)` identically, letting per-mode work be
    /// shared between a direction and its reflection.
    fn even_in_direction(&self) -> bool {
        false
    }

    /// Family-specific hyperbolicity conditions checked at one sample.
    fn check_sample(&self, _t: f64, _omega: &Direction) -> Result<()> {
        Ok(())
    }
}

/// Evaluates `A(t, ω)` after checking that `omega` is a unit vector of the
/// symbol's space dimension.
pub fn eval_symbol(symbol: &dyn Symbol, t: f64, omega: &[f64]) -> Result<CMat> {
    let dir = Direction::new(omega.to_vec())?;
    if dir.dim() != symbol.space_dim() {
        return Err(LabError::Config(format!(
            "direction has dimension {}, symbol expects {}",
            dir.dim(),
            symbol.space_dim()
        )));
    }
    Ok(symbol.matrix(t, &dir))
}

/// Sampled hyperbolicity statistics.
#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    /// Minimal root separation over all samples.
    pub gap: f64,
    /// Largest `|Im λ|` seen before discarding imaginary parts.
    pub max_imag: f64,
    /// Largest root modulus.
    pub max_root: f64,
    /// Largest Frobenius norm of `A` over the samples.
    pub max_entry_norm: f64,
}

/// Smallest root separation below which roots count as coincident.
pub const GAP_FLOOR: f64 = 1e-8;

/// Minimal root gap over `t_samples × omega_samples`, failing with
/// `NotHyperbolic` at the first offending sample.
pub fn hyperbolicity_gap(
    symbol: &dyn Symbol,
    t_samples: &[f64],
    omega_samples: &[Direction],
) -> Result<GapReport> {
    if t_samples.is_empty() || omega_samples.is_empty() {
        return Err(LabError::Config("hyperbolicity check needs samples".into()));
    }
    let mut report = GapReport {
        gap: f64::INFINITY,
        max_imag: 0.0,
        max_root: 0.0,
        max_entry_norm: 0.0,
    };
    for omega in omega_samples {
        for &t in t_samples {
            symbol
                .check_sample(t, omega)
                .map_err(|e| e.at(t, omega.as_slice()))?;
            let a = symbol.matrix(t, omega);
            report.max_entry_norm = report.max_entry_norm.max(crate::linalg::frobenius(&a));
            let (roots, imag) = crate::spectral::eigen_real_parts(&a);
            report.max_imag = report.max_imag.max(imag);
            if imag > crate::spectral::IM_TOL {
                return Err(LabError::not_hyperbolic(format!(
                    "root with imaginary part {imag:.3e}"
                ))
                .at(t, omega.as_slice()));
            }
            let gap = crate::spectral::min_gap(&roots);
            if gap < GAP_FLOOR {
                return Err(
                    LabError::not_hyperbolic(format!("roots coincide (gap {gap:.3e})"))
                        .at(t, omega.as_slice()),
                );
            }
            report.gap = report.gap.min(gap);
            for r in roots {
                report.max_root = report.max_root.max(r.abs());
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_rejects_non_unit() {
        assert!(matches!(
            Direction::new(vec![1.0, 1e-3]),
            Err(LabError::Domain { .. })
        ));
        assert!(Direction::new(vec![0.6, 0.8]).is_ok());
        assert!(Direction::normalized(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn direction_serde_validates() {
        let d: Direction = serde_json::from_str("[0.0, 1.0]").unwrap();
        assert_eq!(d.dim(), 2);
        assert!(serde_json::from_str::<Direction>("[0.5, 0.5]").is_err());
    }
}
