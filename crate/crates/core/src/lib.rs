//! Spectral laboratory for first-order hyperbolic systems `D_t U = A(t, D_x) U`
//! whose coefficients depend on time.
//!
//! Each Fourier mode `ξ = r·ω` is reduced to an amplitude equation
//! `∂_t a = Φ⁻¹ (∂_t N) N⁻¹ Φ a` through the diagonalizer `N(t, ω)` and the
//! phase propagator `Φ = diag(exp(i r θ_j(t)))`. On top of the amplitudes the
//! crate builds free (limiting) evolutions, wave operators and the scattering
//! operator, and classifies whether the phase deviations
//! `ψ_j(t) = ∫₀ᵗ (φ_j − φ_j^±)` stay bounded.

pub mod config;
pub mod error;
pub mod integrator;
pub mod lab;
pub mod linalg;
pub mod modes;
pub mod ode;
pub mod profile;
pub mod quadrature;
pub mod runner;
pub mod spectral;
pub mod symbol;

use serde::{Deserialize, Serialize};

pub use error::{LabError, Result};

/// Which end of the time axis: `t → +∞` or `t → −∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+")]
    Plus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }

    pub const BOTH: [Sign; 2] = [Sign::Minus, Sign::Plus];
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}
