use num_complex::Complex64;

use crate::linalg::{c64, CMat};

/// Coefficients of `det(τI − A) = τ^m + α_1 τ^{m−1} + ⋯ + α_m`, stored as
/// `alpha[k−1] = α_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CharPolyCoeffs {
    pub alpha: Vec<Complex64>,
}

impl CharPolyCoeffs {
    /// Coefficient of `τ^j` (`j = m` gives 1).
    pub fn coeff_of_power(&self, j: usize) -> Complex64 {
        let m = self.alpha.len();
        if j == m {
            c64(1.0, 0.0)
        } else {
            self.alpha[m - 1 - j]
        }
    }

    pub fn eval(&self, tau: Complex64) -> Complex64 {
        self.alpha
            .iter()
            .fold(c64(1.0, 0.0), |acc, &a| acc * tau + a)
    }

    pub fn max_imag(&self) -> f64 {
        self.alpha.iter().fold(0.0, |acc, a| acc.max(a.im.abs()))
    }
}

fn trace(a: &CMat) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Faddeev–LeVerrier recurrence: `M_1 = I`, `α_k = −tr(A M_k)/k`,
/// `M_{k+1} = A M_k + α_k I`.
pub fn char_poly_coeffs(a: &CMat) -> CharPolyCoeffs {
    char_poly_with_derivative(a, None).0
}

/// Coefficients together with their time derivatives, given `∂_t A`.
pub fn char_poly_derivative(a: &CMat, da: &CMat) -> (CharPolyCoeffs, CharPolyCoeffs) {
    let (c, d) = char_poly_with_derivative(a, Some(da));
    (c, d.expect("derivative requested"))
}

fn char_poly_with_derivative(
    a: &CMat,
    da: Option<&CMat>,
) -> (CharPolyCoeffs, Option<CharPolyCoeffs>) {
    let m = a.nrows();
    let mut alpha = Vec::with_capacity(m);
    let mut dalpha = Vec::with_capacity(m);
    let mut mk = CMat::identity(m, m);
    let mut dmk = CMat::zeros(m, m);
    for k in 1..=m {
        let am = a * &mk;
        let ak = -trace(&am) / k as f64;
        alpha.push(ak);
        if let Some(da) = da {
            let dak = -(trace(&(da * &mk)) + trace(&(a * &dmk))) / k as f64;
            dalpha.push(dak);
            if k < m {
                dmk = da * &mk + a * &dmk + CMat::identity(m, m) * dak;
            }
        }
        if k < m {
            mk = am + CMat::identity(m, m) * ak;
        }
    }
    let d = da.map(|_| CharPolyCoeffs { alpha: dalpha });
    (CharPolyCoeffs { alpha }, d)
}
