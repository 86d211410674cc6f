//! Small dense complex linear algebra shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn cis(phase: f64) -> Complex64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, s)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| LabError::IllConditioned("singular matrix in inversion".into()))
}

pub fn determinant(a: &CMat) -> Complex64 {
    a.clone().lu().determinant()
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Pairwise summation: a fixed reduction tree, so results are reproducible
/// regardless of how the terms were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Matrix from rows of `[re, im]` pairs, the layout used in scenario files.
pub fn cmat_from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let m = rows.len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(LabError::Config(format!(
            "matrix must be square, got {} rows with lengths {:?}",
            m,
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(CMat::from_fn(m, m, |i, j| {
        c64(rows[i][j][0], rows[i][j][1])
    }))
}
