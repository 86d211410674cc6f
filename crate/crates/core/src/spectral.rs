//! Characteristic roots, their time derivatives and limits, and the
//! gauge-fixed diagonalizer `N(t, ω)` with `N·A = D·N`.

use std::f64::consts::{FRAC_1_PI, FRAC_1_SQRT_2};
use std::sync::Arc;

use nalgebra::Schur;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{c64, frobenius, inverse, CMat, ZERO};
use crate::quadrature::{integrate, QuadOptions};
use crate::symbol::{char_poly_derivative, CharPolyCoeffs, Direction, Symbol, GAP_FLOOR};
use crate::Sign;

/// Imaginary parts above this declare a symbol non-hyperbolic.
pub const IM_TOL: f64 = 1e-9;
/// Largest admissible left-eigenvector residual `‖nA − φn‖ / max(1, ‖A‖)`.
pub const EIG_RESIDUAL_TOL: f64 = 1e-9;
/// Rows whose overlap with the gauge anchor drops below this are rejected.
pub const ANCHOR_OVERLAP_MIN: f64 = 0.1;

/// Eigenvalue real parts in ascending order and the largest `|Im λ|`.
pub fn eigen_real_parts(a: &CMat) -> (Vec<f64>, f64) {
    let m = a.nrows();
    // `Schur::new` never gives up and stalls on some symmetric spectra; a
    // diagonal shift changes the iteration without changing the answer.
    let scale = frobenius(a).max(1.0);
    let eig = [0.0, FRAC_1_PI, -FRAC_1_SQRT_2]
        .iter()
        .find_map(|&shift| {
            let shifted = a + CMat::identity(m, m) * c64(shift * scale, 0.0);
            Schur::try_new(shifted, f64::EPSILON, 500)
                .and_then(|s| s.eigenvalues())
                .map(|v| v.iter().map(|z| z - shift * scale).collect::<Vec<_>>())
        })
        .unwrap_or_else(|| vec![c64(f64::NAN, f64::NAN); m]);
    let max_imag = eig.iter().fold(0.0_f64, |acc, z| {
        if z.im.is_nan() {
            f64::INFINITY
        } else {
            acc.max(z.im.abs())
        }
    });
    let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
    re.sort_by(|x, y| x.total_cmp(y));
    (re, max_imag)
}

/// Sorted real eigenvalues of `A`; fails when any `|Im λ| > IM_TOL`.
pub fn characteristic_roots(a: &CMat) -> Result<Vec<f64>> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::not_hyperbolic("symbol has non-finite entries"));
    }
    let (roots, imag) = eigen_real_parts(a);
    if imag > IM_TOL {
        return Err(LabError::not_hyperbolic(format!(
            "root with imaginary part {imag:.3e}"
        )));
    }
    Ok(roots)
}

pub fn min_gap(roots: &[f64]) -> f64 {
    roots
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min)
}

/// `∂_tφ_k = −[Σ_j ∂_tα_{m−j} φ_k^j] / Π_{r≠k}(φ_k − φ_r)`.
pub fn root_time_derivative(roots: &[f64], dalpha: &CharPolyCoeffs) -> Result<Vec<f64>> {
    let m = roots.len();
    let gap = min_gap(roots);
    if m > 1 && gap < GAP_FLOOR {
        return Err(LabError::IllConditioned(format!(
            "root gap {gap:.3e} too small for the derivative formula"
        )));
    }
    let mut out = Vec::with_capacity(m);
    for (k, &phi) in roots.iter().enumerate() {
        let mut num = ZERO;
        let mut pow = c64(1.0, 0.0);
        for j in 0..m {
            num += dalpha.alpha[m - 1 - j] * pow;
            pow *= phi;
        }
        let den: f64 = roots
            .iter()
            .enumerate()
            .filter(|&(r, _)| r != k)
            .map(|(_, &pr)| phi - pr)
            .product();
        out.push(-(num.re) / den);
    }
    Ok(out)
}

/// Roots and their time derivatives at `(t, ω)` from the analytic `∂_tA`.
pub fn roots_with_derivatives(
    symbol: &dyn Symbol,
    t: f64,
    omega: &Direction,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = symbol.matrix(t, omega);
    let roots = characteristic_roots(&a).map_err(|e| e.at(t, omega.as_slice()))?;
    let (_, dalpha) = char_poly_derivative(&a, &symbol.matrix_dt(t, omega));
    let d = root_time_derivative(&roots, &dalpha)?;
    Ok((roots, d))
}

/// Unit-norm left eigenvector for `φ`, phase fixed so the largest entry is
/// real positive.
pub fn left_eigenvector(a: &CMat, phi: f64) -> Result<Vec<Complex64>> {
    let m = a.nrows();
    let shifted = a.transpose() - CMat::identity(m, m) * c64(phi, 0.0);
    let svd = shifted.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| LabError::IllConditioned("SVD did not return V".into()))?;
    let (k, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bk, bs), (k, &s)| if s < bs { (k, s) } else { (bk, bs) },
            );
    let mut row: Vec<Complex64> = (0..m).map(|i| v_t[(k, i)].conj()).collect();
    normalize_row(&mut row);
    let resid: f64 = (0..m)
        .map(|j| {
            let s: Complex64 = (0..m).map(|i| row[i] * a[(i, j)]).sum();
            (s - row[j] * phi).norm_sqr()
        })
        .sum::<f64>()
        .sqrt();
    let scale = frobenius(a).max(1.0);
    if !(resid <= EIG_RESIDUAL_TOL * scale) {
        return Err(LabError::IllConditioned(format!(
            "left eigenvector residual {resid:.3e} for root {phi}"
        )));
    }
    Ok(row)
}

fn normalize_row(row: &mut [Complex64]) {
    let norm = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let dominant = row.iter().copied().fold(ZERO, |best, z| {
        if z.norm() > best.norm() * (1.0 + 1e-12) {
            z
        } else {
            best
        }
    });
    let phase = if dominant.norm() > 0.0 {
        dominant.conj() / dominant.norm()
    } else {
        c64(1.0, 0.0)
    };
    for z in row.iter_mut() {
        *z = *z * phase / norm;
    }
}

/// Rows of left eigenvectors for the given (sorted) roots.
pub fn diagonalizer(a: &CMat, roots: &[f64]) -> Result<CMat> {
    let m = a.nrows();
    let mut n = CMat::zeros(m, m);
    for (k, &phi) in roots.iter().enumerate() {
        let row = left_eigenvector(a, phi)?;
        for j in 0..m {
            n[(k, j)] = row[j];
        }
    }
    Ok(n)
}

/// Rotates each row of `n` by the unit phase making `⟨row, ref_row⟩` real
/// positive; returns the smallest overlap modulus.
pub fn align_rows(n: &mut CMat, reference: &CMat) -> f64 {
    let m = n.nrows();
    let mut min_overlap = f64::INFINITY;
    for k in 0..m {
        let mut ov = ZERO;
        for j in 0..m {
            ov += reference[(k, j)].conj() * n[(k, j)];
        }
        let modulus = ov.norm();
        min_overlap = min_overlap.min(modulus);
        if modulus > 0.0 {
            let phase = ov.conj() / modulus;
            for j in 0..m {
                n[(k, j)] *= phase;
            }
        }
    }
    min_overlap
}

/// Roots and gauge-fixed diagonalizer at one time.
#[derive(Clone, Debug)]
pub struct Frame {
    pub t: f64,
    pub roots: Vec<f64>,
    pub n: CMat,
}

/// Limit data at one end of the time axis.
#[derive(Clone, Debug, Serialize)]
pub struct LimitData {
    pub roots: Vec<f64>,
    #[serde(skip)]
    pub n: CMat,
    #[serde(skip)]
    pub a: CMat,
    /// True when the limit came from closed-form coefficient limits.
    pub analytic: bool,
    /// Estimated `max_j ∫_{T}^{2T} |∂_tφ_j|` when the limit was sampled.
    pub tail: f64,
}

/// Pointwise spectral data along one direction `ω`, with the gauge anchored
/// to the eigenvector rows at `t = 0`.
#[derive(Debug, Clone)]
pub struct SpectralDirection {
    symbol: Arc<dyn Symbol>,
    omega: Direction,
    anchor: CMat,
    limits: [LimitData; 2],
}

fn sign_index(sign: Sign) -> usize {
    match sign {
        Sign::Minus => 0,
        Sign::Plus => 1,
    }
}

impl SpectralDirection {
    pub fn new(
        symbol: Arc<dyn Symbol>,
        omega: Direction,
        t_max: f64,
        tail_tol: f64,
    ) -> Result<Self> {
        Self::with_anchor_phases(symbol, omega, t_max, tail_tol, None)
    }

    /// As [`SpectralDirection::new`], multiplying the anchor rows by the unit
    /// phases `e^{i·phases[k]}` (gauge change by a constant diagonal unitary).
    pub fn with_anchor_phases(
        symbol: Arc<dyn Symbol>,
        omega: Direction,
        t_max: f64,
        tail_tol: f64,
        phases: Option<&[f64]>,
    ) -> Result<Self> {
        if omega.dim() != symbol.space_dim() {
            return Err(LabError::Config(format!(
                "direction has dimension {}, symbol expects {}",
                omega.dim(),
                symbol.space_dim()
            )));
        }
        let a0 = symbol.matrix(0.0, &omega);
        let roots0 = checked_roots(symbol.as_ref(), &a0, 0.0, &omega)?;
        let mut anchor = diagonalizer(&a0, &roots0)?;
        if let Some(ph) = phases {
            for k in 0..anchor.nrows() {
                let u = crate::linalg::cis(ph.get(k).copied().unwrap_or(0.0));
                for j in 0..anchor.ncols() {
                    anchor[(k, j)] *= u;
                }
            }
        }
        let mut dir = SpectralDirection {
            symbol,
            omega,
            anchor,
            limits: [placeholder_limit(), placeholder_limit()],
        };
        for sign in Sign::BOTH {
            dir.limits[sign_index(sign)] = dir.compute_limit(sign, t_max, tail_tol)?;
        }
        Ok(dir)
    }

    pub fn symbol(&self) -> &Arc<dyn Symbol> {
        &self.symbol
    }

    pub fn omega(&self) -> &Direction {
        &self.omega
    }

    pub fn dim(&self) -> usize {
        self.symbol.dim()
    }

    pub fn anchor(&self) -> &CMat {
        &self.anchor
    }

    pub fn limit(&self, sign: Sign) -> &LimitData {
        &self.limits[sign_index(sign)]
    }

    fn compute_limit(&self, sign: Sign, t_max: f64, tail_tol: f64) -> Result<LimitData> {
        if let Some(a) = self.symbol.limit(sign, &self.omega) {
            let roots = characteristic_roots(&a)?;
            if min_gap(&roots) < GAP_FLOOR {
                return Err(LabError::not_hyperbolic("limiting roots coincide"));
            }
            let mut n = diagonalizer(&a, &roots)?;
            self.align_to_anchor(&mut n, sign.as_f64() * f64::INFINITY)?;
            return Ok(LimitData {
                roots,
                n,
                a,
                analytic: true,
                tail: 0.0,
            });
        }
        let s = sign.as_f64();
        let frame = self.frame(s * t_max)?;
        let mut tail = 0.0_f64;
        for j in 0..self.dim() {
            let f = |t: f64| {
                roots_with_derivatives(self.symbol.as_ref(), t, &self.omega)
                    .map(|(_, d)| d[j].abs())
                    .unwrap_or(f64::NAN)
            };
            let (lo, hi) = if s > 0.0 {
                (t_max, 2.0 * t_max)
            } else {
                (-2.0 * t_max, -t_max)
            };
            let q = integrate(f, lo, hi, &QuadOptions::with_abs_tol(1e-12))?;
            tail = tail.max(q.value);
        }
        if tail > tail_tol {
            return Err(LabError::TailNotConverged {
                what: format!("limiting roots ({sign})"),
                tail,
                tol: tail_tol,
            });
        }
        Ok(LimitData {
            roots: frame.roots,
            a: self.symbol.matrix(s * t_max, &self.omega),
            n: frame.n,
            analytic: false,
            tail,
        })
    }

    fn align_to_anchor(&self, n: &mut CMat, t: f64) -> Result<()> {
        let overlap = align_rows(n, &self.anchor);
        if overlap < ANCHOR_OVERLAP_MIN {
            return Err(LabError::IllConditioned(format!(
                "eigenvector rows at t = {t} have overlap {overlap:.3} with the gauge anchor"
            )));
        }
        Ok(())
    }

    pub fn roots(&self, t: f64) -> Result<Vec<f64>> {
        let a = self.symbol.matrix(t, &self.omega);
        checked_roots(self.symbol.as_ref(), &a, t, &self.omega)
    }

    /// Roots and gauge-fixed diagonalizer at `t`.
    pub fn frame(&self, t: f64) -> Result<Frame> {
        let a = self.symbol.matrix(t, &self.omega);
        let roots = checked_roots(self.symbol.as_ref(), &a, t, &self.omega)?;
        let mut n = diagonalizer(&a, &roots)?;
        self.align_to_anchor(&mut n, t)?;
        Ok(Frame { t, roots, n })
    }

    pub fn n_at(&self, t: f64) -> Result<CMat> {
        Ok(self.frame(t)?.n)
    }

    /// `∂_tN` by a five-point difference with step `1e-3·(1+|t|)`. The
    /// stencil stays on one side of `t = 0` (the side given by `half`), so
    /// profiles with a kink at the origin are differentiated one-sidedly.
    pub fn dn_dt(&self, t: f64, half: Sign) -> Result<CMat> {
        let h = 1e-3 * (1.0 + t.abs());
        let crosses = match half {
            Sign::Plus => t - 2.0 * h < 0.0,
            Sign::Minus => t + 2.0 * h > 0.0,
        };
        if !crosses {
            let f = |k: f64| self.n_at(t + k * h);
            // differences first, so constant frames give an exactly zero result
            let d =
                ((f(1.0)? - f(-1.0)?) * c64(8.0, 0.0) - (f(2.0)? - f(-2.0)?)) / c64(12.0 * h, 0.0);
            return Ok(d);
        }
        let s = half.as_f64();
        let f = |k: f64| self.n_at(t + s * k * h);
        let f0 = f(0.0)?;
        let d = ((f(1.0)? - &f0) * c64(48.0, 0.0) - (f(2.0)? - &f0) * c64(36.0, 0.0)
            + (f(3.0)? - &f0) * c64(16.0, 0.0)
            - (f(4.0)? - &f0) * c64(3.0, 0.0))
            / c64(12.0 * s * h, 0.0);
        Ok(d)
    }

    /// `G = (∂_tN)·N⁻¹`, the frequency-independent part of the coupling.
    pub fn coupling_g(&self, t: f64, half: Sign) -> Result<CMat> {
        let n = self.n_at(t)?;
        let dn = self.dn_dt(t, half)?;
        Ok(dn * inverse(&n)?)
    }
}

fn placeholder_limit() -> LimitData {
    LimitData {
        roots: Vec::new(),
        n: CMat::zeros(0, 0),
        a: CMat::zeros(0, 0),
        analytic: false,
        tail: 0.0,
    }
}

fn checked_roots(symbol: &dyn Symbol, a: &CMat, t: f64, omega: &Direction) -> Result<Vec<f64>> {
    symbol
        .check_sample(t, omega)
        .map_err(|e| e.at(t, omega.as_slice()))?;
    let roots = characteristic_roots(a).map_err(|e| e.at(t, omega.as_slice()))?;
    let gap = min_gap(&roots);
    if roots.len() > 1 && gap < GAP_FLOOR {
        return Err(
            LabError::not_hyperbolic(format!("roots coincide (gap {gap:.3e})"))
                .at(t, omega.as_slice()),
        );
    }
    Ok(roots)
}

/// Sampled diagonalizer along a time grid.
#[derive(Clone, Debug)]
pub struct DiagonalizerField {
    pub times: Vec<f64>,
    pub roots: Vec<Vec<f64>>,
    pub n: Vec<CMat>,
    pub dn: Vec<CMat>,
    /// `min |det N|` over the samples.
    pub min_det: f64,
    /// Largest `‖N(t_{k+1}) − N(t_k)‖_F / Δt`.
    pub lipschitz: f64,
    /// Largest `‖NA − DN‖_F / ‖A‖_F`.
    pub max_residual: f64,
}

impl DiagonalizerField {
    /// Trapezoid approximation of `∫ ‖∂_tN‖_F dt` over the grid.
    pub fn dn_l1(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.dn.windows(2))
            .map(|(t, d)| 0.5 * (t[1] - t[0]) * (frobenius(&d[0]) + frobenius(&d[1])))
            .sum()
    }
}

/// Samples `N` on a sorted grid. Consecutive samples must overlap by at
/// least 0.5 row-wise, otherwise the grid is too coarse to follow the gauge.
pub fn diagonalizer_field(dir: &SpectralDirection, t_grid: &[f64]) -> Result<DiagonalizerField> {
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Config(
            "time grid must be strictly increasing".into(),
        ));
    }
    let mut field = DiagonalizerField {
        times: t_grid.to_vec(),
        roots: Vec::with_capacity(t_grid.len()),
        n: Vec::with_capacity(t_grid.len()),
        dn: Vec::with_capacity(t_grid.len()),
        min_det: f64::INFINITY,
        lipschitz: 0.0,
        max_residual: 0.0,
    };
    for (k, &t) in t_grid.iter().enumerate() {
        let frame = dir.frame(t)?;
        let a = dir.symbol().matrix(t, dir.omega());
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            frame.roots.len(),
            frame.roots.iter().map(|&r| c64(r, 0.0)),
        ));
        let resid =
            frobenius(&(&frame.n * &a - &d * &frame.n)) / frobenius(&a).max(f64::MIN_POSITIVE);
        field.max_residual = field.max_residual.max(resid);
        field.min_det = field
            .min_det
            .min(crate::linalg::determinant(&frame.n).norm());
        if k > 0 {
            let prev = &field.n[k - 1];
            let mut probe = frame.n.clone();
            let overlap = align_rows(&mut probe, prev);
            if overlap < 0.5 {
                return Err(LabError::GridTooCoarse { t, overlap });
            }
            let dt = t - t_grid[k - 1];
            field.lipschitz = field.lipschitz.max(frobenius(&(&frame.n - prev)) / dt);
        }
        let half = if t >= 0.0 { Sign::Plus } else { Sign::Minus };
        field.dn.push(dir.dn_dt(t, half)?);
        field.roots.push(frame.roots);
        field.n.push(frame.n);
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;
    use crate::profile::{Constant, Profile, RationalDecay};
    use crate::symbol::{CoupledWave, Wave2};

    fn wave(c: Arc<dyn Profile>) -> Arc<dyn Symbol> {
        Arc::new(Wave2 { c, n: 1 })
    }

    fn stable() -> Arc<dyn Profile> {
        Arc::new(RationalDecay {
            c_inf: 2.0,
            amplitude: 1.0,
        })
    }

    #[test]
    fn diagonal_matrix_roots_and_identity_diagonalizer() {
        let a = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c64(3.0, 0.0),
            c64(1.0, 0.0),
            c64(2.0, 0.0),
        ]));
        assert_eq!(characteristic_roots(&a).unwrap(), vec![1.0, 2.0, 3.0]);
        let a2 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c64(1.0, 0.0),
            c64(2.0, 0.0),
        ]));
        let n = diagonalizer(&a2, &[1.0, 2.0]).unwrap();
        assert!((n - CMat::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn wave_rows_match_closed_form() {
        let c = 2.0;
        let a = CMat::from_row_slice(2, 2, &[ZERO, -I, I * (c * c), ZERO]);
        let roots = characteristic_roots(&a).unwrap();
        assert!((roots[0] + 2.0).abs() < 1e-14 && (roots[1] - 2.0).abs() < 1e-14);
        let n = diagonalizer(&a, &roots).unwrap();
        let s = (1.0 + c * c).sqrt();
        // root −c has row (c, i)/s, root +c has row (c, −i)/s
        assert!((n[(0, 0)] - c64(c / s, 0.0)).norm() < 1e-13);
        assert!((n[(0, 1)] - I / s).norm() < 1e-13);
        assert!((n[(1, 1)] + I / s).norm() < 1e-13);
    }

    #[test]
    fn complex_roots_are_rejected() {
        let a = CMat::from_row_slice(2, 2, &[ZERO, c64(1.0, 0.0), c64(-1.0, 0.0), ZERO]);
        assert_eq!(characteristic_roots(&a).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn root_derivative_matches_closed_form() {
        let sym = wave(stable());
        let w = Direction::e1(1);
        let (_, d0) = roots_with_derivatives(sym.as_ref(), 0.0, &w).unwrap();
        assert!(d0[0].abs() < 1e-12 && d0[1].abs() < 1e-12);
        let (_, d1) = roots_with_derivatives(sym.as_ref(), 1.0, &w).unwrap();
        assert!((d1[1] + 0.5).abs() < 1e-10);
        assert!((d1[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn root_derivative_matches_finite_differences() {
        let sym = wave(stable());
        let w = Direction::e1(1);
        let h = 1e-4;
        for &t in &[-2.0, 0.7, 3.0] {
            let (_, d) = roots_with_derivatives(sym.as_ref(), t, &w).unwrap();
            let rp = characteristic_roots(&sym.matrix(t + h, &w)).unwrap();
            let rm = characteristic_roots(&sym.matrix(t - h, &w)).unwrap();
            for j in 0..2 {
                let fd = (rp[j] - rm[j]) / (2.0 * h);
                assert!((fd - d[j]).abs() <= 1e-5 * d[j].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn diagonalizer_derivative_matches_analytic_rows() {
        let prof = stable();
        let sym = wave(prof.clone());
        let dir = SpectralDirection::new(sym, Direction::e1(1), 1e4, 1e-6).unwrap();
        for &t in &[-4.0, -0.5, 0.5, 1.0, 6.0] {
            let c = prof.value(t);
            let dc = prof.derivative(t);
            let s = (1.0 + c * c).sqrt();
            // d/dt [c/s] = dc/s³, d/dt [1/s] = −c·dc/s³
            let d_first = dc / (s * s * s);
            let d_second = -c * dc / (s * s * s);
            let half = if t >= 0.0 { Sign::Plus } else { Sign::Minus };
            let dn = dir.dn_dt(t, half).unwrap();
            assert!((dn[(0, 0)] - c64(d_first, 0.0)).norm() < 1e-6);
            assert!((dn[(0, 1)] - I * d_second).norm() < 1e-6);
            assert!((dn[(1, 1)] + I * d_second).norm() < 1e-6);
        }
    }

    #[test]
    fn limits_from_closed_form() {
        let dir = SpectralDirection::new(wave(stable()), Direction::e1(1), 1e4, 1e-6).unwrap();
        for sign in Sign::BOTH {
            let lim = dir.limit(sign);
            assert!(lim.analytic);
            assert!((lim.roots[0] + 2.0).abs() < 1e-14 && (lim.roots[1] - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_field_has_zero_derivative() {
        let dir = SpectralDirection::new(
            wave(Arc::new(Constant { value: 2.0 })),
            Direction::e1(1),
            1e4,
            1e-6,
        )
        .unwrap();
        let grid: Vec<f64> = (0..21).map(|k| -5.0 + 0.5 * k as f64).collect();
        let field = diagonalizer_field(&dir, &grid).unwrap();
        assert!(field.dn.iter().all(|d| frobenius(d) < 1e-12));
        assert!(field.max_residual < 1e-10);
        assert!(field.n.iter().all(|n| (n - &field.n[0]).norm() < 1e-14));
    }

    #[test]
    fn dn_integral_converges_with_horizon() {
        let dir = SpectralDirection::new(wave(stable()), Direction::e1(1), 1e4, 1e-6).unwrap();
        let grid = |tm: f64| -> Vec<f64> {
            let k = 4000;
            (0..=k)
                .map(|i| {
                    let u = -1.0 + 2.0 * i as f64 / k as f64;
                    u.signum() * ((u.abs() * (1.0 + tm).ln()).exp() - 1.0)
                })
                .collect()
        };
        let l1 = diagonalizer_field(&dir, &grid(500.0)).unwrap().dn_l1();
        let l2 = diagonalizer_field(&dir, &grid(1000.0)).unwrap().dn_l1();
        assert!(((l2 - l1) / l2).abs() <= 1e-3, "{l1} vs {l2}");
    }

    #[test]
    fn coupled_block_diagonalizer_is_block_diagonal() {
        let k: Arc<dyn Profile> = Arc::new(Constant { value: 2f64.sqrt() });
        let one: Arc<dyn Profile> = Arc::new(Constant { value: 1.0 });
        let zero: Arc<dyn Profile> = Arc::new(Constant { value: 0.0 });
        let sym =
            CoupledWave::new(k, one, zero.clone(), zero, vec![vec![1.0]], vec![vec![1.0]]).unwrap();
        let a = sym.matrix(0.0, &Direction::e1(1));
        let roots = characteristic_roots(&a).unwrap();
        let n = diagonalizer(&a, &roots).unwrap();
        // roots (−√2, −1, 1, √2): rows 0, 3 live on the first block, rows 1, 2 on the second
        for (row, cols) in [(0, [2, 3]), (3, [2, 3]), (1, [0, 1]), (2, [0, 1])] {
            for c in cols {
                assert!(n[(row, c)].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn coarse_grid_is_detected() {
        use crate::symbol::{Generic, GenericTerm};
        let sz = CMat::from_row_slice(2, 2, &[c64(1.0, 0.0), ZERO, ZERO, c64(-1.0, 0.0)]);
        let sx = CMat::from_row_slice(2, 2, &[ZERO, c64(1.0, 0.0), c64(1.0, 0.0), ZERO]);
        let sym = Generic::new(
            1,
            vec![
                GenericTerm {
                    matrix: sz,
                    profile: Some(Arc::new(crate::profile::TanhStep {
                        mid: 0.0,
                        jump: 2.0,
                        scale: 0.01,
                    })),
                    axis: None,
                },
                GenericTerm {
                    matrix: sx * c64(0.3, 0.0),
                    profile: None,
                    axis: None,
                },
            ],
        )
        .unwrap();
        let dir = SpectralDirection::new(Arc::new(sym), Direction::e1(1), 1e4, 1e-6).unwrap();
        let err = diagonalizer_field(&dir, &[-1.0, 1.0]).unwrap_err();
        assert!(matches!(err, LabError::GridTooCoarse { .. }));
        let fine: Vec<f64> = (0..=400).map(|k| -1.0 + 0.005 * k as f64).collect();
        assert!(diagonalizer_field(&dir, &fine).is_ok());
    }
}
