use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::{c64, CMat, I, ZERO};
use crate::profile::Profile;
use crate::Sign;

use super::{Direction, Symbol};

/// Second-order wave equation `∂_t²u − c(t)²Δu = 0` in the variables
/// `(|ξ|û, ∂_t û)`: `A = [[0, −i], [i c², 0]]` on unit directions.
#[derive(Debug, Clone)]
pub struct Wave2 {
    pub c: Arc<dyn Profile>,
    pub n: usize,
}

impl Wave2 {
    fn block(c: f64) -> CMat {
        CMat::from_row_slice(2, 2, &[ZERO, -I, I * (c * c), ZERO])
    }
}

impl Symbol for Wave2 {
    fn family(&self) -> &'static str {
        "wave2"
    }
    fn dim(&self) -> usize {
        2
    }
    fn space_dim(&self) -> usize {
        self.n
    }
    fn matrix(&self, t: f64, _omega: &Direction) -> CMat {
        Self::block(self.c.value(t))
    }
    fn matrix_dt(&self, t: f64, _omega: &Direction) -> CMat {
        let c = self.c.value(t);
        let dc = self.c.derivative(t);
        CMat::from_row_slice(2, 2, &[ZERO, ZERO, I * (2.0 * c * dc), ZERO])
    }
    fn limit(&self, sign: Sign, _omega: &Direction) -> Option<CMat> {
        self.c.limit(sign).map(Self::block)
    }
    fn even_in_direction(&self) -> bool {
        true
    }
    fn check_sample(&self, t: f64, _omega: &Direction) -> Result<()> {
        let c = self.c.value(t);
        if c.abs() <= 0.0 || !c.is_finite() {
            return Err(LabError::not_hyperbolic(format!(
                "wave speed {c} is not positive"
            )));
        }
        Ok(())
    }
}

/// Two wave equations coupled through second-order forms:
/// `∂_t²u − c₁²Δu + P₁(t,D)v = 0`, `∂_t²v − c₂²Δv + P₂(t,D)u = 0`, with
/// `P_k(t, ω) = p_k(t)·ωᵀQ_kω`.
#[derive(Debug, Clone)]
pub struct CoupledWave {
    pub c1: Arc<dyn Profile>,
    pub c2: Arc<dyn Profile>,
    pub p1: Arc<dyn Profile>,
    pub p2: Arc<dyn Profile>,
    /// Symmetric `n×n` quadratic forms.
    pub q1: Vec<Vec<f64>>,
    pub q2: Vec<Vec<f64>>,
}

fn quad_form(q: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, row) in q.iter().enumerate() {
        for (j, qij) in row.iter().enumerate() {
            s += w[i] * qij * w[j];
        }
    }
    s
}

impl CoupledWave {
    pub fn new(
        c1: Arc<dyn Profile>,
        c2: Arc<dyn Profile>,
        p1: Arc<dyn Profile>,
        p2: Arc<dyn Profile>,
        q1: Vec<Vec<f64>>,
        q2: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = q1.len();
        let square = |q: &Vec<Vec<f64>>| q.len() == n && q.iter().all(|r| r.len() == n);
        if n == 0 || !square(&q1) || !square(&q2) {
            return Err(LabError::Config(
                "coupled_wave: forms q1, q2 must be square of the same size n ≥ 1".into(),
            ));
        }
        Ok(CoupledWave {
            c1,
            c2,
            p1,
            p2,
            q1,
            q2,
        })
    }

    /// `(c₁², c₂², P₁, P₂)` at `(t, ω)`.
    pub fn coefficients(&self, t: f64, omega: &Direction) -> (f64, f64, f64, f64) {
        let c1 = self.c1.value(t);
        let c2 = self.c2.value(t);
        let w = omega.as_slice();
        (
            c1 * c1,
            c2 * c2,
            self.p1.value(t) * quad_form(&self.q1, w),
            self.p2.value(t) * quad_form(&self.q2, w),
        )
    }

    fn assemble(c1sq: f64, c2sq: f64, p1: f64, p2: f64) -> CMat {
        let mut a = CMat::zeros(4, 4);
        a[(0, 1)] = -I;
        a[(1, 0)] = I * c1sq;
        a[(1, 2)] = I * p1;
        a[(2, 3)] = -I;
        a[(3, 0)] = I * p2;
        a[(3, 2)] = I * c2sq;
        a
    }

    /// Closed-form roots on unit directions, ascending:
    /// `±(1/√2)·sqrt(c₁² + c₂² ± sqrt((c₁² − c₂²)² + 4P₁P₂))`.
    pub fn roots_formula(c1sq: f64, c2sq: f64, p1: f64, p2: f64) -> [f64; 4] {
        let disc = ((c1sq - c2sq).powi(2) + 4.0 * p1 * p2).sqrt();
        let hi = ((c1sq + c2sq + disc) / 2.0).sqrt();
        let lo = ((c1sq + c2sq - disc) / 2.0).sqrt();
        [-hi, -lo, lo, hi]
    }
}

impl Symbol for CoupledWave {
    fn family(&self) -> &'static str {
        "coupled_wave"
    }
    fn dim(&self) -> usize {
        4
    }
    fn space_dim(&self) -> usize {
        self.q1.len()
    }
    fn matrix(&self, t: f64, omega: &Direction) -> CMat {
        let (a, b, p, q) = self.coefficients(t, omega);
        Self::assemble(a, b, p, q)
    }
    fn matrix_dt(&self, t: f64, omega: &Direction) -> CMat {
        let w = omega.as_slice();
        let d1 = 2.0 * self.c1.value(t) * self.c1.derivative(t);
        let d2 = 2.0 * self.c2.value(t) * self.c2.derivative(t);
        let dp1 = self.p1.derivative(t) * quad_form(&self.q1, w);
        let dp2 = self.p2.derivative(t) * quad_form(&self.q2, w);
        let mut a = CMat::zeros(4, 4);
        a[(1, 0)] = I * d1;
        a[(1, 2)] = I * dp1;
        a[(3, 0)] = I * dp2;
        a[(3, 2)] = I * d2;
        a
    }
    fn limit(&self, sign: Sign, omega: &Direction) -> Option<CMat> {
        let w = omega.as_slice();
        let c1 = self.c1.limit(sign)?;
        let c2 = self.c2.limit(sign)?;
        let p1 = self.p1.limit(sign)? * quad_form(&self.q1, w);
        let p2 = self.p2.limit(sign)? * quad_form(&self.q2, w);
        Some(Self::assemble(c1 * c1, c2 * c2, p1, p2))
    }
    fn even_in_direction(&self) -> bool {
        true
    }
    fn check_sample(&self, t: f64, omega: &Direction) -> Result<()> {
        let (a, b, p, q) = self.coefficients(t, omega);
        let disc = (a - b).powi(2) + 4.0 * p * q;
        if disc <= 0.0 {
            return Err(LabError::not_hyperbolic(format!(
                "(c1²−c2²)² + 4P1P2 = {disc:.3e} is not positive"
            )));
        }
        let det = a * b - p * q;
        if det <= 0.0 {
            return Err(LabError::not_hyperbolic(format!(
                "c1²c2² − P1P2 = {det:.3e} is not positive"
            )));
        }
        Ok(())
    }
}

/// One coefficient `a_{ν,j}(t)` of `D_t^m u + Σ a_{ν,j}(t) D_x^ν D_t^j u`.
#[derive(Debug, Clone)]
pub struct CompanionTerm {
    pub nu: Vec<u32>,
    pub j: usize,
    pub profile: Arc<dyn Profile>,
}

/// First-order reduction of an `m`-th order scalar equation in the variables
/// `w_k = |ξ|^{m−1−k} D_t^k û`: ones on the superdiagonal, last row
/// `−b_j(t, ω)` with `b_j = Σ_ν a_{ν,j}(t) ω^ν`.
#[derive(Debug, Clone)]
pub struct Companion {
    m: usize,
    n: usize,
    terms: Vec<CompanionTerm>,
}

impl Companion {
    pub fn new(m: usize, n: usize, terms: Vec<CompanionTerm>) -> Result<Self> {
        if m < 1 || n < 1 {
            return Err(LabError::Config(
                "companion: m and n must be at least 1".into(),
            ));
        }
        for term in &terms {
            let order: u32 = term.nu.iter().sum();
            if term.nu.len() != n {
                return Err(LabError::Config(format!(
                    "companion: multi-index {:?} has length {}, expected n = {n}",
                    term.nu,
                    term.nu.len()
                )));
            }
            if term.j > m - 1 {
                return Err(LabError::Config(format!(
                    "companion: time order j = {} exceeds m − 1 = {}",
                    term.j,
                    m - 1
                )));
            }
            if order as usize + term.j != m {
                return Err(LabError::Config(format!(
                    "companion: |ν| + j = {} + {} must equal m = {m}",
                    order, term.j
                )));
            }
        }
        Ok(Companion { m, n, terms })
    }

    fn monomial(nu: &[u32], w: &[f64]) -> f64 {
        nu.iter().zip(w).map(|(&k, x)| x.powi(k as i32)).product()
    }

    fn assemble(&self, b: &[f64]) -> CMat {
        let m = self.m;
        let mut a = CMat::zeros(m, m);
        for k in 0..m - 1 {
            a[(k, k + 1)] = c64(1.0, 0.0);
        }
        for (j, bj) in b.iter().enumerate() {
            a[(m - 1, j)] = c64(-bj, 0.0);
        }
        a
    }

    fn lower_coeffs(&self, omega: &Direction, value: impl Fn(&dyn Profile) -> f64) -> Vec<f64> {
        let mut b = vec![0.0; self.m];
        for term in &self.terms {
            b[term.j] += value(term.profile.as_ref()) * Self::monomial(&term.nu, omega.as_slice());
        }
        b
    }
}

impl Symbol for Companion {
    fn family(&self) -> &'static str {
        "companion"
    }
    fn dim(&self) -> usize {
        self.m
    }
    fn space_dim(&self) -> usize {
        self.n
    }
    fn matrix(&self, t: f64, omega: &Direction) -> CMat {
        self.assemble(&self.lower_coeffs(omega, |p| p.value(t)))
    }
    fn matrix_dt(&self, t: f64, omega: &Direction) -> CMat {
        let b = self.lower_coeffs(omega, |p| p.derivative(t));
        let mut a = CMat::zeros(self.m, self.m);
        for (j, bj) in b.iter().enumerate() {
            a[(self.m - 1, j)] = c64(-bj, 0.0);
        }
        a
    }
    fn limit(&self, sign: Sign, omega: &Direction) -> Option<CMat> {
        if self.terms.iter().any(|t| t.profile.limit(sign).is_none()) {
            return None;
        }
        Some(self.assemble(&self.lower_coeffs(omega, |p| p.limit(sign).unwrap_or(0.0))))
    }
    fn even_in_direction(&self) -> bool {
        // ω^ν is even exactly when |ν| is even for every term
        self.terms.iter().all(|t| t.nu.iter().sum::<u32>() % 2 == 0)
    }
}

/// One term `p(t)·(ω_axis)·M` of a generic symbol; missing profile means 1,
/// missing axis means no direction factor.
#[derive(Debug, Clone)]
pub struct GenericTerm {
    pub matrix: CMat,
    pub profile: Option<Arc<dyn Profile>>,
    pub axis: Option<usize>,
}

/// `A(t, ω) = Σ_k p_k(t)·ω_{axis_k}·M_k`.
#[derive(Debug, Clone)]
pub struct Generic {
    m: usize,
    n: usize,
    terms: Vec<GenericTerm>,
}

impl Generic {
    pub fn new(n: usize, terms: Vec<GenericTerm>) -> Result<Self> {
        let m = terms
            .first()
            .map(|t| t.matrix.nrows())
            .ok_or_else(|| LabError::Config("generic symbol needs at least one term".into()))?;
        for term in &terms {
            if term.matrix.nrows() != m || term.matrix.ncols() != m {
                return Err(LabError::Config(format!(
                    "generic symbol: all term matrices must be {m}×{m}"
                )));
            }
            if let Some(axis) = term.axis {
                if axis >= n {
                    return Err(LabError::Config(format!(
                        "generic symbol: axis {axis} out of range for n = {n}"
                    )));
                }
            }
        }
        Ok(Generic { m, n, terms })
    }

    fn combine(
        &self,
        omega: &Direction,
        weight: impl Fn(&GenericTerm) -> Option<f64>,
    ) -> Option<CMat> {
        let mut a = CMat::zeros(self.m, self.m);
        for term in &self.terms {
            let dir = term.axis.map_or(1.0, |k| omega.as_slice()[k]);
            a += &term.matrix * c64(weight(term)? * dir, 0.0);
        }
        Some(a)
    }
}

impl Symbol for Generic {
    fn family(&self) -> &'static str {
        "generic"
    }
    fn dim(&self) -> usize {
        self.m
    }
    fn space_dim(&self) -> usize {
        self.n
    }
    fn matrix(&self, t: f64, omega: &Direction) -> CMat {
        self.combine(omega, |term| {
            Some(term.profile.as_ref().map_or(1.0, |p| p.value(t)))
        })
        .expect("values always defined")
    }
    fn matrix_dt(&self, t: f64, omega: &Direction) -> CMat {
        self.combine(omega, |term| {
            Some(term.profile.as_ref().map_or(0.0, |p| p.derivative(t)))
        })
        .expect("derivatives always defined")
    }
    fn limit(&self, sign: Sign, omega: &Direction) -> Option<CMat> {
        self.combine(omega, |term| match &term.profile {
            None => Some(1.0),
            Some(p) => p.limit(sign),
        })
    }
    fn even_in_direction(&self) -> bool {
        self.terms.iter().all(|t| t.axis.is_none())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{Constant, RationalDecay};
    use crate::spectral::characteristic_roots;

    fn constant(v: f64) -> Arc<dyn Profile> {
        Arc::new(Constant { value: v })
    }

    #[test]
    fn wave2_unit_speed_matrix() {
        let w = Wave2 {
            c: constant(1.0),
            n: 1,
        };
        let a = w.matrix(3.7, &Direction::e1(1));
        let expect = CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
        assert_eq!(a, expect);
    }

    #[test]
    fn coupled_block_diagonal_without_coupling() {
        let s = CoupledWave::new(
            constant(2f64.sqrt()),
            constant(1.0),
            constant(0.0),
            constant(0.0),
            vec![vec![1.0]],
            vec![vec![1.0]],
        )
        .unwrap();
        let a = s.matrix(0.0, &Direction::e1(1));
        assert!((a[(1, 0)] - I * 2.0).norm() < 1e-15);
        assert_eq!(a[(1, 2)], ZERO);
        assert_eq!(a[(3, 0)], ZERO);
        assert_eq!(a[(3, 2)], I);
        let roots = characteristic_roots(&a).unwrap();
        let expect = [-2f64.sqrt(), -1.0, 1.0, 2f64.sqrt()];
        for (r, e) in roots.iter().zip(expect) {
            assert!((r - e).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_equal_speeds_violates_conditions() {
        let s = CoupledWave::new(
            constant(1.5),
            constant(1.5),
            constant(0.0),
            constant(0.0),
            vec![vec![1.0]],
            vec![vec![1.0]],
        )
        .unwrap();
        let err = s.check_sample(0.0, &Direction::e1(1)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn companion_wave_has_speed_roots() {
        let c = 3.0;
        let sym = Companion::new(
            2,
            1,
            vec![CompanionTerm {
                nu: vec![2],
                j: 0,
                profile: constant(-c * c),
            }],
        )
        .unwrap();
        let roots = characteristic_roots(&sym.matrix(0.0, &Direction::e1(1))).unwrap();
        assert!((roots[0] + 3.0).abs() < 1e-12 && (roots[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn companion_rejects_inconsistent_orders() {
        let bad = |nu: Vec<u32>, j| {
            Companion::new(
                3,
                1,
                vec![CompanionTerm {
                    nu,
                    j,
                    profile: constant(1.0),
                }],
            )
        };
        assert!(bad(vec![2], 0).is_err());
        assert!(bad(vec![0], 3).is_err());
        assert!(bad(vec![1, 1], 1).is_err());
        assert!(bad(vec![2], 1).is_ok());
    }

    #[test]
    fn analytic_time_derivatives_match_differences() {
        let prof: Arc<dyn Profile> = Arc::new(RationalDecay {
            c_inf: 2.0,
            amplitude: 1.0,
        });
        let symbols: Vec<Box<dyn Symbol>> = vec![
            Box::new(Wave2 {
                c: prof.clone(),
                n: 1,
            }),
            Box::new(
                CoupledWave::new(
                    prof.clone(),
                    constant(1.0),
                    prof.clone(),
                    constant(0.5),
                    vec![vec![1.0]],
                    vec![vec![1.0]],
                )
                .unwrap(),
            ),
            Box::new(
                Companion::new(
                    2,
                    1,
                    vec![CompanionTerm {
                        nu: vec![2],
                        j: 0,
                        profile: prof.clone(),
                    }],
                )
                .unwrap(),
            ),
        ];
        let w = Direction::e1(1);
        for s in &symbols {
            for &t in &[-3.0, 0.5, 1.0, 8.0] {
                let h = 1e-4;
                let fd = (s.matrix(t + h, &w) - s.matrix(t - h, &w)) / c64(2.0 * h, 0.0);
                let err = (fd - s.matrix_dt(t, &w)).norm();
                assert!(err < 1e-7, "{} at {t}: {err}", s.family());
            }
        }
    }
}
