//! Frequency grids, initial data and per-mode evolutions.
//!
//! A mode is a pair `(ω, r)`; all per-mode vectors live in `ℂ^m`. Norms are
//! taken on the frequency side (Plancherel), with the radial measure
//! `r^{n−1} dr` and a fixed weight per direction.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::integrator::{AmplitudeTrajectory, Coupling};
use crate::linalg::{c64, cis, inverse, CMat, CVec, I, ZERO};
use crate::ode::{Integrator, OdeOptions, OdeSystem, Tableau};
use crate::spectral::SpectralDirection;
use crate::symbol::{Direction, Symbol};

/// Radial node layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialSpec {
    Linear { min: f64, max: f64, count: usize },
    Log { min: f64, max: f64, count: usize },
    Explicit { radii: Vec<f64> },
}

/// Grid description as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Sampled directions. Defaults to `±1` in one space dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Direction>>,
    pub radial: RadialSpec,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            directions: None,
            radial: RadialSpec::Log {
                min: 0.5,
                max: 16.0,
                count: 256,
            },
        }
    }
}

/// Tensor grid `{r_k·ω_d}` with trapezoid weights in `r` (including
/// `r^{n−1}`) and equal weights over the directions.
#[derive(Clone, Debug)]
pub struct FrequencyGrid {
    pub space_dim: usize,
    pub directions: Vec<Direction>,
    pub direction_weights: Vec<f64>,
    pub radii: Vec<f64>,
    pub radial_weights: Vec<f64>,
}

fn sphere_area(n: usize) -> f64 {
    // |S^{n−1}| = 2 π^{n/2} / Γ(n/2)
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            let half = n as f64 / 2.0;
            let gamma = if n.is_multiple_of(2) {
                (1..n / 2).map(|k| k as f64).product::<f64>()
            } else {
                let mut g = PI.sqrt();
                let mut x = 0.5;
                while x < half - 1e-9 {
                    g *= x;
                    x += 1.0;
                }
                g
            };
            2.0 * PI.powf(half) / gamma
        }
    }
}

impl FrequencyGrid {
    pub fn build(spec: &GridSpec, space_dim: usize) -> Result<Self> {
        let radii: Vec<f64> = match &spec.radial {
            RadialSpec::Linear { min, max, count } => {
                check_range(*min, *max, *count)?;
                (0..*count)
                    .map(|k| min + (max - min) * k as f64 / (*count - 1) as f64)
                    .collect()
            }
            RadialSpec::Log { min, max, count } => {
                check_range(*min, *max, *count)?;
                let (a, b) = (min.ln(), max.ln());
                (0..*count)
                    .map(|k| (a + (b - a) * k as f64 / (*count - 1) as f64).exp())
                    .collect()
            }
            RadialSpec::Explicit { radii } => radii.clone(),
        };
        if radii.len() < 2
            || radii.iter().any(|r| !(*r > 0.0) || !r.is_finite())
            || radii.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(LabError::Grid(
                "radii must be positive, finite, strictly increasing and at least two".into(),
            ));
        }
        let directions = match &spec.directions {
            Some(d) => d.clone(),
            None if space_dim == 1 => vec![Direction::e1(1), Direction::e1(1).reflected()],
            None => {
                return Err(LabError::Grid(format!(
                    "directions must be listed explicitly in {space_dim} space dimensions"
                )))
            }
        };
        if directions.is_empty() || directions.iter().any(|d| d.dim() != space_dim) {
            return Err(LabError::Grid(format!(
                "every direction must have {space_dim} components"
            )));
        }
        let direction_weights = if space_dim == 1 {
            vec![1.0; directions.len()]
        } else {
            vec![sphere_area(space_dim) / directions.len() as f64; directions.len()]
        };
        let n = radii.len();
        let radial_weights = (0..n)
            .map(|k| {
                let left = if k > 0 { radii[k] - radii[k - 1] } else { 0.0 };
                let right = if k + 1 < n {
                    radii[k + 1] - radii[k]
                } else {
                    0.0
                };
                0.5 * (left + right) * radii[k].powi(space_dim as i32 - 1)
            })
            .collect();
        Ok(FrequencyGrid {
            space_dim,
            directions,
            direction_weights,
            radii,
            radial_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len() * self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest and largest radius.
    pub fn annulus(&self) -> (f64, f64) {
        (self.radii[0], self.radii[self.radii.len() - 1])
    }
}

fn check_range(min: f64, max: f64, count: usize) -> Result<()> {
    if !(min > 0.0) || !(max > min) || count < 2 {
        return Err(LabError::Grid(format!(
            "radial range needs 0 < min < max and count ≥ 2 (got {min}, {max}, {count})"
        )));
    }
    Ok(())
}

/// `C^∞` bump `exp(1 − 1/(1 − s²))` on `|s| < 1`, equal to 1 at `s = 0`.
pub fn smooth_window(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Fourier-side initial data `f̂(r·ω)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// `amplitudes · exp(−(r − center)²/(2 width²)) · window(r)` where the
    /// window is a smooth bump supported in `[window.0, window.1]`.
    Bump {
        center: f64,
        width: f64,
        /// Component amplitudes as `[re, im]` pairs; length `m`.
        amplitudes: Vec<[f64; 2]>,
        window: [f64; 2],
    },
}

impl DataSpec {
    /// Bump centred at 2 with width 0.5 in the annulus `[0.5, 3.5]`, all
    /// components equal to one.
    pub fn default_bump(m: usize) -> Self {
        DataSpec::Bump {
            center: 2.0,
            width: 0.5,
            amplitudes: vec![[1.0, 0.0]; m],
            window: [0.5, 3.5],
        }
    }

    /// Random bump: amplitudes standard complex Gaussian, centre uniform in
    /// the middle half of `window`, width uniform in `[0.25, 0.5]`.
    pub fn random_bump(rng: &mut ChaCha8Rng, m: usize, window: [f64; 2]) -> Self {
        let span = window[1] - window[0];
        let center = window[0] + span * (0.25 + 0.5 * rng.gen::<f64>());
        let width = 0.25 + 0.25 * rng.gen::<f64>();
        let amplitudes = (0..m)
            .map(|_| {
                let (re, im): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                [re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2]
            })
            .collect();
        DataSpec::Bump {
            center,
            width,
            amplitudes,
            window,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            DataSpec::Bump {
                width,
                amplitudes,
                window,
                ..
            } => {
                if amplitudes.len() != m {
                    return Err(LabError::Config(format!(
                        "data has {} components, the system has {m}",
                        amplitudes.len()
                    )));
                }
                if !(*width > 0.0) || !(window[1] > window[0]) {
                    return Err(LabError::Config(
                        "bump needs positive width and a nonempty window".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, r: f64, _omega: &Direction) -> CVec {
        match self {
            DataSpec::Bump {
                center,
                width,
                amplitudes,
                window,
            } => {
                let s = (2.0 * r - window[0] - window[1]) / (window[1] - window[0]);
                let env = (-(r - center).powi(2) / (2.0 * width * width)).exp() * smooth_window(s);
                CVec::from_iterator(
                    amplitudes.len(),
                    amplitudes.iter().map(|a| c64(a[0], a[1]) * env),
                )
            }
        }
    }

    /// Support of the data in `r`.
    pub fn support(&self) -> [f64; 2] {
        match self {
            DataSpec::Bump { window, .. } => *window,
        }
    }
}

/// Values of a vector field on one direction's radii.
pub type RadialValues = Vec<CVec>;

/// `sqrt(Σ_k w_k |v_k|²)`.
pub fn l2_norm(weights: &[f64], values: &[CVec]) -> f64 {
    weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * v.norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// `sqrt(Σ_k w_k |a_k − b_k|²)`.
pub fn l2_distance(weights: &[f64], a: &[CVec], b: &[CVec]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// One term `e^{i r λ} u(r)` of a modal sum along a direction.
#[derive(Clone, Debug)]
pub struct ModalTerm {
    pub lambda: f64,
    pub u: Vec<CVec>,
}

/// `∫ |Σ_p e^{i r λ_p} u_p(r)|² r^{n−1} dr` over `[r_0, r_K]`. Each product
/// `u_p·ū_q·r^{n−1}` is interpolated linearly per panel and integrated
/// against `e^{i r (λ_p − λ_q)}` exactly (Filon), so large phase rates do
/// not alias on coarse radial grids.
pub fn filon_norm_sq(radii: &[f64], terms: &[ModalTerm], space_dim: usize) -> f64 {
    let mut total = 0.0;
    for p in terms {
        for q in terms {
            let kappa = p.lambda - q.lambda;
            let f: Vec<Complex64> = radii
                .iter()
                .enumerate()
                .map(|(k, r)| p.u[k].dotc(&q.u[k]).conj() * r.powi(space_dim as i32 - 1))
                .collect();
            let mut acc = ZERO;
            for k in 0..radii.len() - 1 {
                let d = radii[k + 1] - radii[k];
                let (e0, e1) = filon_moments(kappa, d);
                let slope = (f[k + 1] - f[k]) / d;
                acc += cis(kappa * radii[k]) * (f[k] * e0 + slope * e1);
            }
            total += acc.re;
        }
    }
    total.max(0.0)
}

/// `(∫_0^Δ e^{iκs} ds, ∫_0^Δ s e^{iκs} ds)`.
fn filon_moments(kappa: f64, d: f64) -> (Complex64, Complex64) {
    let z = I * (kappa * d);
    if (kappa * d).abs() < 1e-2 {
        let mut e0 = ZERO;
        let mut e1 = ZERO;
        let mut zn = c64(1.0, 0.0);
        let mut fact = 1.0;
        for n in 0..8 {
            if n > 0 {
                zn *= z;
                fact *= n as f64;
            }
            e0 += zn / (fact * (n as f64 + 1.0));
            e1 += zn / (fact * (n as f64 + 2.0));
        }
        (e0 * d, e1 * d * d)
    } else {
        let ez = z.exp();
        let ik = I * kappa;
        let e0 = (ez - 1.0) / ik;
        let e1 = ez * d / ik + (ez - 1.0) / (kappa * kappa);
        (e0, e1)
    }
}

struct FourierSystem<'a> {
    symbol: &'a dyn Symbol,
    omega: &'a Direction,
    r: f64,
}

impl OdeSystem for FourierSystem<'_> {
    fn dim(&self) -> usize {
        self.symbol.dim()
    }

    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
        let a = self.symbol.matrix(t, self.omega);
        let m = self.dim();
        for i in 0..m {
            let mut acc = ZERO;
            for k in 0..m {
                acc += a[(i, k)] * y[k];
            }
            dy[i] = I * self.r * acc;
        }
        Ok(())
    }
}

/// Solves `∂_t V = i r A(t, ω) V` directly from `V(t0) = v0` through the
/// monotone `stops`. No diagonalization is involved, so this serves as the
/// reference the representation formula is checked against.
pub fn oracle_evolve(
    symbol: &dyn Symbol,
    omega: &Direction,
    r: f64,
    v0: &CVec,
    t0: f64,
    stops: &[f64],
    rtol: f64,
) -> Result<Vec<CVec>> {
    let mut sys = FourierSystem { symbol, omega, r };
    let mut integ = Integrator::new(
        Tableau::dormand_prince(),
        OdeOptions {
            rtol,
            atol: rtol * 1e-3,
            ..OdeOptions::default()
        },
    );
    let mut y: Vec<Complex64> = v0.iter().copied().collect();
    let mut out = vec![CVec::zeros(v0.len()); stops.len()];
    let mut filled = vec![false; stops.len()];
    integ.integrate(&mut sys, t0, &mut y, stops, |ev| {
        if let Some(k) = ev.stop {
            for (kk, s) in stops.iter().enumerate().skip(k) {
                if *s != ev.t {
                    break;
                }
                out[kk] = CVec::from_column_slice(ev.y);
                filled[kk] = true;
            }
        }
        Ok(())
    })?;
    if filled.iter().any(|f| !f) {
        return Err(LabError::InvalidState(
            "oracle did not reach every stop".into(),
        ));
    }
    Ok(out)
}

/// `Û(t) = N(t)⁻¹ Φ(t) a(t) f̂` at every recorded time of `traj`, where the
/// trajectory started from `a(0) = N(0)`.
pub fn representation(
    dir: &SpectralDirection,
    coupling: &dyn Coupling,
    traj: &AmplitudeTrajectory,
    f_hat: &CVec,
) -> Result<Vec<CVec>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, a)| representation_at(dir, coupling, traj.r, t, a, f_hat))
        .collect()
}

pub fn representation_at(
    dir: &SpectralDirection,
    coupling: &dyn Coupling,
    r: f64,
    t: f64,
    a: &CMat,
    f_hat: &CVec,
) -> Result<CVec> {
    let n_inv = inverse(&dir.n_at(t)?)?;
    let theta = coupling.theta(t)?;
    let mut w = a * f_hat;
    for (j, wj) in w.iter_mut().enumerate() {
        *wj *= cis(r * theta[j]);
    }
    Ok(n_inv * w)
}

/// Components `N(t)⁻¹ e_j c_j` of `N(t)⁻¹ c` split by mode.
pub fn modal_vectors(n_inv: &CMat, c: &CVec) -> Vec<CVec> {
    (0..c.len()).map(|j| n_inv.column(j) * c[j]).collect()
}

/// `u(x) = (2π)^{−1/2} Σ_{ω,r} w Û(r ω) e^{i r ω x}` in one space dimension.
/// `values[d][k]` is the mode at direction `d`, radius `k`.
pub fn synthesize_physical(
    grid: &FrequencyGrid,
    values: &[Vec<CVec>],
    xs: &[f64],
) -> Result<Vec<CVec>> {
    if grid.space_dim != 1 {
        return Err(LabError::Unsupported(format!(
            "physical-space synthesis is only available in one space dimension (got {})",
            grid.space_dim
        )));
    }
    if values.len() != grid.directions.len() || values.iter().any(|v| v.len() != grid.radii.len()) {
        return Err(LabError::Grid("mode values do not match the grid".into()));
    }
    let m = values[0][0].len();
    let norm = (2.0 * PI).sqrt().recip();
    Ok(xs
        .iter()
        .map(|&x| {
            let mut acc = CVec::zeros(m);
            for (d, dir) in grid.directions.iter().enumerate() {
                let s = dir.as_slice()[0];
                for (k, &r) in grid.radii.iter().enumerate() {
                    let w = grid.direction_weights[d] * grid.radial_weights[k] * norm;
                    acc += &values[d][k] * (cis(r * s * x) * w);
                }
            }
            acc
        })
        .collect())
}

/// Seeded generator for data ensembles.
pub fn ensemble_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
