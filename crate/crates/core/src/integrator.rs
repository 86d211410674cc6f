//! Asymptotic integration along one direction `ω`.
//!
//! With `W = N V` and `W = Φ a`, `Φ = diag(exp(i r θ_j(t)))`,
//! `θ_j(t) = ∫₀ᵗ φ_j`, the Fourier system `∂_t V = i r A V` becomes the
//! amplitude equation `∂_t a = Φ⁻¹ G Φ a` with `G = (∂_t N) N⁻¹`, i.e.
//! `D_t a = C a` for the coupling `C = −i Φ⁻¹ G Φ`. `G` and `θ` do not depend
//! on `r`, so they are tabulated once per direction.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{cis, frobenius, inverse, CMat, ZERO};
use crate::ode::{Integrator, OdeOptions, OdeSystem, StepEvent, TableauRegistry};
use crate::profile::hermite_basis;
use crate::quadrature::{dyadic_tail, integrate, kronrod_rule, QuadOptions};
use crate::spectral::SpectralDirection;
use crate::Sign;

/// `∫_a^b (φ_j − offset_j) dt` for every root, by vector-valued adaptive
/// Gauss–Kronrod bisection with absolute tolerance `abs_tol` over `[a, b]`.
pub fn integrate_roots(
    dir: &SpectralDirection,
    a: f64,
    b: f64,
    offset: &[f64],
    abs_tol: f64,
) -> Result<Vec<f64>> {
    let m = dir.dim();
    let mut out = vec![0.0; m];
    let total = (b - a).abs();
    if total == 0.0 {
        return Ok(out);
    }
    let mut stack = vec![(a, b, 0usize)];
    let mut kr = vec![0.0; m];
    let mut ga = vec![0.0; m];
    while let Some((lo, hi, depth)) = stack.pop() {
        kr.iter_mut().for_each(|x| *x = 0.0);
        ga.iter_mut().for_each(|x| *x = 0.0);
        let mut scale = 0.0_f64;
        for (x, wk, wg) in kronrod_rule(lo, hi) {
            let roots = dir.roots(x)?;
            scale = roots.iter().fold(scale, |s, r| s.max(r.abs()));
            for j in 0..m {
                let v = roots[j] - offset[j];
                kr[j] += wk * v;
                ga[j] += wg * v;
            }
        }
        let err = kr
            .iter()
            .zip(&ga)
            .fold(0.0_f64, |acc, (k, g)| acc.max((k - g).abs()));
        // eigensolved roots carry rounding noise that no bisection removes
        let floor = 64.0 * f64::EPSILON * scale * (hi - lo).abs();
        let local = (abs_tol * (hi - lo).abs() / total).max(floor);
        if err <= local {
            for j in 0..m {
                out[j] += kr[j];
            }
        } else if depth >= 48 {
            return Err(LabError::Quadrature(format!(
                "root integral on [{lo}, {hi}] did not converge (error {err:.3e})"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(out)
}

/// Source of `G(t)` and `θ(t)` for the amplitude equation.
pub trait Coupling: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `G(t)` (row-major) and `θ_j(t)`. `half` selects the side of
    /// `t = 0` whose one-sided data is used; `t` must lie on that side.
    fn sample(&self, t: f64, half: Sign, g: &mut [Complex64], theta: &mut [f64]) -> Result<()>;

    /// `max_j φ_j − min_j φ_j` near `t`.
    fn spread(&self, t: f64) -> f64;

    /// Lower and upper estimates of `∫₀^{|t|} ‖G‖_F` on the half-line of `t`.
    fn g_integral(&self, t: f64, half: Sign) -> (f64, f64);

    /// True when `G ≡ 0` (constant coefficients).
    fn is_flat(&self) -> bool;

    /// Largest `|t|` the coupling can be evaluated at.
    fn horizon(&self) -> f64;

    fn theta(&self, t: f64) -> Result<Vec<f64>> {
        let m = self.dim();
        let mut g = vec![ZERO; m * m];
        let mut th = vec![0.0; m];
        let half = if t >= 0.0 { Sign::Plus } else { Sign::Minus };
        self.sample(t, half, &mut g, &mut th)?;
        Ok(th)
    }
}

fn half_index(s: Sign) -> usize {
    match s {
        Sign::Minus => 0,
        Sign::Plus => 1,
    }
}

#[derive(Clone, Debug)]
struct HalfTable {
    sign: Sign,
    u: Vec<f64>,
    g: Vec<Complex64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    spread: Vec<f64>,
    gcum: Vec<f64>,
}

/// `G`, `θ`, `φ` tabulated on the nodes `t_k = ±sinh(k·h₀)` of both
/// half-lines. `G` is interpolated with 4-point Lagrange stencils that never
/// straddle `t = 0`; `θ` with cubic Hermite using `φ = θ'`.
#[derive(Clone, Debug)]
pub struct CouplingTable {
    m: usize,
    h0: f64,
    horizon: f64,
    flat: bool,
    halves: [HalfTable; 2],
}

impl CouplingTable {
    pub const DEFAULT_STEP: f64 = 0.002;

    pub fn build(dir: &SpectralDirection, horizon: f64) -> Result<Self> {
        Self::build_with_step(dir, horizon, Self::DEFAULT_STEP)
    }

    pub fn build_with_step(dir: &SpectralDirection, horizon: f64, h0: f64) -> Result<Self> {
        if !(horizon > 0.0) || !(h0 > 0.0) {
            return Err(LabError::Config(
                "coupling table needs positive horizon and step".into(),
            ));
        }
        let m = dir.dim();
        let nodes = ((horizon.asinh() / h0).ceil() as usize).max(4);
        let minus = Self::build_half(dir, Sign::Minus, nodes, h0)?;
        let plus = Self::build_half(dir, Sign::Plus, nodes, h0)?;
        let flat = minus.g.iter().chain(&plus.g).all(|z| *z == ZERO);
        let mut table = CouplingTable {
            m,
            h0,
            horizon: plus.u[nodes],
            flat,
            halves: [minus, plus],
        };
        for s in Sign::BOTH {
            table.accumulate_gnorm(s);
        }
        Ok(table)
    }

    fn build_half(dir: &SpectralDirection, sign: Sign, nodes: usize, h0: f64) -> Result<HalfTable> {
        let m = dir.dim();
        let s = sign.as_f64();
        let u: Vec<f64> = (0..=nodes).map(|k| (k as f64 * h0).sinh()).collect();
        let samples: Vec<(Vec<f64>, CMat)> = u
            .par_iter()
            .map(|&uk| {
                let t = s * uk;
                let frame = dir.frame(t)?;
                let g = dir.dn_dt(t, sign)? * inverse(&frame.n)?;
                Ok((frame.roots, g))
            })
            .collect::<Result<_>>()?;
        let increments: Vec<Vec<f64>> = (0..nodes)
            .into_par_iter()
            .map(|k| {
                let tol = 1e-13 * (1.0 + u[k + 1]);
                integrate_roots(dir, s * u[k], s * u[k + 1], &vec![0.0; m], tol)
            })
            .collect::<Result<_>>()?;
        let mut g = Vec::with_capacity((nodes + 1) * m * m);
        let mut phi = Vec::with_capacity((nodes + 1) * m);
        let mut spread = Vec::with_capacity(nodes + 1);
        for (roots, gk) in &samples {
            for i in 0..m {
                for k in 0..m {
                    g.push(gk[(i, k)]);
                }
            }
            phi.extend_from_slice(roots);
            spread.push(roots[m - 1] - roots[0]);
        }
        let mut theta = vec![0.0; (nodes + 1) * m];
        for k in 0..nodes {
            for j in 0..m {
                theta[(k + 1) * m + j] = theta[k * m + j] + increments[k][j];
            }
        }
        Ok(HalfTable {
            sign,
            u,
            g,
            theta,
            phi,
            spread,
            gcum: vec![0.0; nodes + 1],
        })
    }

    fn accumulate_gnorm(&mut self, sign: Sign) {
        let m = self.m;
        let nodes = self.halves[half_index(sign)].u.len() - 1;
        let mut gbuf = vec![ZERO; m * m];
        let mut cum = vec![0.0; nodes + 1];
        for k in 0..nodes {
            let h = &self.halves[half_index(sign)];
            let (u0, u1) = (h.u[k], h.u[k + 1]);
            let norm_at = |kk: usize| -> f64 {
                h.g[kk * m * m..(kk + 1) * m * m]
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            };
            let n0 = norm_at(k);
            let n1 = norm_at(k + 1);
            self.interp_g(sign, 0.5 * (u0 + u1), k, &mut gbuf);
            let nm = gbuf.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            // Simpson with a small safety margin so the running value stays an
            // upper estimate of the exact integral
            cum[k + 1] = cum[k] + (u1 - u0) / 6.0 * (n0 + 4.0 * nm + n1) * (1.0 + 1e-6);
        }
        self.halves[half_index(sign)].gcum = cum;
    }

    fn locate(&self, half: &HalfTable, u: f64) -> usize {
        let last = half.u.len() - 1;
        let mut k = ((u.asinh() / self.h0).floor().max(0.0) as usize).min(last - 1);
        while k > 0 && half.u[k] > u {
            k -= 1;
        }
        while k + 1 < last && half.u[k + 1] < u {
            k += 1;
        }
        k
    }

    fn interp_g(&self, sign: Sign, u: f64, k: usize, out: &mut [Complex64]) {
        let h = &self.halves[half_index(sign)];
        let m2 = self.m * self.m;
        let last = h.u.len() - 1;
        let st = k.saturating_sub(1).min(last - 3);
        let xs = [h.u[st], h.u[st + 1], h.u[st + 2], h.u[st + 3]];
        let mut w = [1.0; 4];
        for i in 0..4 {
            for l in 0..4 {
                if l != i {
                    w[i] *= (u - xs[l]) / (xs[i] - xs[l]);
                }
            }
        }
        for e in 0..m2 {
            out[e] = h.g[st * m2 + e] * w[0]
                + h.g[(st + 1) * m2 + e] * w[1]
                + h.g[(st + 2) * m2 + e] * w[2]
                + h.g[(st + 3) * m2 + e] * w[3];
        }
    }

    pub fn node_count(&self) -> usize {
        self.halves[1].u.len()
    }

    /// Largest `‖G‖_F` over the tabulated nodes.
    pub fn max_g_norm(&self) -> f64 {
        let m2 = self.m * self.m;
        self.halves
            .iter()
            .flat_map(|h| h.g.chunks(m2))
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Upper estimate of `∫_{−T}^{T} ‖G‖_F` over the whole table.
    pub fn total_g_integral(&self) -> f64 {
        self.halves
            .iter()
            .map(|h| *h.gcum.last().unwrap_or(&0.0))
            .sum()
    }
}

impl Coupling for CouplingTable {
    fn dim(&self) -> usize {
        self.m
    }

    fn sample(&self, t: f64, half: Sign, g: &mut [Complex64], theta: &mut [f64]) -> Result<()> {
        let h = &self.halves[half_index(half)];
        let s = h.sign.as_f64();
        let u = t * s;
        if u < -1e-300 || u > self.horizon * (1.0 + 1e-12) {
            return Err(LabError::InvalidState(format!(
                "t = {t} outside the {half} half of the coupling table (horizon {})",
                self.horizon
            )));
        }
        let u = u.max(0.0);
        let k = self.locate(h, u);
        if self.flat {
            g.iter_mut().for_each(|z| *z = ZERO);
        } else {
            self.interp_g(half, u, k, g);
        }
        let m = self.m;
        let du = h.u[k + 1] - h.u[k];
        let x = (u - h.u[k]) / du;
        let (h00, h10, h01, h11) = hermite_basis(x);
        for j in 0..m {
            theta[j] = h00 * h.theta[k * m + j]
                + h10 * du * s * h.phi[k * m + j]
                + h01 * h.theta[(k + 1) * m + j]
                + h11 * du * s * h.phi[(k + 1) * m + j];
        }
        Ok(())
    }

    fn spread(&self, t: f64) -> f64 {
        let half = if t >= 0.0 { Sign::Plus } else { Sign::Minus };
        let h = &self.halves[half_index(half)];
        let u = t.abs().min(self.horizon);
        let k = self.locate(h, u);
        h.spread[k].max(h.spread[k + 1])
    }

    fn g_integral(&self, t: f64, half: Sign) -> (f64, f64) {
        let h = &self.halves[half_index(half)];
        let u = t.abs().min(self.horizon);
        let k = self.locate(h, u);
        (h.gcum[k], h.gcum[k + 1])
    }

    fn is_flat(&self) -> bool {
        self.flat
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Coupling evaluated from scratch at every call: eigen-decompositions for
/// `G` and adaptive quadrature of the roots for `θ`. Slow, but shares no
/// interpolation with [`CouplingTable`], which makes it a useful reference.
pub struct PointwiseCoupling {
    dir: SpectralDirection,
    span: f64,
    grid_step: f64,
    cum: [Vec<f64>; 2],
}

impl PointwiseCoupling {
    /// Prepares a coupling valid on `[−span, span]`.
    pub fn new(dir: SpectralDirection, span: f64) -> Result<Self> {
        let grid_step = 0.01;
        let n = ((span / grid_step).ceil() as usize).max(1);
        let mut cum = [vec![0.0; n + 1], vec![0.0; n + 1]];
        for sign in Sign::BOTH {
            let s = sign.as_f64();
            for k in 0..n {
                let (a, b) = (s * k as f64 * grid_step, s * (k + 1) as f64 * grid_step);
                let q = integrate(
                    |t| {
                        dir.coupling_g(t, sign)
                            .map(|g| frobenius(&g))
                            .unwrap_or(f64::NAN)
                    },
                    a.min(b),
                    a.max(b),
                    &QuadOptions::with_abs_tol(1e-12),
                )?;
                cum[half_index(sign)][k + 1] = cum[half_index(sign)][k] + q.value.abs();
            }
        }
        Ok(PointwiseCoupling {
            dir,
            span: n as f64 * grid_step,
            grid_step,
            cum,
        })
    }

    pub fn direction(&self) -> &SpectralDirection {
        &self.dir
    }
}

impl Coupling for PointwiseCoupling {
    fn dim(&self) -> usize {
        self.dir.dim()
    }

    fn sample(&self, t: f64, half: Sign, g: &mut [Complex64], theta: &mut [f64]) -> Result<()> {
        let m = self.dim();
        let gm = self.dir.coupling_g(t, half)?;
        for i in 0..m {
            for k in 0..m {
                g[i * m + k] = gm[(i, k)];
            }
        }
        let th = integrate_roots(&self.dir, 0.0, t, &vec![0.0; m], 1e-13 * (1.0 + t.abs()))?;
        theta.copy_from_slice(&th);
        Ok(())
    }

    fn spread(&self, t: f64) -> f64 {
        self.dir
            .roots(t)
            .map(|r| r[r.len() - 1] - r[0])
            .unwrap_or(f64::INFINITY)
    }

    fn g_integral(&self, t: f64, half: Sign) -> (f64, f64) {
        let c = &self.cum[half_index(half)];
        let x = (t.abs() / self.grid_step).min((c.len() - 1) as f64);
        let k = (x.floor() as usize).min(c.len() - 2);
        (c[k], c[k + 1] * (1.0 + 1e-6))
    }

    fn is_flat(&self) -> bool {
        self.cum.iter().all(|c| c.iter().all(|&x| x == 0.0))
    }

    fn horizon(&self) -> f64 {
        self.span
    }
}

/// Settings for amplitude evolution.
#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub tableau: String,
    /// Step cap numerator: `h ≤ step_factor / (r·spread + 1)`.
    pub step_factor: f64,
}

impl Default for AmplitudeOptions {
    fn default() -> Self {
        AmplitudeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            tableau: "dopri5".into(),
            step_factor: 1.0,
        }
    }
}

impl AmplitudeOptions {
    pub fn integrator(&self) -> Result<Integrator> {
        let tab = TableauRegistry::builtin().get(&self.tableau)?;
        Ok(Integrator::new(
            tab,
            OdeOptions {
                rtol: self.rtol,
                atol: self.atol,
                ..OdeOptions::default()
            },
        ))
    }
}

struct AmplitudeSystem<'a> {
    coupling: &'a dyn Coupling,
    r: f64,
    half: Sign,
    m: usize,
    step_factor: f64,
    g: Vec<Complex64>,
    theta: Vec<f64>,
    e: Vec<Complex64>,
    mat: Vec<Complex64>,
}

impl OdeSystem for AmplitudeSystem<'_> {
    fn dim(&self) -> usize {
        self.m * self.m
    }

    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
        let m = self.m;
        self.coupling
            .sample(t, self.half, &mut self.g, &mut self.theta)?;
        for i in 0..m {
            self.e[i] = cis(self.r * self.theta[i]);
        }
        for i in 0..m {
            let ei = self.e[i].conj();
            for k in 0..m {
                self.mat[i * m + k] = ei * self.g[i * m + k] * self.e[k];
            }
        }
        for j in 0..m {
            let col = &y[j * m..(j + 1) * m];
            for i in 0..m {
                let row = &self.mat[i * m..(i + 1) * m];
                let mut acc = ZERO;
                for k in 0..m {
                    acc += row[k] * col[k];
                }
                dy[j * m + i] = acc;
            }
        }
        Ok(())
    }

    fn max_step(&self, t: f64) -> f64 {
        self.step_factor / (self.r * self.coupling.spread(t) + 1.0)
    }
}

/// Amplitude matrix `a(t)` (columns `a^j`) recorded at requested times.
#[derive(Clone, Debug)]
pub struct AmplitudeTrajectory {
    pub r: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    /// `exp(∫_{t0}^{t} ‖G‖)` at the recorded times.
    pub bounds: Vec<f64>,
    /// Accepted steps where some `|a^j(t)| > B(t)·|a^j(t0)|`.
    pub violations: usize,
    /// Largest `|a^j(t)| / (B(t)·|a^j(t0)|)` seen at any accepted step.
    pub max_ratio: f64,
    pub steps: usize,
}

impl AmplitudeTrajectory {
    pub fn last(&self) -> &CMat {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    pub fn at(&self, t: f64) -> Option<&CMat> {
        self.times
            .iter()
            .position(|&s| s == t)
            .map(|k| &self.states[k])
    }
}

fn to_flat(a: &CMat) -> Vec<Complex64> {
    // column-major, so column j occupies [j·m, (j+1)·m)
    a.as_slice().to_vec()
}

fn from_flat(m: usize, y: &[Complex64]) -> CMat {
    CMat::from_column_slice(m, m, y)
}

/// Solves `∂_t a = Φ⁻¹ G Φ a` columnwise from `(t0, a0)` through the
/// monotone `stops`, recording `a` at each stop. Spans crossing `t = 0` are
/// split there so each piece uses one-sided data. The Gronwall bound
/// `|a^j(t)| ≤ exp(∫‖G‖)·|a^j(t0)|` is checked after every accepted step.
pub fn evolve_amplitudes(
    coupling: &dyn Coupling,
    r: f64,
    a0: &CMat,
    t0: f64,
    stops: &[f64],
    opts: &AmplitudeOptions,
) -> Result<AmplitudeTrajectory> {
    let m = coupling.dim();
    if a0.nrows() != m || a0.ncols() != m {
        return Err(LabError::InvalidState(format!(
            "initial amplitudes must be {m}×{m}"
        )));
    }
    if !(r > 0.0) {
        return Err(LabError::InvalidState(format!(
            "radius must be positive, got {r}"
        )));
    }
    let mut traj = AmplitudeTrajectory {
        r,
        t0,
        times: Vec::with_capacity(stops.len()),
        states: Vec::with_capacity(stops.len()),
        bounds: Vec::with_capacity(stops.len()),
        violations: 0,
        max_ratio: 0.0,
        steps: 0,
    };
    let Some(&t_end) = stops.last() else {
        return Ok(traj);
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    if stops.iter().any(|&s| (s - t0) * dir < 0.0)
        || stops.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0)
    {
        return Err(LabError::InvalidState(
            "stops must be monotone away from t0".into(),
        ));
    }
    if coupling.is_flat() {
        for &s in stops {
            traj.times.push(s);
            traj.states.push(a0.clone());
            traj.bounds.push(1.0);
        }
        return Ok(traj);
    }
    let col_norm0: Vec<f64> = (0..m).map(|j| a0.column(j).norm()).collect();
    let mut y = to_flat(a0);
    let mut integ = opts.integrator()?;

    // segments on a single half-line each
    let crosses = t0 * t_end < 0.0;
    let mut segments: Vec<(f64, Sign, Vec<f64>)> = Vec::new();
    let side_of = |t: f64, fallback: f64| {
        if t > 0.0 || (t == 0.0 && fallback > 0.0) {
            Sign::Plus
        } else {
            Sign::Minus
        }
    };
    if crosses {
        let first: Vec<f64> = stops
            .iter()
            .copied()
            .filter(|&s| s * t0 > 0.0)
            .chain(std::iter::once(0.0))
            .collect();
        let second: Vec<f64> = stops.iter().copied().filter(|&s| s * t0 <= 0.0).collect();
        segments.push((t0, side_of(t0, -dir), first));
        segments.push((0.0, side_of(0.0, dir), second));
    } else {
        segments.push((t0, side_of(t0, dir), stops.to_vec()));
    }

    let mut base = 0.0;
    let mut next = 0usize;
    for (start, half, seg_stops) in segments {
        let mut sys = AmplitudeSystem {
            coupling,
            r,
            half,
            m,
            step_factor: opts.step_factor,
            g: vec![ZERO; m * m],
            theta: vec![0.0; m],
            e: vec![ZERO; m],
            mat: vec![ZERO; m * m],
        };
        let (start_lo, start_hi) = coupling.g_integral(start, half);
        integ.reset();
        let seg_end = *seg_stops.last().expect("segments are nonempty");
        let stats = integ.integrate(&mut sys, start, &mut y, &seg_stops, |ev: StepEvent<'_>| {
            let (lo, hi) = coupling.g_integral(ev.t, half);
            let inc = if ev.t.abs() >= start.abs() {
                hi - start_lo
            } else {
                start_hi - lo
            };
            let bound = (base + inc.max(0.0)).exp();
            for j in 0..m {
                let nj = ev.y[j * m..(j + 1) * m]
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                if col_norm0[j] > 0.0 {
                    let ratio = nj / (bound * col_norm0[j]);
                    traj.max_ratio = traj.max_ratio.max(ratio);
                    if ratio > 1.0 + 1e-9 {
                        traj.violations += 1;
                    }
                }
            }
            if ev.stop.is_some() {
                while next < stops.len() && stops[next] == ev.t {
                    traj.times.push(ev.t);
                    traj.states.push(from_flat(m, ev.y));
                    traj.bounds.push(bound);
                    next += 1;
                }
            }
            Ok(())
        })?;
        traj.steps += stats.accepted;
        let (lo, hi) = coupling.g_integral(seg_end, half);
        base += if seg_end.abs() >= start.abs() {
            hi - start_lo
        } else {
            start_hi - lo
        }
        .max(0.0);
    }
    if traj.times.len() != stops.len() {
        return Err(LabError::InvalidState(format!(
            "recorded {} of {} requested amplitude samples",
            traj.times.len(),
            stops.len()
        )));
    }
    Ok(traj)
}

/// `∫_{|t| > T} ‖G‖_F` on the side `sign`, by dyadic extension with
/// pointwise `G` and geometric extrapolation of the last pieces.
pub fn coupling_tail(dir: &SpectralDirection, sign: Sign, t_max: f64) -> Result<f64> {
    let tail = dyadic_tail(
        |t| {
            dir.coupling_g(t, sign)
                .map(|g| frobenius(&g))
                .unwrap_or(f64::NAN)
        },
        sign.as_f64() * t_max,
        1e-12,
        64,
        &QuadOptions {
            // differencing noise in G sits near 1e-13 per unit length, so a
            // tighter absolute target cannot be met
            abs_tol: 1e-12,
            rel_tol: 1e-6,
            max_intervals: 2000,
        },
    )?;
    Ok(tail.value + tail.remainder)
}

/// `α_± ≈ a(±T)` with the certified-style tail `B·max_j|a^j|·∫_{|t|>T}‖G‖`.
#[derive(Clone, Debug)]
pub struct AmplitudeLimit {
    pub sign: Sign,
    pub alpha: CMat,
    pub tail: f64,
}

pub fn amplitude_limit(
    end_state: &CMat,
    bound: f64,
    g_tail: f64,
    sign: Sign,
    tail_tol: f64,
    enforce: bool,
) -> Result<AmplitudeLimit> {
    let m = end_state.ncols();
    let amax = (0..m)
        .map(|j| end_state.column(j).norm())
        .fold(0.0, f64::max);
    let tail = bound * amax * g_tail;
    if enforce && tail > tail_tol {
        return Err(LabError::TailNotConverged {
            what: format!("amplitude limit ({sign})"),
            tail,
            tol: tail_tol,
        });
    }
    Ok(AmplitudeLimit {
        sign,
        alpha: end_state.clone(),
        tail,
    })
}

/// Outcome of the bounded-phase test for one root and one end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum Stability {
    RStable,
    NotRStable,
    Inconclusive,
}

/// Growth model fitted to `ψ(T)`; `T` is scaled by the horizon in the power
/// model, i.e. `ψ ≈ a·(T/T_max)^p + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GrowthModel {
    Constant { b: f64 },
    Logarithmic { a: f64, b: f64 },
    Power { a: f64, p: f64, b: f64 },
}

impl GrowthModel {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthModel::Constant { .. } => "constant",
            GrowthModel::Logarithmic { .. } => "logarithmic",
            GrowthModel::Power { .. } => "power",
        }
    }

    fn convergent(&self) -> bool {
        match *self {
            GrowthModel::Constant { .. } => true,
            GrowthModel::Power { p, .. } => p < 0.0,
            GrowthModel::Logarithmic { .. } => false,
        }
    }

    fn divergent(&self) -> bool {
        match *self {
            GrowthModel::Logarithmic { .. } => true,
            GrowthModel::Power { p, .. } => p > 0.0,
            GrowthModel::Constant { .. } => false,
        }
    }
}

/// Verdict with the evidence it was derived from.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityVerdict {
    pub j: usize,
    pub sign: Sign,
    pub class: Stability,
    pub model: GrowthModel,
    /// Sample times `T_max/2^k`, ascending.
    pub times: Vec<f64>,
    /// `ψ_{j,±}(±T)` at those times.
    pub psi: Vec<f64>,
    pub last_increment: f64,
}

/// Classifier settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityOptions {
    /// Number of dyadic sample times `T_max/2^k`, `k = 0..levels`.
    pub levels: usize,
    /// Largest last increment compatible with a finite limit.
    pub stable_tol: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            levels: 7,
            stable_tol: 0.05,
        }
    }
}

/// `ψ_{j,±}(±T) = ∫₀^{±T} (φ_j − φ_j^±)` at `T = T_max/2^k`, returned with
/// times ascending; `psi[k][j]`.
pub fn psi_samples(
    dir: &SpectralDirection,
    sign: Sign,
    t_max: f64,
    levels: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let levels = levels.max(2);
    let s = sign.as_f64();
    let offset = dir.limit(sign).roots.clone();
    let times: Vec<f64> = (0..levels)
        .rev()
        .map(|k| t_max / 2f64.powi(k as i32))
        .collect();
    let mut psi = Vec::with_capacity(levels);
    let mut acc = integrate_roots(dir, 0.0, s * times[0], &offset, 1e-13 * (1.0 + times[0]))?;
    psi.push(acc.clone());
    for w in times.windows(2) {
        let piece = integrate_roots(dir, s * w[0], s * w[1], &offset, 1e-13 * (1.0 + w[1]))?;
        for (a, p) in acc.iter_mut().zip(piece) {
            *a += p;
        }
        psi.push(acc.clone());
    }
    Ok((times, psi))
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let rss = x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum();
    (a, b, rss)
}

/// Least-squares fits of constant, `a·ln T + b` and `a·(T/T_max)^p + b`,
/// ranked by AIC (ties favour fewer parameters).
pub fn fit_growth_model(times: &[f64], psi: &[f64]) -> GrowthModel {
    let n = psi.len() as f64;
    let t_max = times.iter().fold(0.0_f64, |a, &b| a.max(b));
    let scale = 1.0 + psi.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let floor = n * (1e-9 * scale).powi(2);
    let aic = |rss: f64, k: f64| n * (rss.max(floor) / n).ln() + 2.0 * k;

    let mean = psi.iter().sum::<f64>() / n;
    let rss_c: f64 = psi.iter().map(|v| (v - mean).powi(2)).sum();
    let mut best = (GrowthModel::Constant { b: mean }, aic(rss_c, 1.0));

    let lx: Vec<f64> = times.iter().map(|t| (t / t_max).ln()).collect();
    let (a, b, rss) = linear_fit(&lx, psi);
    let cand = aic(rss, 2.0);
    if cand < best.1 - 1e-9 {
        // report the model in unscaled time: a·ln T + b'
        best = (
            GrowthModel::Logarithmic {
                a,
                b: b - a * t_max.ln(),
            },
            cand,
        );
    }

    let mut best_power: Option<(GrowthModel, f64)> = None;
    for step in 0..=1180 {
        let p = -3.0 + 0.005 * step as f64;
        if p.abs() < 0.1 - 1e-12 {
            continue;
        }
        let px: Vec<f64> = times.iter().map(|t| (t / t_max).powf(p)).collect();
        let (a, b, rss) = linear_fit(&px, psi);
        let cand = aic(rss, 3.0);
        if best_power.is_none_or(|(_, v)| cand < v - 1e-12) {
            best_power = Some((GrowthModel::Power { a, p, b }, cand));
        }
    }
    if let Some((model, v)) = best_power {
        if v < best.1 - 1e-9 {
            best = (model, v);
        }
    }
    best.0
}

/// Classifies the samples of one `ψ_{j,±}` curve.
pub fn classify_samples(
    j: usize,
    sign: Sign,
    times: Vec<f64>,
    psi: Vec<f64>,
    opts: &StabilityOptions,
) -> StabilityVerdict {
    let model = fit_growth_model(&times, &psi);
    let inc: Vec<f64> = psi.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let last = inc.last().copied().unwrap_or(0.0);
    let tail4 = &inc[inc.len().saturating_sub(4)..];
    let settling = tail4
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
    let abs: Vec<f64> = psi.iter().map(|v| v.abs()).collect();
    let tail5 = &abs[abs.len().saturating_sub(5)..];
    let growing = tail5.len() >= 5 && tail5.windows(2).all(|w| w[1] > w[0]);
    let class = if model.convergent() && settling && last < opts.stable_tol {
        Stability::RStable
    } else if model.divergent() && growing && last >= opts.stable_tol {
        Stability::NotRStable
    } else {
        Stability::Inconclusive
    };
    StabilityVerdict {
        j,
        sign,
        class,
        model,
        times,
        psi,
        last_increment: last,
    }
}

/// Verdicts for every root at the end `sign`.
pub fn stability_indicator(
    dir: &SpectralDirection,
    sign: Sign,
    t_max: f64,
    opts: &StabilityOptions,
) -> Result<Vec<StabilityVerdict>> {
    let (times, psi) = psi_samples(dir, sign, t_max, opts.levels)?;
    Ok((0..dir.dim())
        .map(|j| {
            let curve: Vec<f64> = psi.iter().map(|row| row[j]).collect();
            classify_samples(j, sign, times.clone(), curve, opts)
        })
        .collect())
}

/// `Θ_j^±/|ξ|` with the extrapolated remainder that was added.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThetaCorrection {
    pub value: f64,
    /// `ψ(±T_max)` before extrapolation.
    pub at_horizon: f64,
    /// Geometric continuation of the last dyadic increments.
    pub tail: f64,
}

/// `Θ_j^± = ψ_{j,±}(±T_max)` plus the geometric continuation of its last two
/// dyadic increments. Only defined for `RStable` verdicts.
pub fn theta_correction(verdict: &StabilityVerdict) -> Result<ThetaCorrection> {
    if verdict.class != Stability::RStable {
        return Err(LabError::InvalidState(format!(
            "phase correction requested for root {} ({}) classified {:?}",
            verdict.j, verdict.sign, verdict.class
        )));
    }
    let n = verdict.psi.len();
    let at_horizon = verdict.psi[n - 1];
    let tail = if n >= 3 {
        let d1 = verdict.psi[n - 1] - verdict.psi[n - 2];
        let d0 = verdict.psi[n - 2] - verdict.psi[n - 3];
        let rho = if d0 != 0.0 { d1 / d0 } else { 0.0 };
        if d1 != 0.0 && rho.abs() < 1.0 {
            d1 * rho / (1.0 - rho)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(ThetaCorrection {
        value: at_horizon + tail,
        at_horizon,
        tail,
    })
}

/// Phase data of one direction: `θ` via a coupling, limiting roots and the
/// corrections `Θ^±` where defined.
pub struct PhaseTable<'a> {
    pub coupling: &'a dyn Coupling,
    pub limit_roots: [Vec<f64>; 2],
    /// `Θ_j^±/|ξ|`; `None` when some root at that end is not R-stable.
    pub theta: [Option<Vec<f64>>; 2],
}

impl PhaseTable<'_> {
    fn idx(sign: Sign) -> usize {
        half_index(sign)
    }

    /// `ϑ_j(t, ξ) = r·θ_j(t)`.
    pub fn phase(&self, t: f64, r: f64) -> Result<Vec<f64>> {
        Ok(self.coupling.theta(t)?.into_iter().map(|x| r * x).collect())
    }

    /// Diagonal of `Φ(t, ξ)`.
    pub fn phi(&self, t: f64, r: f64) -> Result<Vec<Complex64>> {
        Ok(self.phase(t, r)?.into_iter().map(cis).collect())
    }

    /// Diagonal of `Φ_±(t, ξ) = diag(exp(i r φ_j^± t))`.
    pub fn phi_free(&self, t: f64, r: f64, sign: Sign) -> Vec<Complex64> {
        self.limit_roots[Self::idx(sign)]
            .iter()
            .map(|&p| cis(r * p * t))
            .collect()
    }

    /// Diagonal of `D_±(ξ) = diag(exp(i r Θ_j^±))`.
    pub fn d(&self, r: f64, sign: Sign) -> Result<Vec<Complex64>> {
        let th = self.theta[Self::idx(sign)].as_ref().ok_or_else(|| {
            LabError::InvalidState(format!("phase corrections at {sign} are undefined"))
        })?;
        Ok(th.iter().map(|&x| cis(r * x)).collect())
    }

    /// `Ψ_j(t, ξ) = e^{iϑ_j} − e^{i r (φ_j^± t + Θ_j^±)}` for all `j`.
    pub fn psi_remainder(&self, t: f64, r: f64, sign: Sign) -> Result<Vec<Complex64>> {
        let phi = self.phi(t, r)?;
        let free = self.phi_free(t, r, sign);
        let d = self.d(r, sign)?;
        Ok((0..phi.len()).map(|j| phi[j] - free[j] * d[j]).collect())
    }
}

/// Backward-anchored fundamental matrix `W_±(t) = N(t)⁻¹ Φ(t) b(t)` with
/// `b(±T) = I`.
#[derive(Clone, Debug)]
pub struct FundamentalTrack {
    pub sign: Sign,
    pub r: f64,
    pub times: Vec<f64>,
    pub b: Vec<CMat>,
    pub w: Vec<CMat>,
    pub det_abs: Vec<f64>,
    /// `‖b(t) − I‖_F`.
    pub remainder: Vec<f64>,
    pub violations: usize,
}

impl FundamentalTrack {
    /// Largest relative deviation of `|det W|` from its first value.
    pub fn det_drift(&self) -> f64 {
        let d0 = self.det_abs[0];
        self.det_abs
            .iter()
            .map(|d| ((d - d0) / d0).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves the amplitude equation from `σ = sign·T_max` with `b(σ) = I`
/// through `stops` (monotone away from `σ`) and assembles `W_±`.
pub fn wave_fundamental_matrix(
    dir: &SpectralDirection,
    coupling: &dyn Coupling,
    r: f64,
    sign: Sign,
    t_max: f64,
    stops: &[f64],
    opts: &AmplitudeOptions,
) -> Result<FundamentalTrack> {
    let m = dir.dim();
    let sigma = sign.as_f64() * t_max;
    let traj = evolve_amplitudes(coupling, r, &CMat::identity(m, m), sigma, stops, opts)?;
    let mut track = FundamentalTrack {
        sign,
        r,
        times: traj.times.clone(),
        b: Vec::with_capacity(stops.len()),
        w: Vec::with_capacity(stops.len()),
        det_abs: Vec::with_capacity(stops.len()),
        remainder: Vec::with_capacity(stops.len()),
        violations: traj.violations,
    };
    for (t, b) in traj.times.iter().zip(traj.states) {
        let n = dir.n_at(*t)?;
        let theta = coupling.theta(*t)?;
        let mut pb = b.clone();
        for i in 0..m {
            let e = cis(r * theta[i]);
            for j in 0..m {
                pb[(i, j)] *= e;
            }
        }
        let w = inverse(&n)? * pb;
        let det_b = crate::linalg::determinant(&b).norm();
        let det_n = crate::linalg::determinant(&n).norm();
        track.det_abs.push(det_b / det_n);
        track
            .remainder
            .push(frobenius(&(&b - CMat::identity(m, m))));
        track.w.push(w);
        track.b.push(b);
    }
    Ok(track)
}
