//! Wave operators, scattering operator and decay measurements on a
//! frequency grid.
//!
//! Per direction the ξ-independent data (diagonalizer, coupling table,
//! stability verdicts, `Θ^±`) are computed once; per radius the amplitude
//! equation is solved from `t = 0` towards both ends, and from `±T_max`
//! back to `0` when wave operators are needed.

use std::sync::Arc;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::integrator::{
    amplitude_limit, coupling_tail, evolve_amplitudes, stability_indicator, theta_correction,
    AmplitudeOptions, AmplitudeTrajectory, Coupling, CouplingTable, PhaseTable, Stability,
    StabilityOptions, StabilityVerdict, ThetaCorrection,
};
use crate::linalg::{cis, inverse, spectral_norm, CMat, CVec};
use crate::modes::{filon_norm_sq, l2_norm, DataSpec, FrequencyGrid, ModalTerm};
use crate::spectral::SpectralDirection;
use crate::symbol::{Direction, Symbol};
use crate::Sign;

fn idx(sign: Sign) -> usize {
    match sign {
        Sign::Minus => 0,
        Sign::Plus => 1,
    }
}

/// Numerical settings shared by every direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabSettings {
    pub t_max: f64,
    /// Largest accepted amplitude tail `B·max|a|·∫_{|t|>T}‖G‖` at an
    /// R-stable end.
    pub tail_tol: f64,
    /// Largest accepted root tail `∫_T^{2T}|∂_tφ|` when limits are sampled.
    pub limit_tol: f64,
    /// Node spacing of the coupling tables in `asinh(|t|)`.
    pub table_step: f64,
    pub amplitude: AmplitudeOptions,
    pub stability: StabilityOptions,
}

impl Default for LabSettings {
    fn default() -> Self {
        LabSettings {
            t_max: 2000.0,
            tail_tol: 1e-6,
            limit_tol: 1e-6,
            table_step: CouplingTable::DEFAULT_STEP,
            amplitude: AmplitudeOptions::default(),
            stability: StabilityOptions::default(),
        }
    }
}

/// Everything about one direction that does not depend on `r`.
pub struct DirectionLab {
    pub dir: SpectralDirection,
    pub table: CouplingTable,
    pub verdicts: [Vec<StabilityVerdict>; 2],
    pub theta: [Option<Vec<ThetaCorrection>>; 2],
    /// `∫_{|t|>T_max} ‖G‖` at each end.
    pub g_tail: [f64; 2],
    pub t_max: f64,
}

impl DirectionLab {
    pub fn new(symbol: Arc<dyn Symbol>, omega: Direction, settings: &LabSettings) -> Result<Self> {
        let t_max = settings.t_max;
        let dir = SpectralDirection::new(symbol, omega, t_max, settings.limit_tol)?;
        let table = CouplingTable::build_with_step(&dir, t_max, settings.table_step)?;
        let mut verdicts: [Vec<StabilityVerdict>; 2] = [Vec::new(), Vec::new()];
        let mut theta: [Option<Vec<ThetaCorrection>>; 2] = [None, None];
        let mut g_tail = [0.0; 2];
        for sign in Sign::BOTH {
            let v = stability_indicator(&dir, sign, t_max, &settings.stability)?;
            if v.iter().all(|x| x.class == Stability::RStable) {
                theta[idx(sign)] = Some(v.iter().map(theta_correction).collect::<Result<_>>()?);
            }
            verdicts[idx(sign)] = v;
            g_tail[idx(sign)] = if table.is_flat() {
                0.0
            } else {
                coupling_tail(&dir, sign, t_max)?
            };
        }
        Ok(DirectionLab {
            dir,
            table,
            verdicts,
            theta,
            g_tail,
            t_max,
        })
    }

    /// RStable when every root is, NotRStable when some root is, otherwise
    /// Inconclusive.
    pub fn class(&self, sign: Sign) -> Stability {
        let v = &self.verdicts[idx(sign)];
        if v.iter().all(|x| x.class == Stability::RStable) {
            Stability::RStable
        } else if v.iter().any(|x| x.class == Stability::NotRStable) {
            Stability::NotRStable
        } else {
            Stability::Inconclusive
        }
    }

    pub fn phases(&self) -> PhaseTable<'_> {
        PhaseTable {
            coupling: &self.table,
            limit_roots: [
                self.dir.limit(Sign::Minus).roots.clone(),
                self.dir.limit(Sign::Plus).roots.clone(),
            ],
            theta: [
                self.theta[0]
                    .as_ref()
                    .map(|v| v.iter().map(|t| t.value).collect()),
                self.theta[1]
                    .as_ref()
                    .map(|v| v.iter().map(|t| t.value).collect()),
            ],
        }
    }

    /// `∫_{|s| ≥ |t|} ‖G‖` on the side `sign`, including the tail beyond
    /// the table.
    pub fn remaining_coupling(&self, t: f64, sign: Sign) -> f64 {
        let (lo, _) = self.table.g_integral(t, sign);
        let (_, total) = self.table.g_integral(sign.as_f64() * self.t_max, sign);
        (total - lo).max(0.0) + self.g_tail[idx(sign)]
    }
}

/// Amplitude solutions of one mode.
#[derive(Clone, Debug)]
pub struct ModeSolution {
    pub r: f64,
    /// From `a(0) = N(0)` towards `+T_max`.
    pub forward: AmplitudeTrajectory,
    /// From `a(0) = N(0)` towards `−T_max`.
    pub backward: AmplitudeTrajectory,
    /// `b_±(0)` where `b(±T_max) = I`, for ends with wave operators.
    pub anchored: [Option<CMat>; 2],
    /// Amplitude tails at the two ends.
    pub tails: [f64; 2],
}

impl ModeSolution {
    pub fn trajectory(&self, sign: Sign) -> &AmplitudeTrajectory {
        match sign {
            Sign::Plus => &self.forward,
            Sign::Minus => &self.backward,
        }
    }

    pub fn a_at(&self, t: f64) -> Result<&CMat> {
        let traj = if t >= 0.0 {
            &self.forward
        } else {
            &self.backward
        };
        traj.at(t).ok_or_else(|| {
            LabError::InvalidState(format!("amplitudes at t = {t} were not recorded"))
        })
    }

    /// `α_± = a(±T_max)`.
    pub fn alpha(&self, sign: Sign) -> &CMat {
        self.trajectory(sign).last()
    }

    pub fn violations(&self) -> usize {
        self.forward.violations + self.backward.violations
    }
}

/// Solves the amplitude equation of one mode, recording `a` at `±checkpoints`
/// and at `±T_max`.
pub fn solve_mode(
    lab: &DirectionLab,
    r: f64,
    checkpoints: &[f64],
    wave_ops: bool,
    settings: &LabSettings,
) -> Result<ModeSolution> {
    let t_max = lab.t_max;
    let a0 = lab.dir.n_at(0.0)?;
    let stops = |sign: Sign| -> Vec<f64> {
        let s = sign.as_f64();
        std::iter::once(0.0)
            .chain(
                checkpoints
                    .iter()
                    .filter(|&&c| c > 0.0 && c < t_max)
                    .map(|c| s * c),
            )
            .chain(std::iter::once(s * t_max))
            .collect()
    };
    let opts = &settings.amplitude;
    let forward = evolve_amplitudes(&lab.table, r, &a0, 0.0, &stops(Sign::Plus), opts)?;
    let backward = evolve_amplitudes(&lab.table, r, &a0, 0.0, &stops(Sign::Minus), opts)?;
    let mut tails = [0.0; 2];
    for sign in Sign::BOTH {
        let traj = if sign == Sign::Plus {
            &forward
        } else {
            &backward
        };
        let stable = lab.class(sign) == Stability::RStable;
        let bound = *traj.bounds.last().unwrap_or(&1.0);
        let limit = amplitude_limit(
            traj.last(),
            bound,
            lab.g_tail[idx(sign)],
            sign,
            settings.tail_tol,
            stable,
        )?;
        tails[idx(sign)] = limit.tail;
    }
    let mut anchored = [None, None];
    if wave_ops {
        for sign in Sign::BOTH {
            if lab.class(sign) != Stability::RStable {
                continue;
            }
            let m = lab.dir.dim();
            let b = evolve_amplitudes(
                &lab.table,
                r,
                &CMat::identity(m, m),
                sign.as_f64() * t_max,
                &[0.0],
                opts,
            )?;
            anchored[idx(sign)] = Some(b.last().clone());
        }
    }
    Ok(ModeSolution {
        r,
        forward,
        backward,
        anchored,
        tails,
    })
}

/// One direction of the grid with its mode solutions. Reflected directions
/// of even symbols share both parts.
#[derive(Clone)]
pub struct DirectionSolution {
    pub omega: Direction,
    pub lab: Arc<DirectionLab>,
    pub modes: Arc<Vec<ModeSolution>>,
}

/// Mode values on the whole grid, `values[d][k]`.
pub type GridValues = Vec<Vec<CVec>>;

/// A point of a distance curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    /// `‖Û(t) − V̂(t)‖`.
    pub distance: f64,
    pub norm_u: f64,
    pub norm_v: f64,
    /// A-posteriori upper estimate of the distance from the amplitude,
    /// phase and diagonalizer remainders.
    pub bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// Distance to the free solution with data `W_±⁻¹ f`.
    Free,
    /// Distance to `Σ_j e^{i r φ_j^± t} N_±⁻¹ e_j (α_± f̂)_j`, with no phase
    /// correction, at an end without finite phase limits.
    Uncorrected,
}

#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub sign: Sign,
    pub kind: CurveKind,
    pub norm_initial: f64,
    pub points: Vec<CurvePoint>,
    /// `sqrt(Σ_j ‖A_j‖² + ‖B_j‖²)` for [`CurveKind::Uncorrected`].
    pub plateau: Option<f64>,
}

impl Curve {
    pub fn relative(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| (p.t, p.distance / self.norm_initial))
            .collect()
    }
}

/// Measured against predicted distance at an end without finite phase
/// limits. `A_j = B_j = N_±⁻¹ e_j (α_± f̂)_j`, so the prediction is
/// `sqrt(Σ_j ‖A_j‖² + ‖B_j‖²)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NonfreeCheck {
    pub sign: Sign,
    pub t: f64,
    pub predicted: f64,
    pub measured: f64,
    pub relative_gap: f64,
    /// Cross term `‖Û − V̂‖² − ‖Û‖² − ‖V̂‖²` at `t` and at the earliest
    /// checkpoint ≥ 100 (or the first one).
    pub cross_at_t: f64,
    pub cross_early: f64,
}

/// Empirical operator norms on an ensemble next to the a-priori constants
/// `max ‖N_a⁻¹‖·B·‖N_b‖` over the grid.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorNorms {
    /// `max ‖W_± g‖/‖g‖` per end.
    pub wave: [Option<f64>; 2],
    pub wave_bound: [Option<f64>; 2],
    /// `max ‖W_±⁻¹ f‖/‖f‖` per end.
    pub wave_inverse: [Option<f64>; 2],
    pub wave_inverse_bound: [Option<f64>; 2],
    pub scattering: Option<f64>,
    pub scattering_bound: Option<f64>,
}

/// Round-trip errors of the wave and scattering operators over an ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorChecks {
    pub samples: usize,
    pub norms: OperatorNorms,
    /// `max ‖W_±⁻¹ W_± g − g‖/‖g‖`, per end (None when undefined).
    pub wave_roundtrip: [Option<f64>; 2],
    /// `max ‖S⁻¹ S g − g‖/‖g‖`.
    pub scattering_roundtrip: Option<f64>,
    /// `max ‖S g − g‖/‖g‖`.
    pub scattering_deviation: Option<f64>,
}

/// Which side of the dichotomy a branch landed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// R-stable everywhere and the distance to the free solution decreases.
    Decay,
    /// Not R-stable everywhere and the distance approaches the predicted
    /// plateau (within 5%).
    Plateau,
    /// Mixed or inconclusive verdicts, or a curve that matches neither.
    Flagged,
}

/// `‖Û(t)‖ ≤ K‖Û(0)‖` with `K = max ‖N(t)⁻¹‖·B(t)·‖N(0)‖` over the grid and
/// recorded times.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WellPosedness {
    pub constant: f64,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionSummary {
    pub omega: Direction,
    pub class_minus: Stability,
    pub class_plus: Stability,
    pub verdicts: Vec<StabilityVerdict>,
    pub theta_minus: Option<Vec<ThetaCorrection>>,
    pub theta_plus: Option<Vec<ThetaCorrection>>,
    pub limit_roots_minus: Vec<f64>,
    pub limit_roots_plus: Vec<f64>,
    pub max_amplitude_tail: [f64; 2],
    pub violations: usize,
    pub flags: Vec<String>,
}

/// Full result of a scattering run.
#[derive(Clone, Debug, Serialize)]
pub struct ScatteringReport {
    pub name: String,
    pub t_max: f64,
    pub modes: usize,
    pub directions: Vec<DirectionSummary>,
    pub curves: Vec<Curve>,
    pub outcomes: Vec<(Sign, Outcome)>,
    pub nonfree: Vec<NonfreeCheck>,
    pub well_posedness: WellPosedness,
    pub operators: Option<OperatorChecks>,
    pub violations: usize,
    pub flags: Vec<String>,
}

/// Mode solutions over a whole frequency grid.
pub struct Lab {
    pub symbol: Arc<dyn Symbol>,
    pub grid: FrequencyGrid,
    pub settings: LabSettings,
    pub checkpoints: Vec<f64>,
    pub wave_ops: bool,
    pub directions: Vec<DirectionSolution>,
}

impl Lab {
    /// `checkpoints` are positive times; curves are reported at `±` those
    /// below `T_max`.
    pub fn build(
        symbol: Arc<dyn Symbol>,
        grid: FrequencyGrid,
        settings: LabSettings,
        checkpoints: &[f64],
        wave_ops: bool,
    ) -> Result<Lab> {
        if grid.space_dim != symbol.space_dim() {
            return Err(LabError::Config(format!(
                "grid has space dimension {}, symbol {}",
                grid.space_dim,
                symbol.space_dim()
            )));
        }
        if !(settings.t_max > 0.0) {
            return Err(LabError::Config("t_max must be positive".into()));
        }
        let mut cps: Vec<f64> = checkpoints
            .iter()
            .copied()
            .filter(|c| *c > 0.0 && *c < settings.t_max)
            .collect();
        cps.sort_by(f64::total_cmp);
        cps.dedup();
        let mut directions: Vec<DirectionSolution> = Vec::new();
        for omega in &grid.directions {
            if symbol.even_in_direction() {
                if let Some(prev) = directions.iter().find(|d| d.omega == omega.reflected()) {
                    debug!("reusing modes of {:?} for {:?}", prev.omega, omega);
                    directions.push(DirectionSolution {
                        omega: omega.clone(),
                        lab: prev.lab.clone(),
                        modes: prev.modes.clone(),
                    });
                    continue;
                }
            }
            info!("direction {:?}: tables and stability", omega.as_slice());
            let lab = Arc::new(DirectionLab::new(symbol.clone(), omega.clone(), &settings)?);
            info!(
                "direction {:?}: classes {:?}/{:?}, solving {} modes",
                omega.as_slice(),
                lab.class(Sign::Minus),
                lab.class(Sign::Plus),
                grid.radii.len()
            );
            let modes: Vec<ModeSolution> = grid
                .radii
                .par_iter()
                .map(|&r| solve_mode(&lab, r, &cps, wave_ops, &settings))
                .collect::<Result<_>>()?;
            directions.push(DirectionSolution {
                omega: omega.clone(),
                lab,
                modes: Arc::new(modes),
            });
        }
        Ok(Lab {
            symbol,
            grid,
            settings,
            checkpoints: cps,
            wave_ops,
            directions,
        })
    }

    pub fn dim(&self) -> usize {
        self.symbol.dim()
    }

    /// `f̂` sampled on the grid.
    pub fn sample(&self, data: &DataSpec) -> Result<GridValues> {
        data.validate(self.dim())?;
        Ok(self
            .grid
            .directions
            .iter()
            .map(|omega| {
                self.grid
                    .radii
                    .iter()
                    .map(|&r| data.eval(r, omega))
                    .collect()
            })
            .collect())
    }

    /// Plancherel norm of grid values.
    pub fn norm(&self, values: &GridValues) -> f64 {
        values
            .iter()
            .zip(&self.grid.direction_weights)
            .map(|(v, w)| w * l2_norm(&self.grid.radial_weights, v).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn map_modes<F>(&self, values: &GridValues, f: F) -> Result<GridValues>
    where
        F: Fn(&DirectionSolution, &ModeSolution, &CVec) -> Result<CVec>,
    {
        self.directions
            .iter()
            .zip(values)
            .map(|(d, vals)| {
                d.modes
                    .iter()
                    .zip(vals)
                    .map(|(mode, v)| f(d, mode, v))
                    .collect()
            })
            .collect()
    }

    fn require_stable(&self, sign: Sign) -> Result<()> {
        for d in &self.directions {
            if d.lab.theta[idx(sign)].is_none() {
                return Err(LabError::InvalidState(format!(
                    "direction {:?} is not R-stable at {sign}; its wave operator is undefined",
                    d.omega.as_slice()
                )));
            }
        }
        Ok(())
    }

    /// `Û(t)` from `Û(0) = f̂` at a recorded time.
    pub fn solution_at(&self, t: f64, f_hat: &GridValues) -> Result<GridValues> {
        self.map_modes(f_hat, |d, mode, f| {
            crate::modes::representation_at(&d.lab.dir, &d.lab.table, mode.r, t, mode.a_at(t)?, f)
        })
    }

    /// Asymptotic data `W_±⁻¹ f̂ = N_±⁻¹ D_± α_± f̂`.
    pub fn wave_inverse(&self, sign: Sign, f_hat: &GridValues) -> Result<GridValues> {
        self.require_stable(sign)?;
        self.map_modes(f_hat, |d, mode, f| {
            let lim = d.lab.dir.limit(sign);
            let dvec = d.lab.phases().d(mode.r, sign)?;
            let mut c = mode.alpha(sign) * f;
            for (j, cj) in c.iter_mut().enumerate() {
                *cj *= dvec[j];
            }
            Ok(inverse(&lim.n)? * c)
        })
    }

    /// `W_± g = N(0)⁻¹ b_±(0) D_±⁻¹ N_± g`, with `b_±` solved backwards from
    /// `±T_max`.
    pub fn wave(&self, sign: Sign, g: &GridValues) -> Result<GridValues> {
        self.require_stable(sign)?;
        self.map_modes(g, |d, mode, v| {
            let b = mode.anchored[idx(sign)].as_ref().ok_or_else(|| {
                LabError::InvalidState("wave operators were not prepared for this lab".into())
            })?;
            let lim = d.lab.dir.limit(sign);
            let dvec = d.lab.phases().d(mode.r, sign)?;
            let mut c = &lim.n * v;
            for (j, cj) in c.iter_mut().enumerate() {
                *cj /= dvec[j];
            }
            Ok(inverse(&d.lab.dir.n_at(0.0)?)? * (b * c))
        })
    }

    /// `S = W_+⁻¹ ∘ W_−`. Requires equal limiting symbols at both ends.
    pub fn scattering(&self, g_minus: &GridValues) -> Result<GridValues> {
        self.check_equal_limits()?;
        self.wave_inverse(Sign::Plus, &self.wave(Sign::Minus, g_minus)?)
    }

    /// `S⁻¹ = W_−⁻¹ ∘ W_+`.
    pub fn scattering_inverse(&self, g_plus: &GridValues) -> Result<GridValues> {
        self.check_equal_limits()?;
        self.wave_inverse(Sign::Minus, &self.wave(Sign::Plus, g_plus)?)
    }

    fn check_equal_limits(&self) -> Result<()> {
        for d in &self.directions {
            let a = &d.lab.dir.limit(Sign::Minus).a;
            let b = &d.lab.dir.limit(Sign::Plus).a;
            if (a - b).norm() > 1e-10 * (1.0 + a.norm()) {
                return Err(LabError::InvalidState(format!(
                    "limiting symbols differ at ±∞ along {:?}; the scattering operator compares different free evolutions",
                    d.omega.as_slice()
                )));
            }
        }
        Ok(())
    }

    /// Distance between `Û(±t)` and its free (or uncorrected) counterpart at
    /// every checkpoint and at `T_max`.
    pub fn decay_curve(&self, sign: Sign, f_hat: &GridValues) -> Result<Curve> {
        let stable = self
            .directions
            .iter()
            .all(|d| d.lab.theta[idx(sign)].is_some());
        let kind = if stable {
            CurveKind::Free
        } else {
            CurveKind::Uncorrected
        };
        let s = sign.as_f64();
        let times: Vec<f64> = self
            .checkpoints
            .iter()
            .map(|c| s * c)
            .chain(std::iter::once(s * self.settings.t_max))
            .collect();
        let norm_initial = self.norm(f_hat);
        let mut points = Vec::with_capacity(times.len());
        for &t in &times {
            let mut dist2 = 0.0;
            let mut nu2 = 0.0;
            let mut nv2 = 0.0;
            let mut bound2 = 0.0;
            for (dd, (d, vals)) in self.directions.iter().zip(f_hat).enumerate() {
                let wdir = self.grid.direction_weights[dd];
                let (u_terms, v_terms, bound) = self.modal_terms(d, sign, t, vals, kind)?;
                let all: Vec<ModalTerm> = u_terms.iter().chain(&v_terms).cloned().collect();
                let sd = self.grid.space_dim;
                dist2 += wdir * filon_norm_sq(&self.grid.radii, &all, sd);
                nu2 += wdir * filon_norm_sq(&self.grid.radii, &u_terms, sd);
                nv2 += wdir * filon_norm_sq(&self.grid.radii, &v_terms, sd);
                bound2 += wdir
                    * self
                        .grid
                        .radial_weights
                        .iter()
                        .zip(&bound)
                        .map(|(w, b)| w * b * b)
                        .sum::<f64>();
            }
            points.push(CurvePoint {
                t,
                distance: dist2.sqrt(),
                norm_u: nu2.sqrt(),
                norm_v: nv2.sqrt(),
                bound: bound2.sqrt(),
            });
        }
        let plateau = (kind == CurveKind::Uncorrected).then(|| {
            let mut p2 = 0.0;
            for (dd, (d, vals)) in self.directions.iter().zip(f_hat).enumerate() {
                let n_inv = match inverse(&d.lab.dir.limit(sign).n) {
                    Ok(x) => x,
                    Err(_) => return f64::NAN,
                };
                for (k, (mode, f)) in d.modes.iter().zip(vals).enumerate() {
                    let c = mode.alpha(sign) * f;
                    let a2: f64 = (0..c.len())
                        .map(|j| (n_inv.column(j) * c[j]).norm_squared())
                        .sum();
                    p2 += self.grid.direction_weights[dd] * self.grid.radial_weights[k] * 2.0 * a2;
                }
            }
            p2.sqrt()
        });
        Ok(Curve {
            sign,
            kind,
            norm_initial,
            points,
            plateau,
        })
    }

    /// Modal terms of `Û(t)` and `−V̂(t)` along one direction, plus the
    /// pointwise bound per radius.
    fn modal_terms(
        &self,
        d: &DirectionSolution,
        sign: Sign,
        t: f64,
        vals: &[CVec],
        kind: CurveKind,
    ) -> Result<(Vec<ModalTerm>, Vec<ModalTerm>, Vec<f64>)> {
        let lab = &d.lab;
        let m = lab.dir.dim();
        let n_inv = inverse(&lab.dir.n_at(t)?)?;
        let lim = lab.dir.limit(sign);
        let n_inv_lim = inverse(&lim.n)?;
        let theta = lab.table.theta(t)?;
        let theta_corr: Vec<f64> = match (&lab.theta[idx(sign)], kind) {
            (Some(v), CurveKind::Free) => v.iter().map(|x| x.value).collect(),
            _ => vec![0.0; m],
        };
        let mut u_terms: Vec<ModalTerm> = (0..m)
            .map(|j| ModalTerm {
                lambda: theta[j],
                u: Vec::with_capacity(vals.len()),
            })
            .collect();
        let mut v_terms: Vec<ModalTerm> = (0..m)
            .map(|j| ModalTerm {
                lambda: lim.roots[j] * t + theta_corr[j],
                u: Vec::with_capacity(vals.len()),
            })
            .collect();
        let inv_norm = spectral_norm(&n_inv);
        let diff_norm = spectral_norm(&(&n_inv - &n_inv_lim));
        let remaining = lab.remaining_coupling(t, sign);
        let mut bound = Vec::with_capacity(vals.len());
        for (mode, f) in d.modes.iter().zip(vals) {
            let c = mode.a_at(t)? * f;
            let ca = mode.alpha(sign) * f;
            for j in 0..m {
                u_terms[j].u.push(n_inv.column(j) * c[j]);
                v_terms[j].u.push(n_inv_lim.column(j) * (-ca[j]));
            }
            let psi_max = (0..m)
                .map(|j| {
                    (cis(mode.r * theta[j]) - cis(mode.r * (lim.roots[j] * t + theta_corr[j])))
                        .norm()
                })
                .fold(0.0, f64::max);
            bound.push(
                inv_norm * (remaining.exp() - 1.0) * c.norm()
                    + inv_norm * psi_max * ca.norm()
                    + diff_norm * ca.norm(),
            );
        }
        Ok((u_terms, v_terms, bound))
    }

    /// Round trips of `W_±` and `S` on the given samples.
    pub fn operator_checks(&self, samples: &[GridValues]) -> Result<OperatorChecks> {
        let rel = |a: &GridValues, b: &GridValues| -> f64 {
            let diff: GridValues = a
                .iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect())
                .collect();
            self.norm(&diff) / self.norm(b)
        };
        let mut wave_roundtrip = [None, None];
        let mut norms = OperatorNorms {
            wave: [None, None],
            wave_bound: [None, None],
            wave_inverse: [None, None],
            wave_inverse_bound: [None, None],
            scattering: None,
            scattering_bound: None,
        };
        for sign in Sign::BOTH {
            if self.require_stable(sign).is_err() || !self.wave_ops {
                continue;
            }
            let mut worst = 0.0_f64;
            let mut w_norm = 0.0_f64;
            let mut winv_norm = 0.0_f64;
            for g in samples {
                let wg = self.wave(sign, g)?;
                let back = self.wave_inverse(sign, &wg)?;
                worst = worst.max(rel(&back, g));
                w_norm = w_norm.max(self.norm(&wg) / self.norm(g));
                winv_norm = winv_norm.max(self.norm(&self.wave_inverse(sign, g)?) / self.norm(g));
            }
            wave_roundtrip[idx(sign)] = Some(worst);
            norms.wave[idx(sign)] = Some(w_norm);
            norms.wave_inverse[idx(sign)] = Some(winv_norm);
            let (kw, kinv) = self.operator_constants(sign)?;
            norms.wave_bound[idx(sign)] = Some(kw);
            norms.wave_inverse_bound[idx(sign)] = Some(kinv);
        }
        let mut scattering_roundtrip = None;
        let mut scattering_deviation = None;
        if wave_roundtrip.iter().all(Option::is_some) && self.check_equal_limits().is_ok() {
            let mut worst_rt = 0.0_f64;
            let mut worst_dev = 0.0_f64;
            let mut s_norm = 0.0_f64;
            for g in samples {
                let sg = self.scattering(g)?;
                worst_dev = worst_dev.max(rel(&sg, g));
                s_norm = s_norm.max(self.norm(&sg) / self.norm(g));
                let back = self.scattering_inverse(&sg)?;
                worst_rt = worst_rt.max(rel(&back, g));
            }
            scattering_roundtrip = Some(worst_rt);
            scattering_deviation = Some(worst_dev);
            norms.scattering = Some(s_norm);
            norms.scattering_bound = match (norms.wave_inverse_bound[1], norms.wave_bound[0]) {
                (Some(a), Some(b)) => Some(a * b),
                _ => None,
            };
        }
        Ok(OperatorChecks {
            samples: samples.len(),
            norms,
            wave_roundtrip,
            scattering_roundtrip,
            scattering_deviation,
        })
    }

    /// `(max ‖N(0)⁻¹‖·B·‖N_±‖, max ‖N_±⁻¹‖·B·‖N(0)‖)` over the grid, where
    /// `B = exp(∫‖G‖)` over the whole half-line including the tail.
    pub fn operator_constants(&self, sign: Sign) -> Result<(f64, f64)> {
        let mut kw = 0.0_f64;
        let mut kinv = 0.0_f64;
        for d in &self.directions {
            let n0 = d.lab.dir.n_at(0.0)?;
            let lim = &d.lab.dir.limit(sign).n;
            let b = d.lab.remaining_coupling(0.0, sign).exp();
            kw = kw.max(spectral_norm(&inverse(&n0)?) * b * spectral_norm(lim));
            kinv = kinv.max(spectral_norm(&inverse(lim)?) * b * spectral_norm(&n0));
        }
        Ok((kw, kinv))
    }

    /// Compares `‖Û(t) − V̂(t)‖` with the plateau prediction at the end
    /// `sign`, where no root may be R-stable.
    pub fn nonfree_check(&self, sign: Sign, f_hat: &GridValues) -> Result<NonfreeCheck> {
        for d in &self.directions {
            if d.lab.verdicts[idx(sign)]
                .iter()
                .any(|v| v.class == Stability::RStable)
            {
                return Err(LabError::InvalidState(format!(
                    "direction {:?} has R-stable roots at {sign}; the plateau prediction does not apply",
                    d.omega.as_slice()
                )));
            }
        }
        let curve = self.decay_curve(sign, f_hat)?;
        let cross = |p: &CurvePoint| p.distance.powi(2) - p.norm_u.powi(2) - p.norm_v.powi(2);
        let last = *curve.points.last().expect("curve ends at T_max");
        let early = curve
            .points
            .iter()
            .find(|p| p.t.abs() >= 100.0)
            .unwrap_or(&curve.points[0]);
        let predicted = curve.plateau.unwrap_or(f64::NAN);
        Ok(NonfreeCheck {
            sign,
            t: last.t,
            predicted,
            measured: last.distance,
            relative_gap: (last.distance - predicted).abs() / predicted,
            cross_at_t: cross(&last),
            cross_early: cross(early),
        })
    }

    /// Growth constant `K` and the largest observed `‖Û(t)‖/‖Û(0)‖` over
    /// the given curves.
    pub fn well_posedness(&self, curves: &[Curve]) -> Result<WellPosedness> {
        let mut constant = 0.0_f64;
        for d in &self.directions {
            let n0 = spectral_norm(&d.lab.dir.n_at(0.0)?);
            for traj in [&d.modes[0].forward, &d.modes[0].backward] {
                for (k, &t) in traj.times.iter().enumerate() {
                    let ninv = spectral_norm(&inverse(&d.lab.dir.n_at(t)?)?);
                    // the bound depends on ξ only through the start, take the worst mode
                    let b = d
                        .modes
                        .iter()
                        .map(|m| {
                            if t >= 0.0 {
                                m.forward.bounds[k]
                            } else {
                                m.backward.bounds[k]
                            }
                        })
                        .fold(0.0, f64::max);
                    constant = constant.max(ninv * b * n0);
                }
            }
        }
        let max_ratio = curves
            .iter()
            .flat_map(|c| c.points.iter().map(move |p| p.norm_u / c.norm_initial))
            .fold(0.0, f64::max);
        Ok(WellPosedness {
            constant,
            max_ratio,
        })
    }

    /// Decay for an R-stable branch whose curve decreases, plateau for a
    /// non-R-stable one whose end value is within 5% of the prediction,
    /// flagged otherwise.
    pub fn outcome(&self, curve: &Curve) -> Outcome {
        let classes: Vec<Stability> = self
            .directions
            .iter()
            .map(|d| d.lab.class(curve.sign))
            .collect();
        let dist: Vec<f64> = curve.points.iter().map(|p| p.distance).collect();
        if classes.iter().all(|c| *c == Stability::RStable) && curve.kind == CurveKind::Free {
            if dist.windows(2).all(|w| w[1] <= w[0]) {
                return Outcome::Decay;
            }
        } else if classes.iter().all(|c| *c == Stability::NotRStable) {
            if let (Some(p), Some(last)) = (curve.plateau, dist.last()) {
                if (last - p).abs() <= 0.05 * p {
                    return Outcome::Plateau;
                }
            }
        }
        Outcome::Flagged
    }

    pub fn direction_summaries(&self) -> Vec<DirectionSummary> {
        self.directions
            .iter()
            .map(|d| {
                let lab = &d.lab;
                let (cm, cp) = (lab.class(Sign::Minus), lab.class(Sign::Plus));
                let mut flags = Vec::new();
                if (cm == Stability::RStable) != (cp == Stability::RStable) {
                    flags.push(format!(
                        "mixed: {cm:?} at -, {cp:?} at +; only one wave operator exists"
                    ));
                }
                for (sign, c) in [(Sign::Minus, cm), (Sign::Plus, cp)] {
                    if c == Stability::Inconclusive {
                        flags.push(format!(
                            "inconclusive phase test at {sign}; treated as not R-stable"
                        ));
                    }
                }
                let tail = |s: Sign| d.modes.iter().map(|m| m.tails[idx(s)]).fold(0.0, f64::max);
                DirectionSummary {
                    omega: d.omega.clone(),
                    class_minus: cm,
                    class_plus: cp,
                    verdicts: lab.verdicts.iter().flatten().cloned().collect(),
                    theta_minus: lab.theta[0].clone(),
                    theta_plus: lab.theta[1].clone(),
                    limit_roots_minus: lab.dir.limit(Sign::Minus).roots.clone(),
                    limit_roots_plus: lab.dir.limit(Sign::Plus).roots.clone(),
                    max_amplitude_tail: [tail(Sign::Minus), tail(Sign::Plus)],
                    violations: d.modes.iter().map(ModeSolution::violations).sum(),
                    flags,
                }
            })
            .collect()
    }

    /// Total Gronwall-bound violations over all modes (reflections counted
    /// once).
    pub fn violations(&self) -> usize {
        let mut seen: Vec<*const Vec<ModeSolution>> = Vec::new();
        let mut total = 0;
        for d in &self.directions {
            let p = Arc::as_ptr(&d.modes);
            if !seen.contains(&p) {
                seen.push(p);
                total += d.modes.iter().map(ModeSolution::violations).sum::<usize>();
            }
        }
        total
    }

    /// Curves at the requested ends and operator checks on `ensemble`.
    pub fn report(
        &self,
        name: &str,
        f_hat: &GridValues,
        branches: &[Sign],
        ensemble: &[GridValues],
    ) -> Result<ScatteringReport> {
        let curves = branches
            .iter()
            .map(|&s| self.decay_curve(s, f_hat))
            .collect::<Result<Vec<_>>>()?;
        let operators = if self.wave_ops && !ensemble.is_empty() {
            Some(self.operator_checks(ensemble)?)
        } else {
            None
        };
        let directions = self.direction_summaries();
        let mut flags: Vec<String> = directions
            .iter()
            .flat_map(|d| {
                d.flags
                    .iter()
                    .map(move |f| format!("{:?}: {f}", d.omega.as_slice()))
            })
            .collect();
        let outcomes: Vec<(Sign, Outcome)> =
            curves.iter().map(|c| (c.sign, self.outcome(c))).collect();
        for (sign, o) in &outcomes {
            if *o == Outcome::Flagged {
                flags.push(format!("branch {sign}: neither clean decay nor plateau"));
            }
        }
        let nonfree = branches
            .iter()
            .filter_map(|&s| self.nonfree_check(s, f_hat).ok())
            .collect();
        let well_posedness = self.well_posedness(&curves)?;
        Ok(ScatteringReport {
            name: name.to_string(),
            t_max: self.settings.t_max,
            modes: self.grid.len(),
            directions,
            curves,
            outcomes,
            nonfree,
            well_posedness,
            operators,
            violations: self.violations(),
            flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{GridSpec, RadialSpec};
    use crate::profile::{Constant, RationalDecay};
    use crate::symbol::Wave2;

    fn grid(count: usize) -> FrequencyGrid {
        FrequencyGrid::build(
            &GridSpec {
                directions: None,
                radial: RadialSpec::Linear {
                    min: 0.5,
                    max: 3.5,
                    count,
                },
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn constant_coefficients_scatter_trivially() {
        let sym: Arc<dyn Symbol> = Arc::new(Wave2 {
            c: Arc::new(Constant { value: 2.0 }),
            n: 1,
        });
        let settings = LabSettings {
            t_max: 100.0,
            ..LabSettings::default()
        };
        let lab = Lab::build(sym, grid(12), settings, &[10.0], true).unwrap();
        let f = lab.sample(&DataSpec::default_bump(2)).unwrap();
        let s = lab.scattering(&f).unwrap();
        for (a, b) in s.iter().flatten().zip(f.iter().flatten()) {
            assert!((a - b).norm() < 1e-12);
        }
        let curve = lab.decay_curve(Sign::Plus, &f).unwrap();
        assert!(curve.points.iter().all(|p| p.distance < 1e-10));
    }

    #[test]
    fn stable_profile_distance_shrinks_and_respects_bound() {
        let sym: Arc<dyn Symbol> = Arc::new(Wave2 {
            c: Arc::new(RationalDecay {
                c_inf: 2.0,
                amplitude: 1.0,
            }),
            n: 1,
        });
        let settings = LabSettings {
            t_max: 400.0,
            tail_tol: 1e-5,
            ..LabSettings::default()
        };
        let lab = Lab::build(sym, grid(24), settings, &[10.0, 100.0], true).unwrap();
        assert_eq!(lab.violations(), 0);
        let f = lab.sample(&DataSpec::default_bump(2)).unwrap();
        let curve = lab.decay_curve(Sign::Plus, &f).unwrap();
        assert_eq!(curve.kind, CurveKind::Free);
        let rel = curve.relative();
        assert!(rel[1].1 < rel[0].1, "{rel:?}");
        for p in &curve.points {
            assert!(p.distance <= p.bound * (1.0 + 1e-6) + 1e-9, "{p:?}");
        }
        let checks = lab.operator_checks(std::slice::from_ref(&f)).unwrap();
        assert!(checks.wave_roundtrip[1].unwrap() < 1e-6);
        assert!(checks.scattering_roundtrip.unwrap() < 1e-6);
    }
}
