//! Adaptive embedded Runge–Kutta integration of complex linear systems.
//!
//! Tableaus are plain data registered by name; the driver lands exactly on
//! requested stop times and reports every accepted step to an observer.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::linalg::ZERO;

/// Embedded explicit pair. `b` propagates the solution, `e = b − b̂` gives
/// the local error estimate.
#[derive(Clone, Debug)]
pub struct Tableau {
    pub name: &'static str,
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub e: Vec<f64>,
    /// Order of the embedded estimate plus one, used in the step controller.
    pub error_order: f64,
    /// Last stage is evaluated at `(t + h, y_new)` and can seed the next step.
    pub fsal: bool,
}

impl Tableau {
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn dormand_prince() -> Self {
        let b = vec![
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
            0.0,
        ];
        let bhat = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        Tableau {
            name: "dopri5",
            c: vec![0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0],
            a: vec![
                vec![],
                vec![0.2],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
                vec![
                    19372.0 / 6561.0,
                    -25360.0 / 2187.0,
                    64448.0 / 6561.0,
                    -212.0 / 729.0,
                ],
                vec![
                    9017.0 / 3168.0,
                    -355.0 / 33.0,
                    46732.0 / 5247.0,
                    49.0 / 176.0,
                    -5103.0 / 18656.0,
                ],
                b[..6].to_vec(),
            ],
            e: b.iter().zip(bhat).map(|(x, y)| x - y).collect(),
            b,
            error_order: 5.0,
            fsal: true,
        }
    }

    pub fn cash_karp() -> Self {
        let b = vec![
            37.0 / 378.0,
            0.0,
            250.0 / 621.0,
            125.0 / 594.0,
            0.0,
            512.0 / 1771.0,
        ];
        let bhat = [
            2825.0 / 27648.0,
            0.0,
            18575.0 / 48384.0,
            13525.0 / 55296.0,
            277.0 / 14336.0,
            0.25,
        ];
        Tableau {
            name: "cash_karp",
            c: vec![0.0, 0.2, 0.3, 0.6, 1.0, 0.875],
            a: vec![
                vec![],
                vec![0.2],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![0.3, -0.9, 1.2],
                vec![-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0],
                vec![
                    1631.0 / 55296.0,
                    175.0 / 512.0,
                    575.0 / 13824.0,
                    44275.0 / 110592.0,
                    253.0 / 4096.0,
                ],
            ],
            e: b.iter().zip(bhat).map(|(x, y)| x - y).collect(),
            b,
            error_order: 5.0,
            fsal: false,
        }
    }
}

/// Name → tableau table.
pub struct TableauRegistry {
    entries: BTreeMap<&'static str, fn() -> Tableau>,
}

impl TableauRegistry {
    pub fn builtin() -> Self {
        let mut entries: BTreeMap<&'static str, fn() -> Tableau> = BTreeMap::new();
        entries.insert("dopri5", Tableau::dormand_prince);
        entries.insert("cash_karp", Tableau::cash_karp);
        TableauRegistry { entries }
    }

    pub fn register(&mut self, name: &'static str, ctor: fn() -> Tableau) {
        self.entries.insert(name, ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<Tableau> {
        self.entries.get(name).map(|f| f()).ok_or_else(|| {
            LabError::Config(format!(
                "unknown integrator '{name}' (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

/// Right-hand side `y' = f(t, y)` on `ℂ^d`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()>;

    /// Largest admissible step near `t`.
    fn max_step(&self, _t: f64) -> f64 {
        f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Steps below `h_min_rel·(1 + |t|)` count as underflow.
    pub h_min_rel: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 50_000_000,
            h_min_rel: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// One accepted step as seen by the observer.
pub struct StepEvent<'a> {
    pub t: f64,
    pub y: &'a [Complex64],
    /// Index into the stop list when the step landed on a stop.
    pub stop: Option<usize>,
}

/// Adaptive driver with reusable work buffers.
pub struct Integrator {
    tab: Tableau,
    opts: OdeOptions,
    k: Vec<Vec<Complex64>>,
    ytmp: Vec<Complex64>,
    ynew: Vec<Complex64>,
    h_next: Option<f64>,
}

impl Integrator {
    pub fn new(tab: Tableau, opts: OdeOptions) -> Self {
        Integrator {
            tab,
            opts,
            k: Vec::new(),
            ytmp: Vec::new(),
            ynew: Vec::new(),
            h_next: None,
        }
    }

    pub fn options(&self) -> &OdeOptions {
        &self.opts
    }

    pub fn tableau(&self) -> &Tableau {
        &self.tab
    }

    fn ensure(&mut self, d: usize) {
        let s = self.tab.stages();
        if self.k.len() != s || self.k.first().map_or(0, Vec::len) != d {
            self.k = vec![vec![ZERO; d]; s];
            self.ytmp = vec![ZERO; d];
            self.ynew = vec![ZERO; d];
        }
    }

    /// Integrates `y` from `t0` through the monotone list `stops` (all on one
    /// side of `t0`), landing exactly on each stop. `y` holds the state at
    /// the last stop on return.
    pub fn integrate<S, O>(
        &mut self,
        sys: &mut S,
        t0: f64,
        y: &mut [Complex64],
        stops: &[f64],
        mut observer: O,
    ) -> Result<OdeStats>
    where
        S: OdeSystem + ?Sized,
        O: FnMut(StepEvent<'_>) -> Result<()>,
    {
        let d = sys.dim();
        if y.len() != d {
            return Err(LabError::InvalidState(format!(
                "state has length {}, system dimension is {d}",
                y.len()
            )));
        }
        let mut stats = OdeStats::default();
        let Some(&t_end) = stops.last() else {
            return Ok(stats);
        };
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        if stops.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) || (stops[0] - t0) * dir < 0.0 {
            return Err(LabError::InvalidState(
                "stop times must be monotone from t0".into(),
            ));
        }
        self.ensure(d);
        let s = self.tab.stages();
        let mut t = t0;
        let mut next_stop = 0;
        while next_stop < stops.len() && stops[next_stop] == t0 {
            observer(StepEvent {
                t,
                y,
                stop: Some(next_stop),
            })?;
            next_stop += 1;
        }
        if next_stop == stops.len() {
            return Ok(stats);
        }
        sys.rhs(t, y, &mut self.k[0])?;
        stats.rhs_evals += 1;
        let mut h = self
            .h_next
            .take()
            .unwrap_or_else(|| 1e-3 * (1.0 + (t_end - t0).abs()).min(1.0))
            .min(sys.max_step(t))
            .min((t_end - t0).abs());
        let inv_order = 1.0 / self.tab.error_order;
        while next_stop < stops.len() {
            let target = stops[next_stop];
            h = h.min(sys.max_step(t));
            let remaining = (target - t).abs();
            let mut landing = false;
            if h >= remaining * (1.0 - 1e-12) {
                h = remaining;
                landing = true;
            }
            let h_min = self.opts.h_min_rel * (1.0 + t.abs());
            if h < h_min && !landing {
                return Err(LabError::Stiffness { t, h });
            }
            if stats.accepted + stats.rejected >= self.opts.max_steps {
                return Err(LabError::Stiffness { t, h });
            }
            let hs = dir * h;
            for stage in 1..s {
                let row = &self.tab.a[stage];
                for i in 0..d {
                    let mut acc = ZERO;
                    for (j, &aij) in row.iter().enumerate() {
                        if aij != 0.0 {
                            acc += self.k[j][i] * aij;
                        }
                    }
                    self.ytmp[i] = y[i] + acc * hs;
                }
                let ts = t + self.tab.c[stage] * hs;
                let (head, tail) = self.k.split_at_mut(stage);
                let _ = head;
                sys.rhs(ts, &self.ytmp, &mut tail[0])?;
                stats.rhs_evals += 1;
            }
            let mut err_sq = 0.0;
            for i in 0..d {
                let mut acc = ZERO;
                let mut eacc = ZERO;
                for j in 0..s {
                    let kj = self.k[j][i];
                    if self.tab.b[j] != 0.0 {
                        acc += kj * self.tab.b[j];
                    }
                    if self.tab.e[j] != 0.0 {
                        eacc += kj * self.tab.e[j];
                    }
                }
                self.ynew[i] = y[i] + acc * hs;
                let sc = self.opts.atol + self.opts.rtol * y[i].norm().max(self.ynew[i].norm());
                err_sq += (eacc * hs).norm_sqr() / (sc * sc);
            }
            let err = (err_sq / d as f64).sqrt();
            if !err.is_finite() {
                return Err(LabError::Stiffness { t, h });
            }
            if err <= 1.0 {
                stats.accepted += 1;
                t = if landing { target } else { t + hs };
                y.copy_from_slice(&self.ynew);
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-inv_order)).clamp(0.2, 5.0)
                };
                let h_used = h;
                h *= factor;
                let stop = if landing {
                    let idx = next_stop;
                    next_stop += 1;
                    while next_stop < stops.len() && stops[next_stop] == target {
                        next_stop += 1;
                    }
                    Some(idx)
                } else {
                    None
                };
                observer(StepEvent { t, y, stop })?;
                if next_stop < stops.len() {
                    if self.tab.fsal && !landing {
                        let last = s - 1;
                        let (first, rest) = self.k.split_at_mut(1);
                        first[0].copy_from_slice(&rest[last - 1]);
                    } else {
                        sys.rhs(t, y, &mut self.k[0])?;
                        stats.rhs_evals += 1;
                    }
                    if landing {
                        // keep the pre-landing step size; the shortened
                        // landing step says nothing about the dynamics
                        h = h.max(h_used);
                    }
                }
            } else {
                stats.rejected += 1;
                h *= (0.9 * err.powf(-inv_order)).clamp(0.1, 0.9);
            }
        }
        self.h_next = Some(h);
        Ok(stats)
    }

    /// Forgets the step size carried over from the previous call.
    pub fn reset(&mut self) {
        self.h_next = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, cis, I};

    struct Rotor {
        w: f64,
    }

    impl OdeSystem for Rotor {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&mut self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
            dy[0] = I * self.w * y[0];
            Ok(())
        }
    }

    struct Decay;

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
            dy[0] = -y[0] * t;
            dy[1] = y[0] * c64(0.0, 1.0) - y[1];
            Ok(())
        }
    }

    #[test]
    fn phase_rotation_is_accurate_for_both_tableaus() {
        for tab in [Tableau::dormand_prince(), Tableau::cash_karp()] {
            let mut integ = Integrator::new(
                tab,
                OdeOptions {
                    rtol: 1e-11,
                    atol: 1e-14,
                    ..OdeOptions::default()
                },
            );
            let mut y = vec![c64(1.0, 0.0)];
            integ
                .integrate(&mut Rotor { w: 3.0 }, 0.0, &mut y, &[10.0], |_| Ok(()))
                .unwrap();
            assert!((y[0] - cis(30.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn stops_are_hit_exactly_backward() {
        let mut integ = Integrator::new(Tableau::dormand_prince(), OdeOptions::default());
        let mut y = vec![c64(1.0, 0.0)];
        let stops = [-0.25, -1.0, -3.0];
        let mut seen = Vec::new();
        integ
            .integrate(&mut Rotor { w: 1.0 }, 0.0, &mut y, &stops, |ev| {
                if let Some(i) = ev.stop {
                    seen.push((i, ev.t, ev.y[0]));
                }
                Ok(())
            })
            .unwrap();
        assert_eq!(seen.len(), 3);
        for (i, t, v) in seen {
            assert_eq!(t, stops[i]);
            assert!((v - cis(t)).norm() < 1e-8);
        }
    }

    #[test]
    fn time_dependent_system() {
        let mut integ = Integrator::new(Tableau::dormand_prince(), OdeOptions::default());
        let mut y = vec![c64(1.0, 0.0), c64(0.0, 0.0)];
        integ
            .integrate(&mut Decay, 0.0, &mut y, &[2.0], |_| Ok(()))
            .unwrap();
        assert!((y[0].re - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn max_step_is_respected() {
        struct Capped(Rotor);
        impl OdeSystem for Capped {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
                self.0.rhs(t, y, dy)
            }
            fn max_step(&self, _t: f64) -> f64 {
                0.01
            }
        }
        let mut integ = Integrator::new(Tableau::dormand_prince(), OdeOptions::default());
        let mut y = vec![c64(1.0, 0.0)];
        let stats = integ
            .integrate(&mut Capped(Rotor { w: 0.0 }), 0.0, &mut y, &[1.0], |_| {
                Ok(())
            })
            .unwrap();
        assert!(stats.accepted >= 100);
    }

    #[test]
    fn blow_up_is_reported_as_stiffness() {
        struct Blow;
        impl OdeSystem for Blow {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&mut self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) -> Result<()> {
                dy[0] = y[0] * y[0];
                Ok(())
            }
        }
        let mut integ = Integrator::new(Tableau::dormand_prince(), OdeOptions::default());
        let mut y = vec![c64(1.0, 0.0)];
        let err = integ
            .integrate(&mut Blow, 0.0, &mut y, &[2.0], |_| Ok(()))
            .unwrap_err();
        assert!(matches!(err, LabError::Stiffness { .. }));
    }

    #[test]
    fn registry_lookup() {
        let reg = TableauRegistry::builtin();
        assert_eq!(reg.get("cash_karp").unwrap().stages(), 6);
        assert!(reg.get("euler").is_err());
        for name in reg.names() {
            let tab = reg.get(name).unwrap();
            let sum_b: f64 = tab.b.iter().sum();
            let sum_e: f64 = tab.e.iter().sum();
            assert!((sum_b - 1.0).abs() < 1e-14 && sum_e.abs() < 1e-14);
            for (i, row) in tab.a.iter().enumerate() {
                let r: f64 = row.iter().sum();
                assert!((r - tab.c[i]).abs() < 1e-14);
            }
        }
    }
}
