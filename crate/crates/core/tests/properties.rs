use std::sync::Arc;

use proptest::prelude::*;

use scatlab::config::ScenarioConfig;
use scatlab::integrator::{evolve_amplitudes, AmplitudeOptions, CouplingTable};
use scatlab::linalg::{c64, CVec};
use scatlab::modes::{filon_norm_sq, ModalTerm};
use scatlab::profile::{Profile, RationalDecay};
use scatlab::spectral::{characteristic_roots, SpectralDirection};
use scatlab::symbol::{Direction, Symbol, Wave2};

fn wave(c_inf: f64, amplitude: f64) -> Arc<dyn Symbol> {
    let c: Arc<dyn Profile> = Arc::new(RationalDecay { c_inf, amplitude });
    Arc::new(Wave2 { c, n: 1 })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn wave_roots_are_plus_minus_speed(c_inf in 0.5f64..4.0, amp in 0.0f64..1.0, t in -50.0f64..50.0) {
        let sym = wave(c_inf, amp);
        let c = c_inf + amp / (1.0 + t * t);
        let roots = characteristic_roots(&sym.matrix(t, &Direction::e1(1))).unwrap();
        prop_assert!((roots[0] + c).abs() < 1e-12 * c);
        prop_assert!((roots[1] - c).abs() < 1e-12 * c);
    }

    /// Constant amplitudes make every panel product exactly linear, so the
    /// Filon sum must reproduce the closed form on any grid.
    #[test]
    fn filon_norm_exact_for_constant_amplitudes(
        a in (-2.0f64..2.0, -2.0f64..2.0),
        b in (-2.0f64..2.0, -2.0f64..2.0),
        l1 in -50.0f64..50.0,
        l2 in -50.0f64..50.0,
        steps in prop::collection::vec(0.01f64..0.5, 2..40),
    ) {
        let mut radii = vec![0.5];
        for s in &steps {
            radii.push(radii.last().unwrap() + s);
        }
        let (r0, r1) = (radii[0], *radii.last().unwrap());
        let ua = c64(a.0, a.1);
        let ub = c64(b.0, b.1);
        let terms = vec![
            ModalTerm { lambda: l1, u: radii.iter().map(|_| CVec::from_vec(vec![ua])).collect() },
            ModalTerm { lambda: l2, u: radii.iter().map(|_| CVec::from_vec(vec![ub])).collect() },
        ];
        let got = filon_norm_sq(&radii, &terms, 1);
        let k = l1 - l2;
        let cross = if k.abs() < 1e-12 {
            c64(r1 - r0, 0.0)
        } else {
            (c64(0.0, k * r1).exp() - c64(0.0, k * r0).exp()) / c64(0.0, k)
        };
        let want = (ua.norm_sqr() + ub.norm_sqr()) * (r1 - r0) + 2.0 * (ua * ub.conj() * cross).re;
        prop_assert!((got - want.max(0.0)).abs() < 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn config_round_trip(
        t_max in 1.0f64..1e4,
        frac in prop::collection::vec(0.01f64..1.0, 0..4),
        tail in 1e-12f64..1e-3,
        seed in any::<u64>(),
        samples in 0usize..50,
    ) {
        let mut cfg = ScenarioConfig::bundled("stable_wave").unwrap();
        cfg.time.t_max = t_max;
        cfg.time.checkpoints = frac.iter().map(|f| f * t_max).collect();
        cfg.tolerances.tail_tol = tail;
        cfg.ensemble.seed = seed;
        cfg.ensemble.samples = samples;
        let text = cfg.to_json_pretty().unwrap();
        let again = ScenarioConfig::from_json_str(&text).unwrap();
        prop_assert_eq!(cfg, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    /// Forward then backward evolution returns to the start and never
    /// breaks the Gronwall bound.
    #[test]
    fn amplitude_evolution_is_reversible(
        c_inf in 1.0f64..3.0,
        amp in 0.1f64..1.0,
        r in 0.2f64..6.0,
        t_end in 1.0f64..30.0,
    ) {
        let sym = wave(c_inf, amp);
        let dir = SpectralDirection::new(sym, Direction::e1(1), 1e3, 1e-6).unwrap();
        let table = CouplingTable::build(&dir, 30.0).unwrap();
        let a0 = dir.n_at(0.0).unwrap();
        let opts = AmplitudeOptions::default();
        let fwd = evolve_amplitudes(&table, r, &a0, -t_end, &[t_end], &opts).unwrap();
        prop_assert_eq!(fwd.violations, 0);
        let back = evolve_amplitudes(&table, r, fwd.last(), t_end, &[-t_end], &opts).unwrap();
        prop_assert_eq!(back.violations, 0);
        prop_assert!((back.last() - &a0).norm() < 1e-7);
    }
}
