use scatlab::config::ScenarioConfig;
use scatlab::lab::Lab;
use scatlab::modes::{oracle_evolve, DataSpec};
use scatlab::runner::{build_grid, build_symbol, run_scatter, write_curve_csv};
use scatlab::Sign;

fn lab_for(cfg: &ScenarioConfig) -> Lab {
    let symbol = build_symbol(cfg).unwrap();
    let grid = build_grid(cfg, symbol.as_ref()).unwrap();
    Lab::build(symbol, grid, cfg.settings(), &cfg.time.checkpoints, true).unwrap()
}

#[test]
fn lab_solution_matches_direct_solve_on_every_mode() {
    let mut cfg = ScenarioConfig::bundled("stable_wave")
        .unwrap()
        .with_t_max(100.0)
        .unwrap();
    // the short horizon leaves a coupling tail far above the default check
    cfg.tolerances.tail_tol = 1e-3;
    let lab = lab_for(&cfg);
    let f_hat = lab.sample(&DataSpec::default_bump(2)).unwrap();
    for t in [-10.0, 10.0, 100.0] {
        let u = lab.solution_at(t, &f_hat).unwrap();
        for (d, omega) in lab.grid.directions.iter().enumerate() {
            for (k, &r) in lab.grid.radii.iter().enumerate().step_by(7) {
                let v0 = &f_hat[d][k];
                if v0.norm() == 0.0 {
                    continue;
                }
                let oracle =
                    oracle_evolve(lab.symbol.as_ref(), omega, r, v0, 0.0, &[t], 1e-12).unwrap();
                let gap = (&u[d][k] - &oracle[0]).norm() / oracle[0].norm();
                assert!(gap < 1e-6, "t = {t}, r = {r}: {gap:.2e}");
            }
        }
    }
}

#[test]
fn solution_at_zero_is_the_data() {
    let cfg = ScenarioConfig::bundled("constant").unwrap();
    let lab = lab_for(&cfg);
    let f_hat = lab.sample(&DataSpec::default_bump(2)).unwrap();
    let u = lab.solution_at(0.0, &f_hat).unwrap();
    for (a, b) in u.iter().flatten().zip(f_hat.iter().flatten()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn wave_operators_invert_each_other_on_coupled_system() {
    let mut cfg = ScenarioConfig::bundled("coupled_wave")
        .unwrap()
        .with_t_max(200.0)
        .unwrap();
    cfg.tolerances.tail_tol = 1e-3;
    let lab = lab_for(&cfg);
    let f_hat = lab.sample(&DataSpec::default_bump(4)).unwrap();
    for sign in Sign::BOTH {
        let g = lab.wave_inverse(sign, &f_hat).unwrap();
        let back = lab.wave(sign, &g).unwrap();
        let gap = lab.norm(
            &back
                .iter()
                .zip(&f_hat)
                .map(|(x, y)| x.iter().zip(y).map(|(a, b)| a - b).collect())
                .collect(),
        ) / lab.norm(&f_hat);
        assert!(gap < 1e-6, "{sign}: {gap:.2e}");
    }
}

#[test]
fn plateau_prediction_is_stable_under_radial_refinement() {
    let base = ScenarioConfig::bundled("unstable_wave")
        .unwrap()
        .with_t_max(1000.0)
        .unwrap();
    let mut relative = Vec::new();
    for count in [48, 96] {
        let cfg = base
            .with_override("/grid/radial/count", serde_json::json!(count))
            .unwrap();
        let run = run_scatter(&cfg).unwrap();
        let curve = &run.report.curves[0];
        relative.push(curve.plateau.unwrap() / curve.norm_initial);
    }
    let change = (relative[1] - relative[0]).abs() / relative[1];
    assert!(change < 0.01, "{relative:?}");
}

#[test]
fn curve_csv_is_deterministic() {
    let cfg = ScenarioConfig::bundled("constant").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let run = run_scatter(&cfg).unwrap();
        let path = dir.path().join(format!("c{k}.csv"));
        write_curve_csv(&run.report.curves[1], &path).unwrap();
        files.push(std::fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}
