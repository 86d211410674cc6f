use std::path::Path;
use std::process::{Command, Output};

fn scatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn classify_constant_writes_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = scatlab(&[
        "classify",
        "--scenario",
        "constant",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("verdicts.csv")).unwrap();
    assert!(csv.starts_with("omega,sign,j,class,model,psi_at_t_max,last_increment"));
    assert!(csv.lines().skip(1).all(|l| l.contains("RStable")));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("verdicts.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema_version"], 1);
}

#[test]
fn scatter_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = scatlab(&[
            "scatter",
            "--scenario",
            "constant",
            "--out",
            d.to_str().unwrap(),
            "--seed",
            "11",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for f in ["curve_minus.csv", "curve_plus.csv", "report.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let curve = std::fs::read_to_string(a.join("curve_plus.csv")).unwrap();
    assert!(curve.starts_with("t,distance,norm_U,norm_V,bound\n"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["violations"], 0);
    assert!(
        report["operators"]["scattering_deviation"]
            .as_f64()
            .unwrap()
            < 1e-10
    );
}

#[test]
fn tmax_override_trims_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = scatlab(&[
        "scatter",
        "--scenario",
        "constant",
        "--tmax",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let curve = std::fs::read_to_string(dir.path().join("curve_plus.csv")).unwrap();
    // checkpoint 10 lies past the horizon, leaving only T_max itself
    assert_eq!(curve.lines().count(), 2);
    assert!(curve.lines().nth(1).unwrap().starts_with("5,"));
}

#[test]
fn empty_sweep_succeeds_with_empty_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = scatlab(&[
        "sweep",
        "--scenario",
        "constant",
        "--path",
        "/symbol/c/value",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.trim(), "value,class_minus,class_plus,outcome,metric");
}

#[test]
fn sweep_over_wave_speed() {
    let dir = tempfile::tempdir().unwrap();
    let out = scatlab(&[
        "sweep",
        "--scenario",
        "constant",
        "--path",
        "/symbol/c/value",
        "--values",
        "1,2,3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn dump_roots_prints_sorted_roots() {
    let out = scatlab(&[
        "dump-roots",
        "--scenario",
        "stable_wave",
        "--samples",
        "3",
        "--tmax",
        "10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], -10.0);
    // at t = 0 the roots are ±c(0) = ±3
    assert!((rows[1][2] - 3.0).abs() < 1e-12);
    assert!((rows[1][1] + 3.0).abs() < 1e-12);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    let missing = scatlab(&["classify"]);
    assert_eq!(missing.status.code(), Some(2));

    let unknown = scatlab(&["classify", "--scenario", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));

    let bad = write_config(
        dir.path(),
        "bad.json",
        "{\"schema_version\": 1,\n\"name\": \"x\",\n\"symbol\": {\"family\": \"wave2\", \"c\": {\"kind\": \"constant\", \"value\": 1}},\n\"time\": {\"t_max\": 10},\n\"bogus\": 1}",
    );
    let out = scatlab(&["classify", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 5"), "{}", stderr(&out));

    let path_err = scatlab(&[
        "sweep",
        "--scenario",
        "constant",
        "--path",
        "/symbol/nope",
        "--values",
        "1",
    ]);
    assert_eq!(path_err.status.code(), Some(2));

    let degenerate = write_config(
        dir.path(),
        "zero.json",
        r#"{"schema_version": 1, "name": "z",
            "symbol": {"family": "wave2", "c": {"kind": "constant", "value": 0.0}},
            "time": {"t_max": 10}}"#,
    );
    let out = scatlab(&["classify", "--config", &degenerate]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let strict = write_config(
        dir.path(),
        "strict.json",
        r#"{"schema_version": 1, "name": "tl",
            "symbol": {"family": "wave2", "c": {"kind": "rational_decay", "c_inf": 2.0, "amplitude": 1.0}},
            "grid": {"radial": {"kind": "linear", "min": 0.5, "max": 1.5, "count": 4}},
            "time": {"t_max": 100},
            "tolerances": {"tail_tol": 1e-12}}"#,
    );
    let out = scatlab(&["scatter", "--config", &strict]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}
