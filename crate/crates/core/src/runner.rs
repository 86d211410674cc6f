//! End-to-end runs driven by a [`ScenarioConfig`]: classification, full
//! scattering runs, parameter sweeps and root dumps, plus their CSV/JSON
//! output.

use std::path::Path;
use std::sync::Arc;

use log::info;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{LabError, Result};
use crate::integrator::{stability_indicator, Stability, StabilityVerdict};
use crate::lab::{Curve, GridValues, Lab, Outcome, ScatteringReport};
use crate::modes::{ensemble_rng, DataSpec, FrequencyGrid};
use crate::spectral::SpectralDirection;
use crate::symbol::{Direction, Symbol, SymbolRegistry};
use crate::Sign;

/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub fn build_symbol(cfg: &ScenarioConfig) -> Result<Arc<dyn Symbol>> {
    SymbolRegistry::builtin().build(&cfg.symbol)
}

pub fn build_grid(cfg: &ScenarioConfig, symbol: &dyn Symbol) -> Result<FrequencyGrid> {
    FrequencyGrid::build(&cfg.grid, symbol.space_dim())
}

fn data_spec(cfg: &ScenarioConfig, m: usize) -> DataSpec {
    cfg.data
        .clone()
        .unwrap_or_else(|| DataSpec::default_bump(m))
}

/// Verdicts of one direction.
#[derive(Clone, Debug, Serialize)]
pub struct DirectionVerdicts {
    pub omega: Direction,
    pub class_minus: Stability,
    pub class_plus: Stability,
    pub verdicts: Vec<StabilityVerdict>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifyReport {
    pub schema_version: u32,
    pub name: String,
    pub t_max: f64,
    pub directions: Vec<DirectionVerdicts>,
}

impl ClassifyReport {
    /// Worst class over all directions at `sign`.
    pub fn class(&self, sign: Sign) -> Stability {
        let classes: Vec<Stability> = self
            .directions
            .iter()
            .map(|d| match sign {
                Sign::Minus => d.class_minus,
                Sign::Plus => d.class_plus,
            })
            .collect();
        aggregate(&classes)
    }
}

fn aggregate(classes: &[Stability]) -> Stability {
    if classes.iter().all(|c| *c == Stability::RStable) {
        Stability::RStable
    } else if classes.contains(&Stability::NotRStable) {
        Stability::NotRStable
    } else {
        Stability::Inconclusive
    }
}

/// Symbol → roots → `ψ` only; no amplitude evolution.
pub fn run_classify(cfg: &ScenarioConfig) -> Result<ClassifyReport> {
    let symbol = build_symbol(cfg)?;
    let grid = build_grid(cfg, symbol.as_ref())?;
    let settings = cfg.settings();
    let mut directions: Vec<DirectionVerdicts> = Vec::new();
    for omega in &grid.directions {
        if symbol.even_in_direction() {
            if let Some(prev) = directions.iter().find(|d| d.omega == omega.reflected()) {
                let mut copy = prev.clone();
                copy.omega = omega.clone();
                directions.push(copy);
                continue;
            }
        }
        let dir = SpectralDirection::new(
            symbol.clone(),
            omega.clone(),
            settings.t_max,
            settings.limit_tol,
        )?;
        let mut verdicts = Vec::new();
        let mut classes = [Stability::RStable; 2];
        for (k, sign) in Sign::BOTH.into_iter().enumerate() {
            let v = stability_indicator(&dir, sign, settings.t_max, &settings.stability)?;
            classes[k] = aggregate(&v.iter().map(|x| x.class).collect::<Vec<_>>());
            verdicts.extend(v);
        }
        directions.push(DirectionVerdicts {
            omega: omega.clone(),
            class_minus: classes[0],
            class_plus: classes[1],
            verdicts,
        });
    }
    Ok(ClassifyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: cfg.name.clone(),
        t_max: settings.t_max,
        directions,
    })
}

/// A finished scattering run.
pub struct ScatterRun {
    pub lab: Lab,
    pub f_hat: GridValues,
    pub report: ScatteringReport,
}

/// Full pipeline: mode solutions, decay curves, plateau checks and, when
/// some end is R-stable, wave/scattering operators on a random ensemble.
pub fn run_scatter(cfg: &ScenarioConfig) -> Result<ScatterRun> {
    let symbol = build_symbol(cfg)?;
    let grid = build_grid(cfg, symbol.as_ref())?;
    let settings = cfg.settings();
    let m = symbol.dim();
    let data = data_spec(cfg, m);
    data.validate(m)?;
    let lab = Lab::build(symbol, grid, settings, &cfg.time.checkpoints, true)?;
    let f_hat = lab.sample(&data)?;
    let mut rng = ensemble_rng(cfg.ensemble.seed);
    let ensemble: Vec<GridValues> = (0..cfg.ensemble.samples)
        .map(|_| lab.sample(&DataSpec::random_bump(&mut rng, m, data.support())))
        .collect::<Result<_>>()?;
    info!(
        "{}: {} modes solved, assembling report",
        cfg.name,
        lab.grid.len()
    );
    let report = lab.report(&cfg.name, &f_hat, &cfg.time.branches, &ensemble)?;
    Ok(ScatterRun { lab, f_hat, report })
}

/// One row of a sweep aggregate.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: serde_json::Value,
    pub class_minus: Stability,
    pub class_plus: Stability,
    /// Outcome of the `+` branch for full runs.
    pub outcome: Option<Outcome>,
    /// Relative distance at the last checkpoint (decay) or measured over
    /// predicted plateau (non-R-stable), for full runs.
    pub metric: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub name: String,
    pub path: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Number of changes of the `+` class between consecutive values.
    pub fn flips(&self) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[0].class_plus != w[1].class_plus)
            .count()
    }
}

/// One sub-run per value of the parameter at JSON pointer `path`. With
/// `full` each sub-run is a scattering run, otherwise a classification.
pub fn run_sweep(
    cfg: &ScenarioConfig,
    path: &str,
    values: &[serde_json::Value],
    full: bool,
) -> Result<SweepReport> {
    // resolve the path once even when there is nothing to sweep
    cfg.with_override(
        path,
        serde_json::to_value(cfg)?
            .pointer(path)
            .cloned()
            .unwrap_or_default(),
    )?;
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let sub = cfg.with_override(path, v.clone())?;
        info!("sweep {path} = {v}");
        let row = if full {
            let run = run_scatter(&sub)?;
            let plus = run.report.curves.iter().find(|c| c.sign == Sign::Plus);
            let outcome = plus.map(|c| run.lab.outcome(c));
            let metric = plus.map(sweep_metric);
            let summaries = &run.report.directions;
            SweepRow {
                value: v.clone(),
                class_minus: aggregate(
                    &summaries.iter().map(|d| d.class_minus).collect::<Vec<_>>(),
                ),
                class_plus: aggregate(&summaries.iter().map(|d| d.class_plus).collect::<Vec<_>>()),
                outcome,
                metric,
            }
        } else {
            let rep = run_classify(&sub)?;
            SweepRow {
                value: v.clone(),
                class_minus: rep.class(Sign::Minus),
                class_plus: rep.class(Sign::Plus),
                outcome: None,
                metric: None,
            }
        };
        rows.push(row);
    }
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: cfg.name.clone(),
        path: path.to_string(),
        rows,
    })
}

fn sweep_metric(c: &Curve) -> f64 {
    let last = c.points.last().map(|p| p.distance).unwrap_or(f64::NAN);
    match c.plateau {
        Some(p) => last / p,
        None => {
            // last checkpoint before T_max when there is one
            let idx = c.points.len().saturating_sub(2);
            c.points.get(idx).map(|p| p.distance).unwrap_or(last) / c.norm_initial
        }
    }
}

/// Roots `φ_j(t, ω)` on a uniform time grid along the first grid direction.
pub fn dump_roots(cfg: &ScenarioConfig, samples: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let symbol = build_symbol(cfg)?;
    let grid = build_grid(cfg, symbol.as_ref())?;
    let settings = cfg.settings();
    let dir = SpectralDirection::new(
        symbol,
        grid.directions[0].clone(),
        settings.t_max,
        settings.limit_tol,
    )?;
    let n = samples.max(2);
    (0..n)
        .map(|k| {
            let t = -settings.t_max + 2.0 * settings.t_max * k as f64 / (n - 1) as f64;
            Ok((t, dir.roots(t)?))
        })
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// `t, distance, norm_U, norm_V, bound`.
pub fn write_curve_csv(curve: &Curve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "distance", "norm_U", "norm_V", "bound"])?;
    for p in &curve.points {
        w.write_record([
            p.t.to_string(),
            p.distance.to_string(),
            p.norm_u.to_string(),
            p.norm_v.to_string(),
            p.bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `omega, sign, j, class, model, psi_at_t_max, last_increment`.
pub fn write_verdicts_csv(report: &ClassifyReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "omega",
        "sign",
        "j",
        "class",
        "model",
        "psi_at_t_max",
        "last_increment",
    ])?;
    for d in &report.directions {
        let omega = d
            .omega
            .as_slice()
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        for v in &d.verdicts {
            w.write_record([
                omega.clone(),
                v.sign.to_string(),
                v.j.to_string(),
                format!("{:?}", v.class),
                v.model.name().to_string(),
                v.psi.last().copied().unwrap_or(0.0).to_string(),
                v.last_increment.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `value, class_minus, class_plus, outcome, metric`.
pub fn write_sweep_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["value", "class_minus", "class_plus", "outcome", "metric"])?;
    for r in &report.rows {
        w.write_record([
            r.value.to_string(),
            format!("{:?}", r.class_minus),
            format!("{:?}", r.class_plus),
            r.outcome.map(|o| format!("{o:?}")).unwrap_or_default(),
            r.metric.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, phi_0, …, phi_{m−1}`.
pub fn write_roots_csv(rows: &[(f64, Vec<f64>)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = rows.first().map(|r| r.1.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((0..m).map(|j| format!("phi_{j}")));
    w.write_record(&header)?;
    for (t, roots) in rows {
        let mut rec = vec![t.to_string()];
        rec.extend(roots.iter().map(|r| r.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// `report.json` plus `curve_minus.csv` / `curve_plus.csv` in `dir`.
pub fn write_scatter_outputs(report: &ScatteringReport, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_json(
        &Versioned {
            schema_version: REPORT_SCHEMA_VERSION,
            body: report,
        },
        &dir.join("report.json"),
    )?;
    for c in &report.curves {
        let name = match c.sign {
            Sign::Minus => "curve_minus.csv",
            Sign::Plus => "curve_plus.csv",
        };
        write_curve_csv(c, &dir.join(name))?;
    }
    Ok(())
}

pub fn write_classify_outputs(report: &ClassifyReport, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_json(report, &dir.join("verdicts.json"))?;
    write_verdicts_csv(report, &dir.join("verdicts.csv"))
}

pub fn write_sweep_outputs(report: &SweepReport, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_json(report, &dir.join("sweep.json"))?;
    write_sweep_csv(report, &dir.join("sweep.csv"))
}

/// Sizes the global worker pool; must run before any parallel work.
pub fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| LabError::Config(format!("--threads {n}: {e}")))
}

/// Parses a comma-separated list of JSON values (`0.5,1,"x"`).
pub fn parse_values(text: &str) -> Result<Vec<serde_json::Value>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            serde_json::from_str(s.trim())
                .map_err(|e| LabError::Config(format!("sweep value '{}': {e}", s.trim())))
        })
        .collect()
}
