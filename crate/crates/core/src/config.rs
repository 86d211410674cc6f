//! Scenario configuration files (JSON) and the bundled scenarios.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::integrator::{AmplitudeOptions, StabilityOptions};
use crate::lab::LabSettings;
use crate::modes::{DataSpec, GridSpec};
use crate::symbol::SymbolSpec;
use crate::Sign;

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: [(&str, &str); 4] = [
    ("constant", include_str!("scenarios/constant.json")),
    ("stable_wave", include_str!("scenarios/stable_wave.json")),
    (
        "unstable_wave",
        include_str!("scenarios/unstable_wave.json"),
    ),
    ("coupled_wave", include_str!("scenarios/coupled_wave.json")),
];

fn both_branches() -> Vec<Sign> {
    vec![Sign::Minus, Sign::Plus]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_max: f64,
    /// Positive times at which decay curves are sampled (mirrored for `−`).
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default = "both_branches")]
    pub branches: Vec<Sign>,
}

/// Tolerance overrides; anything omitted keeps its default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tail_tol: f64,
    pub limit_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    pub tableau: String,
    pub step_factor: f64,
    pub table_step: f64,
    pub stable_tol: f64,
    pub levels: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let s = LabSettings::default();
        Tolerances {
            tail_tol: s.tail_tol,
            limit_tol: s.limit_tol,
            rtol: s.amplitude.rtol,
            atol: s.amplitude.atol,
            tableau: s.amplitude.tableau,
            step_factor: s.amplitude.step_factor,
            table_step: s.table_step,
            stable_tol: s.stability.stable_tol,
            levels: s.stability.levels,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSpec {
    /// Random data samples for the operator checks; 0 disables them.
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub symbol: SymbolSpec,
    #[serde(default)]
    pub grid: GridSpec,
    /// Defaults to a bump centred at 2 on the annulus `[0.5, 3.5]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    pub time: TimeSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioConfig {
    /// Parses and validates; errors carry line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
            .map_err(|e| LabError::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let text = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                LabError::Config(format!(
                    "unknown scenario '{name}' (bundled: {})",
                    bundled_names().collect::<Vec<_>>().join(", ")
                ))
            })?;
        Self::from_json_str(text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(LabError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let t = &self.time;
        if !(t.t_max > 0.0) || !t.t_max.is_finite() {
            return Err(LabError::Config(format!(
                "time.t_max must be positive, got {}",
                t.t_max
            )));
        }
        if let Some(c) = t.checkpoints.iter().find(|c| !(**c > 0.0) || **c > t.t_max) {
            return Err(LabError::Config(format!(
                "checkpoint {c} must lie in (0, t_max = {}]",
                t.t_max
            )));
        }
        let tol = &self.tolerances;
        for (name, v) in [
            ("tail_tol", tol.tail_tol),
            ("limit_tol", tol.limit_tol),
            ("rtol", tol.rtol),
            ("atol", tol.atol),
            ("step_factor", tol.step_factor),
            ("table_step", tol.table_step),
            ("stable_tol", tol.stable_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(LabError::Config(format!(
                    "tolerances.{name} must be positive, got {v}"
                )));
            }
        }
        if tol.levels < 5 {
            return Err(LabError::Config(
                "tolerances.levels must be at least 5".into(),
            ));
        }
        match &self.grid.radial {
            crate::modes::RadialSpec::Linear { min, .. }
            | crate::modes::RadialSpec::Log { min, .. } => {
                if !(*min > 0.0) {
                    return Err(LabError::Config(
                        "grid radii must be positive (r_min > 0)".into(),
                    ));
                }
            }
            crate::modes::RadialSpec::Explicit { radii } => {
                if radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(LabError::Config(
                        "grid radii must be positive (r_min > 0)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> LabSettings {
        let tol = &self.tolerances;
        LabSettings {
            t_max: self.time.t_max,
            tail_tol: tol.tail_tol,
            limit_tol: tol.limit_tol,
            table_step: tol.table_step,
            amplitude: AmplitudeOptions {
                rtol: tol.rtol,
                atol: tol.atol,
                tableau: tol.tableau.clone(),
                step_factor: tol.step_factor,
            },
            stability: StabilityOptions {
                levels: tol.levels,
                stable_tol: tol.stable_tol,
            },
        }
    }

    /// Replaces `t_max`, dropping checkpoints beyond it.
    pub fn with_t_max(mut self, t_max: f64) -> Result<Self> {
        self.time.t_max = t_max;
        self.time.checkpoints.retain(|c| *c <= t_max);
        self.validate()?;
        Ok(self)
    }

    /// Copy with the value at JSON pointer `path` (e.g. `/symbol/c/p`)
    /// replaced.
    pub fn with_override(&self, path: &str, value: serde_json::Value) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let slot = doc
            .pointer_mut(path)
            .ok_or_else(|| LabError::Config(format!("parameter path '{path}' does not resolve")))?;
        *slot = value;
        let cfg: ScenarioConfig = serde_json::from_value(doc)
            .map_err(|e| LabError::Config(format!("after setting '{path}': {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn strip_prefix(e: &LabError) -> String {
    match e {
        LabError::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_round_trip() {
        for name in bundled_names() {
            let cfg = ScenarioConfig::bundled(name).unwrap();
            assert_eq!(cfg.name, name);
            let text = cfg.to_json_pretty().unwrap();
            let again = ScenarioConfig::from_json_str(&text).unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = r#"{
  "schema_version": 1,
  "name": "x",
  "symbol": {"family": "wave2", "c": {"kind": "constant", "value": 2}},
  "time": {"t_max": 10, "checkpointz": [1]}
}"#;
        let err = ScenarioConfig::from_json_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("checkpointz") && msg.contains("line 5"),
            "{msg}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn checkpoints_beyond_horizon_are_rejected() {
        let mut cfg = ScenarioConfig::bundled("constant").unwrap();
        cfg.time.checkpoints.push(1e9);
        assert!(cfg.validate().is_err());
        let cut = cfg.clone().with_t_max(50.0).unwrap();
        assert!(cut.time.checkpoints.iter().all(|c| *c <= 50.0));
    }

    #[test]
    fn overrides_follow_json_pointers() {
        let cfg = ScenarioConfig::bundled("stable_wave").unwrap();
        let p = cfg
            .with_override("/symbol/c/amplitude", serde_json::json!(0.5))
            .unwrap();
        assert_eq!(p.symbol.params["c"]["amplitude"], serde_json::json!(0.5));
        assert!(cfg
            .with_override("/symbol/nope/x", serde_json::json!(1))
            .is_err());
    }
}
