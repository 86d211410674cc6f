use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::cmat_from_pairs;
use crate::profile::{ProfileRegistry, ProfileSpec};

use super::families::{Companion, CompanionTerm, CoupledWave, Generic, GenericTerm, Wave2};
use super::Symbol;

/// Serialized symbol: `{"family": "...", <params>}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSpec {
    pub family: String,
    #[serde(flatten)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl SymbolSpec {
    pub fn new(family: &str, params: serde_json::Value) -> Self {
        let params = match params {
            serde_json::Value::Object(map) => map,
            _ => serde_json::Map::new(),
        };
        SymbolSpec {
            family: family.to_string(),
            params,
        }
    }

    /// `wave2` with the given speed profile in one space dimension.
    pub fn wave2(c: ProfileSpec) -> Self {
        Self::new("wave2", serde_json::json!({ "c": c }))
    }
}

type SymbolCtor =
    fn(&serde_json::Map<String, serde_json::Value>, &ProfileRegistry) -> Result<Arc<dyn Symbol>>;

/// Name → constructor table for symbol families.
pub struct SymbolRegistry {
    ctors: BTreeMap<&'static str, SymbolCtor>,
    profiles: ProfileRegistry,
}

fn params<T: DeserializeOwned>(
    family: &str,
    map: &serde_json::Map<String, serde_json::Value>,
) -> Result<T> {
    serde_json::from_value(serde_json::Value::Object(map.clone()))
        .map_err(|e| LabError::Config(format!("symbol family '{family}': {e}")))
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Wave2Params {
    c: ProfileSpec,
    #[serde(default = "one")]
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoupledParams {
    c1: ProfileSpec,
    c2: ProfileSpec,
    p1: Option<ProfileSpec>,
    p2: Option<ProfileSpec>,
    q1: Option<Vec<Vec<f64>>>,
    q2: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompanionTermParams {
    nu: Vec<u32>,
    j: usize,
    profile: ProfileSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompanionParams {
    m: usize,
    #[serde(default = "one")]
    n: usize,
    terms: Vec<CompanionTermParams>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenericTermParams {
    matrix: Vec<Vec<[f64; 2]>>,
    profile: Option<ProfileSpec>,
    axis: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenericParams {
    #[serde(default = "one")]
    n: usize,
    terms: Vec<GenericTermParams>,
}

fn identity_form(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

impl SymbolRegistry {
    pub fn empty(profiles: ProfileRegistry) -> Self {
        SymbolRegistry {
            ctors: BTreeMap::new(),
            profiles,
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty(ProfileRegistry::builtin());
        reg.register("wave2", |p, profiles| {
            let p: Wave2Params = params("wave2", p)?;
            if p.n == 0 {
                return Err(LabError::Config("wave2: n must be at least 1".into()));
            }
            Ok(Arc::new(Wave2 {
                c: profiles.build(&p.c)?,
                n: p.n,
            }))
        });
        reg.register("coupled_wave", |p, profiles| {
            let p: CoupledParams = params("coupled_wave", p)?;
            let zero = ProfileSpec::constant(0.0);
            Ok(Arc::new(CoupledWave::new(
                profiles.build(&p.c1)?,
                profiles.build(&p.c2)?,
                profiles.build(p.p1.as_ref().unwrap_or(&zero))?,
                profiles.build(p.p2.as_ref().unwrap_or(&zero))?,
                p.q1.unwrap_or_else(|| identity_form(p.n)),
                p.q2.unwrap_or_else(|| identity_form(p.n)),
            )?))
        });
        reg.register("companion", |p, profiles| {
            let p: CompanionParams = params("companion", p)?;
            let terms = p
                .terms
                .into_iter()
                .map(|t| {
                    Ok(CompanionTerm {
                        nu: t.nu,
                        j: t.j,
                        profile: profiles.build(&t.profile)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Arc::new(Companion::new(p.m, p.n, terms)?))
        });
        reg.register("generic", |p, profiles| {
            let p: GenericParams = params("generic", p)?;
            let terms = p
                .terms
                .into_iter()
                .map(|t| {
                    Ok(GenericTerm {
                        matrix: cmat_from_pairs(&t.matrix)?,
                        profile: t.profile.as_ref().map(|s| profiles.build(s)).transpose()?,
                        axis: t.axis,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Arc::new(Generic::new(p.n, terms)?))
        });
        reg
    }

    pub fn register(&mut self, family: &'static str, ctor: SymbolCtor) {
        self.ctors.insert(family, ctor);
    }

    pub fn families(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.ctors.keys().copied()
    }

    pub fn profiles(&self) -> &ProfileRegistry {
        &self.profiles
    }

    pub fn build(&self, spec: &SymbolSpec) -> Result<Arc<dyn Symbol>> {
        let ctor = self.ctors.get(spec.family.as_str()).ok_or_else(|| {
            LabError::Config(format!(
                "unknown symbol family '{}' (known: {})",
                spec.family,
                self.families().collect::<Vec<_>>().join(", ")
            ))
        })?;
        ctor(&spec.params, &self.profiles)
    }
}

impl Default for SymbolRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
