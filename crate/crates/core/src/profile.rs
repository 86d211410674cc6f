//! Scalar time profiles `t ↦ p(t)` that drive symbol coefficients.
//!
//! Each profile kind implements [`Profile`] and is registered by name in a
//! [`ProfileRegistry`]; scenario files select kinds with the `"kind"` key and
//! pass the remaining keys as parameters.

use std::collections::BTreeMap;
use std::f64::consts::E;
use std::fmt::Debug;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::Sign;

pub trait Profile: Debug + Send + Sync {
    fn kind(&self) -> &'static str;

    fn value(&self, t: f64) -> f64;

    /// Time derivative. The default is a central difference with step
    /// `1e-5·(1+|t|)`.
    fn derivative(&self, t: f64) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        (self.value(t + h) - self.value(t - h)) / (2.0 * h)
    }

    /// Limit as `t → ±∞`, when known in closed form.
    fn limit(&self, sign: Sign) -> Option<f64>;
}

/// Serialized form of a profile: `{"kind": "...", <params>}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl ProfileSpec {
    pub fn new(kind: &str, params: serde_json::Value) -> Self {
        let params = match params {
            serde_json::Value::Object(map) => map,
            _ => serde_json::Map::new(),
        };
        ProfileSpec {
            kind: kind.to_string(),
            params,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new("constant", serde_json::json!({ "value": value }))
    }
}

#[derive(Clone, Debug)]
pub struct Constant {
    pub value: f64,
}

impl Profile for Constant {
    fn kind(&self) -> &'static str {
        "constant"
    }
    fn value(&self, _t: f64) -> f64 {
        self.value
    }
    fn derivative(&self, _t: f64) -> f64 {
        0.0
    }
    fn limit(&self, _sign: Sign) -> Option<f64> {
        Some(self.value)
    }
}

/// `c_inf + amplitude / (1 + t²)`.
#[derive(Clone, Debug, Deserialize)]
pub struct RationalDecay {
    pub c_inf: f64,
    pub amplitude: f64,
}

impl Profile for RationalDecay {
    fn kind(&self) -> &'static str {
        "rational_decay"
    }
    fn value(&self, t: f64) -> f64 {
        self.c_inf + self.amplitude / (1.0 + t * t)
    }
    fn derivative(&self, t: f64) -> f64 {
        let q = 1.0 + t * t;
        -2.0 * self.amplitude * t / (q * q)
    }
    fn limit(&self, _sign: Sign) -> Option<f64> {
        Some(self.c_inf)
    }
}

/// `c_inf + amplitude / (e + |t|)`; the difference to the limit is not
/// integrable.
#[derive(Clone, Debug, Deserialize)]
pub struct LogDecay {
    pub c_inf: f64,
    pub amplitude: f64,
}

impl Profile for LogDecay {
    fn kind(&self) -> &'static str {
        "log_decay"
    }
    fn value(&self, t: f64) -> f64 {
        self.c_inf + self.amplitude / (E + t.abs())
    }
    fn derivative(&self, t: f64) -> f64 {
        // one-sided derivatives differ at t = 0; report their mean there
        let q = E + t.abs();
        -self.amplitude * sign0(t) / (q * q)
    }
    fn limit(&self, _sign: Sign) -> Option<f64> {
        Some(self.c_inf)
    }
}

/// `c_inf + amplitude / (1 + |t|)^p`.
#[derive(Clone, Debug, Deserialize)]
pub struct PowerDecay {
    pub c_inf: f64,
    pub amplitude: f64,
    pub p: f64,
}

impl Profile for PowerDecay {
    fn kind(&self) -> &'static str {
        "power_decay"
    }
    fn value(&self, t: f64) -> f64 {
        self.c_inf + self.amplitude * (1.0 + t.abs()).powf(-self.p)
    }
    fn derivative(&self, t: f64) -> f64 {
        -self.amplitude * self.p * sign0(t) * (1.0 + t.abs()).powf(-self.p - 1.0)
    }
    fn limit(&self, _sign: Sign) -> Option<f64> {
        (self.p > 0.0).then_some(self.c_inf)
    }
}

/// `mid + (jump/2)·tanh(t/scale)`: different limits at the two ends.
#[derive(Clone, Debug, Deserialize)]
pub struct TanhStep {
    pub mid: f64,
    pub jump: f64,
    pub scale: f64,
}

impl Profile for TanhStep {
    fn kind(&self) -> &'static str {
        "tanh_step"
    }
    fn value(&self, t: f64) -> f64 {
        self.mid + 0.5 * self.jump * (t / self.scale).tanh()
    }
    fn derivative(&self, t: f64) -> f64 {
        let s = 1.0 / (t / self.scale).cosh();
        0.5 * self.jump * s * s / self.scale
    }
    fn limit(&self, sign: Sign) -> Option<f64> {
        Some(self.mid + 0.5 * self.jump * sign.as_f64())
    }
}

/// Sampled profile with monotone cubic (Fritsch–Carlson) interpolation;
/// constant extrapolation outside the table.
#[derive(Clone, Debug)]
pub struct Tabulated {
    times: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Deserialize)]
struct TabulatedParams {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Tabulated {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(LabError::Config(
                "tabulated profile needs at least two (time, value) pairs of equal length".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::Config(
                "tabulated profile times must be strictly increasing".into(),
            ));
        }
        let slopes = monotone_slopes(&times, &values);
        Ok(Tabulated {
            times,
            values,
            slopes,
        })
    }

    fn locate(&self, t: f64) -> Option<usize> {
        let n = self.times.len();
        if t <= self.times[0] || t >= self.times[n - 1] {
            return None;
        }
        Some(self.times.partition_point(|&x| x <= t) - 1)
    }
}

fn monotone_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let secants: Vec<f64> = (0..n - 1)
        .map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for k in 1..n - 1 {
        m[k] = if secants[k - 1] * secants[k] <= 0.0 {
            0.0
        } else {
            0.5 * (secants[k - 1] + secants[k])
        };
    }
    for k in 0..n - 1 {
        if secants[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / secants[k];
        let b = m[k + 1] / secants[k];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[k] = tau * a * secants[k];
            m[k + 1] = tau * b * secants[k];
        }
    }
    m
}

impl Profile for Tabulated {
    fn kind(&self) -> &'static str {
        "tabulated"
    }
    fn value(&self, t: f64) -> f64 {
        let n = self.times.len();
        match self.locate(t) {
            None if t <= self.times[0] => self.values[0],
            None => self.values[n - 1],
            Some(k) => {
                let h = self.times[k + 1] - self.times[k];
                let s = (t - self.times[k]) / h;
                let (h00, h10, h01, h11) = hermite_basis(s);
                h00 * self.values[k]
                    + h10 * h * self.slopes[k]
                    + h01 * self.values[k + 1]
                    + h11 * h * self.slopes[k + 1]
            }
        }
    }
    fn derivative(&self, t: f64) -> f64 {
        match self.locate(t) {
            None => 0.0,
            Some(k) => {
                let h = self.times[k + 1] - self.times[k];
                let s = (t - self.times[k]) / h;
                let d00 = 6.0 * s * s - 6.0 * s;
                let d10 = 3.0 * s * s - 4.0 * s + 1.0;
                let d01 = -d00;
                let d11 = 3.0 * s * s - 2.0 * s;
                (d00 * self.values[k] + d01 * self.values[k + 1]) / h
                    + d10 * self.slopes[k]
                    + d11 * self.slopes[k + 1]
            }
        }
    }
    fn limit(&self, sign: Sign) -> Option<f64> {
        match sign {
            Sign::Minus => self.values.first().copied(),
            Sign::Plus => self.values.last().copied(),
        }
    }
}

pub(crate) fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

fn sign0(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

type ProfileCtor = fn(&serde_json::Map<String, serde_json::Value>) -> Result<Arc<dyn Profile>>;

/// Name → constructor table for profile kinds.
pub struct ProfileRegistry {
    ctors: BTreeMap<&'static str, ProfileCtor>,
}

fn params<T: DeserializeOwned>(
    kind: &str,
    map: &serde_json::Map<String, serde_json::Value>,
) -> Result<T> {
    serde_json::from_value(serde_json::Value::Object(map.clone()))
        .map_err(|e| LabError::Config(format!("profile '{kind}': {e}")))
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        ProfileRegistry {
            ctors: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("constant", |p| {
            #[derive(Deserialize)]
            struct P {
                value: f64,
            }
            let p: P = params("constant", p)?;
            Ok(Arc::new(Constant { value: p.value }))
        });
        reg.register("rational_decay", |p| {
            Ok(Arc::new(params::<RationalDecay>("rational_decay", p)?))
        });
        reg.register("log_decay", |p| {
            Ok(Arc::new(params::<LogDecay>("log_decay", p)?))
        });
        reg.register("power_decay", |p| {
            let prof: PowerDecay = params("power_decay", p)?;
            if prof.p <= 0.0 {
                return Err(LabError::Config(format!(
                    "profile 'power_decay': exponent p must be positive, got {}",
                    prof.p
                )));
            }
            Ok(Arc::new(prof))
        });
        reg.register("tanh_step", |p| {
            let prof: TanhStep = params("tanh_step", p)?;
            if prof.scale <= 0.0 {
                return Err(LabError::Config(
                    "profile 'tanh_step': scale must be positive".into(),
                ));
            }
            Ok(Arc::new(prof))
        });
        reg.register("tabulated", |p| {
            let raw: TabulatedParams = params("tabulated", p)?;
            Ok(Arc::new(Tabulated::new(raw.times, raw.values)?))
        });
        reg
    }

    pub fn register(&mut self, kind: &'static str, ctor: ProfileCtor) {
        self.ctors.insert(kind, ctor);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.ctors.keys().copied()
    }

    pub fn build(&self, spec: &ProfileSpec) -> Result<Arc<dyn Profile>> {
        let ctor = self.ctors.get(spec.kind.as_str()).ok_or_else(|| {
            LabError::Config(format!(
                "unknown profile kind '{}' (known: {})",
                spec.kind,
                self.kinds().collect::<Vec<_>>().join(", ")
            ))
        })?;
        ctor(&spec.params)
    }
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
