//! Scenario configuration: TOML with a fixed set of sections, unknown keys rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Hrsma,
    Sdma,
    Isac,
    Ris,
    Bdris,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Hrsma => "hrsma",
            Suite::Sdma => "sdma",
            Suite::Isac => "isac",
            Suite::Ris => "ris",
            Suite::Bdris => "bdris",
        }
    }

    pub fn is_surface(self) -> bool {
        matches!(self, Suite::Ris | Suite::Bdris)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hrsma" => Ok(Suite::Hrsma),
            "sdma" => Ok(Suite::Sdma),
            "isac" => Ok(Suite::Isac),
            "ris" => Ok(Suite::Ris),
            "bdris" => Ok(Suite::Bdris),
            other => Err(format!("unknown suite `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Full,
    Desk,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(format!("unknown scale `{other}` (expected full or desk)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Circular,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteeringKind {
    Auto,
    Linear,
    Positional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Hrsma,
    Sdma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub antennas: usize,
    pub users: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    /// Surface elements `B`; ris/bdris only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<usize>,
    /// CSIT error samples `M` per realization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_variance: Option<f64>,
    /// SNR grid in dB (`P_t = 10^(SNR/10)`, unit noise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    /// Transmit power grid in dBm; ris/bdris only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<Vec<f64>>,
    /// Receiver noise in dBm; ris/bdris only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dbm: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Group centre azimuths in radians; default evenly spaced over `[-π/2, π/2]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_azimuths: Option<Vec<f64>>,
    /// One-ring angular spread in radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<ArrayKind>,
    /// Element spacing in wavelengths for linear arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering: Option<SteeringKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosConfig {
    /// Common target for every user, bits/s/Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Per-user targets; overrides `threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsacConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<Access>,
    /// Radar target azimuths in radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisConfig {
    /// Weight of the unitarity penalty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Diagonal iterations before a bdris run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal_diagonal_penalty: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_loss_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_br: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_ru: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_br: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_ru: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Adam step for the precoder learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Adam step for the surface learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scattering_learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    /// Initial (global common, group common, private) power fractions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_split: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub suite: Suite,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qos: Option<QosConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isac: Option<IsacConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ris: Option<RisConfig>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub optimizer: OptimizerConfig,
}

fn one() -> usize {
    1
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

fn invalid(field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config { field: field.to_string(), reason: reason.into() }
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_SCATTERING_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_HIDDEN: usize = 400;
pub const DEFAULT_QOS_THRESHOLD: f64 = 0.25;
pub const DEFAULT_QOS_WEIGHT: f64 = 10.0;
pub const DEFAULT_NOISE_DBM: f64 = -80.0;

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let s = &self.system;
        let suite = self.suite;
        if s.antennas == 0 {
            return Err(invalid("system.antennas", "must be positive"));
        }
        if s.users == 0 {
            return Err(invalid("system.users", "must be positive"));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations", "must be positive"));
        }
        if suite.is_surface() {
            for (set, field) in [
                (s.groups.is_some(), "system.groups"),
                (s.samples.is_some(), "system.samples"),
                (s.error_variance.is_some(), "system.error_variance"),
                (s.snr_db.is_some(), "system.snr_db"),
                (self.geometry != GeometryConfig::default(), "geometry"),
                (self.qos.is_some(), "qos"),
                (self.isac.is_some(), "isac"),
                (self.optimizer.power_split.is_some(), "optimizer.power_split"),
            ] {
                if set {
                    return Err(invalid(field, format!("not used by the {suite} suite")));
                }
            }
            match s.elements {
                Some(0) => return Err(invalid("system.elements", "must be positive")),
                None => return Err(invalid("system.elements", format!("required by the {suite} suite"))),
                Some(_) => {}
            }
            let grid = s.power_dbm.as_ref().ok_or_else(|| invalid("system.power_dbm", "required"))?;
            check_grid("system.power_dbm", grid)?;
            if let Some(n) = s.noise_dbm {
                if !n.is_finite() {
                    return Err(invalid("system.noise_dbm", "must be finite"));
                }
            }
            if let Some(r) = &self.ris {
                if let Some(w) = r.weight {
                    if !(w >= 0.0 && w.is_finite()) {
                        return Err(invalid("ris.weight", "must be non-negative"));
                    }
                }
                if r.warm_iterations == Some(0) {
                    return Err(invalid("ris.warm_iterations", "must be positive"));
                }
                if suite == Suite::Ris && r.warm_iterations.is_some() {
                    return Err(invalid("ris.warm_iterations", "only used by the bdris suite"));
                }
                if suite == Suite::Bdris && r.literal_diagonal_penalty.is_some() {
                    return Err(invalid("ris.literal_diagonal_penalty", "only used by the ris suite"));
                }
                for (v, field) in [
                    (r.distance_br, "ris.distance_br"),
                    (r.distance_ru, "ris.distance_ru"),
                    (r.exponent_br, "ris.exponent_br"),
                    (r.exponent_ru, "ris.exponent_ru"),
                ] {
                    if let Some(v) = v {
                        if !(v > 0.0 && v.is_finite()) {
                            return Err(invalid(field, "must be positive"));
                        }
                    }
                }
            }
        } else {
            for (set, field) in [
                (s.elements.is_some(), "system.elements"),
                (s.power_dbm.is_some(), "system.power_dbm"),
                (s.noise_dbm.is_some(), "system.noise_dbm"),
                (self.ris.is_some(), "ris"),
                (self.optimizer.scattering_learning_rate.is_some(), "optimizer.scattering_learning_rate"),
            ] {
                if set {
                    return Err(invalid(field, format!("not used by the {suite} suite")));
                }
            }
            let groups = self.groups();
            if groups == 0 || groups > s.users {
                return Err(invalid("system.groups", format!("must lie in 1..={}", s.users)));
            }
            if s.samples == Some(0) {
                return Err(invalid("system.samples", "must be positive"));
            }
            if let Some(v) = s.error_variance {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid("system.error_variance", "must lie in [0, 1]"));
                }
            }
            let grid = s.snr_db.as_ref().ok_or_else(|| invalid("system.snr_db", "required"))?;
            check_grid("system.snr_db", grid)?;
            let g = &self.geometry;
            if let Some(az) = &g.group_azimuths {
                if az.len() != groups {
                    return Err(invalid("geometry.group_azimuths", format!("{} angles for {groups} groups", az.len())));
                }
                check_finite("geometry.group_azimuths", az)?;
            }
            if let Some(sp) = g.spread {
                if !(sp > 0.0 && sp.is_finite()) {
                    return Err(invalid("geometry.spread", "must be positive"));
                }
            }
            if let Some(d) = g.spacing {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(invalid("geometry.spacing", "must be positive"));
                }
            }
            if let Some(q) = g.quadrature_points {
                if q < 64 {
                    return Err(invalid("geometry.quadrature_points", "must be at least 64"));
                }
            }
            if suite == Suite::Isac {
                if self.qos.is_some() {
                    return Err(invalid("qos", "not used by the isac suite"));
                }
                let isac = self.isac.as_ref().ok_or_else(|| invalid("isac", "required by the isac suite"))?;
                let targets = isac.targets.as_ref().ok_or_else(|| invalid("isac.targets", "required"))?;
                check_grid("isac.targets", targets)?;
                let lambdas = isac.lambdas.as_ref().ok_or_else(|| invalid("isac.lambdas", "required"))?;
                check_grid("isac.lambdas", lambdas)?;
                if lambdas.iter().any(|&l| l < 0.0) {
                    return Err(invalid("isac.lambdas", "must be non-negative"));
                }
            } else {
                if self.isac.is_some() {
                    return Err(invalid("isac", format!("not used by the {suite} suite")));
                }
                if let Some(q) = &self.qos {
                    if let Some(t) = &q.thresholds {
                        if t.len() != s.users {
                            return Err(invalid("qos.thresholds", format!("{} values for {} users", t.len(), s.users)));
                        }
                        if t.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                            return Err(invalid("qos.thresholds", "must be non-negative"));
                        }
                    }
                    if let Some(v) = q.threshold {
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(invalid("qos.threshold", "must be non-negative"));
                        }
                    }
                    if let Some(w) = q.weight {
                        if !(w >= 0.0 && w.is_finite()) {
                            return Err(invalid("qos.weight", "must be non-negative"));
                        }
                    }
                }
            }
            if let Some(split) = self.optimizer.power_split {
                if split.iter().any(|&f| !(f >= 0.0)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid("optimizer.power_split", "fractions must be non-negative and sum to 1"));
                }
            }
        }
        let o = &self.optimizer;
        if o.iterations == Some(0) {
            return Err(invalid("optimizer.iterations", "must be positive"));
        }
        if o.hidden == Some(0) {
            return Err(invalid("optimizer.hidden", "must be positive"));
        }
        for (v, field) in
            [(o.learning_rate, "optimizer.learning_rate"), (o.scattering_learning_rate, "optimizer.scattering_learning_rate")]
        {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(field, "must be non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.system.groups.unwrap_or(1)
    }

    pub fn samples(&self) -> usize {
        self.system.samples.unwrap_or(1)
    }

    pub fn error_variance(&self) -> f64 {
        self.system.error_variance.unwrap_or(0.0)
    }

    pub fn iterations(&self) -> usize {
        self.optimizer.iterations.unwrap_or(match self.suite {
            Suite::Hrsma | Suite::Sdma | Suite::Isac => 7500,
            Suite::Ris | Suite::Bdris => 2500,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.optimizer.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE)
    }

    pub fn scattering_learning_rate(&self) -> f64 {
        self.optimizer.scattering_learning_rate.unwrap_or(DEFAULT_SCATTERING_LEARNING_RATE)
    }

    pub fn hidden(&self) -> usize {
        self.optimizer.hidden.unwrap_or(DEFAULT_HIDDEN)
    }

    pub fn power_split(&self) -> [f64; 3] {
        self.optimizer.power_split.unwrap_or([0.70, 0.25, 0.05])
    }

    pub fn group_azimuths(&self) -> Vec<f64> {
        if let Some(a) = &self.geometry.group_azimuths {
            return a.clone();
        }
        let g = self.groups();
        if g == 1 {
            return vec![0.0];
        }
        let half = std::f64::consts::FRAC_PI_2;
        (0..g).map(|i| -half + 2.0 * half * i as f64 / (g - 1) as f64).collect()
    }

    pub fn spread(&self) -> f64 {
        self.geometry.spread.unwrap_or(match self.suite {
            Suite::Isac => std::f64::consts::PI / 8.0,
            _ => std::f64::consts::PI / 36.0,
        })
    }

    pub fn quadrature_points(&self) -> usize {
        self.geometry.quadrature_points.unwrap_or(128)
    }

    /// `(thresholds, weight)` of the QoS penalty; ISAC runs carry none.
    pub fn qos(&self) -> Option<(Vec<f64>, f64)> {
        if self.suite == Suite::Isac || self.suite.is_surface() {
            return None;
        }
        let q = self.qos.clone().unwrap_or_default();
        let thresholds =
            q.thresholds.unwrap_or_else(|| vec![q.threshold.unwrap_or(DEFAULT_QOS_THRESHOLD); self.system.users]);
        Some((thresholds, q.weight.unwrap_or(DEFAULT_QOS_WEIGHT)))
    }

    pub fn isac_access(&self) -> Access {
        self.isac.as_ref().and_then(|i| i.access).unwrap_or(Access::Hrsma)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.isac.as_ref().and_then(|i| i.targets.clone()).unwrap_or_default()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.isac.as_ref().and_then(|i| i.lambdas.clone()).unwrap_or_default()
    }

    pub fn ris(&self) -> RisConfig {
        self.ris.clone().unwrap_or_default()
    }

    pub fn ris_weight(&self) -> f64 {
        self.ris().weight.unwrap_or(1.0)
    }

    pub fn warm_iterations(&self) -> usize {
        self.ris().warm_iterations.unwrap_or(1000)
    }

    pub fn noise_dbm(&self) -> f64 {
        self.system.noise_dbm.unwrap_or(DEFAULT_NOISE_DBM)
    }

    /// Sweep axis: SNR in dB, or transmit power in dBm for surface suites.
    pub fn grid(&self) -> Vec<f64> {
        if self.suite.is_surface() {
            self.system.power_dbm.clone().unwrap_or_default()
        } else {
            self.system.snr_db.clone().unwrap_or_default()
        }
    }

    /// Bundled preset sizes for a suite.
    pub fn preset(suite: Suite, scale: Scale) -> Self {
        let full = scale == Scale::Full;
        let mut system = SystemConfig {
            antennas: 0,
            users: 0,
            groups: None,
            elements: None,
            samples: None,
            error_variance: None,
            snr_db: None,
            power_dbm: None,
            noise_dbm: None,
        };
        let mut cfg = ScenarioConfig {
            suite,
            seed: 1,
            realizations: 1,
            output: None,
            system: system.clone(),
            geometry: GeometryConfig::default(),
            qos: None,
            isac: None,
            ris: None,
            optimizer: OptimizerConfig::default(),
        };
        match suite {
            Suite::Hrsma | Suite::Sdma => {
                system.antennas = if full { 100 } else { 16 };
                system.users = if full { 90 } else { 8 };
                system.groups = Some(if full { 9 } else { 2 });
                system.samples = Some(if full { 1000 } else { 64 });
                system.error_variance = Some(0.8);
                system.snr_db = Some(if full { vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0] } else { vec![25.0] });
                cfg.realizations = 15;
                cfg.qos = Some(QosConfig { threshold: Some(DEFAULT_QOS_THRESHOLD), thresholds: None, weight: Some(DEFAULT_QOS_WEIGHT) });
                cfg.optimizer.iterations = Some(if full { 7500 } else { 2500 });
            }
            Suite::Isac => {
                system.antennas = if full { 100 } else { 16 };
                system.users = if full { 40 } else { 4 };
                system.groups = Some(if full { 4 } else { 2 });
                system.samples = Some(if full { 1000 } else { 32 });
                system.error_variance = Some(0.8);
                system.snr_db = Some(vec![20.0]);
                cfg.realizations = if full { 15 } else { 20 };
                let lambdas = if full {
                    (0..=8).map(|i| 10f64.powf(-5.0 + 0.5 * i as f64)).collect()
                } else {
                    vec![1e-5, 1e-3, 1e-1]
                };
                let sixth = std::f64::consts::PI / 6.0;
                cfg.isac = Some(IsacConfig { access: None, targets: Some(vec![-sixth, sixth]), lambdas: Some(lambdas) });
                cfg.optimizer.iterations = Some(if full { 7500 } else { 1000 });
            }
            Suite::Ris | Suite::Bdris => {
                system.antennas = if full { 100 } else { 8 };
                system.users = if full { 40 } else { 4 };
                system.elements = Some(if full { 200 } else { 16 });
                system.power_dbm = Some(if full { vec![-20.0, -10.0, 0.0, 10.0, 20.0] } else { vec![-20.0, 0.0, 20.0] });
                cfg.realizations = if full { 50 } else { 20 };
                cfg.optimizer.iterations = Some(if full { 25000 } else { 1000 });
                if suite == Suite::Bdris {
                    cfg.ris = Some(RisConfig { warm_iterations: Some(1000), ..RisConfig::default() });
                }
            }
        }
        cfg.system = system;
        cfg
    }

    /// Replaces size fields with the preset for `scale`.
    pub fn rescaled(&self, scale: Scale) -> Self {
        let p = Self::preset(self.suite, scale);
        let mut out = self.clone();
        out.system.antennas = p.system.antennas;
        out.system.users = p.system.users;
        out.system.groups = p.system.groups;
        out.system.elements = p.system.elements;
        out.system.samples = p.system.samples;
        out.realizations = p.realizations;
        out.optimizer.iterations = p.optimizer.iterations;
        if out.geometry.group_azimuths.as_ref().is_some_and(|a| a.len() != out.groups()) {
            out.geometry.group_azimuths = None;
        }
        if let Some(q) = &mut out.qos {
            if q.thresholds.as_ref().is_some_and(|t| t.len() != out.system.users) {
                q.thresholds = None;
            }
        }
        out
    }
}

fn check_finite(field: &str, v: &[f64]) -> Result<(), HarnessError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(field, "values must be finite"));
    }
    Ok(())
}

fn check_grid(field: &str, v: &[f64]) -> Result<(), HarnessError> {
    if v.is_empty() {
        return Err(invalid(field, "must not be empty"));
    }
    check_finite(field, v)
}
