//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fbs_hinf::cstr::{self, OperatingPoint};
use fbs_hinf::fbs::FuzzyBilinearModel;
use fbs_hinf::scenario::{BilinearInput, ScenarioSchedule, Setpoint, DEFAULT_BAND, DEFAULT_STEP};
use fbs_hinf::sim::DisturbanceSpec;
use fbs_hinf::synth::{Epsilon, SynthesisConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, CliResult};
use crate::output::read_text;

pub const DEFAULT_GAMMA: f64 = cstr::GAMMA;
pub const DEFAULT_BETA: f64 = cstr::BETA;
pub const DEFAULT_EPSILON: f64 = cstr::EPSILON;
pub const DEFAULT_HORIZON: f64 = 1.0;

/// A fixed Φ or a search for the largest feasible one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhiSetting {
    Value(f64),
    Auto,
}

impl FromStr for PhiSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(PhiSetting::Auto);
        }
        s.parse::<f64>()
            .map(PhiSetting::Value)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

impl fmt::Display for PhiSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiSetting::Value(v) => write!(f, "{v}"),
            PhiSetting::Auto => f.write_str("auto"),
        }
    }
}

impl Serialize for PhiSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PhiSetting::Value(v) => s.serialize_f64(*v),
            PhiSetting::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for PhiSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(PhiSetting::Value(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PlantChoice {
    Fbs,
    Nonlinear,
    Both,
}

/// Disturbance by name (`reference`, `zero`) or inline spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisturbanceChoice {
    Named(String),
    Spec(DisturbanceSpec),
}

/// Everything a run needs. Every field is optional; unset fields fall back
/// to flags, then to the documented defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bench: Option<String>,
    pub model: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<Epsilon>,
    pub phi: Option<PhiSetting>,
    pub common_lyapunov: Option<bool>,
    pub x0: Option<Vec<Vec<f64>>>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub disturbance: Option<DisturbanceChoice>,
    pub setpoint: Option<OperatingPoint>,
    pub schedule: Option<Vec<Setpoint>>,
    pub plant: Option<PlantChoice>,
    pub bilinear: Option<BilinearInput>,
    pub band_fraction: Option<f64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path, "config file")?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage("invalid-config", format!("{}: {e}", path.display())))
    }

    /// Values set in `over` win.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            bench, model, gamma, beta, epsilon, phi, common_lyapunov, x0, horizon, step, disturbance, setpoint,
            schedule, plant, bilinear, band_fraction, out, jobs
        )
    }

    pub fn load_model(&self) -> CliResult<(String, FuzzyBilinearModel)> {
        match (&self.bench, &self.model) {
            (Some(_), Some(_)) => Err(CliError::usage("usage", "--bench and --model are mutually exclusive")),
            (_, Some(path)) => {
                let text = read_text(path, "model file")?;
                let model = FuzzyBilinearModel::from_json(&text)
                    .map_err(|e| CliError::usage("invalid-model", format!("{}: {e}", path.display())))?;
                Ok((path.display().to_string(), model))
            }
            (Some(name), None) if name == "cstr" => Ok(("cstr".into(), cstr::build_model())),
            (Some(name), None) => Err(CliError::usage("usage", format!("unknown benchmark {name:?} (known: cstr)"))),
            (None, None) => Ok(("cstr".into(), cstr::build_model())),
        }
    }

    pub fn phi(&self) -> PhiSetting {
        self.phi.unwrap_or(PhiSetting::Value(0.0))
    }

    /// Synthesis scalars; with `phi = auto` the returned Φ is 0, the search start.
    pub fn synthesis(&self, model: &FuzzyBilinearModel) -> CliResult<SynthesisConfig> {
        let phi = match self.phi() {
            PhiSetting::Value(v) => v,
            PhiSetting::Auto => 0.0,
        };
        let mut cfg = SynthesisConfig::new(
            self.gamma.unwrap_or(DEFAULT_GAMMA),
            self.beta.unwrap_or(DEFAULT_BETA),
            DEFAULT_EPSILON,
            phi,
        )
        .with_common_lyapunov(self.common_lyapunov.unwrap_or(false));
        if let Some(e) = &self.epsilon {
            cfg.epsilon = e.clone();
        }
        cfg.validate(model)
            .map_err(|e| CliError::usage("invalid-config", e.to_string()))?;
        Ok(cfg)
    }

    pub fn disturbance(&self, model: &FuzzyBilinearModel, bench: bool) -> CliResult<DisturbanceSpec> {
        let spec = match &self.disturbance {
            None if bench => cstr::disturbance(),
            None => DisturbanceSpec::Zero {
                m: model.disturbance_dim(),
            },
            Some(DisturbanceChoice::Spec(s)) => s.clone(),
            Some(DisturbanceChoice::Named(n)) => match n.as_str() {
                "reference" if bench => cstr::disturbance(),
                "zero" => DisturbanceSpec::Zero {
                    m: model.disturbance_dim(),
                },
                other => {
                    return Err(CliError::usage(
                        "invalid-config",
                        format!("unknown disturbance {other:?} (reference, zero or a JSON spec)"),
                    ))
                }
            },
        };
        spec.validate()
            .map_err(|e| CliError::usage("invalid-config", e.to_string()))?;
        if spec.dim() != model.disturbance_dim() {
            return Err(CliError::usage(
                "invalid-config",
                format!("disturbance has {} channels, model expects {}", spec.dim(), model.disturbance_dim()),
            ));
        }
        Ok(spec)
    }

    pub fn schedule(&self, model: &FuzzyBilinearModel, horizon: f64) -> CliResult<ScenarioSchedule> {
        let schedule = ScenarioSchedule {
            initial: self
                .setpoint
                .clone()
                .unwrap_or_else(|| OperatingPoint::origin(model.state_dim())),
            switches: self.schedule.clone().unwrap_or_default(),
        };
        schedule
            .validate(model.state_dim(), horizon)
            .map_err(|e| CliError::usage("invalid-config", e.to_string()))?;
        Ok(schedule)
    }

    pub fn initial_states(&self, model: &FuzzyBilinearModel, bench: bool) -> CliResult<Vec<Vec<f64>>> {
        let x0 = match &self.x0 {
            Some(list) if !list.is_empty() => list.clone(),
            _ if bench => vec![cstr::INITIAL_CONDITIONS[0].to_vec()],
            _ => return Err(CliError::usage("usage", "--x0 is required outside the reactor benchmark")),
        };
        if let Some(bad) = x0.iter().find(|x| x.len() != model.state_dim()) {
            return Err(CliError::usage(
                "invalid-config",
                format!("initial state {bad:?} has {} entries, model has {} states", bad.len(), model.state_dim()),
            ));
        }
        Ok(x0)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(DEFAULT_HORIZON)
    }

    pub fn step(&self) -> f64 {
        self.step.unwrap_or(DEFAULT_STEP)
    }

    pub fn band(&self) -> f64 {
        self.band_fraction.unwrap_or(DEFAULT_BAND)
    }
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?} in {s:?}")))
        .collect()
}

/// `x1,...,xn:u`.
pub fn parse_point(s: &str) -> Result<OperatingPoint, String> {
    let (x, u) = s.split_once(':').ok_or_else(|| format!("expected x1,...,xn:u, got {s:?}"))?;
    let u = u.trim().parse::<f64>().map_err(|_| format!("bad input value in {s:?}"))?;
    Ok(OperatingPoint::new(parse_vector(x)?, u))
}

/// A JSON file with a list of switches, or inline `t@x1,...,xn:u;...`.
pub fn parse_schedule(s: &str) -> Result<Vec<Setpoint>, String> {
    let path = Path::new(s);
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {s}: {e}"))?;
        return serde_json::from_str(&text).map_err(|e| format!("{s}: {e}"));
    }
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let (t, point) = part
                .split_once('@')
                .ok_or_else(|| format!("expected t@x1,...,xn:u, got {part:?}"))?;
            let time = t.trim().parse::<f64>().map_err(|_| format!("bad switch time in {part:?}"))?;
            Ok(Setpoint {
                time,
                point: parse_point(point)?,
            })
        })
        .collect()
}

/// `reference`, `zero`, a JSON file, or inline JSON.
pub fn parse_disturbance(s: &str) -> Result<DisturbanceChoice, String> {
    if s == "reference" || s == "zero" {
        return Ok(DisturbanceChoice::Named(s.to_string()));
    }
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| format!("cannot read {s}: {e}"))?
    };
    serde_json::from_str::<DisturbanceSpec>(&text)
        .map(DisturbanceChoice::Spec)
        .map_err(|e| format!("{s}: {e}"))
}
