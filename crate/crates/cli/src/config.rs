//! Run configuration: a JSON document merged with command-line flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use fracstab_core::solver::Builtin;
use fracstab_core::verify::Tier;

/// Failure to read or decode the configuration; exit status 1.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

fn config_err(field: &str, message: impl ToString) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Regimes,
    ConstantA,
    Extend,
    SolveBranch,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Regimes => "regimes",
            Command::ConstantA => "constant-a",
            Command::Extend => "extend",
            Command::SolveBranch => "solve-branch",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Getoor,
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearityName {
    Exp,
    Power,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TierName {
    Fast,
    Full,
}

impl From<TierName> for Tier {
    fn from(t: TierName) -> Tier {
        match t {
            TierName::Fast => Tier::Fast,
            TierName::Full => Tier::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    pub name: NonlinearityName,
    #[serde(default)]
    pub p: Option<f64>,
}

impl NonlinearitySpec {
    pub fn builtin(&self) -> Result<Builtin, String> {
        match (self.name, self.p) {
            (NonlinearityName::Exp, _) => Ok(Builtin::Exp),
            (NonlinearityName::Constant, _) => Ok(Builtin::Constant),
            (NonlinearityName::Power, Some(p)) => Ok(Builtin::Power { p }),
            (NonlinearityName::Power, None) => Err("nonlinearity `power` needs an exponent p".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridControls {
    pub intervals: Option<usize>,
    pub lambda_max: Option<f64>,
    pub max_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Every setting, all optional until merged and validated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub n: Option<Vec<usize>>,
    pub s: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub nonlinearity: Option<NonlinearitySpec>,
    pub grid: GridControls,
    pub profile: Option<Profile>,
    pub rho: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub output: OutputSpec,
    pub tier: Option<TierName>,
}

/// Accepts a scalar or an array.
#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn field<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<Option<T>, ConfigError> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v).map(Some).map_err(|e| config_err(key, e)),
    }
}

fn list<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
    Ok(field::<OneOrMany<T>>(obj, key)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    }))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| config_err("<document>", e))?;
        let Value::Object(mut obj) = value else {
            return Err(config_err("<document>", "expected a JSON object"));
        };
        let cfg = RunConfig {
            command: field(&mut obj, "command")?,
            n: list(&mut obj, "n")?,
            s: field(&mut obj, "s")?,
            beta: list(&mut obj, "beta")?,
            seed: field(&mut obj, "seed")?,
            samples: field(&mut obj, "samples")?,
            nonlinearity: field(&mut obj, "nonlinearity")?,
            grid: field(&mut obj, "grid")?.unwrap_or_default(),
            profile: field(&mut obj, "profile")?,
            rho: list(&mut obj, "rho")?,
            y: list(&mut obj, "y")?,
            output: field(&mut obj, "output")?.unwrap_or_default(),
            tier: field(&mut obj, "tier")?,
        };
        if let Some(key) = obj.keys().next() {
            return Err(config_err(key, "unknown field"));
        }
        Ok(cfg)
    }

    /// Values set in `other` replace those in `self`.
    pub fn merge(self, other: RunConfig) -> RunConfig {
        RunConfig {
            command: other.command.or(self.command),
            n: other.n.or(self.n),
            s: other.s.or(self.s),
            beta: other.beta.or(self.beta),
            seed: other.seed.or(self.seed),
            samples: other.samples.or(self.samples),
            nonlinearity: other.nonlinearity.or(self.nonlinearity),
            grid: GridControls {
                intervals: other.grid.intervals.or(self.grid.intervals),
                lambda_max: other.grid.lambda_max.or(self.grid.lambda_max),
                max_points: other.grid.max_points.or(self.grid.max_points),
            },
            profile: other.profile.or(self.profile),
            rho: other.rho.or(self.rho),
            y: other.y.or(self.y),
            output: OutputSpec {
                path: other.output.path.or(self.output.path),
                format: other.output.format.or(self.output.format),
            },
            tier: other.tier.or(self.tier),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_and_lists() {
        let c = RunConfig::from_json(r#"{"command":"regimes","n":[7,8],"s":0.5,"beta":1}"#).unwrap();
        assert_eq!(c.command, Some(Command::Regimes));
        assert_eq!(c.n, Some(vec![7, 8]));
        assert_eq!(c.beta, Some(vec![1.0]));
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_json(r#"{"s":"half"}"#).unwrap_err();
        assert_eq!(e.field, "s");
        let e = RunConfig::from_json(r#"{"grid":{"intervals":-3}}"#).unwrap_err();
        assert_eq!(e.field, "grid");
        let e = RunConfig::from_json(r#"{"colour":1}"#).unwrap_err();
        assert_eq!(e.field, "colour");
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::from_json(r#"{"n":3,"s":0.25,"seed":7}"#).unwrap();
        let flags = RunConfig {
            s: Some(0.5),
            ..RunConfig::default()
        };
        let c = file.merge(flags);
        assert_eq!(c.n, Some(vec![3]));
        assert_eq!(c.s, Some(0.5));
        assert_eq!(c.seed, Some(7));
    }
}
