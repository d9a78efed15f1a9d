//! Run configuration: a TOML file, then `--seed`, then `--set` overrides.
//!
//! ```toml
//! scenario = "kdv-soliton-momentum"
//!
//! [params]
//! dt = 0.01
//! laws = ["mass", "momentum"]
//! snapshots = "3.6/pi"
//!
//! [output]
//! dir = "runs/soliton"
//! history = false
//!
//! [provenance]   # written by `run`, ignored on input
//! ```
//!
//! Parameter values may be strings, numbers, booleans or arrays of those;
//! each is handed to `ScenarioParams::set` as text, so `"3.6/pi"` works
//! wherever a number does.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tdsr::models::ScenarioParams;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, toml::Value>,
    #[serde(default)]
    output: OutputSection,
    #[allow(dead_code)]
    provenance: Option<toml::Table>,
}

/// Which artifacts to write; all on unless switched off.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub invariants: Option<bool>,
    pub error: Option<bool>,
    pub history: Option<bool>,
}

impl OutputSection {
    pub fn invariants(&self) -> bool {
        self.invariants.unwrap_or(true)
    }

    pub fn error(&self) -> bool {
        self.error.unwrap_or(true)
    }

    pub fn history(&self) -> bool {
        self.history.unwrap_or(true)
    }
}

/// Everything a verb needs before it touches the solver.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: ScenarioParams,
    pub output: OutputSection,
}

/// Command-line inputs that shape a [`RunConfig`].
#[derive(Clone, Debug, Default)]
pub struct Inputs<'a> {
    pub scenario: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub sets: &'a [String],
}

fn value_text(key: &str, v: &toml::Value) -> Result<String, CliError> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        // `{:?}` keeps full precision and always has a digit after the point
        toml::Value::Float(x) => format!("{x:?}"),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| match i {
                toml::Value::Array(_) | toml::Value::Table(_) => {
                    Err(CliError::Config(format!("params.{key}: nested values are not allowed")))
                }
                other => value_text(key, other),
            })
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        other => {
            return Err(CliError::Config(format!(
                "params.{key}: unsupported value type {}",
                other.type_str()
            )))
        }
    })
}

fn split_assignment(s: &str) -> Result<(&str, &str), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{s}'")))
}

impl RunConfig {
    pub fn load(inputs: &Inputs<'_>) -> Result<Self, CliError> {
        let file: ConfigFile = match inputs.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let from_params = file.params.get("scenario").map(|v| value_text("scenario", v)).transpose()?;
        let mut named = vec![];
        named.extend(inputs.scenario.map(str::to_string));
        named.extend(file.scenario.clone());
        named.extend(from_params);
        let Some(name) = named.first().cloned() else {
            return Err(CliError::Config(
                "no scenario given; pass a name or set `scenario` in the config (see `tdsr list`)".into(),
            ));
        };
        if let Some(other) = named.iter().find(|n| **n != name) {
            return Err(CliError::Config(format!(
                "conflicting scenarios '{name}' and '{other}'"
            )));
        }
        let mut params = ScenarioParams::for_name(&name).map_err(CliError::from_setup)?;
        for (k, v) in &file.params {
            if k == "scenario" {
                continue;
            }
            params.set(k, &value_text(k, v)?).map_err(CliError::from_setup)?;
        }
        if let Some(seed) = inputs.seed {
            params.seed = seed;
        }
        for s in inputs.sets {
            let (k, v) = split_assignment(s)?;
            params.set(k, v).map_err(CliError::from_setup)?;
        }
        params.run_spec().map_err(CliError::from_setup)?;
        Ok(Self {
            params,
            output: file.output,
        })
    }

    /// `--out`, then `TDSR_OUT_DIR`, then `[output] dir`, then
    /// `tdsr-out/<scenario>`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os("TDSR_OUT_DIR").filter(|p| !p.is_empty()) {
            return PathBuf::from(p);
        }
        if let Some(p) = &self.output.dir {
            return p.clone();
        }
        Path::new("tdsr-out").join(&self.params.scenario)
    }
}
