use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::protocols::{DeploymentConfig, TrialConfig};

/// Synthetic stream settings for `deploy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    /// Snippet CSV holding the stream; when unset the stream is drawn from
    /// the synthetic definition.
    pub csv: Option<PathBuf>,
    /// Windows drawn for a synthetic stream.
    pub windows: usize,
    /// Synthetic window filled with the first novel class.
    pub novel_window: Option<usize>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            csv: None,
            windows: 10,
            novel_window: None,
        }
    }
}

/// Every setting of a run. Built from defaults, then a `--config` JSON file,
/// then command-line flags, then `--set key=value` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Snippet CSV (with its `.meta.json` sidecar).
    pub data: Option<PathBuf>,
    /// Synthetic preset name or definition JSON; generated with `trial.seed`.
    pub synth: Option<String>,
    pub out: PathBuf,
    /// Worker threads for `suite`.
    pub jobs: usize,
    pub trial: TrialConfig,
    pub deploy: DeploymentConfig,
    pub stream: StreamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            synth: None,
            out: PathBuf::from("out"),
            jobs: 1,
            trial: TrialConfig::default(),
            deploy: DeploymentConfig::default(),
            stream: StreamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key.path=value`. The value is read as JSON when it parses,
    /// otherwise as a string. Unknown keys are rejected.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{assignment}`")))?;
        let key = key.trim();
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self)?;
        let mut node = &mut tree;
        for part in key.split('.') {
            node = node
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config key `{key}` (see `bdisc help <command>`)")))?;
        }
        *node = value;
        *self = serde_json::from_value(tree).map_err(|e| Error::Config(format!("--set {key}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_some() == self.synth.is_some() {
            return Err(Error::Config("give exactly one of --data and --synth".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.trial.validate()?;
        self.deploy.validate()
    }
}

/// `key = default` lines for every config field, for the help text.
pub fn config_keys() -> String {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, child) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            _ => out.push(format!("  {prefix} = {v}")),
        }
    }
    let mut lines = Vec::new();
    walk("", &serde_json::to_value(RunConfig::default()).expect("defaults serialize"), &mut lines);
    format!(
        "Config keys (JSON file via --config, single values via --set key=value; flags override the file, --set overrides flags):\n{}",
        lines.join("\n")
    )
}
