//! Aggregated parameter ledger: one section per module, TOML on disk.
//!
//! Overrides use dotted keys (`stereo.gamma_c=0.6`); environment variables
//! of the form `HLF__STEREO__GAMMA_C=0.6` map onto the same keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::TwoPlaneScene;
use crate::completion::CompletionParams;
use crate::descriptor::DescriptorParams;
use crate::error::{HlfError, Result};
use crate::metric::MetricParams;
use crate::pairwise::PairwiseParams;
use crate::render::RenderParams;
use crate::stereo::StereoParams;

pub const ENV_PREFIX: &str = "HLF__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub scene: TwoPlaneScene,
    pub label_count: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            scene: TwoPlaneScene::default(),
            label_count: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeParams {
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub descriptor: DescriptorParams,
    pub metric: MetricParams,
    pub pairwise: PairwiseParams,
    pub stereo: StereoParams,
    pub completion: CompletionParams,
    pub render: RenderParams,
    pub synth: SynthParams,
    pub runtime: RuntimeParams,
}

fn config_error(msg: impl std::fmt::Display) -> HlfError {
    HlfError::InvalidParameter(format!("config: {msg}"))
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HlfError::io(path, e))?;
        Config::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.descriptor.validate()?;
        self.metric.validate()?;
        self.pairwise.validate()?;
        self.stereo.validate()?;
        self.completion.validate()?;
        self.render.validate()?;
        self.synth.scene.validate()?;
        if self.synth.label_count < 2 {
            return Err(config_error("synth.label_count must be at least 2"));
        }
        Ok(())
    }

    /// Sets a dotted key such as `stereo.gamma_c` from its textual value.
    /// Values are read as TOML (`0.6`, `[3, 5, 9]`, `true`) and fall back
    /// to a plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(config_error)?;
        let parsed = parse_value(value);
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(config_error(format!("malformed key `{key}`")));
        }
        let mut node = &mut root;
        for part in &parts[..parts.len() - 1] {
            node = node
                .get_mut(*part)
                .filter(|v| v.is_table())
                .ok_or_else(|| config_error(format!("unknown section in `{key}`")))?;
        }
        let table = node.as_table_mut().expect("checked above");
        let last = parts[parts.len() - 1];
        if !table.contains_key(last) {
            return Err(config_error(format!("unknown key `{key}`")));
        }
        table.insert(last.to_owned(), parsed);
        let updated: Config = root
            .try_into()
            .map_err(|e| config_error(format!("`{key}`: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config_error(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies `HLF__SECTION__KEY=value` variables from `vars`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(ENV_PREFIX)?;
                Some((
                    rest.split("__")
                        .collect::<Vec<_>>()
                        .join(".")
                        .to_lowercase(),
                    v,
                ))
            })
            .collect();
        // Deterministic order regardless of the environment's.
        found.sort();
        for (k, v) in found {
            self.set(&k, &v)?;
        }
        Ok(())
    }
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_owned()))
}
