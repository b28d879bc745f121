//! Versioned JSON project configuration.
//!
//! Relative paths inside a config resolve against the config file's
//! directory.

use std::fmt;
use std::path::{Path, PathBuf};

use logicforge_core::trainer::{Adam, TrainConfig};
use logicforge_core::{validate_spec, Knobs, NetworkSpec, RegisterPolicy, DEFAULT_FANIN_CAP};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default)]
    pub export: ExportConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore: Option<ExploreConfig>,
    #[serde(default = "default_cap")]
    pub fanin_cap: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_cap() -> u32 {
    DEFAULT_FANIN_CAP
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Seed of the 60/20/20 split used when the file has no `split` column.
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_features: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub beta: u32,
    pub gamma: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_i: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_o: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_o: Option<usize>,
    /// Seed of the sparsity masks.
    #[serde(default)]
    pub seed: u64,
}

impl NetworkConfig {
    pub fn knobs(&self) -> Knobs {
        Knobs {
            beta: self.beta,
            gamma: self.gamma,
            beta_i: self.beta_i,
            beta_o: self.beta_o,
            gamma_i: self.gamma_i,
            gamma_o: self.gamma_o,
        }
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec::mlp(
            self.input_features,
            &self.hidden,
            self.num_classes,
            self.knobs(),
            self.seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            lr_decay: d.lr_decay,
            lr_step_epochs: d.lr_step_epochs,
            adam_beta1: d.adam.beta1,
            adam_beta2: d.adam.beta2,
            adam_eps: d.adam.eps,
            seed: d.seed,
        }
    }
}

impl TrainBlock {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            adam: Adam {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            },
            lr_decay: self.lr_decay,
            lr_step_epochs: self.lr_step_epochs,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegisterPreset {
    Default,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Registers {
    Preset(RegisterPreset),
    Stages(Vec<usize>),
}

impl Registers {
    pub fn policy(&self) -> RegisterPolicy {
        match self {
            Registers::Preset(RegisterPreset::Default) => RegisterPolicy::Default,
            Registers::Preset(RegisterPreset::None) => RegisterPolicy::None,
            Registers::Stages(v) => RegisterPolicy::Custom(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    pub registers: Registers,
    pub prune: bool,
    pub split_files: bool,
    /// Random vectors embedded in a self-checking testbench; 0 disables it.
    pub testbench_vectors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clock_ns: Option<f64>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            registers: Registers::Preset(RegisterPreset::Default),
            prune: true,
            split_files: false,
            testbench_vectors: 0,
            clock_ns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreConfig {
    /// Hidden-width lists to try; defaults to the network's own.
    #[serde(default)]
    pub hidden: Vec<Vec<usize>>,
    pub beta: Vec<u32>,
    pub gamma: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lut_budget: Option<u64>,
    #[serde(default)]
    pub train: bool,
    #[serde(default = "default_explore_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub parallel: bool,
}

fn default_explore_epochs() -> usize {
    10
}

/// One validation problem, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub spec: NetworkSpec,
    pub train: TrainConfig,
}

impl ProjectConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<Validated, Vec<FieldError>> {
        let mut errs = Vec::new();
        let mut err = |path: &str, message: String| {
            errs.push(FieldError {
                path: path.into(),
                message,
            })
        };
        if self.version != CONFIG_VERSION {
            err(
                "version",
                format!(
                    "unsupported version {} (expected {CONFIG_VERSION})",
                    self.version
                ),
            );
        }
        let n = &self.network;
        let bits = [
            ("network.beta", Some(n.beta)),
            ("network.beta_i", n.beta_i),
            ("network.beta_o", n.beta_o),
        ];
        for (path, b) in bits {
            if let Some(b) = b {
                if !(1..=8).contains(&b) {
                    err(path, format!("bitwidth {b} outside 1..=8"));
                }
            }
        }
        let fanins = [
            ("network.gamma", Some(n.gamma)),
            ("network.gamma_i", n.gamma_i),
            ("network.gamma_o", n.gamma_o),
        ];
        for (path, g) in fanins {
            if g == Some(0) {
                err(path, "fan-in must be at least 1".into());
            }
        }
        if n.input_features == 0 {
            err("network.input_features", "must be at least 1".into());
        }
        if n.num_classes == 0 {
            err("network.num_classes", "must be at least 1".into());
        }
        if let Some(i) = n.hidden.iter().position(|&w| w == 0) {
            err(
                &format!("network.hidden[{i}]"),
                "layer width must be at least 1".into(),
            );
        }
        if self.fanin_cap == 0 || self.fanin_cap > 30 {
            err("fanin_cap", format!("{} outside 1..=30", self.fanin_cap));
        }
        let t = &self.train;
        if t.epochs == 0 {
            err("train.epochs", "must be at least 1".into());
        }
        if t.batch_size == 0 {
            err("train.batch_size", "must be at least 1".into());
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            err("train.lr", format!("{} must be positive", t.lr));
        }
        if !(t.lr_decay > 0.0 && t.lr_decay <= 1.0) {
            err("train.lr_decay", format!("{} outside (0, 1]", t.lr_decay));
        }
        if t.lr_step_epochs == 0 {
            err("train.lr_step_epochs", "must be at least 1".into());
        }
        if !(0.0..1.0).contains(&t.adam_beta1)
            || !(0.0..1.0).contains(&t.adam_beta2)
            || t.adam_eps <= 0.0
        {
            err(
                "train.adam_*",
                "betas must lie in [0, 1) and eps must be positive".into(),
            );
        }
        if let Some(c) = self.export.clock_ns {
            if !(c > 0.0 && c.is_finite()) {
                err("export.clock_ns", format!("{c} must be positive"));
            }
        }
        if let Some(e) = &self.explore {
            if e.beta.is_empty() || e.gamma.is_empty() {
                err("explore", "beta and gamma grids must be nonempty".into());
            }
            if e.epochs == 0 {
                err("explore.epochs", "must be at least 1".into());
            }
        }
        if !errs.is_empty() {
            return Err(errs);
        }
        let spec = n.spec();
        let violations = validate_spec(&spec, self.fanin_cap);
        if !violations.is_empty() {
            return Err(violations
                .into_iter()
                .map(|v| FieldError {
                    path: v
                        .layer
                        .map_or("network".into(), |k| format!("network.layers[{k}]")),
                    message: v.message,
                })
                .collect());
        }
        Ok(Validated {
            spec,
            train: t.to_config(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "network": { "input_features": 16, "hidden": [64, 32, 32, 32], "num_classes": 5, "beta": 2, "gamma": 3 }
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ProjectConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.fanin_cap, 15);
        assert_eq!(c.train, TrainBlock::default());
        assert_eq!(
            c.export.registers,
            Registers::Preset(RegisterPreset::Default)
        );
        let v = c.validate().unwrap();
        assert_eq!(v.train, TrainConfig::default());
        assert_eq!(v.spec.layers.len(), 5);
    }

    #[test]
    fn round_trip() {
        let mut c = ProjectConfig::parse(MINIMAL).unwrap();
        c.network.beta_o = Some(4);
        c.export.registers = Registers::Stages(vec![0, 2]);
        c.explore = Some(ExploreConfig {
            hidden: vec![vec![8, 8]],
            beta: vec![1, 2],
            gamma: vec![2, 3],
            lut_budget: Some(1000),
            train: false,
            epochs: 3,
            parallel: true,
        });
        let back = ProjectConfig::parse(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.validate().unwrap(), c.validate().unwrap());
    }

    #[test]
    fn errors_carry_field_paths() {
        let mut c = ProjectConfig::parse(MINIMAL).unwrap();
        c.network.beta = 0;
        c.train.epochs = 0;
        let errs = c.validate().unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["network.beta", "train.epochs"]);
    }

    #[test]
    fn fanin_over_cap_names_the_layer() {
        let mut c = ProjectConfig::parse(MINIMAL).unwrap();
        c.network.gamma = 8;
        let errs = c.validate().unwrap_err();
        assert!(errs.iter().all(|e| e.path.starts_with("network.layers[")));
        assert!(errs
            .iter()
            .any(|e| e.path == "network.layers[1]" && e.message.contains("16")));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"beta\": 2", "\"beta\": 2, \"betta\": 3");
        assert!(matches!(
            ProjectConfig::parse(&text),
            Err(CliError::Config(_))
        ));
    }
}
