pub mod cost;
pub mod explore;
pub mod export;
pub mod train;
pub mod verify;

use std::path::{Path, PathBuf};

use logicforge_core::trainer::{read_csv_with, Splits};

use crate::config::{FieldError, ProjectConfig, Validated};
use crate::error::CliError;
use crate::Common;

pub const CHECKPOINT_FILE: &str = "model.lfck";
pub const METRICS_FILE: &str = "metrics.csv";
pub const NETLIST_FILE: &str = "netlist.lfn";
pub const VERILOG_FILE: &str = "logicnet.v";
pub const VERILOG_DIR: &str = "verilog";
pub const TESTBENCH_FILE: &str = "logicnet_tb.v";
pub const SUMMARY_FILE: &str = "export_summary.txt";
pub const EXPLORE_FILE: &str = "explore.csv";

/// A loaded config with paths resolved.
pub struct Project {
    pub config: ProjectConfig,
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Project {
    pub fn open(common: &Common) -> Result<Self, CliError> {
        let config = ProjectConfig::load(&common.config)?;
        let base = common
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let out = match &common.out {
            Some(o) => o.clone(),
            None => base.join(&config.output_dir),
        };
        Ok(Self { config, base, out })
    }

    pub fn validated(&self) -> Result<Validated, CliError> {
        self.config.validate().map_err(CliError::Invalid)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn create_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }

    /// Reads and splits the configured dataset, checking its width against
    /// the network.
    pub fn load_splits(&self, input_features: usize) -> Result<Splits, CliError> {
        let ds = self.config.dataset.as_ref().ok_or_else(|| {
            CliError::Config("dataset: this command needs a dataset block".into())
        })?;
        let path = self.resolve(&ds.path);
        if !path.is_file() {
            return Err(CliError::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
            ));
        }
        if !ds.delimiter.is_ascii() {
            return Err(CliError::Config(
                "dataset.delimiter: must be an ASCII character".into(),
            ));
        }
        let table = read_csv_with(&path, ds.delimiter as u8)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if table.data.num_features != input_features {
            return Err(CliError::Invalid(vec![FieldError {
                path: "network.input_features".into(),
                message: format!(
                    "{input_features} does not match the {} features in {}",
                    table.data.num_features,
                    path.display()
                ),
            }]));
        }
        Ok(table.into_splits(ds.split_seed)?)
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn fmt_acc(a: f64) -> String {
    if a.is_nan() {
        "n/a".into()
    } else {
        format!("{:.2}%", 100.0 * a)
    }
}
