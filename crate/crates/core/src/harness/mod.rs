//! Experiment orchestration: configuration, the grid-searched fan-out of
//! runs, CSV/manifest output, plot data and the oracle suite.

pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod verify;

use std::path::Path;

use serde_json::Value;

pub use config::{ExperimentConfig, Method, Overrides, ProblemSpec, SeedSpec, DEFAULT_GAMMA_GRID};
pub use experiment::{
    confidence_interval, experiment, multi_instance_experiment, run_experiment, ExperimentOutput,
    Instance, Manifest, Mode, RunRow, SummaryRow, MANIFEST_FORMAT, WORKERS_ENV,
};
pub use output::write_outputs;
pub use plot::emit_plot_data;
pub use verify::{format_table, run_verify_suite, CheckResult};

use crate::error::{Error, Result};

/// Reads either an experiment config or a manifest written by a previous run.
/// For a manifest the recorded mode is returned alongside its config.
pub fn load_config_or_manifest(path: &Path) -> Result<(ExperimentConfig, Option<Mode>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if value.get("format").and_then(Value::as_str) == Some(MANIFEST_FORMAT) {
        let m: Manifest = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("invalid manifest: {e}")))?;
        Ok((m.config, Some(m.mode)))
    } else {
        Ok((ExperimentConfig::from_json(&text)?, None))
    }
}
