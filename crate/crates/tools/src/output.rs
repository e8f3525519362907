//! CSV and JSON writers. Every file carries the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, ResolvedConfig};
use crate::error::CliError;

/// Prefix of the first line of every CSV file.
pub const CONFIG_PREFIX: &str = "# config: ";

/// Round-trip float text: shortest representation, exponent form for extremes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn config_line(config: &ResolvedConfig) -> Result<String, CliError> {
    Ok(format!("{CONFIG_PREFIX}{}", serde_json::to_string(&config.embedded())?))
}

/// Reads a configuration from either a JSON file or the header of a CSV
/// produced by this tool.
pub fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let json = match text.lines().next().and_then(|l| l.strip_prefix(CONFIG_PREFIX)) {
        Some(line) => line.to_string(),
        None => text,
    };
    serde_json::from_str(&json).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

pub fn write_csv<I>(path: &Path, config: &ResolvedConfig, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut buf = config_line(config)?.into_bytes();
    buf.push(b'\n');
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let buf = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(path, &buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// File-name friendly rendering of a number: `0.125` becomes `0p125`.
pub fn tag(x: f64) -> String {
    format!("{x}").replace('-', "m").replace('.', "p")
}

pub fn in_dir(config: &ResolvedConfig, name: String) -> PathBuf {
    config.output_dir.join(name)
}
