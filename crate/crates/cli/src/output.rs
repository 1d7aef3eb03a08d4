use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn numerical_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Everything that determines a run's outputs. Two runs with byte-identical
/// manifests produce byte-identical outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub seed: u64,
    pub version: &'static str,
    pub outputs: Vec<String>,
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(numerical_err)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn write_manifest<C: Serialize>(
        &self,
        command: &str,
        config: &C,
        seed: u64,
        outputs: &[&str],
    ) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command,
            config,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            outputs: outputs.iter().map(|o| self.path(o).display().to_string()).collect(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Minimal CSV builder; cells never contain separators or quotes.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub fn ensure_finite(values: &[(&str, f64)], context: &str) -> CliResult<()> {
    for (name, v) in values {
        if !v.is_finite() {
            return Err(CliError::Numerical(format!("{name} is {v} at {context}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.17), "1.7000000000000001e-1");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(config_err("x").exit_code(), 2);
        assert_eq!(numerical_err("x").exit_code(), 3);
    }
}
