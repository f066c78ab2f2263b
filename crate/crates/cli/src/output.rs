use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;
use serde_json::{json, Value};
use siltlab_core::table::CsvTable;
use siltlab_core::Error;

/// Why a run stopped early. Each maps to its own exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    NonConvergence(String),
    Inconclusive(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Inconclusive(_) => 4,
        }
    }

    /// Prints one `error: <kind>: <reason>` line to stderr.
    pub fn report(&self) -> ExitCode {
        let (kind, msg) = match self {
            Failure::Config(m) => ("config", m),
            Failure::NonConvergence(m) => ("non-convergence", m),
            Failure::Inconclusive(m) => ("inconclusive", m),
            Failure::Io(m) => ("io", m),
        };
        eprintln!("error: {kind}: {}", msg.replace('\n', " "));
        ExitCode::from(self.code())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) | Error::Regime { .. } | Error::ScaleWindow(_) => Failure::Config(msg),
            Error::NonConvergence(_) => Failure::NonConvergence(msg),
            Error::InsufficientData(_) | Error::Aborted(_) => Failure::Inconclusive(msg),
        }
    }
}

/// Single writer for the run's files. JSON outputs carry the resolved
/// config and seed next to the result.
pub struct Output {
    dir: PathBuf,
    seed: u64,
    pub config: Option<Value>,
    pub files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, seed: u64) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            seed,
            config: None,
            files: Vec::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn write_raw(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        if name != "manifest.json" {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &CsvTable) -> Result<(), Failure> {
        self.write_raw(name, &table.render())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<(), Failure> {
        let doc = json!({
            "config": self.config,
            "seed": self.seed,
            "result": result,
        });
        let mut body = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Io(e.to_string()))?;
        body.push('\n');
        self.write_raw(name, &body)
    }
}
