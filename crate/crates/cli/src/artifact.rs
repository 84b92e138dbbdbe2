use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Bumped whenever the layout of any artifact changes.
pub const SCHEMA: &str = "villain-artifact/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema: &'static str,
    pub version: &'static str,
    pub geometry_hash: &'a str,
    pub config: &'a RunConfig,
    pub result: T,
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial artifact.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.as_file().sync_all().map_err(|e| CliError::Io(e.to_string()))?;
    tmp.persist(&target).map_err(|e| CliError::Io(format!("{}: {}", target.display(), e.error)))?;
    Ok(target)
}

pub fn json_document<T: Serialize>(cfg: &RunConfig, geometry_hash: &str, result: T) -> Result<Vec<u8>, CliError> {
    let env = Envelope { schema: SCHEMA, version: VERSION, geometry_hash, config: cfg, result };
    let mut bytes = serde_json::to_vec_pretty(&env).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// CSV with `#` header lines carrying the schema, geometry hash and the
/// config as one line of JSON.
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new(cfg: &RunConfig, geometry_hash: &str, columns: &[&str]) -> Result<Self, CliError> {
        let config = serde_json::to_string(cfg).map_err(|e| CliError::Io(e.to_string()))?;
        let mut out = format!("# schema={SCHEMA} version={VERSION} geometry_hash={geometry_hash}\n# config={config}\n");
        out.push_str(&columns.join(","));
        out.push('\n');
        Ok(Self { out })
    }

    pub fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.out.into_bytes()
    }
}

/// Shortest round-tripping representation.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
