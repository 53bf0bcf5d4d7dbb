use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl From<unistoch::Error> for CliError {
    fn from(e: unistoch::Error) -> Self {
        CliError {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError {
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn format(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError {
            kind: "format",
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn parameter(message: impl Into<String>) -> Self {
        CliError {
            kind: "parameter",
            message: message.into(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Run metadata attached to every JSON result.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: &'static str,
    pub wall_time_s: f64,
    /// SHA-256 of every input file, keyed by the path as given.
    pub input_digests: BTreeMap<String, String>,
}

pub struct Context {
    started: Instant,
    seed: Option<u64>,
    digests: BTreeMap<String, String>,
}

impl Context {
    pub fn new() -> Self {
        Context {
            started: Instant::now(),
            seed: None,
            digests: BTreeMap::new(),
        }
    }

    pub fn record_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Reads a JSON input and records its digest.
    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.digests
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        serde_json::from_slice(&bytes).map_err(|e| CliError::format(path, e))
    }

    fn manifest(&self) -> RunManifest {
        RunManifest {
            command_line: std::env::args().collect::<Vec<_>>().join(" "),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            input_digests: self.digests.clone(),
        }
    }

    /// Prints `result` with the manifest under the `"manifest"` key.
    pub fn finish<T: Serialize>(&self, result: &T) -> CliResult<()> {
        let mut value = serde_json::to_value(result).map_err(|e| CliError::parameter(e.to_string()))?;
        let manifest = serde_json::to_value(self.manifest()).expect("manifest serializes");
        match &mut value {
            Value::Object(map) => {
                map.insert("manifest".into(), manifest);
            }
            other => {
                value = json!({ "result": other.take(), "manifest": manifest });
            }
        }
        let text = serde_json::to_string_pretty(&value).expect("value serializes");
        print_stdout(&(text + "\n"))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Writes CSV lines to `path`, or to stdout when no path is given.
pub fn write_csv(path: Option<&Path>, header: &str, lines: impl Iterator<Item = String>) -> CliResult<()> {
    let mut body = String::new();
    body.push_str(header);
    body.push('\n');
    for line in lines {
        body.push_str(&line);
        body.push('\n');
    }
    match path {
        Some(p) => fs::write(p, body).map_err(|e| CliError::io(p, e)),
        None => print_stdout(&body),
    }
}

/// Writes to stdout; a closed pipe downstream is not an error.
fn print_stdout(text: &str) -> CliResult<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

pub fn emit_error(e: &CliError) {
    let value = json!({ "error": { "kind": e.kind, "message": e.message } });
    let _ = print_stdout(&(serde_json::to_string_pretty(&value).expect("value serializes") + "\n"));
}
