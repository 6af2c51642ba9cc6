//! Output files with embedded provenance, and loading them back.
//!
//! JSON outputs are envelopes `{tool, version, command, seed, artifact,
//! report}`; CSV outputs start with a `#` line holding the same
//! provenance as JSON. Nothing time-dependent is written, so replaying a
//! recorded command reproduces a file byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use bpcm::sim::LinkResult;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bpcm::Error),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use bpcm::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Domain(_) | E::SearchFailed(_)) => 3,
            CliError::Core(_) => 2,
            CliError::Mismatch(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(bpcm::Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(bpcm::Error::Json(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Arguments after the program name, minus output and thread flags.
    pub command: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Serialize)]
struct Envelope<'a, A: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    artifact: &'a A,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<Value>,
}

pub fn write_envelope<A: Serialize>(path: &Path, prov: &Provenance, artifact: &A, report: Option<Value>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(
        &mut w,
        &Envelope {
            provenance: prov,
            artifact,
            report,
        },
    )?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_with_provenance<F>(path: &Path, prov: &Provenance, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {}", serde_json::to_string(prov)?)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Loads an artifact from an envelope or from a bare JSON file.
pub fn load_artifact<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let mut v = read_json(path)?;
    if v.get("tool").is_some() {
        if let Some(a) = v.get_mut("artifact") {
            v = a.take();
        }
    }
    serde_json::from_value(v).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// What an output file holds besides its provenance.
pub enum Saved {
    Link(Box<LinkResult>),
    Json,
    Csv,
}

pub fn read_provenance(path: &Path) -> Result<(Provenance, Saved), CliError> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    if let Some(line) = first.strip_prefix("# ") {
        let prov = serde_json::from_str(line.trim_end()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        return Ok((prov, Saved::Csv));
    }
    let v = read_json(path)?;
    let prov: Provenance =
        serde_json::from_value(v.clone()).map_err(|_| CliError::Usage(format!("{} has no recorded command", path.display())))?;
    let saved = match prov.command.first().map(String::as_str) {
        Some("simulate") => Saved::Link(Box::new(serde_json::from_value(v["artifact"].clone())?)),
        _ => Saved::Json,
    };
    Ok((prov, saved))
}
