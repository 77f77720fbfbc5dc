//! Input loading, error mapping, plot columns and the metadata block.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use vzpulse_core::examples::Example;
use vzpulse_core::{HardwareModel, PulseSchedule, VirtualZProgram, VzError};

#[derive(Debug)]
pub struct CliError {
    pub exit: u8,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError {
            exit: 1,
            kind: "Validation".into(),
            message: msg.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            exit: 3,
            kind: "Io".into(),
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<VzError> for CliError {
    fn from(e: VzError) -> Self {
        CliError {
            exit: if e.is_validation() { 1 } else { 2 },
            kind: e.code().into(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Files read during a run, with their SHA-256 digests for the metadata block.
#[derive(Default)]
pub struct Inputs {
    pub hashes: BTreeMap<String, String>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.hashes
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }

    pub fn json<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let bytes = self.read(path)?;
        parse_json(&bytes, &path.display().to_string())
    }

    /// A problem directory (model.json, schedule.json, program.json) or one bundle file with
    /// the keys "model", "schedule" and "program".
    pub fn problem(&mut self, path: &Path) -> CliResult<Example> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        if path.is_dir() {
            let model: HardwareModel = self.json(&path.join("model.json"))?;
            let schedule: PulseSchedule = self.json(&path.join("schedule.json"))?;
            let program: VirtualZProgram = self.json(&path.join("program.json"))?;
            return Ok(Example {
                name,
                model,
                schedule,
                program,
            });
        }
        #[derive(serde::Deserialize)]
        struct Bundle {
            model: HardwareModel,
            schedule: PulseSchedule,
            program: VirtualZProgram,
        }
        let b: Bundle = self.json(path)?;
        Ok(Example {
            name,
            model: b.model,
            schedule: b.schedule,
            program: b.program,
        })
    }
}

pub fn parse_json<T: DeserializeOwned>(bytes: &[u8], what: &str) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| {
        // serde_json reports "<message> at line L column C"
        CliError::validation(format!("{what}: {e}"))
    })
}

pub fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialise")
}

/// Plain numeric columns with a `#` header naming each column and its unit.
pub fn columns(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = format!("# {}\n", header.join("\t"));
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
        s.push_str(&line.join("\t"));
        s.push('\n');
    }
    s
}

/// Everything a subcommand produces: a JSON result, auxiliary files and a short summary.
pub struct Output {
    pub command: &'static str,
    pub result: Value,
    pub files: Vec<(String, String)>,
    pub summary: Vec<String>,
    pub settings: Map<String, Value>,
}

impl Output {
    pub fn new(command: &'static str) -> Self {
        Output {
            command,
            result: Value::Null,
            files: vec![],
            summary: vec![],
            settings: Map::new(),
        }
    }

    pub fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn setting(&mut self, key: &str, v: impl Serialize) {
        self.settings.insert(key.into(), to_json(&v));
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    fn metadata(&self, inputs: &Inputs) -> Value {
        json!({
            "tool": "vzpulse",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "inputs": inputs.hashes,
            "settings": self.settings,
        })
    }

    /// With an output directory, write `<command>.json`, the auxiliary files and metadata.json and
    /// print the summary; otherwise print {metadata, result} as JSON.
    pub fn emit(self, out: Option<&PathBuf>, inputs: &Inputs) -> CliResult<()> {
        let meta = self.metadata(inputs);
        match out {
            None => {
                for line in &self.summary {
                    eprintln!("{line}");
                }
                let doc = json!({ "metadata": meta, "result": self.result });
                println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
            }
            Some(dir) => {
                write(&dir.join("metadata.json"), &pretty(&meta))?;
                write(&dir.join(format!("{}.json", self.command)), &pretty(&self.result))?;
                for (name, body) in &self.files {
                    write(&dir.join(name), body)?;
                }
                for line in &self.summary {
                    println!("{line}");
                }
            }
        }
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

pub fn write(path: &Path, body: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}
