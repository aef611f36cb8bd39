//! `manifest.json` written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;

use relnav::train::TrainConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{read, write, Outcome};

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config_sha256: String,
    args: BTreeMap<&'static str, String>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, config: &TrainConfig) -> Outcome<Self> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: sha256(config.to_json()?.as_bytes()),
            args: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn arg(&mut self, name: &'static str, value: &str) {
        self.args.insert(name, value.to_string());
    }

    pub fn input(&mut self, path: &Path) -> Outcome {
        let text = read(path)?;
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: sha256(text.as_bytes()),
        });
        Ok(())
    }

    /// Writes `name` under `dir` and records its hash.
    pub fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Outcome {
        write(&dir.join(name), contents)?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            sha256: sha256(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn finish(self, dir: &Path) -> Outcome {
        let text = serde_json::to_string_pretty(&self)?;
        write(&dir.join(MANIFEST_FILE), &text)
    }
}
