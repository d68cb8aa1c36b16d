//! Flat `key=value` run manifests.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, Default)]
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("tool", "kuda");
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Records a file's path and SHA-256 digest.
    pub fn file(&mut self, key: &str, path: &Path) -> io::Result<()> {
        let digest = sha256_file(path)?;
        self.set(key, path.display());
        self.set(&format!("{key}_sha256"), digest);
        Ok(())
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.render())
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}
