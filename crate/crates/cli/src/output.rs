//! CSV emission and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Seventeen significant digits, enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// An in-memory CSV table with `\n` line endings and no quoting.
#[derive(Debug, Default)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut t = Table::default();
        t.line(header.iter().map(|s| s.to_string()));
        t
    }

    pub fn line<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let fields: Vec<String> = fields.into_iter().collect();
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn row(&mut self, values: &[f64]) {
        self.line(values.iter().map(|&v| num(v)));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<String>,
}

/// Everything that identifies a run; equal keys give identical outputs.
#[derive(Debug, Clone)]
pub struct RunKey {
    pub command: String,
    pub config: Option<PathBuf>,
    pub seed: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes the table to `out` (plus `<out>.manifest.json`) or to stdout.
pub fn emit(table: &Table, out: Option<&Path>, key: &RunKey) -> Result<()> {
    let Some(out) = out else {
        std::io::stdout().write_all(table.as_str().as_bytes())?;
        return Ok(());
    };
    fs::write(out, table.as_str()).with_context(|| format!("writing {}", out.display()))?;
    let config_hash = match &key.config {
        Some(p) => sha256_hex(&fs::read(p).with_context(|| format!("reading {}", p.display()))?),
        None => String::new(),
    };
    let manifest = RunManifest {
        command: key.command.clone(),
        config_hash,
        seed: key.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: vec![out.display().to_string()],
    };
    let path = manifest_path(out);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
