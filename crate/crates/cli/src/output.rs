//! Output files that carry their run configuration and vanish if the command fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::settings::Settings;

/// Everything needed to reproduce an artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub out: String,
    pub settings: Settings,
}

impl RunConfig {
    pub fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

/// Files written so far by one command. Unless [`Outputs::commit`] is
/// called, dropping the value deletes them (and the directory, if this
/// command created it and it is empty).
pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    committed: bool,
    run: RunConfig,
}

impl Outputs {
    pub fn new(dir: &Path, run: RunConfig) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            committed: false,
            run,
        })
    }

    pub fn run(&self) -> &RunConfig {
        &self.run
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.partial"));
        fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// CSV body preceded by a `# run_config: {...}` comment line.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let body = w.into_inner().context("csv buffer")?;
        let mut bytes = format!("# run_config: {}\n", serde_json::to_string(&self.run)?).into_bytes();
        bytes.extend(body);
        self.write(name, &bytes)
    }

    /// Pretty JSON object with the run configuration under `run_config`.
    pub fn json(&mut self, name: &str, mut value: serde_json::Value) -> Result<PathBuf> {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("run_config".into(), self.run.json());
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Raw text whose producer already embedded the run configuration.
    pub fn text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, text.as_bytes())
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            // only succeeds when nothing else landed there
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn f(x: f64) -> String {
    format!("{x}")
}
