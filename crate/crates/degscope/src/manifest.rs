//! Run manifests: what was run, with which configuration, how each stage
//! ended, and which files it produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::write_file;
use crate::error::{Error, Result};
use crate::report::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// Finished, but some independent items failed (see `errors`).
    Partial,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: Status,
    pub duration_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Command line as invoked, program name excluded.
    pub args: Vec<String>,
    pub seed: u64,
    pub workers: usize,
    pub status: Status,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
    /// Paths relative to the output directory, in creation order.
    pub artifacts: Vec<String>,
    /// Effective configuration, `key -> value`.
    pub config: BTreeMap<String, String>,
}

/// Bookkeeping for one command invocation writing into one output directory.
pub struct Run {
    out: PathBuf,
    config_text: String,
    manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, args: Vec<String>, cfg: &ExperimentConfig) -> Self {
        Self {
            out: cfg.out.clone(),
            config_text: cfg.to_text(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                args,
                seed: cfg.seed,
                workers: cfg.workers,
                status: Status::Ok,
                exit_code: 0,
                error: None,
                stages: Vec::new(),
                artifacts: Vec::new(),
                config: cfg
                    .entries()
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect(),
            },
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Registers an output file and returns its full path.
    pub fn artifact(&mut self, rel: &str) -> PathBuf {
        if !self.manifest.artifacts.iter().any(|a| a == rel) {
            self.manifest.artifacts.push(rel.to_string());
        }
        self.out.join(rel)
    }

    /// Runs `f` as a named stage, recording its status and wall-clock time.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let idx = self.manifest.stages.len();
        self.manifest.stages.push(StageRecord {
            name: name.into(),
            status: Status::Ok,
            duration_seconds: 0.0,
            errors: Vec::new(),
        });
        let r = f(self);
        let rec = &mut self.manifest.stages[idx];
        rec.duration_seconds = start.elapsed().as_secs_f64();
        match &r {
            Ok(_) if !rec.errors.is_empty() => rec.status = Status::Partial,
            Ok(_) => {}
            Err(e) => {
                rec.status = Status::Failed;
                rec.errors.push(e.to_string());
            }
        }
        r
    }

    /// Records a non-fatal error against the innermost running stage.
    pub fn item_error(&mut self, message: String) {
        if let Some(rec) = self.manifest.stages.last_mut() {
            rec.errors.push(message);
        }
    }

    pub fn skip(&mut self, names: &[&str]) {
        for n in names {
            self.manifest.stages.push(StageRecord {
                name: (*n).into(),
                status: Status::Skipped,
                duration_seconds: 0.0,
                errors: Vec::new(),
            });
        }
    }

    /// Writes the effective config and the manifest. Called on success and
    /// on failure; returns the original outcome.
    pub fn finish<T>(mut self, outcome: Result<T>) -> (RunManifest, Result<T>) {
        if let Err(e) = &outcome {
            self.manifest.status = Status::Failed;
            self.manifest.exit_code = e.exit_code();
            self.manifest.error = Some(e.to_string());
        } else if self
            .manifest
            .stages
            .iter()
            .any(|s| s.status != Status::Ok)
        {
            self.manifest.status = Status::Partial;
        }
        let written = write_file(&self.out.join(CONFIG_FILE), self.config_text.as_bytes())
            .and_then(|_| write_json(&self.out.join(MANIFEST_FILE), "manifest", &self.manifest));
        let outcome = match (outcome, written) {
            (Ok(_), Err(e)) => Err(e),
            (o, _) => o,
        };
        (self.manifest, outcome)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let v: serde_json::Value = crate::report::read_json(&path)?;
    serde_json::from_value(v).map_err(|source| Error::Json { path, source })
}
