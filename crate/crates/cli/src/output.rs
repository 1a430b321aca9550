//! Run directories: artifacts, checksums and the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::SCHEMA;
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Canonical JSON: serde_json maps are key-sorted, floats print shortest
/// round-trip.
pub fn canonical(value: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Io(e.to_string()))?;
    serde_json::to_vec(&v).map_err(|e| CliError::Io(e.to_string()))
}

pub fn content_id(value: &impl Serialize) -> Result<String, CliError> {
    Ok(sha256_hex(&canonical(value)?)[..16].to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

pub struct RunReport {
    pub dir: PathBuf,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub struct Run {
    root: PathBuf,
    dir: PathBuf,
    run_id: String,
    command: String,
    config: Value,
    artifacts: Vec<Artifact>,
    checks: Vec<Check>,
    started: Instant,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Run {
    /// Creates `<root>/<command>-<run_id>/`, replacing an earlier run with
    /// the same snapshot.
    pub fn create(root: &Path, command: &str, params: &impl Serialize) -> Result<Run, CliError> {
        let config = json!({
            "schema": SCHEMA,
            "command": command,
            "params": serde_json::to_value(params).map_err(|e| CliError::Io(e.to_string()))?,
        });
        let run_id = content_id(&config)?;
        let dir = root.join(format!("{command}-{run_id}"));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Run {
            root: root.to_path_buf(),
            dir,
            run_id,
            command: command.to_string(),
            config,
            artifacts: Vec::new(),
            checks: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn record(&mut self, name: String, bytes: &[u8]) {
        self.artifacts.push(Artifact {
            name,
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.record(name.to_string(), bytes);
        Ok(())
    }

    /// Writes a JSON object stamped with the run id.
    pub fn write_json(&mut self, name: &str, body: Value) -> Result<(), CliError> {
        let mut body = body;
        let obj = body
            .as_object_mut()
            .ok_or_else(|| CliError::Io(format!("{name}: JSON artifact must be an object")))?;
        obj.insert("run_id".into(), Value::String(self.run_id.clone()));
        let mut bytes =
            serde_json::to_vec_pretty(&body).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_csv(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> fb_core::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// Records a file written outside the run directory, by its path
    /// relative to the output root.
    pub fn note_external(&mut self, rel: &str, bytes: &[u8]) {
        self.record(rel.to_string(), bytes);
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    /// Writes manifest.json and timing.json.
    pub fn finish(self) -> Result<RunReport, CliError> {
        let pass = self.checks.iter().all(|c| c.pass);
        let manifest = json!({
            "schema": SCHEMA,
            "run_id": self.run_id,
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "artifacts": self.artifacts,
            "checks": self.checks,
            "status": if pass { "pass" } else { "fail" },
        });
        let mut bytes =
            serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        // Wall clock varies between reruns, so it stays out of the manifest.
        let timing = json!({
            "run_id": self.run_id,
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
        });
        let path = self.dir.join("timing.json");
        fs::write(&path, format!("{timing:#}\n")).map_err(|e| io_err(&path, e))?;
        Ok(RunReport {
            dir: self.dir,
            checks: self.checks,
            pass,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_id_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": [1.5, 2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": [1.5, 2], "b": 1}"#).unwrap();
        assert_eq!(content_id(&a).unwrap(), content_id(&b).unwrap());
        assert_eq!(content_id(&a).unwrap().len(), 16);
    }

    #[test]
    fn manifest_lists_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let mut run = Run::create(tmp.path(), "demo", &json!({"k": 1})).unwrap();
        run.write_json("a.json", json!({"x": 1})).unwrap();
        run.write_csv("b.csv", |buf| {
            buf.extend_from_slice(b"r\n1\n");
            Ok(())
        })
        .unwrap();
        run.check("ok", true, "");
        let id = run.run_id().to_string();
        let dir = run.dir().to_path_buf();
        let rep = run.finish().unwrap();
        assert!(rep.pass);
        let m: Value =
            serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["run_id"], id.as_str());
        assert_eq!(m["artifacts"].as_array().unwrap().len(), 2);
        assert_eq!(m["artifacts"][1]["sha256"], sha256_hex(b"r\n1\n").as_str());
        let a: Value = serde_json::from_slice(&fs::read(dir.join("a.json")).unwrap()).unwrap();
        assert_eq!(a["run_id"], id.as_str());
    }
}
