//! Jump models persisted under `<root>/models/<id>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use fb_core::jumpsynth::{
    build_jump_function, HolderWeight, JumpFunctionModel, JumpModelSummary, JumpOptions,
};
use fb_core::poly::HarmonicPolynomial;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{canonical, content_id, Run};
use crate::CliError;

/// Everything needed to rebuild a model bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub fixture: String,
    pub polynomial: HarmonicPolynomial,
    pub weight: HolderWeight,
    pub anchor: Vec<f64>,
    pub options: JumpOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredModel {
    pub id: String,
    pub spec: ModelSpec,
    pub summary: JumpModelSummary,
}

impl ModelSpec {
    pub fn id(&self) -> Result<String, CliError> {
        content_id(self)
    }

    pub fn build(&self) -> Result<JumpFunctionModel, CliError> {
        Ok(build_jump_function(
            &self.polynomial,
            &self.weight,
            &self.anchor,
            &self.options,
        )?)
    }
}

pub fn model_path(root: &Path, id: &str) -> PathBuf {
    root.join("models").join(format!("{id}.json"))
}

/// Writes the model file and records it in the run's manifest.
pub fn store(run: &mut Run, stored: &StoredModel) -> Result<(), CliError> {
    let dir = run.root().join("models");
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut bytes = serde_json::to_vec_pretty(
        &serde_json::to_value(stored).map_err(|e| CliError::Io(e.to_string()))?,
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    let path = model_path(run.root(), &stored.id);
    fs::write(&path, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    run.note_external(&format!("models/{}.json", stored.id), &bytes);
    Ok(())
}

/// Loads a stored model and rebuilds it, insisting the rebuild reproduces
/// the stored summary.
pub fn load(root: &Path, id: &str) -> Result<(StoredModel, JumpFunctionModel), CliError> {
    let path = model_path(root, id);
    let text = fs::read_to_string(&path).map_err(|_| {
        CliError::Config(format!(
            "no model '{id}' under {} (run `fb synth` first or check --output-dir)",
            root.join("models").display()
        ))
    })?;
    let stored: StoredModel = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("model file {}: {e}", path.display())))?;
    if stored.spec.id()? != id || stored.id != id {
        return Err(CliError::Config(format!(
            "model file {} does not match id {id}",
            path.display()
        )));
    }
    let model = stored.spec.build()?;
    if canonical(&model.summary())? != canonical(&stored.summary)? {
        return Err(CliError::Core(fb_core::Error::VerificationFailed(format!(
            "rebuilt model {id} differs from the stored summary"
        ))));
    }
    Ok((stored, model))
}

pub fn describe(stored: &StoredModel) -> serde_json::Value {
    json!({ "id": stored.id, "spec": stored.spec, "summary": stored.summary })
}
