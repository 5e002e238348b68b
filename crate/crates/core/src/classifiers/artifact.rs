//! Model files: a JSON header plus base64 little-endian `f64` blobs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, LogRegModel, MlpModel, TrainedModel};
use crate::corpus::GenreLabel;
use crate::features::FeatureSpace;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub kind: String,
    pub label_order: Vec<GenreLabel>,
    pub dim: usize,
    pub feature_space: String,
    #[serde(default)]
    pub hidden: usize,
    #[serde(default)]
    pub dropout_p: f64,
    pub params: BTreeMap<String, String>,
}

fn encode(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(s: &str) -> Result<Vec<f64>, ClassifierError> {
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| ClassifierError::Artifact(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(ClassifierError::Artifact("blob length not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl ModelArtifact {
    pub fn from_model(model: &TrainedModel, space_fingerprint: &str) -> Self {
        let mut params = BTreeMap::new();
        let (dim, hidden, dropout_p) = match model {
            TrainedModel::LogReg(m) => {
                params.insert("weights".into(), encode(&m.weights));
                params.insert("bias".into(), encode(&m.bias));
                (m.dim, 0, 0.0)
            }
            TrainedModel::Mlp(m) => {
                params.insert("w1".into(), encode(&m.w1));
                params.insert("b1".into(), encode(&m.b1));
                params.insert("w2".into(), encode(&m.w2));
                params.insert("b2".into(), encode(&m.b2));
                (m.dim, m.hidden, m.dropout_p)
            }
        };
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            kind: model.kind().to_string(),
            label_order: GenreLabel::GENRES.to_vec(),
            dim,
            feature_space: space_fingerprint.to_string(),
            hidden,
            dropout_p,
            params,
        }
    }

    /// Rebuilds the model, verifying schema, label order and the paired
    /// feature-space fingerprint.
    pub fn into_model(self, space_fingerprint: &str) -> Result<TrainedModel, ClassifierError> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ClassifierError::Artifact(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        if self.label_order != GenreLabel::GENRES {
            return Err(ClassifierError::Artifact("label order differs from schema".into()));
        }
        if self.feature_space != space_fingerprint {
            return Err(ClassifierError::FingerprintMismatch {
                expected: self.feature_space,
                got: space_fingerprint.to_string(),
            });
        }
        let blob = |name: &str| {
            self.params
                .get(name)
                .ok_or_else(|| ClassifierError::Artifact(format!("missing parameter {name}")))
                .and_then(|s| decode(s))
        };
        match self.kind.as_str() {
            "logreg" => Ok(LogRegModel::from_parts(blob("weights")?, blob("bias")?, self.dim)?.into()),
            "mlp" => Ok(MlpModel::from_parts(
                self.dim,
                self.hidden,
                self.dropout_p,
                blob("w1")?,
                blob("b1")?,
                blob("w2")?,
                blob("b2")?,
            )?
            .into()),
            other => Err(ClassifierError::Artifact(format!("unknown model kind {other}"))),
        }
    }
}

pub fn save_model(model: &TrainedModel, space: &FeatureSpace, path: &Path) -> Result<(), ClassifierError> {
    let art = ModelArtifact::from_model(model, space.fingerprint());
    let json = serde_json::to_string(&art).map_err(|e| ClassifierError::Artifact(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path, space: &FeatureSpace) -> Result<TrainedModel, ClassifierError> {
    let text = fs::read_to_string(path)?;
    let art: ModelArtifact = serde_json::from_str(&text).map_err(|e| ClassifierError::Artifact(e.to_string()))?;
    art.into_model(space.fingerprint())
}
