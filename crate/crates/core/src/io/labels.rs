//! TOML label sidecar stored next to each capture.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{Environment, Illumination, LabelSet, SceneType};
use crate::error::{Error, Result};
use crate::io::spsi::write_atomic;

/// Labels plus free-form notes and the capture-rig identifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSidecar {
    pub environment: Environment,
    pub illumination: Illumination,
    pub capture_time: String,
    pub scene_type: SceneType,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub rig: String,
}

impl LabelSidecar {
    pub fn new(labels: LabelSet) -> Self {
        Self {
            environment: labels.environment,
            illumination: labels.illumination,
            capture_time: labels.capture_time,
            scene_type: labels.scene_type,
            notes: String::new(),
            rig: String::new(),
        }
    }

    pub fn labels(&self) -> LabelSet {
        LabelSet {
            environment: self.environment,
            illumination: self.illumination,
            capture_time: self.capture_time.clone(),
            scene_type: self.scene_type,
        }
    }

    fn validate(&self) -> Result<()> {
        self.capture_time
            .parse::<toml::value::Datetime>()
            .map(|_| ())
            .map_err(|e| {
                Error::Schema(format!(
                    "field `capture_time`: {:?} is not an ISO-8601 timestamp ({e})",
                    self.capture_time
                ))
            })
    }
}

pub fn labels_to_string(sidecar: &LabelSidecar) -> Result<String> {
    sidecar.validate()?;
    toml::to_string(sidecar).map_err(|e| Error::Schema(e.to_string()))
}

pub fn labels_from_str(text: &str) -> Result<LabelSidecar> {
    let s: LabelSidecar = toml::from_str(text).map_err(|e| Error::Schema(e.message().to_string()))?;
    s.validate()?;
    Ok(s)
}

pub fn write_labels(path: impl AsRef<Path>, sidecar: &LabelSidecar) -> Result<()> {
    write_atomic(path.as_ref(), labels_to_string(sidecar)?.as_bytes())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelSidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    labels_from_str(&text)
}
