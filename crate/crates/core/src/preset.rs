//! Platform presets and summary targets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::AspectRatio;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid summary spec: {0}")]
    Invalid(String),
}

/// Named duration cap and aspect ratio for one sharing destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformPreset {
    pub id: String,
    pub label: String,
    /// Seconds.
    pub max_duration: f64,
    pub aspect: AspectRatio,
}

impl PlatformPreset {
    pub fn new(id: &str, label: &str, max_duration: f64, aspect: AspectRatio) -> Result<Self, SpecError> {
        if !(max_duration > 0.0 && max_duration.is_finite()) {
            return Err(SpecError::Invalid(format!("preset {id}: duration must be positive")));
        }
        if id.trim().is_empty() {
            return Err(SpecError::Invalid("preset id must not be empty".into()));
        }
        Ok(Self {
            id: id.to_string(),
            label: label.to_string(),
            max_duration,
            aspect,
        })
    }

    /// Parses `label | seconds | W:H`, the value side of a preset config
    /// line.
    pub fn parse_config(id: &str, value: &str) -> Result<Self, SpecError> {
        let parts: Vec<&str> = value.split('|').map(str::trim).collect();
        let [label, secs, aspect] = parts[..] else {
            return Err(SpecError::Invalid(format!(
                "preset {id}: expected `label | seconds | W:H`, got {value:?}"
            )));
        };
        let secs: f64 = secs
            .parse()
            .map_err(|_| SpecError::Invalid(format!("preset {id}: bad duration {secs:?}")))?;
        let aspect: AspectRatio = aspect
            .parse()
            .map_err(|e| SpecError::Invalid(format!("preset {id}: {e}")))?;
        Self::new(id, label, secs, aspect)
    }
}

/// Presets shipped with the tool. Anything beyond these belongs in config.
pub fn builtin_presets() -> Vec<PlatformPreset> {
    vec![
        PlatformPreset::new("facebook-feed", "Facebook feed", 120.0, AspectRatio::LANDSCAPE_16_9).unwrap(),
        PlatformPreset::new("facebook-story", "Facebook story", 20.0, AspectRatio::PORTRAIT_9_16).unwrap(),
        PlatformPreset::new("instagram-story", "Instagram story", 20.0, AspectRatio::PORTRAIT_9_16).unwrap(),
    ]
}

/// Ordered preset collection; later insertions replace same-id entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetRegistry {
    presets: Vec<PlatformPreset>,
}

impl Default for PresetRegistry {
    fn default() -> Self {
        Self {
            presets: builtin_presets(),
        }
    }
}

impl PresetRegistry {
    pub fn empty() -> Self {
        Self { presets: Vec::new() }
    }

    pub fn insert(&mut self, preset: PlatformPreset) {
        match self.presets.iter_mut().find(|p| p.id == preset.id) {
            Some(slot) => *slot = preset,
            None => self.presets.push(preset),
        }
    }

    pub fn get(&self, id: &str) -> Option<&PlatformPreset> {
        self.presets.iter().find(|p| p.id == id)
    }

    pub fn all(&self) -> &[PlatformPreset] {
        &self.presets
    }

    pub fn resolve(&self, id: &str) -> Result<SummarySpec, SpecError> {
        self.get(id)
            .map(SummarySpec::from_preset)
            .ok_or_else(|| SpecError::UnknownPreset(id.to_string()))
    }
}

/// What the produced summary must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySpec {
    /// Seconds.
    pub target_duration: f64,
    pub aspect: AspectRatio,
    /// Preset id, or `"custom"`.
    pub origin: String,
}

impl SummarySpec {
    pub fn custom(target_duration: f64, aspect: AspectRatio) -> Result<Self, SpecError> {
        if !(target_duration > 0.0 && target_duration.is_finite()) {
            return Err(SpecError::Invalid(format!(
                "duration must be positive, got {target_duration}"
            )));
        }
        Ok(Self {
            target_duration,
            aspect,
            origin: "custom".into(),
        })
    }

    pub fn from_preset(p: &PlatformPreset) -> Self {
        Self {
            target_duration: p.max_duration,
            aspect: p.aspect,
            origin: p.id.clone(),
        }
    }
}
