//! Model files (TOML) and bundled presets.

use serde::{Deserialize, Serialize};

use crate::discrete::{CostFunction, DiscreteModel};
use crate::error::{Error, Result};
use crate::model::{Primitives, TypeDistribution, ValueFunction};

/// On-disk model description.
///
/// Top-level keys: `name` (optional), `x_lo`, `x_hi`, `delta` (default 0.9).
/// Tables: `[value]` (required), `[dist]` for continuous models,
/// `[discrete]` with `types`, `probs`, `free_disposal` and an optional
/// `[discrete.cost]` table for discrete ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub x_lo: f64,
    pub x_hi: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub value: ValueFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<TypeDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteBlock {
    pub types: Vec<f64>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub free_disposal: bool,
    #[serde(default)]
    pub cost: CostFunction,
}

fn default_delta() -> f64 {
    0.9
}

impl ModelFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model file serializes")
    }

    pub fn primitives(&self) -> Result<Primitives> {
        let dist = self.dist.clone().ok_or_else(|| Error::Invalid("model has no [dist] table".into()))?;
        Primitives::new(self.value.clone(), dist, self.x_lo, self.x_hi, self.delta)
    }

    pub fn discrete_model(&self) -> Result<DiscreteModel> {
        let d = self.discrete.as_ref().ok_or_else(|| Error::Invalid("model has no [discrete] table".into()))?;
        DiscreteModel::new(
            d.types.clone(),
            d.probs.clone(),
            self.value.clone(),
            self.x_lo,
            self.x_hi,
            d.free_disposal,
            d.cost.clone(),
        )
    }
}

pub const PRESET_NAMES: [&str; 9] =
    ["cm", "rm", "three-type", "three-type-disposal", "three-type-cost", "marketing", "saas", "data", "land"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "cm" => include_str!("../presets/cm.toml"),
        "rm" => include_str!("../presets/rm.toml"),
        "three-type" => include_str!("../presets/three-type.toml"),
        "three-type-disposal" => include_str!("../presets/three-type-disposal.toml"),
        "three-type-cost" => include_str!("../presets/three-type-cost.toml"),
        "marketing" => include_str!("../presets/marketing.toml"),
        "saas" => include_str!("../presets/saas.toml"),
        "data" => include_str!("../presets/data.toml"),
        "land" => include_str!("../presets/land.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ModelFile> {
    let text = preset_text(name)
        .ok_or_else(|| Error::Invalid(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", "))))?;
    ModelFile::from_toml(text)
}
