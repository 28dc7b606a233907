use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};
use crate::losses::L1Reduction;
use crate::model::{AblationVariant, BackboneProfile, ModelConfig, INPUT_MULTIPLE};

/// Flat run configuration. Missing keys take the desk-scale defaults;
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub poly_power: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub crop_sizes: Vec<usize>,
    pub target_size: usize,
    pub flip_prob: f64,
    pub seed: u64,
    pub backbone_profile: BackboneProfile,
    pub ablation_variant: AblationVariant,
    pub epsilon: f64,
    pub init_std: f64,
    pub l1_reduction: L1ReductionName,
    /// Training manifest (JSON lines).
    pub manifest: PathBuf,
    /// Optional manifest scored after every epoch.
    pub eval_manifest: Option<PathBuf>,
    /// Optional safetensors file with pretrained backbone weights.
    pub backbone_weights: Option<PathBuf>,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum L1ReductionName {
    #[default]
    Mean,
    Sum,
}

impl From<L1ReductionName> for L1Reduction {
    fn from(v: L1ReductionName) -> Self {
        match v {
            L1ReductionName::Mean => L1Reduction::Mean,
            L1ReductionName::Sum => L1Reduction::Sum,
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainingConfig {
    /// Toy backbone on 128×128 crops.
    pub fn desk() -> Self {
        Self {
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            poly_power: 0.9,
            epochs: 20,
            batch_size: 4,
            crop_sizes: vec![128],
            target_size: 128,
            flip_prob: 0.5,
            seed: 0,
            backbone_profile: BackboneProfile::Toy,
            ablation_variant: AblationVariant::Full,
            epsilon: 1e-8,
            init_std: 0.01,
            l1_reduction: L1ReductionName::Mean,
            manifest: PathBuf::from("data/train.jsonl"),
            eval_manifest: None,
            backbone_weights: None,
            checkpoint_every: 1,
        }
    }

    /// The full-scale recipe: ResNeXt-101 layout, 512/640/800 crops resized
    /// to 512.
    pub fn full_scale() -> Self {
        Self {
            crop_sizes: vec![512, 640, 800],
            target_size: 512,
            backbone_profile: BackboneProfile::Full,
            ..Self::desk()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            backbone_profile: self.backbone_profile,
            ablation_variant: self.ablation_variant,
            epsilon: self.epsilon,
            init_std: self.init_std,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr0", self.lr0),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("poly_power", self.poly_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MattingError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(MattingError::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(MattingError::Config(format!(
                "flip_prob must lie in [0, 1], got {}",
                self.flip_prob
            )));
        }
        if self.target_size == 0 || !self.target_size.is_multiple_of(INPUT_MULTIPLE) {
            return Err(MattingError::Config(format!(
                "target_size must be a positive multiple of {INPUT_MULTIPLE}, got {}",
                self.target_size
            )));
        }
        if self.crop_sizes.is_empty() {
            return Err(MattingError::Config("crop_sizes must not be empty".into()));
        }
        if let Some(c) = self.crop_sizes.iter().find(|&&c| c < self.target_size) {
            return Err(MattingError::Config(format!(
                "crop size {c} is smaller than target_size {}",
                self.target_size
            )));
        }
        self.model_config().validate()
    }

    /// Parses a TOML document, applies `key=value` overrides (values parsed
    /// as TOML, falling back to plain strings), and validates the result.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| MattingError::Config(format!("invalid TOML: {e}")))?;
        for (key, raw) in overrides {
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            table.insert(key.clone(), value);
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| MattingError::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(MattingError::io(path))?;
        Self::from_toml_with_overrides(&text, overrides).map_err(|e| match e {
            MattingError::Config(m) => MattingError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
