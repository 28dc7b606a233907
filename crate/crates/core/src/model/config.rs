use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneProfile {
    /// Four single-block grouped-convolution stages, widths 64/128/256/512.
    Toy,
    /// ResNeXt-101 32x8d layout with blocks (3, 4, 23, 3).
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Baseline,
    Inist,
    InistSedst,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Baseline,
        AblationVariant::Inist,
        AblationVariant::InistSedst,
        AblationVariant::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Inist => "inist",
            Self::InistSedst => "inist_sedst",
            Self::Full => "full",
        }
    }

    pub fn uses_inist(self) -> bool {
        self != Self::Baseline
    }

    pub fn uses_sedst(self) -> bool {
        matches!(self, Self::InistSedst | Self::Full)
    }

    pub fn uses_assembly(self) -> bool {
        self == Self::Full
    }

    /// Row label in ablation tables.
    pub fn table_label(self) -> &'static str {
        match self {
            Self::Baseline => "Baseline",
            Self::Inist => "Baseline + IniST",
            Self::InistSedst => "Baseline + IniST + SedST",
            Self::Full => "Baseline + IniST + SedST + AI",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationVariant {
    type Err = MattingError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                MattingError::Config(format!(
                    "unknown ablation variant `{s}` (expected baseline, inist, inist_sedst or full)"
                ))
            })
    }
}

impl fmt::Display for BackboneProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Toy => "toy",
            Self::Full => "full",
        })
    }
}

impl FromStr for BackboneProfile {
    type Err = MattingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Self::Toy),
            "full" => Ok(Self::Full),
            _ => Err(MattingError::Config(format!(
                "unknown backbone profile `{s}` (expected toy or full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone_profile: BackboneProfile,
    pub ablation_variant: AblationVariant,
    pub aspp_channels: usize,
    pub aspp_rates: [usize; 3],
    pub ini_channels: usize,
    pub sed_channels: usize,
    pub ia_channels: usize,
    pub fuse_channels: usize,
    pub epsilon: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone_profile: BackboneProfile::Toy,
            ablation_variant: AblationVariant::Full,
            aspp_channels: 256,
            aspp_rates: [6, 12, 18],
            ini_channels: 64,
            sed_channels: 256,
            ia_channels: 256,
            fuse_channels: 64,
            epsilon: 1e-8,
            init_std: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(mut self, variant: AblationVariant) -> Self {
        self.ablation_variant = variant;
        self
    }

    pub fn with_profile(mut self, profile: BackboneProfile) -> Self {
        self.backbone_profile = profile;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("aspp_channels", self.aspp_channels),
            ("ini_channels", self.ini_channels),
            ("sed_channels", self.sed_channels),
            ("ia_channels", self.ia_channels),
            ("fuse_channels", self.fuse_channels),
        ];
        for (name, v) in widths {
            if v == 0 {
                return Err(MattingError::Config(format!("{name} must be positive")));
            }
        }
        if self.aspp_rates.contains(&0) {
            return Err(MattingError::Config("aspp_rates must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1e-2) {
            return Err(MattingError::Config(format!(
                "epsilon must lie in (0, 0.01), got {}",
                self.epsilon
            )));
        }
        if self.init_std.is_nan() || self.init_std <= 0.0 {
            return Err(MattingError::Config("init_std must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in AblationVariant::ALL {
            assert_eq!(v.as_str().parse::<AblationVariant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{v}\""));
        }
        assert!("everything".parse::<AblationVariant>().is_err());
    }

    #[test]
    fn variant_feature_flags_nest() {
        use AblationVariant::*;
        assert!(!Baseline.uses_inist() && !Baseline.uses_sedst() && !Baseline.uses_assembly());
        assert!(Inist.uses_inist() && !Inist.uses_sedst());
        assert!(InistSedst.uses_sedst() && !InistSedst.uses_assembly());
        assert!(Full.uses_inist() && Full.uses_sedst() && Full.uses_assembly());
    }
}
