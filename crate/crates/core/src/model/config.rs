use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Reconstruction head used at the end of BODY.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadVariant {
    /// A single 3×3 sub-pixel convolution.
    Subpixel,
    /// Multi-kernel sub-pixel branches fused by trainable scalar weights.
    Awms,
    /// Multi-kernel sub-pixel branches fused by concatenation and a 1×1 conv.
    Afsl,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 3] = [HeadVariant::Subpixel, HeadVariant::Awms, HeadVariant::Afsl];

    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::Subpixel => "subpixel",
            HeadVariant::Awms => "awms",
            HeadVariant::Afsl => "afsl",
        }
    }
}

/// Architectural hyper-parameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub scale: usize,
    pub n_adru: usize,
    pub n_adrb_per_adru: usize,
    pub n_units_per_adrb: usize,
    pub feats: usize,
    /// Channel multiplier inside a conv unit (wide activation).
    pub expansion: usize,
    pub skip_kernel: usize,
    pub afsl_kernels: Vec<usize>,
    pub leaky_slope: f64,
    pub head_variant: HeadVariant,
    pub dense_connections: bool,
    pub adaptive_weights: bool,
    pub adaptive_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scale: 2,
            n_adru: 4,
            n_adrb_per_adru: 4,
            n_units_per_adrb: 4,
            feats: 128,
            expansion: 3,
            skip_kernel: 5,
            afsl_kernels: vec![3, 5, 7, 9],
            leaky_slope: 0.2,
            head_variant: HeadVariant::Afsl,
            dense_connections: true,
            adaptive_weights: true,
            adaptive_init: 1.0,
        }
    }
}

impl ModelConfig {
    /// A single-ADRU network of the given width, everything else default.
    pub fn tiny(scale: usize, feats: usize) -> Self {
        ModelConfig { scale, feats, n_adru: 1, ..Default::default() }
    }

    /// Sub-pixel stages used by SKIP: one stage for ×2/×3, two ×2 stages for ×4.
    pub fn skip_stages(&self) -> Vec<usize> {
        match self.scale {
            4 => vec![2, 2],
            r => vec![r],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 2..=4) {
            return Err(config_err!("model.scale must be 2, 3 or 4, got {}", self.scale));
        }
        for (field, v) in [
            ("n_adru", self.n_adru),
            ("n_adrb_per_adru", self.n_adrb_per_adru),
            ("n_units_per_adrb", self.n_units_per_adrb),
            ("feats", self.feats),
            ("expansion", self.expansion),
        ] {
            if v == 0 {
                return Err(config_err!("model.{field} must be at least 1"));
            }
        }
        if self.feats.checked_mul(self.expansion).is_none_or(|c| c > u32::MAX as usize) {
            return Err(config_err!("model.expansion × model.feats overflows"));
        }
        if self.skip_kernel % 2 == 0 {
            return Err(config_err!("model.skip_kernel must be odd, got {}", self.skip_kernel));
        }
        if self.afsl_kernels.is_empty() {
            return Err(config_err!("model.afsl_kernels must not be empty"));
        }
        if let Some(k) = self.afsl_kernels.iter().find(|&&k| k % 2 == 0) {
            return Err(config_err!("model.afsl_kernels must all be odd, got {k}"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(config_err!("model.leaky_slope must lie in (0, 1), got {}", self.leaky_slope));
        }
        if !self.adaptive_init.is_finite() {
            return Err(config_err!("model.adaptive_init must be finite"));
        }
        if self.adaptive_weights && !self.dense_connections {
            return Err(config_err!(
                "model.adaptive_weights requires model.dense_connections (adaptivity is defined on the dense topology)"
            ));
        }
        Ok(())
    }
}
