use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPSILON: f64 = 1e-5;

/// Shape of the encoder-decoder forecaster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub head_count: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub conv_kernel_width: usize,
    pub pool_range: usize,
    pub context_length: usize,
    pub horizon_length: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            head_count: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            conv_kernel_width: 3,
            pool_range: 3,
            context_length: 24,
            horizon_length: 6,
        }
    }
}

impl TransformerConfig {
    /// A tiny configuration for tests and gradient checks.
    pub fn tiny() -> Self {
        Self {
            d_model: 8,
            head_count: 2,
            encoder_layers: 2,
            decoder_layers: 2,
            conv_kernel_width: 3,
            pool_range: 3,
            context_length: 8,
            horizon_length: 3,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.head_count
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.head_count == 0 {
            return fail("d_model and head_count must be positive".into());
        }
        if self.d_model % self.head_count != 0 {
            return fail(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.head_count
            ));
        }
        if self.d_model % 2 != 0 {
            return fail(format!("d_model must be even, got {}", self.d_model));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return fail("need at least one encoder and one decoder layer".into());
        }
        if self.conv_kernel_width % 2 == 0 || self.pool_range % 2 == 0 {
            return fail("conv kernel width and pool range must be odd".into());
        }
        if self.context_length == 0 || self.horizon_length == 0 {
            return fail("context and horizon lengths must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        TransformerConfig::default().validate().unwrap();
        TransformerConfig::tiny().validate().unwrap();
    }

    #[test]
    fn rejects_indivisible_heads() {
        let c = TransformerConfig {
            head_count: 3,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = TransformerConfig {
            pool_range: 2,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
