use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network dimensions. All extents are positive; the blank symbol takes the
/// last output index (`vocab_size`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Per-frame feature width.
    pub input_dim: usize,
    /// Consecutive input frames stacked into one encoder step.
    pub frame_stack: usize,
    pub encoder_layers: usize,
    /// Number of encoder layers that run before the stride-2 stacking, or
    /// `None` for no time reduction inside the encoder.
    pub encoder_stride_after: Option<usize>,
    pub lm_layers: usize,
    pub hidden_units: usize,
    pub projection_units: usize,
    pub joint_hidden: usize,
    /// Grapheme count, excluding blank.
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 8,
            frame_stack: 3,
            encoder_layers: 2,
            encoder_stride_after: Some(1),
            lm_layers: 1,
            hidden_units: 48,
            projection_units: 24,
            joint_hidden: 32,
            vocab_size: 28,
        }
    }
}

impl ModelConfig {
    /// The production-scale shape: 8 encoder layers with stride after the
    /// second, 2 LM layers, 2048 cells projected to 640, 80-dim features
    /// stacked by 3, 75 graphemes.
    pub fn production() -> Self {
        Self {
            input_dim: 80,
            frame_stack: 3,
            encoder_layers: 8,
            encoder_stride_after: Some(2),
            lm_layers: 2,
            hidden_units: 2048,
            projection_units: 640,
            joint_hidden: 640,
            vocab_size: 75,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("frame_stack", self.frame_stack),
            ("encoder_layers", self.encoder_layers),
            ("lm_layers", self.lm_layers),
            ("hidden_units", self.hidden_units),
            ("projection_units", self.projection_units),
            ("joint_hidden", self.joint_hidden),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if let Some(s) = self.encoder_stride_after {
            if s == 0 || s >= self.encoder_layers {
                return Err(Error::InvalidArgument(format!(
                    "encoder_stride_after must be in 1..{}, got {s}",
                    self.encoder_layers
                )));
            }
        }
        Ok(())
    }

    pub fn blank(&self) -> usize {
        self.vocab_size
    }

    pub fn output_size(&self) -> usize {
        self.vocab_size + 1
    }

    /// Input width of encoder layer `layer`.
    pub fn encoder_input_width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim * self.frame_stack
        } else if self.encoder_stride_after == Some(layer) {
            2 * self.projection_units
        } else {
            self.projection_units
        }
    }

    /// Encoder steps produced for `frames` input frames.
    pub fn encoded_length(&self, frames: usize) -> usize {
        let stacked = frames.div_ceil(self.frame_stack);
        if self.encoder_stride_after.is_some() {
            stacked / 2
        } else {
            stacked
        }
    }

    /// Total time compression from input frames to encoder steps.
    pub fn time_reduction(&self) -> usize {
        self.frame_stack * if self.encoder_stride_after.is_some() { 2 } else { 1 }
    }
}
