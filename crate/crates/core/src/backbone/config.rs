use serde::{Deserialize, Serialize};

use super::layers::{Activation, Conv1dShape};
use crate::error::{Result, TvfError};
use crate::filter::{BandPlan, FRAME_LEN};

/// Shape and preprocessing of the controller network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub frame_len: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_padding: usize,
    /// Output channels of each conv layer; the input has one channel.
    pub conv_channels: Vec<usize>,
    pub activation: Activation,
    pub gru_layers: usize,
    pub hidden: usize,
    /// Floor inside `log(eps + |X|)` applied to the input spectrum.
    pub feature_eps: f64,
    pub hann_window: bool,
    pub band_plan: BandPlan,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            frame_len: FRAME_LEN,
            conv_kernel: 5,
            conv_stride: 2,
            conv_padding: 2,
            conv_channels: vec![4, 4],
            activation: Activation::Relu,
            gru_layers: 2,
            hidden: 256,
            feature_eps: 1e-5,
            hann_window: true,
            band_plan: BandPlan::default_plan(),
        }
    }
}

impl BackboneConfig {
    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn num_bands(&self) -> usize {
        self.band_plan.len()
    }

    pub fn head_outputs(&self) -> usize {
        3 * self.num_bands()
    }

    pub fn conv_shapes(&self) -> Vec<Conv1dShape> {
        let mut shapes = Vec::with_capacity(self.conv_channels.len());
        let (mut ch, mut len) = (1, self.num_bins());
        for &out in &self.conv_channels {
            let s = Conv1dShape {
                in_channels: ch,
                out_channels: out,
                kernel: self.conv_kernel,
                stride: self.conv_stride,
                padding: self.conv_padding,
                in_len: len,
            };
            ch = out;
            len = s.out_len();
            shapes.push(s);
        }
        shapes
    }

    /// Width of the flattened conv output fed to the first GRU layer.
    pub fn feature_dim(&self) -> usize {
        self.conv_shapes().last().map_or(self.num_bins(), Conv1dShape::out_cols)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TvfError::Config(m));
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return bad(format!("frame_len must be even and >= 2, got {}", self.frame_len));
        }
        if self.conv_kernel == 0 || self.conv_stride == 0 {
            return bad("conv kernel and stride must be positive".into());
        }
        if self.conv_channels.contains(&0) {
            return bad("conv channel counts must be positive".into());
        }
        let mut len = self.num_bins();
        for _ in &self.conv_channels {
            if len + 2 * self.conv_padding < self.conv_kernel {
                return bad(format!("conv kernel {} longer than padded input {len}", self.conv_kernel));
            }
            len = (len + 2 * self.conv_padding - self.conv_kernel) / self.conv_stride + 1;
        }
        if self.gru_layers == 0 || self.hidden == 0 {
            return bad("the GRU needs at least one layer and a positive hidden size".into());
        }
        if !(self.feature_eps > 0.0 && self.feature_eps.is_finite()) {
            return bad(format!("feature_eps must be positive, got {}", self.feature_eps));
        }
        self.band_plan.validate()
    }
}
