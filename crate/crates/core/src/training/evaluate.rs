//! Held-out denoising scores.

use serde::Serialize;

use super::metrics::si_sdr;
use super::pipeline::enhance;
use super::synth::Mixture;
use crate::backbone::{BackboneWeights, ControlMode};
use crate::error::{Result, TvfError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoiseReport {
    pub items: usize,
    pub noisy_si_sdr_db: f64,
    pub enhanced_si_sdr_db: f64,
    /// Mean over items of enhanced minus noisy SI-SDR.
    pub improvement_db: f64,
}

pub fn denoise_report(weights: &BackboneWeights, mode: &dyn ControlMode, items: &[Mixture]) -> Result<DenoiseReport> {
    if items.is_empty() {
        return Err(TvfError::Empty("no evaluation items".into()));
    }
    let (mut noisy, mut enhanced) = (0.0, 0.0);
    for m in items {
        noisy += si_sdr(&m.noisy, &m.clean)?;
        enhanced += si_sdr(&enhance(weights, mode, &m.noisy, "serial")?, &m.clean)?;
    }
    let n = items.len() as f64;
    Ok(DenoiseReport {
        items: items.len(),
        noisy_si_sdr_db: noisy / n,
        enhanced_si_sdr_db: enhanced / n,
        improvement_db: (enhanced - noisy) / n,
    })
}
