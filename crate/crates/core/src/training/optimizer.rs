use serde::{Deserialize, Serialize};

use crate::autodiff::GradientBundle;
use crate::backbone::BackboneWeights;
use crate::error::{Result, TvfError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 4,
            epochs: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TvfError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(TvfError::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(TvfError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TvfError::Config("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one vector per weight tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamMoments {
    pub fn zeros_like(weights: &BackboneWeights) -> Self {
        let z: Vec<Vec<f64>> = weights.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        AdamMoments { m: z.clone(), v: z }
    }
}

/// Bias-corrected Adam update for step `t` (1-based). Nothing is modified
/// when a gradient is non-finite.
pub fn adam_step(
    weights: &mut BackboneWeights,
    grads: &GradientBundle,
    moments: &mut AdamMoments,
    config: &OptimizerConfig,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(TvfError::InvalidParameter("Adam steps are counted from 1".into()));
    }
    if grads.tensors.len() != weights.tensors.len()
        || grads.tensors.iter().zip(&weights.tensors).any(|(g, w)| g.data.len() != w.data.len())
    {
        return Err(TvfError::LengthMismatch("gradient bundle does not match the weights".into()));
    }
    grads.check_finite()?;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (i, (w, g)) in weights.tensors.iter_mut().zip(&grads.tensors).enumerate() {
        let (m, v) = (&mut moments.m[i], &mut moments.v[i]);
        for j in 0..w.data.len() {
            let gj = g.data[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            w.data[j] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{BackboneConfig, BackboneWeights};
    use crate::filter::BandPlan;

    fn tiny() -> BackboneWeights {
        let config = BackboneConfig {
            frame_len: 16,
            conv_channels: vec![1],
            hidden: 2,
            gru_layers: 1,
            band_plan: BandPlan::default_plan().truncated(1).unwrap(),
            ..BackboneConfig::default()
        };
        BackboneWeights::init(config, 0, 0.1).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = tiny();
        let before = w.clone();
        let mut mo = AdamMoments::zeros_like(&w);
        mo.m[0][0] = 1.0;
        mo.v[0][0] = 1.0;
        let g = GradientBundle::zeros_like(&w);
        adam_step(&mut w, &g, &mut mo, &OptimizerConfig::default(), 1).unwrap();
        // the stale moment still moves its own entry; every other weight is fixed
        assert_eq!(w.tensors[1..], before.tensors[1..]);
        assert_eq!(mo.m[0][0], 0.9);
        assert_eq!(mo.v[0][0], 0.999);
    }

    #[test]
    fn first_step_is_learning_rate() {
        let mut w = tiny();
        let before = w.tensors[0].data[0];
        let mut g = GradientBundle::zeros_like(&w);
        g.tensors[0].data[0] = 1.0;
        let mut mo = AdamMoments::zeros_like(&w);
        adam_step(&mut w, &g, &mut mo, &OptimizerConfig::default(), 1).unwrap();
        let dw = w.tensors[0].data[0] - before;
        assert!((dw + 1e-3).abs() < 1e-6, "{dw}");
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut w = tiny();
        let before = w.clone();
        let mut g = GradientBundle::zeros_like(&w);
        g.tensors[2].data[0] = f64::NAN;
        let mut mo = AdamMoments::zeros_like(&w);
        match adam_step(&mut w, &g, &mut mo, &OptimizerConfig::default(), 1) {
            Err(TvfError::NonFinite { what, .. }) => assert!(what.contains(&w.tensors[2].name)),
            other => panic!("{other:?}"),
        }
        assert_eq!(w, before);
    }
}
