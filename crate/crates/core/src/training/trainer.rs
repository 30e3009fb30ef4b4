use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::DataSource;
use super::loss::{LossConfig, SpectralLoss};
use super::optimizer::{adam_step, AdamMoments, OptimizerConfig};
use super::pipeline::{enhance, record_pipeline};
use crate::autodiff::tape::Tape;
use crate::backbone::{BackboneConfig, BackboneWeights, ControlMode};
use crate::engine::ENGINE_NAMES;
use crate::error::{Result, TvfError};
use crate::tensor::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps_per_epoch: usize,
    /// Clip length in frames.
    pub clip_frames: usize,
    pub validation_items: usize,
    pub validate_every: usize,
    pub init_noise: f64,
    pub engine: String,
    /// GRU gradient truncation in frames; 0 backpropagates through the whole clip.
    pub bptt_horizon: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub backbone: BackboneConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            steps_per_epoch: 50,
            clip_frames: 16,
            validation_items: 8,
            validate_every: 50,
            init_noise: crate::backbone::DEFAULT_INIT_NOISE,
            engine: "systolic".into(),
            bptt_horizon: 0,
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            backbone: BackboneConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch * self.optimizer.epochs
    }

    pub fn clip_len(&self) -> usize {
        self.clip_frames * self.backbone.frame_len
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.loss.validate()?;
        self.backbone.validate()?;
        if self.steps_per_epoch == 0 || self.clip_frames == 0 || self.validate_every == 0 {
            return Err(TvfError::Config(
                "steps_per_epoch, clip_frames and validate_every must be positive".into(),
            ));
        }
        if self.clip_len() < self.loss.min_len() {
            return Err(TvfError::Config(format!(
                "a {}-sample clip is shorter than the largest loss fft size {}",
                self.clip_len(),
                self.loss.min_len()
            )));
        }
        if !ENGINE_NAMES.contains(&self.engine.as_str()) {
            return Err(TvfError::Config(format!(
                "unknown engine '{}' (known: {})",
                self.engine,
                ENGINE_NAMES.join(", ")
            )));
        }
        if !(self.init_noise >= 0.0) {
            return Err(TvfError::Config(format!("init_noise must be >= 0, got {}", self.init_noise)));
        }
        Ok(())
    }

    /// Parses TOML, reporting every unrecognized key at once.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| TvfError::Config(e.message().to_string()))?;
        let reference = toml::Table::try_from(TrainConfig::default()).map_err(|e| TvfError::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &reference, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(TvfError::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let config: TrainConfig = toml::from_str(text).map_err(|e| TvfError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn unknown_keys(user: &toml::Table, reference: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (reference.get(k), v) {
            (None, _) => out.push(path),
            (Some(toml::Value::Table(r)), toml::Value::Table(u)) => unknown_keys(u, r, &path, out),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_ms: f64,
}

/// Comma-separated history with a header row; empty cells for skipped validation.
pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("step,train_loss,val_loss,wall_ms\n");
    for r in rows {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{:.3}\n", r.step, r.train_loss, val, r.wall_ms));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights with the lowest validation loss seen.
    pub best: BackboneWeights,
    pub best_val_loss: f64,
    pub last: BackboneWeights,
    pub history: Vec<HistoryRow>,
}

fn to_batch(items: &[super::synth::Mixture]) -> (Mat, Mat) {
    let noisy: Vec<Vec<f64>> = items.iter().map(|m| m.noisy.clone()).collect();
    let clean: Vec<Vec<f64>> = items.iter().map(|m| m.clean.clone()).collect();
    (Mat::from_rows(&noisy), Mat::from_rows(&clean))
}

/// Mean total loss of the inference path over a set of mixtures.
pub fn validation_loss(
    weights: &BackboneWeights,
    mode: &dyn ControlMode,
    items: &[super::synth::Mixture],
    loss: &LossConfig,
) -> Result<f64> {
    let l = SpectralLoss::new(loss)?;
    let mut total = 0.0;
    for m in items {
        let y = enhance(weights, mode, &m.noisy, "serial")?;
        total += l.total(&y, &m.clean)?;
    }
    Ok(total / items.len().max(1) as f64)
}

pub fn train(config: &TrainConfig, mode: &dyn ControlMode, data: &mut dyn DataSource) -> Result<TrainOutcome> {
    train_observed(config, mode, data, &mut |_| {})
}

/// As [`train`], calling `observer` after every step.
pub fn train_observed(
    config: &TrainConfig,
    mode: &dyn ControlMode,
    data: &mut dyn DataSource,
    observer: &mut dyn FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut weights = BackboneWeights::init(config.backbone.clone(), config.seed, config.init_noise)?;
    let mut moments = AdamMoments::zeros_like(&weights);
    let clip = config.clip_len();
    let val = data.validation_set(config.validation_items, clip)?;
    let mut best = weights.clone();
    let mut best_val = f64::INFINITY;
    let mut history = Vec::with_capacity(config.total_steps());
    let total = config.total_steps();
    for step in 0..total {
        let items = data.train_batch(step, config.optimizer.batch_size, clip)?;
        let (noisy, clean) = to_batch(&items);
        let (loss, grads) = {
            let mut tape = Tape::new(&weights);
            let id = record_pipeline(
                &mut tape,
                mode,
                &noisy,
                &clean,
                &config.engine,
                &config.loss,
                config.bptt_horizon,
            )
            .map_err(|e| at_step(e, step))?;
            let loss = tape.value(id).data[0];
            let grads = tape.backward(id).map_err(|e| at_step(e, step))?;
            (loss, grads.params)
        };
        if !loss.is_finite() {
            return Err(TvfError::non_finite(format!("training loss at step {step}"), step));
        }
        adam_step(&mut weights, &grads, &mut moments, &config.optimizer, step as u64 + 1)
            .map_err(|e| at_step(e, step))?;
        let last = step + 1 == total;
        let val_loss = if !val.is_empty() && ((step + 1) % config.validate_every == 0 || last) {
            let v = validation_loss(&weights, mode, &val, &config.loss)?;
            if v < best_val {
                best_val = v;
                best = weights.clone();
            }
            Some(v)
        } else {
            None
        };
        let row = HistoryRow {
            step,
            train_loss: loss,
            val_loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer(&row);
        history.push(row);
    }
    if val.is_empty() {
        best = weights.clone();
        best_val = f64::NAN;
    }
    Ok(TrainOutcome {
        best,
        best_val_loss: best_val,
        last: weights,
        history,
    })
}

fn at_step(e: TvfError, step: usize) -> TvfError {
    match e {
        TvfError::NonFinite { what, index } => TvfError::NonFinite {
            what: format!("{what} (training step {step})"),
            index,
        },
        other => other,
    }
}
