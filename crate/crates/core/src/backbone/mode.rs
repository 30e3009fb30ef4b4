//! How the controller turns a clip of frames into a parameter trajectory.

use super::features::SpectralFrame;
use super::model::{encode_frame, head_logits, record_encoder, record_head, GruState};
use super::scaling::scale_logits;
use super::weights::BackboneWeights;
use crate::autodiff::tape::{Tape, ValueId};
use crate::error::{Result, TvfError};
use crate::filter::ParamTrajectory;
use crate::tensor::Mat;

pub trait ControlMode: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether frame `n`'s parameters depend only on frames `0..=n`.
    fn is_causal(&self) -> bool;

    fn sequence(&self, weights: &BackboneWeights, frames: &[SpectralFrame]) -> Result<ParamTrajectory>;

    /// Records the same computation on a tape. `frames[n]` holds the
    /// log-compressed spectra of frame `n` for every batch item; the result
    /// holds flat `[g, q, f0]` rows per frame. A nonzero `horizon` cuts the
    /// gradient through the GRU state every `horizon` frames.
    fn record(&self, tape: &mut Tape<'_>, frames: &[ValueId], horizon: usize) -> Result<Vec<ValueId>>;
}

/// A fresh parameter set every frame from the recurrent state.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimeVarying;

/// One parameter set per clip from the time-averaged GRU output.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticPeq;

pub const CONTROL_MODES: [&str; 2] = ["time_varying", "static_peq"];

/// Looks up a control mode; `tv` and `peq` are accepted as short names.
pub fn control_mode(name: &str) -> Result<Box<dyn ControlMode>> {
    match name {
        "time_varying" | "tv" => Ok(Box::new(TimeVarying)),
        "static_peq" | "peq" => Ok(Box::new(StaticPeq)),
        other => Err(TvfError::UnknownName {
            kind: "control mode",
            name: other.to_string(),
            known: CONTROL_MODES.join(", "),
        }),
    }
}

fn trajectory(weights: &BackboneWeights, frames: Vec<Vec<crate::filter::FilterParams>>) -> ParamTrajectory {
    ParamTrajectory {
        frame_len: weights.config.frame_len,
        sample_rate: weights.config.band_plan.sample_rate,
        frames,
    }
}

/// Top GRU outputs for every frame.
fn record_tops(tape: &mut Tape<'_>, frames: &[ValueId], horizon: usize) -> Result<Vec<ValueId>> {
    let first = frames.first().ok_or_else(|| TvfError::Empty("no frames to control".into()))?;
    let rows = tape.value(*first).rows;
    let c = &tape.weights().config;
    let (layers, hidden) = (c.gru_layers, c.hidden);
    let mut state: Vec<ValueId> = (0..layers).map(|_| tape.constant(Mat::zeros(rows, hidden))).collect();
    let mut tops = Vec::with_capacity(frames.len());
    for (n, &x) in frames.iter().enumerate() {
        if horizon > 0 && n > 0 && n % horizon == 0 {
            for h in state.iter_mut() {
                *h = tape.detach(*h);
            }
        }
        tops.push(record_encoder(tape, x, &mut state)?);
    }
    Ok(tops)
}

impl ControlMode for TimeVarying {
    fn name(&self) -> &'static str {
        "time_varying"
    }

    fn is_causal(&self) -> bool {
        true
    }

    fn sequence(&self, weights: &BackboneWeights, frames: &[SpectralFrame]) -> Result<ParamTrajectory> {
        if frames.is_empty() {
            return Err(TvfError::Empty("no frames to control".into()));
        }
        let mut state = GruState::for_weights(weights);
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            let (top, next) = encode_frame(weights, f, &state)?;
            out.push(scale_logits(&head_logits(weights, &top), &weights.config.band_plan));
            state = next;
        }
        Ok(trajectory(weights, out))
    }

    fn record(&self, tape: &mut Tape<'_>, frames: &[ValueId], horizon: usize) -> Result<Vec<ValueId>> {
        let tops = record_tops(tape, frames, horizon)?;
        tops.into_iter().map(|top| record_head(tape, top)).collect()
    }
}

impl ControlMode for StaticPeq {
    fn name(&self) -> &'static str {
        "static_peq"
    }

    fn is_causal(&self) -> bool {
        false
    }

    fn sequence(&self, weights: &BackboneWeights, frames: &[SpectralFrame]) -> Result<ParamTrajectory> {
        if frames.is_empty() {
            return Err(TvfError::Empty("no frames to control".into()));
        }
        let mut state = GruState::for_weights(weights);
        let mut sum = vec![0.0; weights.config.hidden];
        for f in frames {
            let (top, next) = encode_frame(weights, f, &state)?;
            crate::tensor::axpy(1.0, &top, &mut sum);
            state = next;
        }
        let inv = 1.0 / frames.len() as f64;
        sum.iter_mut().for_each(|v| *v *= inv);
        let params = scale_logits(&head_logits(weights, &sum), &weights.config.band_plan);
        Ok(trajectory(weights, vec![params; frames.len()]))
    }

    fn record(&self, tape: &mut Tape<'_>, frames: &[ValueId], horizon: usize) -> Result<Vec<ValueId>> {
        let tops = record_tops(tape, frames, horizon)?;
        let pooled = tape.mean(&tops)?;
        let params = record_head(tape, pooled)?;
        Ok(vec![params; frames.len()])
    }
}

/// Parameter trajectory for a clip of spectra under the named mode.
pub fn backbone_sequence(frames: &[SpectralFrame], weights: &BackboneWeights, mode: &str) -> Result<ParamTrajectory> {
    control_mode(mode)?.sequence(weights, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::weights::init_weights;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frames(seed: u64, n: usize) -> Vec<SpectralFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| SpectralFrame {
                bins: (0..513).map(|_| rng.random_range(0.0..20.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn time_varying_is_causal() {
        let w = init_weights(1, 0.5).unwrap();
        let frames = random_frames(2, 5);
        let base = backbone_sequence(&frames, &w, "time_varying").unwrap();
        let mut changed = frames.clone();
        changed[3].bins[100] += 50.0;
        let other = backbone_sequence(&changed, &w, "tv").unwrap();
        assert_eq!(base.frames[..3], other.frames[..3]);
        assert_ne!(base.frames[3], other.frames[3]);
    }

    #[test]
    fn static_peq_is_frame_constant_and_matches_on_one_frame() {
        let w = init_weights(1, 0.5).unwrap();
        let frames = random_frames(3, 4);
        let t = backbone_sequence(&frames, &w, "static_peq").unwrap();
        assert!(t.is_frame_constant());
        assert_eq!(t.num_frames(), 4);
        let one = &frames[..1];
        assert_eq!(
            backbone_sequence(one, &w, "peq").unwrap(),
            backbone_sequence(one, &w, "time_varying").unwrap()
        );
    }

    #[test]
    fn registry() {
        for name in CONTROL_MODES {
            assert_eq!(control_mode(name).unwrap().name(), name);
        }
        assert!(matches!(control_mode("dynamic"), Err(TvfError::UnknownName { .. })));
        let w = init_weights(0, 0.0).unwrap();
        assert!(backbone_sequence(&[], &w, "tv").is_err());
    }

    #[test]
    fn recorded_forward_matches_inference() {
        let w = init_weights(4, 0.5).unwrap();
        let frames = random_frames(5, 3);
        for name in CONTROL_MODES {
            let mode = control_mode(name).unwrap();
            let direct = mode.sequence(&w, &frames).unwrap();
            let mut tape = Tape::new(&w);
            let ids: Vec<_> = frames
                .iter()
                .map(|f| tape.constant(Mat::from_vec(1, 513, f.log_compressed(1e-5))))
                .collect();
            let out = mode.record(&mut tape, &ids, 0).unwrap();
            for (n, id) in out.iter().enumerate() {
                let flat: Vec<f64> = direct.frames[n].iter().flat_map(|p| [p.gain_db, p.q, p.f0]).collect();
                assert_eq!(tape.value(*id).data, flat, "{name} frame {n}");
            }
        }
    }
}
