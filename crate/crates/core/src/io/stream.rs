//! Frame-by-frame streaming with one frame of algorithmic latency.
//!
//! The processor pulls one frame from its source, asks the controller for
//! that frame's coefficients, filters it with the carried cascade state and
//! hands it to the sink before pulling the next one.

use crate::backbone::{backbone_step, BackboneWeights, FeatureExtractor, GruState};
use crate::error::{Result, TvfError};
use crate::filter::{cascade_frame, BandPlan, BiquadCoeffs, CascadeState, CoeffTrajectory, ParamTrajectory};
use crate::sample::Sample;

/// Pull-based audio input. Each call yields at most `frame_len` samples;
/// only the last frame may be short. `None` ends the stream.
pub trait FrameSource {
    fn next_frame(&mut self, frame_len: usize) -> Result<Option<Vec<f64>>>;
}

/// Serves a buffer in memory.
#[derive(Debug, Clone)]
pub struct SliceSource<'a> {
    audio: &'a [f64],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(audio: &'a [f64]) -> Self {
        SliceSource { audio, pos: 0 }
    }
}

impl FrameSource for SliceSource<'_> {
    fn next_frame(&mut self, frame_len: usize) -> Result<Option<Vec<f64>>> {
        if self.pos >= self.audio.len() {
            return Ok(None);
        }
        let end = (self.pos + frame_len).min(self.audio.len());
        let frame = self.audio[self.pos..end].to_vec();
        self.pos = end;
        Ok(Some(frame))
    }
}

/// Produces the coefficients for frame `index` from that frame's (zero-padded) samples.
pub trait FrameController {
    fn coeffs(&mut self, index: usize, frame: &[f64]) -> Result<Vec<BiquadCoeffs>>;
}

/// Runs the causal backbone one frame at a time.
pub struct BackboneController<'w> {
    weights: &'w BackboneWeights,
    features: FeatureExtractor,
    state: GruState,
}

impl<'w> BackboneController<'w> {
    pub fn new(weights: &'w BackboneWeights) -> Self {
        BackboneController {
            weights,
            features: FeatureExtractor::new(weights.config.frame_len, weights.config.hann_window),
            state: GruState::for_weights(weights),
        }
    }
}

impl FrameController for BackboneController<'_> {
    fn coeffs(&mut self, _index: usize, frame: &[f64]) -> Result<Vec<BiquadCoeffs>> {
        let spec = self.features.spectrum(frame)?;
        let (params, next) = backbone_step(&spec, self.weights, &self.state)?;
        self.state = next;
        let plan = &self.weights.config.band_plan;
        let traj = ParamTrajectory {
            frame_len: frame.len(),
            sample_rate: plan.sample_rate,
            frames: vec![params],
        };
        Ok(traj.to_coeffs(plan)?.frames.pop().expect("one frame"))
    }
}

/// Replays a precomputed trajectory.
pub struct TrajectoryController {
    traj: CoeffTrajectory,
}

impl TrajectoryController {
    pub fn new(traj: &ParamTrajectory, plan: &BandPlan) -> Result<Self> {
        Ok(TrajectoryController {
            traj: traj.to_coeffs(plan)?,
        })
    }
}

impl FrameController for TrajectoryController {
    fn coeffs(&mut self, index: usize, _frame: &[f64]) -> Result<Vec<BiquadCoeffs>> {
        self.traj.frames.get(index).cloned().ok_or(TvfError::TrajectoryTooShort {
            required: index + 1,
            provided: self.traj.num_frames(),
        })
    }
}

/// Streaming cascade in sample type `F`.
pub struct StreamProcessor<C, F: Sample> {
    controller: C,
    frame_len: usize,
    state: Option<CascadeState<F>>,
    frames_done: usize,
}

impl<C: FrameController, F: Sample> StreamProcessor<C, F> {
    pub fn new(controller: C, frame_len: usize) -> Self {
        StreamProcessor {
            controller,
            frame_len,
            state: None,
            frames_done: 0,
        }
    }

    pub fn frames_done(&self) -> usize {
        self.frames_done
    }

    /// Filters one frame; a short final frame is zero-padded for the
    /// controller and the output trimmed back to its length.
    pub fn process_frame(&mut self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.is_empty() || frame.len() > self.frame_len {
            return Err(TvfError::LengthMismatch(format!(
                "stream frame has {} samples, expected 1..={}",
                frame.len(),
                self.frame_len
            )));
        }
        let mut padded = frame.to_vec();
        padded.resize(self.frame_len, 0.0);
        let coeffs = self.controller.coeffs(self.frames_done, &padded)?;
        let state = self.state.get_or_insert_with(|| CascadeState::zero(coeffs.len()));
        let x: Vec<F> = padded.iter().map(|&v| F::from_f64(v)).collect();
        let y = cascade_frame(&x, &coeffs, state)?;
        self.frames_done += 1;
        Ok(y[..frame.len()].iter().map(|v| v.to_f64()).collect())
    }

    /// Drains `source`, passing each filtered frame to `sink` as soon as it is ready.
    pub fn run(&mut self, source: &mut dyn FrameSource, mut sink: impl FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        while let Some(frame) = source.next_frame(self.frame_len)? {
            let index = self.frames_done;
            let y = self.process_frame(&frame)?;
            if let Some(i) = crate::error::first_non_finite(&y) {
                return Err(TvfError::non_finite(format!("output of frame {index}"), i));
            }
            sink(index, &y)?;
        }
        Ok(())
    }
}

/// Streams a whole buffer and collects the output.
pub fn stream_all<C: FrameController, F: Sample>(controller: C, frame_len: usize, audio: &[f64]) -> Result<Vec<f64>> {
    let mut proc = StreamProcessor::<C, F>::new(controller, frame_len);
    let mut out = Vec::with_capacity(audio.len());
    proc.run(&mut SliceSource::new(audio), |_, y| {
        out.extend_from_slice(y);
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{control_mode, init_weights};
    use crate::training::pipeline::enhance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;
    use std::rc::Rc;

    struct CountingSource<'a> {
        inner: SliceSource<'a>,
        pulled: Rc<Cell<usize>>,
    }

    impl FrameSource for CountingSource<'_> {
        fn next_frame(&mut self, frame_len: usize) -> Result<Option<Vec<f64>>> {
            let f = self.inner.next_frame(frame_len)?;
            if f.is_some() {
                self.pulled.set(self.pulled.get() + 1);
            }
            Ok(f)
        }
    }

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.3..0.3)).collect()
    }

    #[test]
    fn emits_each_frame_before_pulling_the_next() {
        let w = init_weights(3, 0.3).unwrap();
        let audio = noise(1, 4 * 1024 + 100);
        let pulled = Rc::new(Cell::new(0));
        let mut src = CountingSource {
            inner: SliceSource::new(&audio),
            pulled: pulled.clone(),
        };
        let mut proc = StreamProcessor::<_, f64>::new(BackboneController::new(&w), 1024);
        let mut emitted = Vec::new();
        proc.run(&mut src, |n, y| {
            assert_eq!(pulled.get(), n + 1, "frame {n} emitted after {} pulls", pulled.get());
            emitted.extend_from_slice(y);
            Ok(())
        })
        .unwrap();
        assert_eq!(emitted.len(), audio.len());
        let batch = enhance(&w, control_mode("tv").unwrap().as_ref(), &audio, "serial").unwrap();
        for (a, b) in emitted.iter().zip(&batch) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_shorter_than_audio_fails() {
        let plan = BandPlan::default_plan();
        let traj = ParamTrajectory {
            frame_len: 1024,
            sample_rate: plan.sample_rate,
            frames: vec![plan.bands.iter().map(crate::filter::FilterParams::neutral).collect()],
        };
        let ctl = TrajectoryController::new(&traj, &plan).unwrap();
        let err = stream_all::<_, f64>(ctl, 1024, &noise(0, 1500)).unwrap_err();
        assert!(matches!(err, TvfError::TrajectoryTooShort { required: 2, provided: 1 }));
    }
}
