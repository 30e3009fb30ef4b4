//! Direct Form I biquads, frame by frame.

use serde::{Deserialize, Serialize};

use super::band_plan::BandPlan;
use super::coeffs::{params_to_coeffs, BiquadCoeffs, FilterParams};
use crate::error::{Result, TvfError};
use crate::sample::Sample;

pub const FRAME_LEN: usize = 1024;

/// Two samples of input and output history, most recent first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterState<F> {
    pub x_hist: [F; 2],
    pub y_hist: [F; 2],
}

impl<F: Sample> FilterState<F> {
    pub fn zero() -> Self {
        FilterState {
            x_hist: [F::ZERO; 2],
            y_hist: [F::ZERO; 2],
        }
    }

    pub fn to_array(self) -> [F; 4] {
        [self.x_hist[0], self.x_hist[1], self.y_hist[0], self.y_hist[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeState<F> {
    pub per_filter: Vec<FilterState<F>>,
}

impl<F: Sample> CascadeState<F> {
    pub fn zero(num_filters: usize) -> Self {
        CascadeState {
            per_filter: vec![FilterState::zero(); num_filters],
        }
    }

    pub fn len(&self) -> usize {
        self.per_filter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_filter.is_empty()
    }
}

#[inline]
pub(crate) fn coeffs_as<F: Sample>(c: &BiquadCoeffs) -> [F; 5] {
    [
        F::from_f64(c.b0),
        F::from_f64(c.b1),
        F::from_f64(c.b2),
        F::from_f64(c.a1),
        F::from_f64(c.a2),
    ]
}

/// Filters `x` into `y` with constant coefficients, updating `state` in place.
#[inline]
pub fn biquad_frame_into<F: Sample>(x: &[F], y: &mut [F], c: &[F; 5], state: &mut FilterState<F>) {
    debug_assert_eq!(x.len(), y.len());
    let [b0, b1, b2, a1, a2] = *c;
    let [mut x1, mut x2] = state.x_hist;
    let [mut y1, mut y2] = state.y_hist;
    for (xi, yi) in x.iter().zip(y.iter_mut()) {
        let x0 = *xi;
        let w = b0 * x0 + b1 * x1 + b2 * x2;
        let y0 = w - a1 * y1 - a2 * y2;
        *yi = y0;
        x2 = x1;
        x1 = x0;
        y2 = y1;
        y1 = y0;
    }
    state.x_hist = [x1, x2];
    state.y_hist = [y1, y2];
}

/// One frame through one biquad. Returns the output frame and the outgoing state.
pub fn biquad_frame<F: Sample>(x: &[F], coeffs: &BiquadCoeffs, state: &FilterState<F>) -> (Vec<F>, FilterState<F>) {
    let mut y = vec![F::ZERO; x.len()];
    let mut next = *state;
    biquad_frame_into(x, &mut y, &coeffs_as(coeffs), &mut next);
    (y, next)
}

/// One frame through every filter of the cascade in order.
pub fn cascade_frame<F: Sample>(x: &[F], coeffs: &[BiquadCoeffs], state: &mut CascadeState<F>) -> Result<Vec<F>> {
    if coeffs.len() != state.len() {
        return Err(TvfError::Config(format!(
            "{} coefficient sets for a {}-filter cascade state",
            coeffs.len(),
            state.len()
        )));
    }
    let mut cur = x.to_vec();
    let mut next = vec![F::ZERO; x.len()];
    for (c, st) in coeffs.iter().zip(state.per_filter.iter_mut()) {
        biquad_frame_into(&cur, &mut next, &coeffs_as(c), st);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if let Some(i) = crate::error::first_non_finite(&samples) {
            return Err(TvfError::non_finite("audio samples", i));
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Number of frames needed to cover `len` samples (last one possibly partial).
pub fn frame_count(len: usize, frame_len: usize) -> usize {
    len.div_ceil(frame_len)
}

/// Copies `audio` into a zero-padded buffer that is a whole number of frames long.
pub fn pad_to_frames<F: Sample>(audio: &[F], frame_len: usize) -> Vec<F> {
    let mut padded = audio.to_vec();
    padded.resize(frame_count(audio.len(), frame_len) * frame_len, F::ZERO);
    padded
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTrajectory {
    pub frame_len: usize,
    pub sample_rate: f64,
    /// `frames[n][k]` is filter `k` during frame `n`.
    pub frames: Vec<Vec<FilterParams>>,
}

impl ParamTrajectory {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_filters(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn check_rectangular(&self) -> Result<()> {
        let k = self.num_filters();
        match self.frames.iter().position(|f| f.len() != k) {
            Some(n) => Err(TvfError::Config(format!(
                "frame {n} has {} filters, expected {k}",
                self.frames[n].len()
            ))),
            None => Ok(()),
        }
    }

    /// Every frame holds the same parameter set.
    pub fn is_frame_constant(&self) -> bool {
        self.frames.windows(2).all(|w| w[0] == w[1])
    }

    pub fn to_coeffs(&self, plan: &BandPlan) -> Result<CoeffTrajectory> {
        self.check_rectangular()?;
        if self.num_filters() != plan.len() {
            return Err(TvfError::Config(format!(
                "trajectory has {} filters, band plan has {}",
                self.num_filters(),
                plan.len()
            )));
        }
        let frames = self
            .frames
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .zip(&plan.bands)
                    .map(|(p, band)| params_to_coeffs(p, band.kind, plan.sample_rate))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoeffTrajectory {
            frame_len: self.frame_len,
            sample_rate: self.sample_rate,
            frames,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTrajectory {
    pub frame_len: usize,
    pub sample_rate: f64,
    /// `frames[n][k]` is filter `k` during frame `n`.
    pub frames: Vec<Vec<BiquadCoeffs>>,
}

impl CoeffTrajectory {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_filters(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Same coefficients in every one of `num_frames` frames.
    pub fn constant(coeffs: Vec<BiquadCoeffs>, num_frames: usize, frame_len: usize, sample_rate: f64) -> Self {
        CoeffTrajectory {
            frame_len,
            sample_rate,
            frames: vec![coeffs; num_frames],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(TvfError::Empty("coefficient trajectory has no frames".into()));
        }
        if self.frame_len == 0 {
            return Err(TvfError::Config("frame length must be positive".into()));
        }
        let k = self.num_filters();
        if k == 0 {
            return Err(TvfError::Empty("coefficient trajectory has no filters".into()));
        }
        for (n, frame) in self.frames.iter().enumerate() {
            if frame.len() != k {
                return Err(TvfError::Config(format!(
                    "frame {n} has {} filters, expected {k}",
                    frame.len()
                )));
            }
            for (i, c) in frame.iter().enumerate() {
                if let Some(j) = crate::error::first_non_finite(&c.to_array()) {
                    return Err(TvfError::non_finite(format!("coefficients of frame {n}, filter {i}"), j));
                }
            }
        }
        Ok(())
    }

    /// Checks that the trajectory covers `len` samples.
    pub fn check_covers(&self, len: usize) -> Result<usize> {
        let required = frame_count(len, self.frame_len);
        if self.frames.len() < required {
            return Err(TvfError::TrajectoryTooShort {
                required,
                provided: self.frames.len(),
            });
        }
        Ok(required)
    }
}

/// Inference-time filtering: one frame after another, cascade state carried over.
pub fn process_serial<F: Sample>(audio: &[F], traj: &CoeffTrajectory) -> Result<Vec<F>> {
    let mut state = CascadeState::zero(traj.num_filters());
    process_serial_with_state(audio, traj, &mut state)
}

/// Like [`process_serial`] but starts from, and updates, an explicit state.
pub fn process_serial_with_state<F: Sample>(
    audio: &[F],
    traj: &CoeffTrajectory,
    state: &mut CascadeState<F>,
) -> Result<Vec<F>> {
    if audio.is_empty() {
        return Err(TvfError::Empty("audio has no samples".into()));
    }
    traj.validate()?;
    let n_frames = traj.check_covers(audio.len())?;
    let l = traj.frame_len;
    let padded = pad_to_frames(audio, l);
    let mut out = Vec::with_capacity(padded.len());
    for n in 0..n_frames {
        let y = cascade_frame(&padded[n * l..(n + 1) * l], &traj.frames[n], state)?;
        out.extend_from_slice(&y);
    }
    out.truncate(audio.len());
    Ok(out)
}
