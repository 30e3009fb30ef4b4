//! Interchangeable cascade-filtering engines.
//!
//! Every engine computes the same function (a time-varying biquad cascade
//! over whole frames) and its adjoint; they differ only in the order in
//! which the `(filter, frame)` units are executed. Engines are looked up by
//! name so the CLI and trainer can select one at runtime.

use crate::autodiff::filter::biquad_frame_adjoint;
use crate::error::{Result, TvfError};
use crate::filter::biquad::coeffs_as;
use crate::filter::{biquad_frame_into, pad_to_frames, CoeffTrajectory, FilterState};
use crate::sample::Sample;
use crate::systolic::SystolicEngine;

/// Saved forward values of a cascade run, sufficient for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTrace<F> {
    pub frame_len: usize,
    /// `signals[0]` is the (padded) input, `signals[k + 1]` the output of filter `k`.
    pub signals: Vec<Vec<F>>,
    /// `states[n][k]`: state of filter `k` on entry to frame `n`.
    pub states: Vec<Vec<FilterState<F>>>,
}

impl<F: Sample> CascadeTrace<F> {
    pub(crate) fn new(input: Vec<F>, n_frames: usize, n_filters: usize, frame_len: usize) -> Self {
        let len = input.len();
        let mut signals = Vec::with_capacity(n_filters + 1);
        signals.push(input);
        signals.extend((0..n_filters).map(|_| vec![F::ZERO; len]));
        CascadeTrace {
            frame_len,
            signals,
            states: vec![vec![FilterState::zero(); n_filters]; n_frames],
        }
    }

    pub fn output(&self) -> &[F] {
        self.signals.last().expect("trace has at least the input signal")
    }
}

#[derive(Debug, Clone)]
pub struct EngineOutput<F> {
    /// Output over the padded length (whole frames).
    pub output: Vec<F>,
    pub steps: usize,
    pub trace: Option<CascadeTrace<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeGrads<F> {
    pub grad_input: Vec<F>,
    /// `grad_coeffs[n][k]` in `[b0, b1, b2, a1, a2]` order.
    pub grad_coeffs: Vec<Vec<[F; 5]>>,
    pub steps: usize,
}

pub trait FilterEngine<F: Sample>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of sequential steps needed for `n_frames` frames through `n_filters` filters.
    fn depth(&self, n_frames: usize, n_filters: usize) -> usize;

    /// Filters a whole number of frames. When `record` is set the returned
    /// output carries a trace for [`FilterEngine::backward`].
    fn run(&self, padded: &[F], traj: &CoeffTrajectory, record: bool) -> Result<EngineOutput<F>>;

    /// Reverse pass given the cotangent of the padded output.
    fn backward(&self, trace: &CascadeTrace<F>, traj: &CoeffTrajectory, grad_output: &[F]) -> Result<CascadeGrads<F>>;
}

pub const ENGINE_NAMES: [&str; 2] = ["serial", "systolic"];

/// Looks up an engine by name.
pub fn engine<F: Sample>(name: &str) -> Result<Box<dyn FilterEngine<F>>> {
    match name {
        "serial" => Ok(Box::new(SerialEngine)),
        "systolic" => Ok(Box::new(SystolicEngine::default())),
        other => Err(TvfError::UnknownName {
            kind: "engine",
            name: other.to_string(),
            known: ENGINE_NAMES.join(", "),
        }),
    }
}

/// Validates, pads, runs and truncates: the common entry point for filtering
/// arbitrary-length audio with any engine.
pub fn process_with<F: Sample>(engine: &dyn FilterEngine<F>, audio: &[F], traj: &CoeffTrajectory) -> Result<(Vec<F>, usize)> {
    if audio.is_empty() {
        return Err(TvfError::Empty("audio has no samples".into()));
    }
    traj.validate()?;
    let n = traj.check_covers(audio.len())?;
    let padded = pad_to_frames(audio, traj.frame_len);
    let traj = truncate_frames(traj, n);
    let mut out = engine.run(&padded, &traj, false)?;
    out.output.truncate(audio.len());
    Ok((out.output, out.steps))
}

/// A trajectory limited to its first `n` frames.
pub(crate) fn truncate_frames(traj: &CoeffTrajectory, n: usize) -> std::borrow::Cow<'_, CoeffTrajectory> {
    if traj.frames.len() == n {
        std::borrow::Cow::Borrowed(traj)
    } else {
        std::borrow::Cow::Owned(CoeffTrajectory {
            frame_len: traj.frame_len,
            sample_rate: traj.sample_rate,
            frames: traj.frames[..n].to_vec(),
        })
    }
}

pub(crate) fn check_run_shape(padded_len: usize, traj: &CoeffTrajectory) -> Result<(usize, usize, usize)> {
    traj.validate()?;
    let l = traj.frame_len;
    if padded_len == 0 || padded_len % l != 0 {
        return Err(TvfError::LengthMismatch(format!(
            "engine input of {padded_len} samples is not a whole number of {l}-sample frames"
        )));
    }
    let n = padded_len / l;
    if traj.num_frames() != n {
        return Err(TvfError::LengthMismatch(format!(
            "{n} frames of audio but {} frames of coefficients",
            traj.num_frames()
        )));
    }
    Ok((n, traj.num_filters(), l))
}

/// Frame after frame, filter after filter: `N * K` sequential units.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialEngine;

impl<F: Sample> FilterEngine<F> for SerialEngine {
    fn name(&self) -> &'static str {
        "serial"
    }

    fn depth(&self, n_frames: usize, n_filters: usize) -> usize {
        n_frames * n_filters
    }

    fn run(&self, padded: &[F], traj: &CoeffTrajectory, record: bool) -> Result<EngineOutput<F>> {
        let (n_frames, k_filters, l) = check_run_shape(padded.len(), traj)?;
        let mut states = vec![FilterState::<F>::zero(); k_filters];
        let mut trace = record.then(|| CascadeTrace::new(padded.to_vec(), n_frames, k_filters, l));
        let mut out = Vec::with_capacity(padded.len());
        let mut cur = vec![F::ZERO; l];
        let mut next = vec![F::ZERO; l];
        for n in 0..n_frames {
            let span = n * l..(n + 1) * l;
            cur.copy_from_slice(&padded[span.clone()]);
            for k in 0..k_filters {
                if let Some(tr) = trace.as_mut() {
                    tr.states[n][k] = states[k];
                }
                biquad_frame_into(&cur, &mut next, &coeffs_as(&traj.frames[n][k]), &mut states[k]);
                if let Some(tr) = trace.as_mut() {
                    tr.signals[k + 1][span.clone()].copy_from_slice(&next);
                }
                std::mem::swap(&mut cur, &mut next);
            }
            out.extend_from_slice(&cur);
        }
        Ok(EngineOutput {
            output: out,
            steps: n_frames * k_filters,
            trace,
        })
    }

    fn backward(&self, trace: &CascadeTrace<F>, traj: &CoeffTrajectory, grad_output: &[F]) -> Result<CascadeGrads<F>> {
        let (n_frames, k_filters, l) = check_backward_shape(trace, traj, grad_output)?;
        let mut grad_coeffs = vec![vec![[F::ZERO; 5]; k_filters]; n_frames];
        let mut g_out = grad_output.to_vec();
        let mut steps = 0;
        for k in (0..k_filters).rev() {
            let mut g_in = vec![F::ZERO; g_out.len()];
            let mut carry = [F::ZERO; 4];
            for n in (0..n_frames).rev() {
                let span = n * l..(n + 1) * l;
                let adj = biquad_frame_adjoint(
                    &trace.signals[k][span.clone()],
                    &trace.signals[k + 1][span.clone()],
                    &coeffs_as(&traj.frames[n][k]),
                    &trace.states[n][k],
                    &g_out[span.clone()],
                    &carry,
                );
                g_in[span].copy_from_slice(&adj.grad_x);
                grad_coeffs[n][k] = adj.grad_coeffs;
                carry = adj.grad_state_in;
                steps += 1;
            }
            g_out = g_in;
        }
        Ok(CascadeGrads {
            grad_input: g_out,
            grad_coeffs,
            steps,
        })
    }
}

pub(crate) fn check_backward_shape<F: Sample>(
    trace: &CascadeTrace<F>,
    traj: &CoeffTrajectory,
    grad_output: &[F],
) -> Result<(usize, usize, usize)> {
    let (n, k, l) = check_run_shape(trace.signals[0].len(), traj)?;
    if trace.signals.len() != k + 1 || trace.states.len() != n || trace.frame_len != l {
        return Err(TvfError::LengthMismatch("trace does not match the coefficient trajectory".into()));
    }
    if grad_output.len() != trace.signals[0].len() {
        return Err(TvfError::LengthMismatch(format!(
            "output cotangent has {} samples, trace {}",
            grad_output.len(),
            trace.signals[0].len()
        )));
    }
    Ok((n, k, l))
}
