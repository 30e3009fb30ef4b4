//! Frame-level systolic execution of the biquad cascade.
//!
//! Lane `k` runs filter `k`. At step `s` it processes frame `s - k`, taking
//! as input whatever lane `k - 1` produced at step `s - 1`, so the `K x N`
//! unit grid is swept along its anti-diagonals in `N + K - 1` steps. The
//! coefficient trajectory is laid out as shifted matrices whose column `s`
//! holds exactly the coefficients every lane needs at step `s`.

use rayon::prelude::*;

use crate::autodiff::filter::{biquad_frame_adjoint, FrameAdjoint};
use crate::engine::{check_backward_shape, check_run_shape, CascadeGrads, CascadeTrace, EngineOutput, FilterEngine};
use crate::error::{Result, TvfError};
use crate::filter::{biquad_frame_into, pad_to_frames, CoeffTrajectory, FilterState};
use crate::sample::Sample;

/// Time-shifted coefficient layout: row `k` is filter `k`'s frame sequence
/// shifted right by `k` columns; everything else is zero and masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct SystolicMatrices {
    pub num_filters: usize,
    pub num_frames: usize,
    pub width: usize,
    /// Row-major `K x width` feedback coefficients `(a1, a2)`.
    pub a_shifted: Vec<[f64; 2]>,
    /// Row-major `K x width` feedforward coefficients `(b0, b1, b2)`.
    pub b_shifted: Vec<[f64; 3]>,
    pub valid_mask: Vec<bool>,
}

impl SystolicMatrices {
    #[inline]
    fn idx(&self, k: usize, col: usize) -> usize {
        k * self.width + col
    }

    pub fn is_valid(&self, k: usize, col: usize) -> bool {
        self.valid_mask[self.idx(k, col)]
    }

    /// `[b0, b1, b2, a1, a2]` at lane `k`, column `col`.
    pub fn coeffs_at(&self, k: usize, col: usize) -> [f64; 5] {
        let i = self.idx(k, col);
        let b = self.b_shifted[i];
        let a = self.a_shifted[i];
        [b[0], b[1], b[2], a[0], a[1]]
    }

    pub fn set_coeffs_at(&mut self, k: usize, col: usize, c: [f64; 5]) {
        let i = self.idx(k, col);
        self.b_shifted[i] = [c[0], c[1], c[2]];
        self.a_shifted[i] = [c[3], c[4]];
    }

    /// Frame index handled by lane `k` at column `col`, if any.
    pub fn frame_at(&self, k: usize, col: usize) -> Option<usize> {
        col.checked_sub(k).filter(|&n| n < self.num_frames)
    }
}

pub fn build_shifted_matrices(traj: &CoeffTrajectory) -> Result<SystolicMatrices> {
    if traj.frames.is_empty() || traj.num_filters() == 0 {
        return Err(TvfError::Empty("cannot build systolic matrices from an empty trajectory".into()));
    }
    traj.validate()?;
    let k_filters = traj.num_filters();
    let n_frames = traj.num_frames();
    let width = n_frames + k_filters - 1;
    let mut m = SystolicMatrices {
        num_filters: k_filters,
        num_frames: n_frames,
        width,
        a_shifted: vec![[0.0; 2]; k_filters * width],
        b_shifted: vec![[0.0; 3]; k_filters * width],
        valid_mask: vec![false; k_filters * width],
    };
    for (n, frame) in traj.frames.iter().enumerate() {
        for (k, c) in frame.iter().enumerate() {
            let i = m.idx(k, n + k);
            m.b_shifted[i] = [c.b0, c.b1, c.b2];
            m.a_shifted[i] = [c.a1, c.a2];
            m.valid_mask[i] = true;
        }
    }
    Ok(m)
}

/// Per-step lane buffers: lane 0 holds the fresh input frame, lane `k` the
/// previous-step output of lane `k - 1`.
#[derive(Debug, Clone)]
pub struct StepInput<F> {
    pub lanes: Vec<Vec<F>>,
    pub lane_states: Vec<FilterState<F>>,
}

#[derive(Debug, Clone)]
pub struct SystolicRun<F> {
    pub output: Vec<F>,
    pub steps: usize,
    pub trace: Option<CascadeTrace<F>>,
}

fn cast_coeffs<F: Sample>(c: [f64; 5]) -> [F; 5] {
    c.map(F::from_f64)
}

/// Executes the cascade over `padded` (a whole number of frames) using
/// precomputed shifted matrices. Lanes whose mask is false are skipped.
pub fn run_systolic<F: Sample>(
    padded: &[F],
    m: &SystolicMatrices,
    frame_len: usize,
    record: bool,
    parallel: bool,
) -> Result<SystolicRun<F>> {
    let k_filters = m.num_filters;
    let n_frames = m.num_frames;
    if padded.len() != n_frames * frame_len {
        return Err(TvfError::LengthMismatch(format!(
            "{} samples for {n_frames} frames of {frame_len}",
            padded.len()
        )));
    }
    let l = frame_len;
    let mut trace = record.then(|| CascadeTrace::new(padded.to_vec(), n_frames, k_filters, l));
    let mut step = StepInput {
        lanes: vec![vec![F::ZERO; l]; k_filters],
        lane_states: vec![FilterState::<F>::zero(); k_filters],
    };
    let mut outputs = vec![vec![F::ZERO; l]; k_filters];
    let mut out = vec![F::ZERO; padded.len()];
    let mut steps = 0;

    for s in 0..m.width {
        // load lane inputs: fresh frame into lane 0, shifted outputs elsewhere
        if s < n_frames {
            step.lanes[0].copy_from_slice(&padded[s * l..(s + 1) * l]);
        }
        for k in 1..k_filters {
            if m.is_valid(k, s) {
                std::mem::swap(&mut step.lanes[k], &mut outputs[k - 1]);
            }
        }
        if let Some(tr) = trace.as_mut() {
            for k in 0..k_filters {
                if let Some(n) = m.frame_at(k, s) {
                    tr.states[n][k] = step.lane_states[k];
                }
            }
        }

        let lane_op = |k: usize, (input, (output, state)): (&Vec<F>, (&mut Vec<F>, &mut FilterState<F>))| {
            if m.is_valid(k, s) {
                biquad_frame_into(input, output, &cast_coeffs(m.coeffs_at(k, s)), state);
            }
        };
        if parallel {
            step.lanes
                .par_iter()
                .zip(outputs.par_iter_mut().zip(step.lane_states.par_iter_mut()))
                .enumerate()
                .for_each(|(k, lane)| lane_op(k, lane));
        } else {
            step.lanes
                .iter()
                .zip(outputs.iter_mut().zip(step.lane_states.iter_mut()))
                .enumerate()
                .for_each(|(k, lane)| lane_op(k, lane));
        }

        for k in 0..k_filters {
            if let Some(n) = m.frame_at(k, s) {
                if let Some(tr) = trace.as_mut() {
                    tr.signals[k + 1][n * l..(n + 1) * l].copy_from_slice(&outputs[k]);
                }
                if k == k_filters - 1 {
                    out[n * l..(n + 1) * l].copy_from_slice(&outputs[k]);
                }
            }
        }
        steps += 1;
    }
    Ok(SystolicRun {
        output: out,
        steps,
        trace,
    })
}

/// Reverse sweep over the same anti-diagonals, from the last step to the first.
pub fn backward_systolic<F: Sample>(
    trace: &CascadeTrace<F>,
    m: &SystolicMatrices,
    grad_output: &[F],
    parallel: bool,
) -> Result<CascadeGrads<F>> {
    let k_filters = m.num_filters;
    let n_frames = m.num_frames;
    let l = trace.frame_len;
    let mut grads: Vec<Vec<F>> = (0..k_filters).map(|_| vec![F::ZERO; grad_output.len()]).collect();
    grads.push(grad_output.to_vec());
    let mut carry = vec![[F::ZERO; 4]; k_filters];
    let mut grad_coeffs = vec![vec![[F::ZERO; 5]; k_filters]; n_frames];
    let mut steps = 0;

    for s in (0..m.width).rev() {
        let unit = |k: usize| -> Option<(usize, FrameAdjoint<F>)> {
            let n = m.frame_at(k, s)?;
            let span = n * l..(n + 1) * l;
            Some((
                n,
                biquad_frame_adjoint(
                    &trace.signals[k][span.clone()],
                    &trace.signals[k + 1][span.clone()],
                    &cast_coeffs(m.coeffs_at(k, s)),
                    &trace.states[n][k],
                    &grads[k + 1][span],
                    &carry[k],
                ),
            ))
        };
        let results: Vec<Option<(usize, FrameAdjoint<F>)>> = if parallel {
            (0..k_filters).into_par_iter().map(unit).collect()
        } else {
            (0..k_filters).map(unit).collect()
        };
        for (k, r) in results.into_iter().enumerate() {
            if let Some((n, adj)) = r {
                grads[k][n * l..(n + 1) * l].copy_from_slice(&adj.grad_x);
                carry[k] = adj.grad_state_in;
                grad_coeffs[n][k] = adj.grad_coeffs;
            }
        }
        steps += 1;
    }
    Ok(CascadeGrads {
        grad_input: grads.swap_remove(0),
        grad_coeffs,
        steps,
    })
}

/// Training-time engine. Its pipeline fill adds `K - 1` frames of latency,
/// so streaming inference uses the serial engine instead.
#[derive(Debug, Clone, Copy)]
pub struct SystolicEngine {
    /// Run lanes on the rayon pool. Results are bit-identical either way.
    pub parallel: bool,
}

impl Default for SystolicEngine {
    fn default() -> Self {
        SystolicEngine {
            parallel: rayon::current_num_threads() > 1,
        }
    }
}

impl<F: Sample> FilterEngine<F> for SystolicEngine {
    fn name(&self) -> &'static str {
        "systolic"
    }

    fn depth(&self, n_frames: usize, n_filters: usize) -> usize {
        n_frames + n_filters - 1
    }

    fn run(&self, padded: &[F], traj: &CoeffTrajectory, record: bool) -> Result<EngineOutput<F>> {
        let (_, _, l) = check_run_shape(padded.len(), traj)?;
        let m = build_shifted_matrices(traj)?;
        let r = run_systolic(padded, &m, l, record, self.parallel)?;
        Ok(EngineOutput {
            output: r.output,
            steps: r.steps,
            trace: r.trace,
        })
    }

    fn backward(&self, trace: &CascadeTrace<F>, traj: &CoeffTrajectory, grad_output: &[F]) -> Result<CascadeGrads<F>> {
        check_backward_shape(trace, traj, grad_output)?;
        let m = build_shifted_matrices(traj)?;
        backward_systolic(trace, &m, grad_output, self.parallel)
    }
}

/// Filters arbitrary-length audio through the systolic schedule. Returns the
/// output (truncated to the input length) and the executed step count.
pub fn process_systolic<F: Sample>(audio: &[F], traj: &CoeffTrajectory) -> Result<(Vec<F>, usize)> {
    if audio.is_empty() {
        return Err(TvfError::Empty("audio has no samples".into()));
    }
    traj.validate()?;
    let n = traj.check_covers(audio.len())?;
    let traj = crate::engine::truncate_frames(traj, n);
    let padded = pad_to_frames(audio, traj.frame_len);
    let m = build_shifted_matrices(&traj)?;
    let r = run_systolic(&padded, &m, traj.frame_len, false, SystolicEngine::default().parallel)?;
    let mut out = r.output;
    out.truncate(audio.len());
    Ok((out, r.steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{process_serial, BiquadCoeffs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sentinel_traj(n: usize, k: usize) -> CoeffTrajectory {
        let frames = (0..n)
            .map(|f| {
                (0..k)
                    .map(|i| BiquadCoeffs {
                        b0: (10 * i + f) as f64,
                        b1: 0.0,
                        b2: 0.0,
                        a1: 0.0,
                        a2: 0.0,
                    })
                    .collect()
            })
            .collect();
        CoeffTrajectory {
            frame_len: 4,
            sample_rate: 48000.0,
            frames,
        }
    }

    #[test]
    fn smallest_shift_pattern() {
        let m = build_shifted_matrices(&sentinel_traj(1, 2)).unwrap();
        assert_eq!(m.width, 2);
        assert!(m.is_valid(0, 0) && !m.is_valid(0, 1));
        assert!(!m.is_valid(1, 0) && m.is_valid(1, 1));
    }

    #[test]
    fn column_holds_anti_diagonal() {
        let m = build_shifted_matrices(&sentinel_traj(3, 3)).unwrap();
        assert_eq!(m.width, 5);
        // column 2: filter0 frame2, filter1 frame1, filter2 frame0
        assert_eq!(m.coeffs_at(0, 2)[0], 2.0);
        assert_eq!(m.coeffs_at(1, 2)[0], 11.0);
        assert_eq!(m.coeffs_at(2, 2)[0], 20.0);
        let valid: usize = m.valid_mask.iter().filter(|&&v| v).count();
        assert_eq!(valid, 9);
        for k in 0..3 {
            for col in 0..5 {
                assert_eq!(m.is_valid(k, col), m.frame_at(k, col).is_some());
                if !m.is_valid(k, col) {
                    assert_eq!(m.coeffs_at(k, col), [0.0; 5]);
                }
            }
        }
    }

    #[test]
    fn empty_trajectory_rejected() {
        let t = CoeffTrajectory {
            frame_len: 4,
            sample_rate: 48000.0,
            frames: vec![],
        };
        assert!(build_shifted_matrices(&t).is_err());
    }

    #[test]
    fn single_filter_is_bit_identical_to_serial() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<Vec<BiquadCoeffs>> = (0..6)
            .map(|_| {
                vec![BiquadCoeffs {
                    b0: rng.random_range(0.5..1.0),
                    b1: rng.random_range(-0.5..0.5),
                    b2: 0.1,
                    a1: -0.5,
                    a2: 0.2,
                }]
            })
            .collect();
        let traj = CoeffTrajectory {
            frame_len: 32,
            sample_rate: 48000.0,
            frames,
        };
        let x: Vec<f64> = (0..180).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (y, steps) = process_systolic(&x, &traj).unwrap();
        assert_eq!(steps, 6);
        assert_eq!(y, process_serial(&x, &traj).unwrap());
    }

    #[test]
    fn parallel_lanes_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let traj = CoeffTrajectory {
            frame_len: 16,
            sample_rate: 48000.0,
            frames: (0..5)
                .map(|_| {
                    (0..4)
                        .map(|_| BiquadCoeffs {
                            b0: rng.random_range(0.5..1.0),
                            b1: rng.random_range(-0.5..0.5),
                            b2: 0.1,
                            a1: rng.random_range(-0.5..0.5),
                            a2: 0.2,
                        })
                        .collect()
                })
                .collect(),
        };
        let x: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = build_shifted_matrices(&traj).unwrap();
        let a = run_systolic(&x, &m, 16, true, false).unwrap();
        let b = run_systolic(&x, &m, 16, true, true).unwrap();
        assert_eq!(a.output, b.output);
        let g: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ga = backward_systolic(a.trace.as_ref().unwrap(), &m, &g, false).unwrap();
        let gb = backward_systolic(b.trace.as_ref().unwrap(), &m, &g, true).unwrap();
        assert_eq!(ga, gb);
    }
}
