//! Coefficient mapping, Direct Form I filtering and frequency responses.

pub mod band_plan;
pub mod biquad;
pub mod coeffs;

pub use band_plan::{peak_centers, BandKind, BandPlan, BandSpec, DEFAULT_SAMPLE_RATE, NUM_BANDS};
pub use biquad::{
    biquad_frame, biquad_frame_into, cascade_frame, frame_count, pad_to_frames, process_serial,
    process_serial_with_state, AudioBuffer, CascadeState, CoeffTrajectory, FilterState, ParamTrajectory,
    FRAME_LEN,
};
pub use coeffs::{
    check_stability, frequency_response, log_grid, params_to_coeffs, BiquadCoeffs, FilterParams, GAIN_RANGE_DB,
    MAX_F0_FRACTION, Q_RANGE,
};

use crate::error::Result;

/// Cascade response of every frame of a trajectory: `N x freqs.len()` dB values.
pub fn trajectory_response(traj: &CoeffTrajectory, freqs: &[f64]) -> Result<Vec<Vec<f64>>> {
    traj.frames
        .iter()
        .map(|frame| frequency_response(frame, freqs, traj.sample_rate))
        .collect()
}
