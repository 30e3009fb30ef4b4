//! The full differentiable chain, features to loss, and its inference twin.

use super::loss::LossConfig;
use crate::autodiff::tape::{Tape, ValueId};
use crate::backbone::{BackboneWeights, ControlMode, FeatureExtractor};
use crate::engine::{engine, process_with};
use crate::error::{Result, TvfError};
use crate::filter::{frame_count, pad_to_frames, ParamTrajectory};
use crate::tensor::Mat;

/// Per-frame log spectra of every row of `audio`: `out[n]` is `rows x bins`.
pub fn batch_features(weights: &BackboneWeights, audio: &Mat) -> Result<Vec<Mat>> {
    let c = &weights.config;
    let ex = FeatureExtractor::new(c.frame_len, c.hann_window);
    let n = frame_count(audio.cols, c.frame_len);
    let mut frames = vec![Mat::zeros(audio.rows, c.num_bins()); n];
    for r in 0..audio.rows {
        let padded = pad_to_frames(audio.row(r), c.frame_len);
        for (i, chunk) in padded.chunks_exact(c.frame_len).enumerate() {
            let spec = ex.spectrum(chunk)?;
            frames[i].row_mut(r).copy_from_slice(&spec.log_compressed(c.feature_eps));
        }
    }
    Ok(frames)
}

/// Records features, controller, coefficient map, cascade and loss for a
/// batch; returns the scalar loss value.
pub fn record_pipeline(
    tape: &mut Tape<'_>,
    mode: &dyn ControlMode,
    noisy: &Mat,
    clean: &Mat,
    engine_name: &str,
    loss: &LossConfig,
    horizon: usize,
) -> Result<ValueId> {
    if !noisy.same_shape(clean) || noisy.rows == 0 || noisy.cols == 0 {
        return Err(TvfError::LengthMismatch("noisy and clean batches must share a nonempty shape".into()));
    }
    let weights = tape.weights();
    let features = batch_features(weights, noisy)?;
    let frame_ids: Vec<ValueId> = features.into_iter().map(|m| tape.constant(m)).collect();
    let params = mode.record(tape, &frame_ids, horizon)?;
    let plan = weights.config.band_plan.clone();
    let mut coeffs: Vec<ValueId> = Vec::with_capacity(params.len());
    for (n, &p) in params.iter().enumerate() {
        // frames sharing one parameter value share its coefficients too
        if n > 0 && params[n - 1] == p {
            coeffs.push(coeffs[n - 1]);
        } else {
            coeffs.push(tape.coeff_map(p, &plan)?);
        }
    }
    let audio = tape.constant(noisy.clone());
    let target = tape.constant(clean.clone());
    let y = tape.cascade(&coeffs, audio, engine_name, weights.config.frame_len)?;
    tape.loss(y, target, loss)
}

/// Parameter trajectory the controller predicts for a clip.
pub fn predict_trajectory(weights: &BackboneWeights, mode: &dyn ControlMode, audio: &[f64]) -> Result<ParamTrajectory> {
    let c = &weights.config;
    let frames = FeatureExtractor::new(c.frame_len, c.hann_window).clip(audio)?;
    mode.sequence(weights, &frames)
}

/// Filters a clip with the trajectory the controller predicts for it.
pub fn enhance(weights: &BackboneWeights, mode: &dyn ControlMode, audio: &[f64], engine_name: &str) -> Result<Vec<f64>> {
    let traj = predict_trajectory(weights, mode, audio)?;
    let coeffs = traj.to_coeffs(&weights.config.band_plan)?;
    let eng = engine::<f64>(engine_name)?;
    Ok(process_with(eng.as_ref(), audio, &coeffs)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{control_mode, init_weights};
    use crate::training::loss::total_loss;
    use crate::training::synth::{synth_mixture, MixtureSpec};

    #[test]
    fn recorded_loss_matches_inference() {
        let w = init_weights(3, 0.3).unwrap();
        let (noisy, clean) = synth_mixture(&MixtureSpec::new(5.0, 1, 4000).unwrap()).unwrap();
        let cfg = LossConfig::default();
        for name in ["time_varying", "static_peq"] {
            let mode = control_mode(name).unwrap();
            let y = enhance(&w, mode.as_ref(), &noisy.samples, "serial").unwrap();
            let direct = total_loss(&y, &clean.samples, &cfg).unwrap();
            let mut tape = Tape::new(&w);
            let n = Mat::from_vec(1, 4000, noisy.samples.clone());
            let c = Mat::from_vec(1, 4000, clean.samples.clone());
            let id = record_pipeline(&mut tape, mode.as_ref(), &n, &c, "systolic", &cfg, 0).unwrap();
            let recorded = tape.value(id).data[0];
            assert!((recorded - direct).abs() < 1e-9 * direct.max(1.0), "{name}: {recorded} vs {direct}");
        }
    }

    #[test]
    fn zero_noise_init_passes_audio_through() {
        let w = init_weights(8, 0.0).unwrap();
        let (noisy, _) = synth_mixture(&MixtureSpec::new(0.0, 4, 5000).unwrap()).unwrap();
        let y = enhance(&w, control_mode("tv").unwrap().as_ref(), &noisy.samples, "serial").unwrap();
        let err = y.iter().zip(&noisy.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}
