use super::features::SpectralFrame;
use super::layers::{conv1d_forward, gru_cell_forward, linear_forward};
use super::scaling::scale_logits;
use super::weights::BackboneWeights;
use crate::autodiff::tape::{Tape, ValueId};
use crate::error::{first_non_finite, Result, TvfError};
use crate::filter::FilterParams;
use crate::tensor::Mat;

/// Hidden vectors of every GRU layer, bottom first.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub layers: Vec<Vec<f64>>,
}

impl GruState {
    pub fn zeros(layers: usize, hidden: usize) -> Self {
        GruState {
            layers: vec![vec![0.0; hidden]; layers],
        }
    }

    pub fn for_weights(weights: &BackboneWeights) -> Self {
        GruState::zeros(weights.config.gru_layers, weights.config.hidden)
    }
}

fn check_input(weights: &BackboneWeights, features: &SpectralFrame, state: &GruState) -> Result<()> {
    let c = &weights.config;
    if features.bins.len() != c.num_bins() {
        return Err(TvfError::LengthMismatch(format!(
            "{} spectral bins, backbone expects {}",
            features.bins.len(),
            c.num_bins()
        )));
    }
    if let Some(i) = first_non_finite(&features.bins) {
        return Err(TvfError::non_finite("spectral features", i));
    }
    if state.layers.len() != c.gru_layers || state.layers.iter().any(|h| h.len() != c.hidden) {
        return Err(TvfError::LengthMismatch("GRU state does not match the backbone config".into()));
    }
    Ok(())
}

/// Convolutions and GRU for one frame; returns the top-layer output and the new state.
pub fn encode_frame(weights: &BackboneWeights, features: &SpectralFrame, state: &GruState) -> Result<(Vec<f64>, GruState)> {
    check_input(weights, features, state)?;
    let c = &weights.config;
    let mut x = Mat::from_vec(1, c.num_bins(), features.log_compressed(c.feature_eps));
    for (i, shape) in c.conv_shapes().iter().enumerate() {
        let (w, b) = weights.conv_ids(i);
        x = conv1d_forward(&x, &weights.tensors[w].data, &weights.tensors[b].data, shape);
        x = c.activation.forward(&x);
    }
    let mut next = state.clone();
    for (l, h) in next.layers.iter_mut().enumerate() {
        let h_prev = Mat::from_vec(1, c.hidden, std::mem::take(h));
        let (out, _) = gru_cell_forward(&x, &h_prev, &weights.gru(l));
        *h = out.data.clone();
        x = out;
    }
    Ok((x.data, next))
}

pub fn head_logits(weights: &BackboneWeights, hidden: &[f64]) -> Vec<f64> {
    let (w, b) = weights.head_ids();
    let x = Mat::from_vec(1, hidden.len(), hidden.to_vec());
    linear_forward(&x, &weights.tensors[w].data, &weights.tensors[b].data, weights.config.head_outputs()).data
}

/// One causal controller step: parameters for the current frame and the updated state.
pub fn backbone_step(
    features: &SpectralFrame,
    weights: &BackboneWeights,
    state: &GruState,
) -> Result<(Vec<FilterParams>, GruState)> {
    let (top, next) = encode_frame(weights, features, state)?;
    let params = scale_logits(&head_logits(weights, &top), &weights.config.band_plan);
    Ok((params, next))
}

/// Records the convolutions and GRU layers for one frame of log features
/// (`rows = batch`). `hidden` holds each layer's state and is advanced in place.
pub(crate) fn record_encoder(tape: &mut Tape<'_>, x: ValueId, hidden: &mut [ValueId]) -> Result<ValueId> {
    let c = &tape.weights().config;
    let act = c.activation;
    let n_conv = c.conv_channels.len();
    let mut x = x;
    for i in 0..n_conv {
        x = tape.conv1d(x, i)?;
        x = tape.activation(x, act)?;
    }
    for (l, h) in hidden.iter_mut().enumerate() {
        *h = tape.gru(x, *h, l)?;
        x = *h;
    }
    Ok(x)
}

/// Records the head and range scaling; the result holds flat `[g, q, f0]` rows.
pub(crate) fn record_head(tape: &mut Tape<'_>, top: ValueId) -> Result<ValueId> {
    let (w, b) = tape.weights().head_ids();
    let logits = tape.linear(top, w, b)?;
    let plan = tape.weights().config.band_plan.clone();
    tape.scale(logits, &plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::weights::init_weights;
    use crate::filter::BandPlan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_input_is_deterministic() {
        let w = init_weights(5, 0.01).unwrap();
        let f = SpectralFrame { bins: vec![0.0; 513] };
        let s = GruState::for_weights(&w);
        let a = backbone_step(&f, &w, &s).unwrap();
        let b = backbone_step(&f, &w, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_gives_zero_gain() {
        let w = init_weights(5, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = GruState::for_weights(&w);
        for _ in 0..3 {
            let f = SpectralFrame {
                bins: (0..513).map(|_| rng.random_range(0.0..50.0)).collect(),
            };
            let (p, next) = backbone_step(&f, &w, &s).unwrap();
            assert!(p.iter().all(|fp| fp.gain_db == 0.0));
            s = next;
        }
    }

    #[test]
    fn outputs_in_range_for_random_draws() {
        let plan = BandPlan::default_plan();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // large random weights push the head into saturation
        let mut w = init_weights(2, 1.0).unwrap();
        for t in &mut w.tensors {
            for v in &mut t.data {
                *v *= 8.0;
            }
        }
        let s = GruState::for_weights(&w);
        for _ in 0..20 {
            let f = SpectralFrame {
                bins: (0..513).map(|_| rng.random_range(0.0..1e4)).collect(),
            };
            let (p, _) = backbone_step(&f, &w, &s).unwrap();
            for (band, fp) in plan.bands.iter().zip(&p) {
                assert!(fp.is_within(band));
            }
        }
    }

    #[test]
    fn bad_features_rejected() {
        let w = init_weights(0, 0.0).unwrap();
        let s = GruState::for_weights(&w);
        let mut f = SpectralFrame { bins: vec![1.0; 513] };
        f.bins[3] = f64::INFINITY;
        assert!(matches!(backbone_step(&f, &w, &s), Err(TvfError::NonFinite { index: 3, .. })));
        assert!(backbone_step(&SpectralFrame { bins: vec![1.0; 512] }, &w, &s).is_err());
    }
}
