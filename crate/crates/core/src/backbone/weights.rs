use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::config::BackboneConfig;
use super::layers::GruWeights;
use crate::error::{Result, TvfError};
use crate::tensor::Tensor;

/// Default standard deviation of the gain-head bias noise.
pub const DEFAULT_INIT_NOISE: f64 = 0.01;

/// Trainable parameters as an ordered list of named tensors.
///
/// Order: `conv{i}.weight`, `conv{i}.bias` per conv layer; `gru{l}.weight_ih`,
/// `gru{l}.weight_hh`, `gru{l}.bias_ih`, `gru{l}.bias_hh` per GRU layer;
/// `head.weight`, `head.bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub config: BackboneConfig,
    pub tensors: Vec<Tensor>,
}

/// Names and shapes of every tensor for `config`, in storage order.
pub fn tensor_layout(config: &BackboneConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (i, s) in config.conv_shapes().iter().enumerate() {
        out.push((format!("conv{i}.weight"), vec![s.out_channels, s.in_channels, s.kernel]));
        out.push((format!("conv{i}.bias"), vec![s.out_channels]));
    }
    let h = config.hidden;
    let mut inp = config.feature_dim();
    for l in 0..config.gru_layers {
        out.push((format!("gru{l}.weight_ih"), vec![3 * h, inp]));
        out.push((format!("gru{l}.weight_hh"), vec![3 * h, h]));
        out.push((format!("gru{l}.bias_ih"), vec![3 * h]));
        out.push((format!("gru{l}.bias_hh"), vec![3 * h]));
        inp = h;
    }
    out.push(("head.weight".into(), vec![config.head_outputs(), h]));
    out.push(("head.bias".into(), vec![config.head_outputs()]));
    out
}

impl BackboneWeights {
    pub fn zeros(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let tensors = tensor_layout(&config)
            .into_iter()
            .map(|(name, shape)| Tensor::zeros(name, shape))
            .collect();
        Ok(BackboneWeights { config, tensors })
    }

    /// Standard uniform fan-in initialization, except that the head rows
    /// producing gains get zero weights and a bias of `noise_scale * N(0, 1)`,
    /// so the initial cascade sits at (or near) 0 dB everywhere. The q and f0
    /// rows get zero bias, which maps to the middle of their ranges.
    pub fn init(config: BackboneConfig, seed: u64, noise_scale: f64) -> Result<Self> {
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(TvfError::InvalidParameter(format!("noise_scale must be >= 0, got {noise_scale}")));
        }
        let mut w = BackboneWeights::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = w.config.conv_shapes();
        for (i, s) in shapes.iter().enumerate() {
            let bound = 1.0 / ((s.in_channels * s.kernel) as f64).sqrt();
            let (wi, bi) = w.conv_ids(i);
            fill_uniform(&mut w.tensors[wi].data, bound, &mut rng);
            fill_uniform(&mut w.tensors[bi].data, bound, &mut rng);
        }
        let bound = 1.0 / (w.config.hidden as f64).sqrt();
        for l in 0..w.config.gru_layers {
            for id in w.gru_ids(l) {
                fill_uniform(&mut w.tensors[id].data, bound, &mut rng);
            }
        }
        let (hw, hb) = w.head_ids();
        fill_uniform(&mut w.tensors[hw].data, bound, &mut rng);
        let h = w.config.hidden;
        for k in 0..w.config.num_bands() {
            let gain_row = 3 * k;
            w.tensors[hw].data[gain_row * h..(gain_row + 1) * h].fill(0.0);
            let noise: f64 = StandardNormal.sample(&mut rng);
            w.tensors[hb].data[gain_row] = noise_scale * noise;
        }
        Ok(w)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn conv_ids(&self, layer: usize) -> (usize, usize) {
        (2 * layer, 2 * layer + 1)
    }

    /// `[weight_ih, weight_hh, bias_ih, bias_hh]`
    pub fn gru_ids(&self, layer: usize) -> [usize; 4] {
        let base = 2 * self.config.conv_channels.len() + 4 * layer;
        [base, base + 1, base + 2, base + 3]
    }

    pub fn head_ids(&self) -> (usize, usize) {
        let base = 2 * self.config.conv_channels.len() + 4 * self.config.gru_layers;
        (base, base + 1)
    }

    pub fn gru(&self, layer: usize) -> GruWeights<'_> {
        let [a, b, c, d] = self.gru_ids(layer);
        GruWeights {
            hidden: self.config.hidden,
            w_ih: &self.tensors[a].data,
            w_hh: &self.tensors[b].data,
            b_ih: &self.tensors[c].data,
            b_hh: &self.tensors[d].data,
        }
    }

    /// Flattened copy of every parameter in storage order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(TvfError::LengthMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for t in &self.tensors {
            if let Some(i) = crate::error::first_non_finite(&t.data) {
                return Err(TvfError::non_finite(format!("weights '{}'", t.name), i));
            }
        }
        Ok(())
    }

    /// Checks that the tensor list matches the layout implied by the config.
    pub fn check_layout(&self) -> Result<()> {
        let layout = tensor_layout(&self.config);
        if layout.len() != self.tensors.len() {
            return Err(TvfError::Format {
                what: "weights",
                detail: format!("{} tensors, config implies {}", self.tensors.len(), layout.len()),
            });
        }
        for ((name, shape), t) in layout.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(TvfError::Format {
                    what: "weights",
                    detail: format!("tensor '{}' {:?} where '{name}' {shape:?} was expected", t.name, t.shape),
                });
            }
        }
        Ok(())
    }
}

/// Default-shaped weights with the near-identity initialization.
pub fn init_weights(seed: u64, noise_scale: f64) -> Result<BackboneWeights> {
    BackboneWeights::init(BackboneConfig::default(), seed, noise_scale)
}

fn fill_uniform(data: &mut [f64], bound: f64, rng: &mut ChaCha8Rng) {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for v in data {
        *v = dist.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count() {
        let w = init_weights(0, DEFAULT_INIT_NOISE).unwrap();
        // 24 + 84 conv, 594432 + 394752 GRU, 26985 head
        assert_eq!(w.num_params(), 1_016_277);
        assert!((950_000..=1_100_000).contains(&w.num_params()));
        w.check_layout().unwrap();
        w.check_finite().unwrap();
    }

    #[test]
    fn gain_rows_are_zeroed() {
        let w = init_weights(3, 0.0).unwrap();
        let (hw, hb) = w.head_ids();
        let h = w.config.hidden;
        for k in 0..35 {
            assert!(w.tensors[hw].data[3 * k * h..(3 * k + 1) * h].iter().all(|&v| v == 0.0));
            assert_eq!(w.tensors[hb].data[3 * k], 0.0);
        }
        assert!(w.tensors[hw].data[h..2 * h].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn seeded_init_is_repeatable() {
        assert_eq!(init_weights(9, 0.01).unwrap(), init_weights(9, 0.01).unwrap());
        assert_ne!(init_weights(9, 0.01).unwrap(), init_weights(10, 0.01).unwrap());
        assert!(init_weights(0, -1.0).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let w = init_weights(1, 0.01).unwrap();
        let mut z = BackboneWeights::zeros(w.config.clone()).unwrap();
        z.set_flat(&w.to_flat()).unwrap();
        assert_eq!(z, w);
    }
}
