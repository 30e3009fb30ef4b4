//! Multi-resolution log-spectral distance plus a weighted time-domain MSE.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::backbone::features::hann;
use crate::error::{Result, TvfError};
use crate::tensor::compensated_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub fft_sizes: Vec<usize>,
    /// Hop is `size / hop_divisor`.
    pub hop_divisor: usize,
    pub spectral_eps: f64,
    pub mse_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            fft_sizes: vec![256, 512, 1024, 2048],
            hop_divisor: 4,
            spectral_eps: 1e-5,
            mse_weight: 5e4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(&n) = self.fft_sizes.iter().find(|n| !n.is_power_of_two() || **n < 2) {
            return Err(TvfError::Config(format!("fft size {n} is not a power of two")));
        }
        if self.hop_divisor == 0 || self.fft_sizes.iter().any(|&n| n % self.hop_divisor != 0) {
            return Err(TvfError::Config(format!("hop divisor {} does not divide every fft size", self.hop_divisor)));
        }
        if !(self.mse_weight > 0.0 && self.mse_weight.is_finite()) {
            return Err(TvfError::Config(format!("mse_weight must be positive, got {}", self.mse_weight)));
        }
        if !(self.spectral_eps > 0.0 && self.spectral_eps.is_finite()) {
            return Err(TvfError::Config(format!("spectral_eps must be positive, got {}", self.spectral_eps)));
        }
        Ok(())
    }

    pub fn min_len(&self) -> usize {
        self.fft_sizes.iter().copied().max().unwrap_or(1)
    }
}

struct Scale {
    size: usize,
    hop: usize,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Planned FFTs and windows for one [`LossConfig`].
pub struct SpectralLoss {
    config: LossConfig,
    scales: Vec<Scale>,
}

impl SpectralLoss {
    pub fn new(config: &LossConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        let scales = config
            .fft_sizes
            .iter()
            .map(|&n| Scale {
                size: n,
                hop: n / config.hop_divisor,
                window: hann(n),
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
            .collect();
        Ok(SpectralLoss {
            config: config.clone(),
            scales,
        })
    }

    fn check(&self, y: &[f64], target: &[f64]) -> Result<()> {
        if y.len() != target.len() {
            return Err(TvfError::LengthMismatch(format!(
                "estimate has {} samples, target {}",
                y.len(),
                target.len()
            )));
        }
        if y.len() < self.config.min_len() || y.is_empty() {
            return Err(TvfError::LengthMismatch(format!(
                "{} samples is shorter than the largest fft size {}",
                y.len(),
                self.config.min_len()
            )));
        }
        Ok(())
    }

    fn spectrum(s: &Scale, x: &[f64], start: usize) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x[start..start + s.size]
            .iter()
            .zip(&s.window)
            .map(|(&v, &w)| Complex64::new(v * w, 0.0))
            .collect();
        s.fwd.process(&mut buf);
        buf.truncate(s.size / 2 + 1);
        buf
    }

    /// Loss and, when `grad` is given, its gradient with respect to `y` added into it.
    fn spectral(&self, y: &[f64], target: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        if self.scales.is_empty() {
            return 0.0;
        }
        let eps = self.config.spectral_eps;
        let n_scales = self.scales.len() as f64;
        let mut per_scale = Vec::with_capacity(self.scales.len());
        for s in &self.scales {
            let frames = 1 + (y.len() - s.size) / s.hop;
            let bins = s.size / 2 + 1;
            let norm = 1.0 / (frames * bins) as f64;
            let mut terms = Vec::with_capacity(frames * bins);
            for m in 0..frames {
                let start = m * s.hop;
                let ys = Self::spectrum(s, y, start);
                let rs = Self::spectrum(s, target, start);
                let mut u = grad.as_ref().map(|_| vec![Complex64::new(0.0, 0.0); s.size]);
                for k in 0..bins {
                    let (ym, rm) = (ys[k].norm(), rs[k].norm());
                    let d = (eps + ym).ln() - (eps + rm).ln();
                    terms.push(d.abs());
                    if let Some(u) = u.as_mut() {
                        if d != 0.0 && ym > 0.0 {
                            let g = d.signum() / (eps + ym) * norm / n_scales;
                            u[k] = ys[k] * (g / ym);
                        }
                    }
                }
                if let (Some(u), Some(grad)) = (u.as_mut(), grad.as_deref_mut()) {
                    s.inv.process(u);
                    for (t, w) in s.window.iter().enumerate() {
                        grad[start + t] += w * u[t].re;
                    }
                }
            }
            per_scale.push(compensated_sum(terms) * norm);
        }
        compensated_sum(per_scale) / n_scales
    }

    pub fn spectral_loss(&self, y: &[f64], target: &[f64]) -> Result<f64> {
        self.check(y, target)?;
        Ok(self.spectral(y, target, None))
    }

    /// Spectral term alone and its gradient with respect to `y`.
    pub fn spectral_with_grad(&self, y: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(y, target)?;
        let mut grad = vec![0.0; y.len()];
        let v = self.spectral(y, target, Some(&mut grad));
        Ok((v, grad))
    }

    pub fn total(&self, y: &[f64], target: &[f64]) -> Result<f64> {
        self.check(y, target)?;
        Ok(self.spectral(y, target, None) + self.config.mse_weight * mse(y, target))
    }

    /// Total loss and its gradient with respect to `y`.
    pub fn total_with_grad(&self, y: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(y, target)?;
        let n = y.len() as f64;
        let mut grad: Vec<f64> = y
            .iter()
            .zip(target)
            .map(|(a, b)| self.config.mse_weight * 2.0 * (a - b) / n)
            .collect();
        let spec = self.spectral(y, target, Some(&mut grad));
        Ok((spec + self.config.mse_weight * mse(y, target), grad))
    }
}

pub fn mse(y: &[f64], target: &[f64]) -> f64 {
    compensated_sum(y.iter().zip(target).map(|(a, b)| (a - b) * (a - b))) / y.len() as f64
}

/// Mean over scales of the mean absolute log-magnitude difference.
pub fn multiscale_spectral_loss(y: &[f64], target: &[f64], config: &LossConfig) -> Result<f64> {
    SpectralLoss::new(config)?.spectral_loss(y, target)
}

/// Spectral distance plus `mse_weight` times the per-sample mean squared error.
pub fn total_loss(y: &[f64], target: &[f64], config: &LossConfig) -> Result<f64> {
    SpectralLoss::new(config)?.total(y, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn identical_signals_give_zero() {
        let x = noise(1, 4096);
        let cfg = LossConfig::default();
        assert_eq!(multiscale_spectral_loss(&x, &x, &cfg).unwrap(), 0.0);
        assert_eq!(total_loss(&x, &x, &cfg).unwrap(), 0.0);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!(multiscale_spectral_loss(&y, &x, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn constant_signals_against_closed_form_spectrum() {
        // A periodic-Hann-windowed constant `a` has |X0| = a n / 2, |X1| = a n / 4
        // and every other bin exactly zero, so with y = 1 and target = e each
        // frame contributes two unit log differences out of n/2 + 1 bins.
        let cfg = LossConfig {
            fft_sizes: vec![256],
            ..LossConfig::default()
        };
        let e = std::f64::consts::E;
        let y = vec![1.0; 1024];
        let t = vec![e; 1024];
        let n = 256.0;
        let eps: f64 = 1e-5;
        let d0 = ((eps + n / 2.0).ln() - (eps + e * n / 2.0).ln()).abs();
        let d1 = ((eps + n / 4.0).ln() - (eps + e * n / 4.0).ln()).abs();
        let expected = (d0 + d1) / 129.0;
        let got = multiscale_spectral_loss(&y, &t, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn single_scale_matches_naive_stft() {
        let cfg = LossConfig {
            fft_sizes: vec![64],
            ..LossConfig::default()
        };
        let y = noise(11, 256);
        let t = noise(12, 256);
        let n = 64;
        let w = hann(n);
        let mag = |x: &[f64], start: usize, k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let ph = -2.0 * PI * (k * i) as f64 / n as f64;
                re += x[start + i] * w[i] * ph.cos();
                im += x[start + i] * w[i] * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        let frames = 1 + (256 - n) / 16;
        let mut acc = 0.0;
        for m in 0..frames {
            for k in 0..=n / 2 {
                acc += ((1e-5 + mag(&y, 16 * m, k)).ln() - (1e-5 + mag(&t, 16 * m, k)).ln()).abs();
            }
        }
        let expected = acc / (frames * (n / 2 + 1)) as f64;
        let got = multiscale_spectral_loss(&y, &t, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn mse_term_isolated_by_empty_scales() {
        let cfg = LossConfig {
            fft_sizes: vec![],
            ..LossConfig::default()
        };
        let t = noise(2, 300);
        let y: Vec<f64> = t.iter().map(|v| v + 0.01).collect();
        let got = total_loss(&y, &t, &cfg).unwrap();
        assert!((got - 5.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn offset_total_adds_oracle_spectral_term() {
        let cfg = LossConfig::default();
        let t = noise(3, 4096);
        let y: Vec<f64> = t.iter().map(|v| v + 0.01).collect();
        let spec = multiscale_spectral_loss(&y, &t, &cfg).unwrap();
        let total = total_loss(&y, &t, &cfg).unwrap();
        assert!((total - spec - 5.0).abs() < 1e-9);
    }

    #[test]
    fn errors_on_bad_lengths() {
        let cfg = LossConfig::default();
        assert!(total_loss(&[0.0; 4096], &[0.0; 4095], &cfg).is_err());
        assert!(total_loss(&[0.0; 1000], &[0.0; 1000], &cfg).is_err());
        let bad = LossConfig {
            fft_sizes: vec![300],
            ..LossConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = LossConfig {
            fft_sizes: vec![32, 64],
            ..LossConfig::default()
        };
        let loss = SpectralLoss::new(&cfg).unwrap();
        let t = noise(4, 128);
        let y = noise(5, 128);
        let (_, g) = loss.total_with_grad(&y, &t).unwrap();
        let h = 1e-6;
        for i in 0..y.len() {
            let (mut lo, mut hi) = (y.clone(), y.clone());
            lo[i] -= h;
            hi[i] += h;
            let num = (loss.total(&hi, &t).unwrap() - loss.total(&lo, &t).unwrap()) / (2.0 * h);
            let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-5, "sample {i}: {} vs {num}", g[i]);
        }
    }
}
