use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{first_non_finite, Result, TvfError};
use crate::filter::FRAME_LEN;

/// One-sided magnitude spectrum of a frame: `frame_len / 2 + 1` bins from DC
/// to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    pub bins: Vec<f64>,
}

impl SpectralFrame {
    /// `log(eps + |X|)` per bin: the network input.
    pub fn log_compressed(&self, eps: f64) -> Vec<f64> {
        self.bins.iter().map(|&m| (eps + m).ln()).collect()
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Reusable FFT plan and analysis window for one frame length.
#[derive(Clone)]
pub struct FeatureExtractor {
    frame_len: usize,
    window: Option<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("frame_len", &self.frame_len)
            .field("windowed", &self.window.is_some())
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(frame_len: usize, hann_window: bool) -> Self {
        FeatureExtractor {
            frame_len,
            window: hann_window.then(|| hann(frame_len)),
            fft: FftPlanner::new().plan_fft_forward(frame_len),
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn spectrum(&self, frame: &[f64]) -> Result<SpectralFrame> {
        if frame.len() != self.frame_len {
            return Err(TvfError::LengthMismatch(format!(
                "feature frame has {} samples, expected {}",
                frame.len(),
                self.frame_len
            )));
        }
        if let Some(i) = first_non_finite(frame) {
            return Err(TvfError::non_finite("feature frame", i));
        }
        let mut buf: Vec<Complex64> = match &self.window {
            Some(w) => frame.iter().zip(w).map(|(&x, &w)| Complex64::new(x * w, 0.0)).collect(),
            None => frame.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        self.fft.process(&mut buf);
        buf.truncate(self.frame_len / 2 + 1);
        Ok(SpectralFrame {
            bins: buf.iter().map(|c| c.norm()).collect(),
        })
    }

    /// Spectra of consecutive frames of `audio`, zero-padding the last one.
    pub fn clip(&self, audio: &[f64]) -> Result<Vec<SpectralFrame>> {
        let padded = crate::filter::pad_to_frames(audio, self.frame_len);
        padded.chunks_exact(self.frame_len).map(|f| self.spectrum(f)).collect()
    }
}

/// Hann-windowed magnitude spectrum of one 1024-sample frame.
pub fn frame_features(frame: &[f64]) -> Result<SpectralFrame> {
    FeatureExtractor::new(FRAME_LEN, true).spectrum(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame() {
        let s = frame_features(&[0.0; FRAME_LEN]).unwrap();
        assert_eq!(s.bins.len(), 513);
        assert!(s.log_compressed(1e-5).iter().all(|&v| v == 1e-5f64.ln()));
    }

    #[test]
    fn on_bin_sinusoid_peaks_at_its_bin() {
        // 468.75 Hz = 10 * 48000 / 1024
        let x: Vec<f64> = (0..FRAME_LEN)
            .map(|t| (2.0 * PI * 468.75 * t as f64 / 48_000.0).sin())
            .collect();
        let s = frame_features(&x).unwrap();
        let argmax = s
            .bins
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 10);
        // windowed on-bin sine of unit amplitude: |X[10]| = N/4
        assert!((s.bins[10] - FRAME_LEN as f64 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(matches!(frame_features(&[0.0; 1000]), Err(TvfError::LengthMismatch(_))));
        let mut x = vec![0.0; FRAME_LEN];
        x[7] = f64::NAN;
        assert!(matches!(frame_features(&x), Err(TvfError::NonFinite { index: 7, .. })));
    }
}
