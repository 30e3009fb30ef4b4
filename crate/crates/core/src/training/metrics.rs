//! Reference-based quality metrics.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::backbone::features::hann;
use crate::error::{Result, TvfError};

pub const LSD_FRAME: usize = 256;
pub const LSD_HOP: usize = 128;
pub const LSD_EPS: f64 = 1e-5;
pub const SI_SDR_CAP_DB: f64 = 120.0;

fn check_pair(y: &[f64], reference: &[f64]) -> Result<()> {
    if y.len() != reference.len() {
        return Err(TvfError::LengthMismatch(format!(
            "estimate has {} samples, reference {}",
            y.len(),
            reference.len()
        )));
    }
    Ok(())
}

/// Number of `LSD_FRAME`-sample frames analyzed for a signal of `len` samples.
pub fn lsd_frame_count(len: usize) -> usize {
    if len < LSD_FRAME {
        0
    } else {
        1 + (len - LSD_FRAME) / LSD_HOP
    }
}

/// Log-spectral distance in dB: per-frame RMS over bins of the dB
/// difference, averaged over frames.
pub fn lsd(y: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(y, reference)?;
    let frames = lsd_frame_count(y.len());
    if frames == 0 {
        return Err(TvfError::LengthMismatch(format!(
            "LSD needs at least {LSD_FRAME} samples, got {}",
            y.len()
        )));
    }
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(LSD_FRAME);
    let window = hann(LSD_FRAME);
    let bins = LSD_FRAME / 2 + 1;
    let spectrum = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().zip(&window).map(|(&v, &w)| Complex64::new(v * w, 0.0)).collect();
        fft.process(&mut buf);
        buf
    };
    let mut total = 0.0;
    for m in 0..frames {
        let span = m * LSD_HOP..m * LSD_HOP + LSD_FRAME;
        let ys = spectrum(&y[span.clone()]);
        let rs = spectrum(&reference[span]);
        let mut sq = 0.0;
        for k in 0..bins {
            let d = 20.0 * (LSD_EPS + ys[k].norm()).log10() - 20.0 * (LSD_EPS + rs[k].norm()).log10();
            sq += d * d;
        }
        total += (sq / bins as f64).sqrt();
    }
    Ok(total / frames as f64)
}

/// Scale-invariant SDR in dB, capped at [`SI_SDR_CAP_DB`].
pub fn si_sdr(y: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(y, reference)?;
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr == 0.0 {
        return Err(TvfError::InvalidParameter("SI-SDR reference is all zeros".into()));
    }
    let alpha = y.iter().zip(reference).map(|(a, b)| a * b).sum::<f64>() / rr;
    let (mut target, mut noise) = (0.0, 0.0);
    for (a, b) in y.iter().zip(reference) {
        let s = alpha * b;
        target += s * s;
        noise += (a - s) * (a - s);
    }
    if noise == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / noise).log10()).min(SI_SDR_CAP_DB))
}

pub fn mean_squared_error(y: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(y, reference)?;
    if y.is_empty() {
        return Err(TvfError::Empty("no samples to compare".into()));
    }
    Ok(super::loss::mse(y, reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn si_sdr_hand_case() {
        assert_eq!(si_sdr(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(si_sdr(&[0.3, -2.0, 1.0], &[0.3, -2.0, 1.0]).unwrap(), SI_SDR_CAP_DB);
        assert_eq!(si_sdr(&[0.9, -6.0, 3.0], &[0.3, -2.0, 1.0]).unwrap(), SI_SDR_CAP_DB);
        assert!(si_sdr(&[1.0], &[0.0]).is_err());
        assert!(si_sdr(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn lsd_framing_and_scale() {
        assert_eq!(lsd_frame_count(512), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(lsd(&r, &r).unwrap(), 0.0);
        let y: Vec<f64> = r.iter().map(|v| 10.0 * v).collect();
        assert!((lsd(&y, &r).unwrap() - 20.0).abs() < 0.1);
        assert!(lsd(&r[..200], &r[..200]).is_err());
    }
}
