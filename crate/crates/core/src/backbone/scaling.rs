//! Sigmoid-to-range mapping of head outputs. Entry `3k` drives the gain of
//! filter `k`, `3k + 1` its q and `3k + 2` its center frequency.

use crate::filter::coeffs::{GAIN_RANGE_DB, Q_RANGE};
use crate::filter::{BandPlan, FilterParams};
use crate::tensor::sigmoid;

fn log_range(lo: f64, hi: f64, s: f64) -> f64 {
    lo * (hi / lo).powf(s)
}

/// Gain linear in dB, q and f0 geometric between their bounds.
pub fn scale_logits(logits: &[f64], plan: &BandPlan) -> Vec<FilterParams> {
    debug_assert_eq!(logits.len(), 3 * plan.len());
    plan.bands
        .iter()
        .zip(logits.chunks_exact(3))
        .map(|(band, z)| {
            let s = [sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2])];
            FilterParams {
                gain_db: GAIN_RANGE_DB.0 + (GAIN_RANGE_DB.1 - GAIN_RANGE_DB.0) * s[0],
                q: log_range(Q_RANGE.0, Q_RANGE.1, s[1]).clamp(Q_RANGE.0, Q_RANGE.1),
                f0: log_range(band.f_min, band.f_max, s[2]).clamp(band.f_min, band.f_max),
            }
        })
        .collect()
}

/// Flat `[g, q, f0]` per filter, the layout used on the tape.
pub fn scale_logits_flat(logits: &[f64], plan: &BandPlan) -> Vec<f64> {
    scale_logits(logits, plan)
        .iter()
        .flat_map(|p| [p.gain_db, p.q, p.f0])
        .collect()
}

/// Elementwise derivative of [`scale_logits_flat`].
pub fn scale_derivative(logits: &[f64], plan: &BandPlan) -> Vec<f64> {
    let params = scale_logits_flat(logits, plan);
    let mut d = Vec::with_capacity(logits.len());
    for (k, band) in plan.bands.iter().enumerate() {
        for j in 0..3 {
            let s = sigmoid(logits[3 * k + j]);
            let ds = s * (1.0 - s);
            d.push(match j {
                0 => (GAIN_RANGE_DB.1 - GAIN_RANGE_DB.0) * ds,
                1 => params[3 * k + 1] * (Q_RANGE.1 / Q_RANGE.0).ln() * ds,
                _ => params[3 * k + 2] * (band.f_max / band.f_min).ln() * ds,
            });
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logit_is_zero_db() {
        let plan = BandPlan::default_plan();
        let p = scale_logits(&vec![0.0; 105], &plan);
        for (band, fp) in plan.bands.iter().zip(&p) {
            assert_eq!(fp.gain_db, 0.0);
            assert!((fp.q - (0.1f64 * 2.0).sqrt()).abs() < 1e-12);
            assert!((fp.f0 - (band.f_min * band.f_max).sqrt()).abs() < 1e-9 * fp.f0);
        }
    }

    #[test]
    fn saturated_logits_stay_in_range() {
        let plan = BandPlan::default_plan();
        for v in [-1e6, -40.0, 40.0, 1e6] {
            for (band, fp) in plan.bands.iter().zip(scale_logits(&vec![v; 105], &plan)) {
                assert!(fp.is_within(band), "{fp:?}");
            }
        }
    }
}
