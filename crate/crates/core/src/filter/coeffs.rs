//! Parametric EQ coefficients (Audio EQ Cookbook peaking and shelving forms).

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::band_plan::{BandKind, BandSpec};
use crate::error::{Result, TvfError};

pub const GAIN_RANGE_DB: (f64, f64) = (-20.0, 20.0);
pub const Q_RANGE: (f64, f64) = (0.1, 2.0);
/// f0 is kept strictly below Nyquist so that sin(w0) never vanishes.
pub const MAX_F0_FRACTION: f64 = 0.499;

/// Gain, quality factor and center/corner frequency of one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub gain_db: f64,
    pub q: f64,
    pub f0: f64,
}

impl FilterParams {
    /// Clamps each field into its range for `band`.
    pub fn new(gain_db: f64, q: f64, f0: f64, band: &BandSpec) -> Result<Self> {
        for (name, v) in [("gain_db", gain_db), ("q", q), ("f0", f0)] {
            if !v.is_finite() {
                return Err(TvfError::InvalidParameter(format!("{name} is {v}")));
            }
        }
        Ok(FilterParams {
            gain_db: gain_db.clamp(GAIN_RANGE_DB.0, GAIN_RANGE_DB.1),
            q: q.clamp(Q_RANGE.0, Q_RANGE.1),
            f0: f0.clamp(band.f_min, band.f_max),
        })
    }

    /// 0 dB at the band center: the identity filter.
    pub fn neutral(band: &BandSpec) -> Self {
        FilterParams {
            gain_db: 0.0,
            q: (Q_RANGE.0 * Q_RANGE.1).sqrt(),
            f0: band.center(),
        }
    }

    pub fn is_within(&self, band: &BandSpec) -> bool {
        (GAIN_RANGE_DB.0..=GAIN_RANGE_DB.1).contains(&self.gain_db)
            && (Q_RANGE.0..=Q_RANGE.1).contains(&self.q)
            && (band.f_min..=band.f_max).contains(&self.f0)
    }
}

/// Normalized Direct Form I coefficients, `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    pub const IDENTITY: BiquadCoeffs = BiquadCoeffs {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    pub fn from_array(c: [f64; 5]) -> Self {
        BiquadCoeffs {
            b0: c[0],
            b1: c[1],
            b2: c[2],
            a1: c[3],
            a2: c[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.b0, self.b1, self.b2, self.a1, self.a2]
    }

    pub fn is_stable(&self) -> bool {
        check_stability(self)
    }

    /// H(e^{jw}) at frequency `freq`.
    pub fn response(&self, freq: f64, sample_rate: f64) -> Complex64 {
        let w = 2.0 * PI * freq / sample_rate;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b0 + z1 * self.b1 + z2 * self.b2;
        let den = 1.0 + z1 * self.a1 + z2 * self.a2;
        num / den
    }

    pub fn magnitude_db(&self, freq: f64, sample_rate: f64) -> f64 {
        20.0 * self.response(freq, sample_rate).norm().log10()
    }
}

/// Triangle test: both roots of `1 + a1 z^-1 + a2 z^-2` strictly inside the unit circle.
pub fn check_stability(c: &BiquadCoeffs) -> bool {
    c.a2.abs() < 1.0 && c.a1.abs() < 1.0 + c.a2
}

/// Intermediate quantities shared by the coefficient map and its Jacobian.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CookbookTerms {
    /// 10^(g/40)
    pub amp: f64,
    pub cos_w: f64,
    pub sin_w: f64,
    pub alpha: f64,
}

impl CookbookTerms {
    pub fn new(gain_db: f64, q: f64, f0: f64, sample_rate: f64) -> Self {
        let amp = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * f0 / sample_rate;
        let (sin_w, cos_w) = w0.sin_cos();
        CookbookTerms {
            amp,
            cos_w,
            sin_w,
            alpha: sin_w / (2.0 * q),
        }
    }
}

/// Un-normalized `[b0, b1, b2, a0, a1, a2]`.
pub(crate) fn cookbook_raw(kind: BandKind, t: &CookbookTerms) -> [f64; 6] {
    let a = t.amp;
    let c = t.cos_w;
    let alpha = t.alpha;
    match kind {
        BandKind::Peak => [
            1.0 + alpha * a,
            -2.0 * c,
            1.0 - alpha * a,
            1.0 + alpha / a,
            -2.0 * c,
            1.0 - alpha / a,
        ],
        BandKind::LowShelf => {
            let sa = 2.0 * a.sqrt() * alpha;
            let ap = a + 1.0;
            let am = a - 1.0;
            [
                a * ((ap - am * c) + sa),
                2.0 * a * (am - ap * c),
                a * ((ap - am * c) - sa),
                (ap + am * c) + sa,
                -2.0 * (am + ap * c),
                (ap + am * c) - sa,
            ]
        }
        BandKind::HighShelf => {
            let sa = 2.0 * a.sqrt() * alpha;
            let ap = a + 1.0;
            let am = a - 1.0;
            [
                a * ((ap + am * c) + sa),
                -2.0 * a * (am + ap * c),
                a * ((ap + am * c) - sa),
                (ap - am * c) + sa,
                2.0 * (am - ap * c),
                (ap - am * c) - sa,
            ]
        }
    }
}

pub(crate) fn normalize(raw: [f64; 6]) -> BiquadCoeffs {
    let inv = 1.0 / raw[3];
    BiquadCoeffs {
        b0: raw[0] * inv,
        b1: raw[1] * inv,
        b2: raw[2] * inv,
        a1: raw[4] * inv,
        a2: raw[5] * inv,
    }
}

/// Coefficient formula without range clamping; `f0` must already lie in (0, Nyquist).
pub(crate) fn coeffs_unclamped(kind: BandKind, gain_db: f64, q: f64, f0: f64, sample_rate: f64) -> BiquadCoeffs {
    normalize(cookbook_raw(kind, &CookbookTerms::new(gain_db, q, f0, sample_rate)))
}

/// Maps `(gain, q, f0)` to normalized coefficients for the given band kind.
pub fn params_to_coeffs(params: &FilterParams, kind: BandKind, sample_rate: f64) -> Result<BiquadCoeffs> {
    let FilterParams { gain_db, q, f0 } = *params;
    for (name, v) in [("gain_db", gain_db), ("q", q), ("f0", f0), ("sample_rate", sample_rate)] {
        if !v.is_finite() {
            return Err(TvfError::InvalidParameter(format!("{name} is {v}")));
        }
    }
    if q <= 0.0 || f0 <= 0.0 || sample_rate <= 0.0 {
        return Err(TvfError::InvalidParameter(format!(
            "q, f0 and sample rate must be positive (q={q}, f0={f0}, fs={sample_rate})"
        )));
    }
    let f0 = f0.min(MAX_F0_FRACTION * sample_rate);
    Ok(coeffs_unclamped(kind, gain_db, q, f0, sample_rate))
}

/// Evaluates `20 log10 |H|` of a single biquad or a cascade on a frequency grid.
pub fn frequency_response(coeffs: &[BiquadCoeffs], freqs: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let nyquist = sample_rate / 2.0;
    freqs
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f < nyquist) {
                return Err(TvfError::FrequencyOutOfRange { freq: f, nyquist });
            }
            let h = coeffs
                .iter()
                .fold(Complex64::new(1.0, 0.0), |acc, c| acc * c.response(f, sample_rate));
            Ok(20.0 * h.norm().log10())
        })
        .collect()
}

/// Log-spaced frequency axis strictly inside (0, Nyquist).
pub fn log_grid(f_lo: f64, f_hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![(f_lo * f_hi).sqrt()];
    }
    let ratio = (f_hi / f_lo).ln();
    (0..points)
        .map(|i| f_lo * (ratio * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::band_plan::BandPlan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 48_000.0;

    fn peak(g: f64, q: f64, f0: f64) -> BiquadCoeffs {
        params_to_coeffs(&FilterParams { gain_db: g, q, f0 }, BandKind::Peak, FS).unwrap()
    }

    #[test]
    fn zero_gain_peak_is_identity() {
        let c = peak(0.0, 1.0, 1000.0);
        assert_eq!(c.b0, 1.0);
        assert_eq!(c.b1, c.a1);
        assert_eq!(c.b2, c.a2);
        for kind in [BandKind::LowShelf, BandKind::HighShelf] {
            let c = params_to_coeffs(&FilterParams { gain_db: 0.0, q: 0.7, f0: 40.0 }, kind, FS).unwrap();
            assert_eq!(c.b0, 1.0);
            assert_eq!(c.b1, c.a1);
            assert_eq!(c.b2, c.a2);
        }
    }

    #[test]
    fn peak_center_gain_matches() {
        let c = peak(6.0206, 1.0, 1000.0);
        let db = c.magnitude_db(1000.0, FS);
        assert!((db - 6.0206).abs() < 1e-9, "{db}");
    }

    #[test]
    fn high_shelf_plateau_at_nyquist() {
        let c = params_to_coeffs(
            &FilterParams { gain_db: -20.0, q: 0.707, f0: 12_000.0 },
            BandKind::HighShelf,
            FS,
        )
        .unwrap();
        // H(z = -1) evaluated directly
        let h = (c.b0 - c.b1 + c.b2) / (1.0 - c.a1 + c.a2);
        let db = 20.0 * h.abs().log10();
        assert!((db + 20.0).abs() < 1e-6, "{db}");
    }

    #[test]
    fn low_shelf_plateau_at_dc() {
        let c = params_to_coeffs(
            &FilterParams { gain_db: 12.0, q: 0.5, f0: 40.0 },
            BandKind::LowShelf,
            FS,
        )
        .unwrap();
        let h = (c.b0 + c.b1 + c.b2) / (1.0 + c.a1 + c.a2);
        assert!((20.0 * h.log10() - 12.0).abs() < 1e-6);
    }

    #[test]
    fn nyquist_clamp_keeps_coefficients_finite() {
        let c = params_to_coeffs(
            &FilterParams { gain_db: 10.0, q: 1.0, f0: 24_000.0 },
            BandKind::HighShelf,
            FS,
        )
        .unwrap();
        assert!(c.to_array().iter().all(|v| v.is_finite()));
        assert!(c.is_stable());
    }

    #[test]
    fn rejects_non_finite() {
        let p = FilterParams { gain_db: f64::NAN, q: 1.0, f0: 100.0 };
        assert!(matches!(
            params_to_coeffs(&p, BandKind::Peak, FS),
            Err(TvfError::InvalidParameter(_))
        ));
        let band = BandPlan::default_plan().bands[3];
        assert!(FilterParams::new(0.0, f64::INFINITY, 200.0, &band).is_err());
    }

    #[test]
    fn construction_clamps() {
        let band = BandPlan::default_plan().bands[3];
        let p = FilterParams::new(50.0, 0.0, 1.0, &band).unwrap();
        assert_eq!(p.gain_db, 20.0);
        assert_eq!(p.q, 0.1);
        assert_eq!(p.f0, band.f_min);
    }

    #[test]
    fn stability_examples() {
        let mut c = BiquadCoeffs::IDENTITY;
        assert!(check_stability(&c));
        c.a2 = 1.0;
        assert!(!check_stability(&c));
        c.a2 = 0.5;
        c.a1 = 1.6;
        assert!(!check_stability(&c));
    }

    #[test]
    fn sampled_params_are_stable() {
        let plan = BandPlan::default_plan();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let band = plan.bands[rng.random_range(0..plan.len())];
            let p = FilterParams {
                gain_db: rng.random_range(GAIN_RANGE_DB.0..=GAIN_RANGE_DB.1),
                q: rng.random_range(Q_RANGE.0..=Q_RANGE.1),
                f0: rng.random_range(band.f_min..=band.f_max),
            };
            let c = params_to_coeffs(&p, band.kind, FS).unwrap();
            assert!(check_stability(&c), "{p:?} {:?} -> {c:?}", band.kind);
        }
    }

    #[test]
    fn response_rejects_out_of_range() {
        assert!(frequency_response(&[BiquadCoeffs::IDENTITY], &[0.0], FS).is_err());
        assert!(frequency_response(&[BiquadCoeffs::IDENTITY], &[24_000.0], FS).is_err());
        let r = frequency_response(&[BiquadCoeffs::IDENTITY], &[10.0, 1000.0, 23_000.0], FS).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dense_grid_argmax_near_center() {
        let c = peak(10.0, 1.0, 500.0);
        let grid: Vec<f64> = (1..4000).map(|i| i as f64 * 1.0).collect();
        let r = frequency_response(&[c], &grid, FS).unwrap();
        let (imax, _) = r
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!((grid[imax] - 500.0).abs() <= 1.0);
    }

    #[test]
    fn cascade_response_is_db_sum() {
        let plan = BandPlan::default_plan();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<BiquadCoeffs> = plan
            .bands
            .iter()
            .map(|b| {
                let p = FilterParams {
                    gain_db: rng.random_range(-20.0..20.0),
                    q: rng.random_range(0.1..2.0),
                    f0: rng.random_range(b.f_min..b.f_max),
                };
                params_to_coeffs(&p, b.kind, FS).unwrap()
            })
            .collect();
        let grid = log_grid(20.0, 23_000.0, 200);
        let total = frequency_response(&coeffs, &grid, FS).unwrap();
        for (i, &f) in grid.iter().enumerate() {
            let sum: f64 = coeffs.iter().map(|c| c.magnitude_db(f, FS)).sum();
            assert!((total[i] - sum).abs() < 1e-9);
        }
    }
}
