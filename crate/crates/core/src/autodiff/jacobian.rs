//! Closed-form derivatives of the cookbook coefficient map.
//!
//! Partials are taken with respect to the intermediate quantities
//! `A = 10^(g/40)`, `c = cos w0` and `alpha = sin w0 / (2q)` and chained to
//! `(g, q, f0)`, then pushed through the `a0` normalization with the
//! quotient rule.

use std::f64::consts::{LN_10, PI};

use crate::filter::band_plan::BandKind;
use crate::filter::coeffs::{cookbook_raw, normalize, CookbookTerms, GAIN_RANGE_DB, MAX_F0_FRACTION, Q_RANGE};
use crate::filter::{BiquadCoeffs, FilterParams};

/// `d(b0, b1, b2, a1, a2) / d(g, q, f0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffJacobian {
    pub coeffs: BiquadCoeffs,
    /// `d[i][j]`: coefficient `i` with respect to parameter `j`.
    pub d: [[f64; 3]; 5],
    /// Parameters whose gradient is zeroed because a clamp is active.
    pub clamped: [bool; 3],
}

impl CoeffJacobian {
    /// `J^T v`: pulls a coefficient cotangent back to `(g, q, f0)`.
    pub fn pullback(&self, v: &[f64; 5]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, row) in self.d.iter().enumerate() {
            for j in 0..3 {
                out[j] += row[j] * v[i];
            }
        }
        out
    }
}

/// Partials of the un-normalized `[b0, b1, b2, a0, a1, a2]` with respect to `(A, c, alpha)`.
fn raw_partials(kind: BandKind, t: &CookbookTerms) -> [[f64; 3]; 6] {
    let a = t.amp;
    let c = t.cos_w;
    let al = t.alpha;
    let s = a.sqrt();
    match kind {
        BandKind::Peak => [
            [al, 0.0, a],
            [0.0, -2.0, 0.0],
            [-al, 0.0, -a],
            [-al / (a * a), 0.0, 1.0 / a],
            [0.0, -2.0, 0.0],
            [al / (a * a), 0.0, -1.0 / a],
        ],
        BandKind::LowShelf => [
            [(2.0 * a + 1.0) - (2.0 * a - 1.0) * c + 3.0 * s * al, -a * (a - 1.0), 2.0 * a * s],
            [4.0 * a - 2.0 - (4.0 * a + 2.0) * c, -2.0 * a * (a + 1.0), 0.0],
            [(2.0 * a + 1.0) - (2.0 * a - 1.0) * c - 3.0 * s * al, -a * (a - 1.0), -2.0 * a * s],
            [1.0 + c + al / s, a - 1.0, 2.0 * s],
            [-2.0 - 2.0 * c, -2.0 * (a + 1.0), 0.0],
            [1.0 + c - al / s, a - 1.0, -2.0 * s],
        ],
        BandKind::HighShelf => [
            [(2.0 * a + 1.0) + (2.0 * a - 1.0) * c + 3.0 * s * al, a * (a - 1.0), 2.0 * a * s],
            [-(4.0 * a - 2.0) - (4.0 * a + 2.0) * c, -2.0 * a * (a + 1.0), 0.0],
            [(2.0 * a + 1.0) + (2.0 * a - 1.0) * c - 3.0 * s * al, a * (a - 1.0), -2.0 * a * s],
            [1.0 - c + al / s, -(a - 1.0), 2.0 * s],
            [2.0 - 2.0 * c, -2.0 * (a + 1.0), 0.0],
            [1.0 - c - al / s, -(a - 1.0), -2.0 * s],
        ],
    }
}

/// Jacobian of the unclamped map. `f0` must lie in (0, Nyquist).
pub(crate) fn jacobian_unclamped(kind: BandKind, gain_db: f64, q: f64, f0: f64, sample_rate: f64) -> CoeffJacobian {
    let t = CookbookTerms::new(gain_db, q, f0, sample_rate);
    let raw = cookbook_raw(kind, &t);
    let p = raw_partials(kind, &t);

    // (A, c, alpha) with respect to (g, q, f0)
    let da_dg = t.amp * LN_10 / 40.0;
    let dw_df = 2.0 * PI / sample_rate;
    let dc_df = -t.sin_w * dw_df;
    let dalpha_dq = -t.sin_w / (2.0 * q * q);
    let dalpha_df = t.cos_w / (2.0 * q) * dw_df;

    let mut draw = [[0.0; 3]; 6];
    for i in 0..6 {
        draw[i][0] = p[i][0] * da_dg;
        draw[i][1] = p[i][2] * dalpha_dq;
        draw[i][2] = p[i][1] * dc_df + p[i][2] * dalpha_df;
    }
    let a0 = raw[3];
    let mut d = [[0.0; 3]; 5];
    for (out, src) in [0usize, 1, 2, 4, 5].into_iter().enumerate() {
        for j in 0..3 {
            d[out][j] = (draw[src][j] * a0 - raw[src] * draw[3][j]) / (a0 * a0);
        }
    }
    CoeffJacobian {
        coeffs: normalize(raw),
        d,
        clamped: [false; 3],
    }
}

/// Jacobian of [`crate::filter::params_to_coeffs`] at `params`.
///
/// A parameter sitting on one of its range bounds, or an `f0` cut back by
/// the Nyquist guard, has its column zeroed and flagged in `clamped`.
pub fn coeff_jacobian(params: &FilterParams, kind: BandKind, sample_rate: f64) -> CoeffJacobian {
    let f_cap = MAX_F0_FRACTION * sample_rate;
    let f0 = params.f0.min(f_cap);
    let mut jac = jacobian_unclamped(kind, params.gain_db, params.q, f0, sample_rate);
    let clamped = [
        params.gain_db <= GAIN_RANGE_DB.0 || params.gain_db >= GAIN_RANGE_DB.1,
        params.q <= Q_RANGE.0 || params.q >= Q_RANGE.1,
        params.f0 >= f_cap,
    ];
    for (j, &flag) in clamped.iter().enumerate() {
        if flag {
            for row in jac.d.iter_mut() {
                row[j] = 0.0;
            }
        }
    }
    jac.clamped = clamped;
    jac
}

/// Jacobian used inside training, where parameters come from the sigmoid
/// scaling and are never hard-clamped: only the Nyquist guard on `f0` cuts
/// the gradient.
pub(crate) fn training_jacobian(
    kind: BandKind,
    gain_db: f64,
    q: f64,
    f0: f64,
    sample_rate: f64,
) -> crate::error::Result<CoeffJacobian> {
    if !(gain_db.is_finite() && q > 0.0 && q.is_finite() && f0 > 0.0 && f0.is_finite()) {
        return Err(crate::error::TvfError::InvalidParameter(format!(
            "cannot map g={gain_db}, q={q}, f0={f0} to coefficients"
        )));
    }
    let f_cap = MAX_F0_FRACTION * sample_rate;
    let mut jac = jacobian_unclamped(kind, gain_db, q, f0.min(f_cap), sample_rate);
    if f0 >= f_cap {
        for row in jac.d.iter_mut() {
            row[2] = 0.0;
        }
        jac.clamped[2] = true;
    }
    Ok(jac)
}
