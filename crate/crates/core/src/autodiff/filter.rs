//! Forward and adjoint passes of the FIR and all-pole halves of a
//! Direct Form I biquad with per-frame coefficients.
//!
//! The adjoint of the all-pole recursion is the same recursion run backwards
//! in time over the cotangent; coefficient cotangents accumulate
//! `-g[t] * y[t - i]`.

use crate::error::{Result, TvfError};
use crate::filter::FilterState;
use crate::sample::Sample;

fn frame_of(t: usize, frame_len: usize) -> usize {
    t / frame_len
}

fn check_traj_len(len: usize, frame_len: usize, traj_len: usize, what: &str) -> Result<()> {
    if frame_len == 0 {
        return Err(TvfError::Config("frame length must be positive".into()));
    }
    let needed = len.div_ceil(frame_len);
    if traj_len < needed {
        return Err(TvfError::LengthMismatch(format!(
            "{what}: {needed} frames of coefficients needed, {traj_len} given"
        )));
    }
    Ok(())
}

/// `w[t] = sum_i b_i[frame(t)] x[t-i]`; `x_state` holds `[x[-1], x[-2]]`.
pub fn fir_forward(x: &[f64], b_traj: &[[f64; 3]], x_state: [f64; 2], frame_len: usize) -> Result<Vec<f64>> {
    check_traj_len(x.len(), frame_len, b_traj.len(), "fir_forward")?;
    let hist = |t: isize| -> f64 {
        match t {
            -1 => x_state[0],
            -2 => x_state[1],
            t => x[t as usize],
        }
    };
    Ok((0..x.len())
        .map(|t| {
            let b = b_traj[frame_of(t, frame_len)];
            let ti = t as isize;
            b[0] * hist(ti) + b[1] * hist(ti - 1) + b[2] * hist(ti - 2)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirGrads {
    pub grad_x: Vec<f64>,
    pub grad_b: Vec<[f64; 3]>,
    /// Cotangent of `[x[-1], x[-2]]`.
    pub grad_state: [f64; 2],
}

pub fn fir_backward(
    x: &[f64],
    b_traj: &[[f64; 3]],
    x_state: [f64; 2],
    frame_len: usize,
    grad_w: &[f64],
) -> Result<FirGrads> {
    check_traj_len(x.len(), frame_len, b_traj.len(), "fir_backward")?;
    if grad_w.len() != x.len() {
        return Err(TvfError::LengthMismatch(format!(
            "fir_backward: cotangent has {} samples, input {}",
            grad_w.len(),
            x.len()
        )));
    }
    let n = x.len();
    // extended index e = t + 2
    let mut xe = vec![x_state[1], x_state[0]];
    xe.extend_from_slice(x);
    let mut gxe = vec![0.0; n + 2];
    let mut grad_b = vec![[0.0; 3]; b_traj.len()];
    for t in (0..n).rev() {
        let f = frame_of(t, frame_len);
        let b = b_traj[f];
        let g = grad_w[t];
        let e = t + 2;
        for i in 0..3 {
            grad_b[f][i] += g * xe[e - i];
            gxe[e - i] += b[i] * g;
        }
    }
    Ok(FirGrads {
        grad_x: gxe[2..].to_vec(),
        grad_b,
        grad_state: [gxe[1], gxe[0]],
    })
}

/// Saved values of an all-pole forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AllpoleRecord {
    pub y: Vec<f64>,
    pub y_state: [f64; 2],
    pub a_traj: Vec<[f64; 2]>,
    pub frame_len: usize,
}

/// `y[t] = w[t] - a1 y[t-1] - a2 y[t-2]` with per-frame `(a1, a2)`.
/// `y_state` holds `[y[-1], y[-2]]`.
pub fn allpole_forward(w: &[f64], a_traj: &[[f64; 2]], y_state: [f64; 2], frame_len: usize) -> Result<AllpoleRecord> {
    check_traj_len(w.len(), frame_len, a_traj.len(), "allpole_forward")?;
    let mut y = Vec::with_capacity(w.len());
    let [mut y1, mut y2] = y_state;
    for (t, &wt) in w.iter().enumerate() {
        let f = frame_of(t, frame_len);
        let [a1, a2] = a_traj[f];
        let y0 = wt - a1 * y1 - a2 * y2;
        if !y0.is_finite() {
            return Err(TvfError::non_finite(format!("all-pole output (frame {f})"), t));
        }
        y.push(y0);
        y2 = y1;
        y1 = y0;
    }
    Ok(AllpoleRecord {
        y,
        y_state,
        a_traj: a_traj.to_vec(),
        frame_len,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllpoleGrads {
    pub grad_w: Vec<f64>,
    pub grad_a: Vec<[f64; 2]>,
    /// Cotangent of `[y[-1], y[-2]]`.
    pub grad_state: [f64; 2],
}

pub fn allpole_backward(rec: &AllpoleRecord, grad_y: &[f64]) -> Result<AllpoleGrads> {
    let n = rec.y.len();
    if grad_y.len() != n {
        return Err(TvfError::LengthMismatch(format!(
            "allpole_backward: cotangent has {} samples, forward produced {n}",
            grad_y.len()
        )));
    }
    let mut ye = vec![rec.y_state[1], rec.y_state[0]];
    ye.extend_from_slice(&rec.y);
    let mut g = vec![0.0; n + 2];
    g[2..].copy_from_slice(grad_y);
    let mut grad_a = vec![[0.0; 2]; rec.a_traj.len()];
    for t in (0..n).rev() {
        let f = frame_of(t, rec.frame_len);
        let [a1, a2] = rec.a_traj[f];
        let e = t + 2;
        let gt = g[e];
        grad_a[f][0] -= gt * ye[e - 1];
        grad_a[f][1] -= gt * ye[e - 2];
        g[e - 1] -= a1 * gt;
        g[e - 2] -= a2 * gt;
    }
    Ok(AllpoleGrads {
        grad_w: g[2..].to_vec(),
        grad_a,
        grad_state: [g[1], g[0]],
    })
}

/// Cotangents of one biquad frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAdjoint<F> {
    pub grad_x: Vec<F>,
    pub grad_coeffs: [F; 5],
    /// Cotangent of the incoming state, ordered `[x1, x2, y1, y2]`.
    pub grad_state_in: [F; 4],
}

/// Reverse pass of one biquad frame.
///
/// `grad_y` is the cotangent of the output frame and `grad_state_out` that of
/// the outgoing state (`[x1, x2, y1, y2]`), i.e. whatever the next frame of
/// the same filter sent back.
pub fn biquad_frame_adjoint<F: Sample>(
    x: &[F],
    y: &[F],
    c: &[F; 5],
    state_in: &FilterState<F>,
    grad_y: &[F],
    grad_state_out: &[F; 4],
) -> FrameAdjoint<F> {
    let l = x.len();
    debug_assert_eq!(y.len(), l);
    debug_assert_eq!(grad_y.len(), l);
    let [b0, b1, b2, a1, a2] = *c;
    let mut xe = Vec::with_capacity(l + 2);
    xe.push(state_in.x_hist[1]);
    xe.push(state_in.x_hist[0]);
    xe.extend_from_slice(x);
    let mut ye = Vec::with_capacity(l + 2);
    ye.push(state_in.y_hist[1]);
    ye.push(state_in.y_hist[0]);
    ye.extend_from_slice(y);

    let mut gx = vec![F::ZERO; l + 2];
    let mut gy = vec![F::ZERO; l + 2];
    gy[2..].copy_from_slice(grad_y);
    gx[l + 1] += grad_state_out[0];
    gx[l] += grad_state_out[1];
    gy[l + 1] += grad_state_out[2];
    gy[l] += grad_state_out[3];

    let mut gc = [F::ZERO; 5];
    for e in (2..l + 2).rev() {
        let g = gy[e];
        gc[0] += g * xe[e];
        gc[1] += g * xe[e - 1];
        gc[2] += g * xe[e - 2];
        gc[3] += -(g * ye[e - 1]);
        gc[4] += -(g * ye[e - 2]);
        gy[e - 1] += -(a1 * g);
        gy[e - 2] += -(a2 * g);
        gx[e] += b0 * g;
        gx[e - 1] += b1 * g;
        gx[e - 2] += b2 * g;
    }
    FrameAdjoint {
        grad_state_in: [gx[1], gx[0], gy[1], gy[0]],
        grad_x: gx.split_off(2),
        grad_coeffs: gc,
    }
}
