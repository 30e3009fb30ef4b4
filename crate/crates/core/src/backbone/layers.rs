//! Batched network layers and their adjoints. Every kernel treats matrix
//! rows as independent batch items, so a row's result never depends on the
//! other rows.

use serde::{Deserialize, Serialize};

use crate::tensor::{axpy, dot, sigmoid, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn forward(self, x: &Mat) -> Mat {
        let data = match self {
            Activation::Relu => x.data.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => x.data.iter().map(|&v| v.tanh()).collect(),
        };
        Mat::from_vec(x.rows, x.cols, data)
    }

    /// Cotangent of the input given the forward output `y`.
    pub fn backward(self, y: &Mat, grad_y: &Mat) -> Mat {
        let data = match self {
            Activation::Relu => y
                .data
                .iter()
                .zip(&grad_y.data)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Tanh => y.data.iter().zip(&grad_y.data).map(|(&v, &g)| g * (1.0 - v * v)).collect(),
        };
        Mat::from_vec(y.rows, y.cols, data)
    }
}

/// Geometry of a 1-D convolution over channel-major rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_len: usize,
}

impl Conv1dShape {
    pub fn out_len(&self) -> usize {
        (self.in_len + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel
    }

    pub fn in_cols(&self) -> usize {
        self.in_channels * self.in_len
    }

    pub fn out_cols(&self) -> usize {
        self.out_channels * self.out_len()
    }

    /// Input index read by output position `t` at tap `j`, if inside the signal.
    #[inline]
    fn source(&self, t: usize, j: usize) -> Option<usize> {
        (t * self.stride + j).checked_sub(self.padding).filter(|&i| i < self.in_len)
    }
}

/// `weight` is `[out, in, kernel]` row-major.
pub fn conv1d_forward(x: &Mat, weight: &[f64], bias: &[f64], s: &Conv1dShape) -> Mat {
    debug_assert_eq!(x.cols, s.in_cols());
    let out_len = s.out_len();
    let mut y = Mat::zeros(x.rows, s.out_cols());
    for b in 0..x.rows {
        let xr = x.row(b);
        let yr = y.row_mut(b);
        for oc in 0..s.out_channels {
            for t in 0..out_len {
                let mut acc = bias[oc];
                for ic in 0..s.in_channels {
                    let w = &weight[(oc * s.in_channels + ic) * s.kernel..][..s.kernel];
                    let xc = &xr[ic * s.in_len..(ic + 1) * s.in_len];
                    for (j, &wj) in w.iter().enumerate() {
                        if let Some(i) = s.source(t, j) {
                            acc += wj * xc[i];
                        }
                    }
                }
                yr[oc * out_len + t] = acc;
            }
        }
    }
    y
}

/// Accumulates weight and bias cotangents; returns the input cotangent.
pub fn conv1d_backward(
    x: &Mat,
    weight: &[f64],
    s: &Conv1dShape,
    grad_y: &Mat,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> Mat {
    let out_len = s.out_len();
    let mut gx = Mat::zeros(x.rows, x.cols);
    for b in 0..x.rows {
        let xr = x.row(b);
        let gyr = grad_y.row(b);
        let gxr = gx.row_mut(b);
        for oc in 0..s.out_channels {
            for t in 0..out_len {
                let g = gyr[oc * out_len + t];
                if g == 0.0 {
                    continue;
                }
                grad_bias[oc] += g;
                for ic in 0..s.in_channels {
                    let base = (oc * s.in_channels + ic) * s.kernel;
                    for j in 0..s.kernel {
                        if let Some(i) = s.source(t, j) {
                            let xi = ic * s.in_len + i;
                            grad_weight[base + j] += g * xr[xi];
                            gxr[xi] += g * weight[base + j];
                        }
                    }
                }
            }
        }
    }
    gx
}

/// `y = x W^T + b` with `weight` stored `[out, in]`.
pub fn linear_forward(x: &Mat, weight: &[f64], bias: &[f64], out: usize) -> Mat {
    let inp = x.cols;
    debug_assert_eq!(weight.len(), out * inp);
    let mut y = Mat::zeros(x.rows, out);
    for (o, w) in weight.chunks_exact(inp).enumerate() {
        for r in 0..x.rows {
            y.data[r * out + o] = bias[o] + dot(w, x.row(r));
        }
    }
    y
}

pub fn linear_backward(x: &Mat, weight: &[f64], grad_y: &Mat, grad_weight: &mut [f64], grad_bias: &mut [f64]) -> Mat {
    let inp = x.cols;
    let out = grad_y.cols;
    let mut gx = Mat::zeros(x.rows, inp);
    for (o, (w, gw)) in weight.chunks_exact(inp).zip(grad_weight.chunks_exact_mut(inp)).enumerate() {
        for r in 0..x.rows {
            let g = grad_y.data[r * out + o];
            if g == 0.0 {
                continue;
            }
            grad_bias[o] += g;
            axpy(g, x.row(r), gw);
            axpy(g, w, gx.row_mut(r));
        }
    }
    gx
}

/// Borrowed parameters of one GRU layer (gate order: reset, update, candidate).
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub hidden: usize,
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
}

/// Mutable gradient slots matching [`GruWeights`].
pub struct GruGrads<'a> {
    pub w_ih: &'a mut [f64],
    pub w_hh: &'a mut [f64],
    pub b_ih: &'a mut [f64],
    pub b_hh: &'a mut [f64],
}

/// Gate activations saved for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub reset: Mat,
    pub update: Mat,
    pub candidate: Mat,
    /// Hidden-side candidate pre-activation, `W_hn h + b_hn`.
    pub hidden_cand: Mat,
}

pub fn gru_cell_forward(x: &Mat, h: &Mat, w: &GruWeights<'_>) -> (Mat, GruCache) {
    let hd = w.hidden;
    let gi = linear_forward(x, w.w_ih, w.b_ih, 3 * hd);
    let gh = linear_forward(h, w.w_hh, w.b_hh, 3 * hd);
    let rows = x.rows;
    let mut cache = GruCache {
        reset: Mat::zeros(rows, hd),
        update: Mat::zeros(rows, hd),
        candidate: Mat::zeros(rows, hd),
        hidden_cand: Mat::zeros(rows, hd),
    };
    let mut out = Mat::zeros(rows, hd);
    for b in 0..rows {
        let (gir, ghr, hr) = (gi.row(b), gh.row(b), h.row(b));
        for j in 0..hd {
            let r = sigmoid(gir[j] + ghr[j]);
            let z = sigmoid(gir[hd + j] + ghr[hd + j]);
            let hn = ghr[2 * hd + j];
            let n = (gir[2 * hd + j] + r * hn).tanh();
            let i = b * hd + j;
            cache.reset.data[i] = r;
            cache.update.data[i] = z;
            cache.candidate.data[i] = n;
            cache.hidden_cand.data[i] = hn;
            out.data[i] = (1.0 - z) * n + z * hr[j];
        }
    }
    (out, cache)
}

/// Returns `(grad_x, grad_h)` and accumulates parameter cotangents.
pub fn gru_cell_backward(
    x: &Mat,
    h: &Mat,
    cache: &GruCache,
    w: &GruWeights<'_>,
    grad_out: &Mat,
    grads: &mut GruGrads<'_>,
) -> (Mat, Mat) {
    let hd = w.hidden;
    let rows = x.rows;
    let mut g_gi = Mat::zeros(rows, 3 * hd);
    let mut g_gh = Mat::zeros(rows, 3 * hd);
    let mut gh_direct = Mat::zeros(rows, hd);
    for b in 0..rows {
        for j in 0..hd {
            let i = b * hd + j;
            let (r, z, n, hn) = (
                cache.reset.data[i],
                cache.update.data[i],
                cache.candidate.data[i],
                cache.hidden_cand.data[i],
            );
            let g = grad_out.data[i];
            let dn = g * (1.0 - z);
            let dz = g * (h.data[i] - n);
            gh_direct.data[i] = g * z;
            let dpre_n = dn * (1.0 - n * n);
            let dpre_z = dz * z * (1.0 - z);
            let dr = dpre_n * hn;
            let dpre_r = dr * r * (1.0 - r);
            let base = b * 3 * hd;
            g_gi.data[base + j] = dpre_r;
            g_gi.data[base + hd + j] = dpre_z;
            g_gi.data[base + 2 * hd + j] = dpre_n;
            g_gh.data[base + j] = dpre_r;
            g_gh.data[base + hd + j] = dpre_z;
            g_gh.data[base + 2 * hd + j] = dpre_n * r;
        }
    }
    let gx = linear_backward(x, w.w_ih, &g_gi, grads.w_ih, grads.b_ih);
    let mut gh = linear_backward(h, w.w_hh, &g_gh, grads.w_hh, grads.b_hh);
    gh.add_assign(&gh_direct);
    (gx, gh)
}
