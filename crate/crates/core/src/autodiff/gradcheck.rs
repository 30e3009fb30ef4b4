//! Central finite-difference checks for every differentiable primitive.
//!
//! A target maps a flat point to a flat output and supplies the vector-Jacobian
//! product. The check contracts both sides with a fixed random cotangent and
//! compares coordinate by coordinate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::filter::{allpole_backward, allpole_forward, biquad_frame_adjoint, fir_backward, fir_forward};
use super::jacobian::training_jacobian;
use super::tape::{backward_through_chain, Tape};
use crate::backbone::layers::{
    conv1d_backward, conv1d_forward, gru_cell_backward, gru_cell_forward, linear_backward, linear_forward, Conv1dShape,
    GruGrads, GruWeights,
};
use crate::backbone::scaling::{scale_derivative, scale_logits_flat};
use crate::backbone::{BackboneConfig, BackboneWeights, TimeVarying};
use crate::engine::engine;
use crate::error::{Result, TvfError};
use crate::filter::coeffs::coeffs_unclamped;
use crate::filter::{biquad_frame, BandKind, BandPlan, BiquadCoeffs, CoeffTrajectory, FilterParams, FilterState};
use crate::tensor::Mat;
use crate::training::loss::{LossConfig, SpectralLoss};
use crate::training::pipeline::record_pipeline;
use crate::training::synth::{synth_pair, MixtureSpec};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_FLOOR: f64 = 1e-8;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

pub trait GradTarget: Send + Sync {
    fn id(&self) -> &'static str;

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `J(x)^T cot`.
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>>;

    /// Coordinates to probe at a random point; `None` means all of them.
    fn sample_coords(&self, _rng: &mut ChaCha8Rng, _dim: usize) -> Option<Vec<usize>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub target: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub coords_checked: usize,
}

/// Compares `vjp` against central differences at `point`. The relative error
/// of coordinate `i` is `|a - n| / max(|a|, |n|, floor)`. The realized step
/// `(x + h) - (x - h)` is used as the divisor so representation error in
/// the perturbed point does not count against the primitive.
pub fn grad_check(
    target: &dyn GradTarget,
    point: &[f64],
    h: f64,
    floor: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(TvfError::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    if !(floor > 0.0) {
        return Err(TvfError::InvalidParameter(format!("denominator floor must be positive, got {floor}")));
    }
    let y0 = target.eval(point)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let cot: Vec<f64> = (0..y0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let analytic = target.vjp(point, &cot)?;
    if analytic.len() != point.len() {
        return Err(TvfError::LengthMismatch(format!(
            "{}: gradient has {} entries for a {}-dimensional point",
            target.id(),
            analytic.len(),
            point.len()
        )));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        target: target.id().to_string(),
        max_rel_err: 0.0,
        worst_index: coords.first().copied().unwrap_or(0),
        coords_checked: coords.len(),
    };
    for &i in coords {
        if i >= point.len() {
            return Err(TvfError::InvalidParameter(format!("coordinate {i} outside a {}-dimensional point", point.len())));
        }
        let (hi, lo) = (point[i] + h, point[i] - h);
        x[i] = hi;
        let yp = target.eval(&x)?;
        x[i] = lo;
        let ym = target.eval(&x)?;
        x[i] = point[i];
        let numeric = cot.iter().zip(yp.iter().zip(&ym)).map(|(c, (p, m))| c * (p - m)).sum::<f64>() / (hi - lo);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if !rel.is_finite() {
            return Err(TvfError::non_finite(format!("{} finite differences", target.id()), i));
        }
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Runs `points` random checks and keeps the worst one.
pub fn grad_check_random(target: &dyn GradTarget, points: usize, seed: u64, h: f64, floor: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<GradCheckReport> = None;
    let mut checked = 0;
    for _ in 0..points.max(1) {
        let x = target.random_point(&mut rng);
        let coords = target.sample_coords(&mut rng, x.len());
        let r = grad_check(target, &x, h, floor, coords.as_deref())?;
        checked += r.coords_checked;
        if worst.as_ref().is_none_or(|w| r.max_rel_err > w.max_rel_err) {
            worst = Some(r);
        }
    }
    let mut worst = worst.expect("at least one point");
    worst.coords_checked = checked;
    Ok(worst)
}

pub const GRAD_TARGETS: [&str; 16] = [
    "identity",
    "fir",
    "allpole",
    "biquad_frame",
    "coeff_map_peak",
    "coeff_map_low_shelf",
    "coeff_map_high_shelf",
    "scale_params",
    "conv1d",
    "linear",
    "gru_cell",
    "cascade_serial",
    "cascade_systolic",
    "spectral_loss",
    "total_loss",
    "pipeline",
];

pub fn grad_target(id: &str) -> Result<Box<dyn GradTarget>> {
    Ok(match id {
        "identity" => Box::new(Identity),
        "fir" => Box::new(Fir),
        "allpole" => Box::new(Allpole),
        "biquad_frame" => Box::new(BiquadFrame),
        "coeff_map_peak" => Box::new(CoeffMap(BandKind::Peak)),
        "coeff_map_low_shelf" => Box::new(CoeffMap(BandKind::LowShelf)),
        "coeff_map_high_shelf" => Box::new(CoeffMap(BandKind::HighShelf)),
        "scale_params" => Box::new(ScaleParams(BandPlan::default_plan())),
        "conv1d" => Box::new(Conv1d(CONV_SHAPE)),
        "linear" => Box::new(Linear),
        "gru_cell" => Box::new(GruCell),
        "cascade_serial" => Box::new(Cascade("serial")),
        "cascade_systolic" => Box::new(Cascade("systolic")),
        "spectral_loss" => Box::new(Loss::new(false)),
        "total_loss" => Box::new(Loss::new(true)),
        "pipeline" => Box::new(Pipeline::new(7)?),
        other => {
            return Err(TvfError::UnknownName {
                kind: "gradient target",
                name: other.to_string(),
                known: GRAD_TARGETS.join(", "),
            })
        }
    })
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// Denominator `[a1, a2]` with poles of radius at most 0.9.
fn stable_poles(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let r: f64 = rng.random_range(0.1..0.9);
    let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
    [-2.0 * r * th.cos(), r * r]
}

fn split<const N: usize>(x: &[f64], at: usize) -> [f64; N] {
    x[at..at + N].try_into().expect("slice length")
}

struct Identity;

impl GradTarget for Identity {
    fn id(&self) -> &'static str {
        "identity"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        normals(rng, 8, 1.0)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    fn vjp(&self, _x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        Ok(cot.to_vec())
    }
}

const SMALL_FRAME: usize = 8;
const SMALL_FRAMES: usize = 3;
const SMALL_LEN: usize = SMALL_FRAME * SMALL_FRAMES - 3;

/// Point layout: `x[SMALL_LEN] | b[SMALL_FRAMES][3] | x_state[2]`.
struct Fir;

impl Fir {
    fn unpack(x: &[f64]) -> (&[f64], Vec<[f64; 3]>, [f64; 2]) {
        let b = (0..SMALL_FRAMES).map(|f| split::<3>(x, SMALL_LEN + 3 * f)).collect();
        (&x[..SMALL_LEN], b, split::<2>(x, SMALL_LEN + 3 * SMALL_FRAMES))
    }
}

impl GradTarget for Fir {
    fn id(&self) -> &'static str {
        "fir"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        normals(rng, SMALL_LEN + 3 * SMALL_FRAMES + 2, 1.0)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (sig, b, st) = Fir::unpack(x);
        fir_forward(sig, &b, st, SMALL_FRAME)
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let (sig, b, st) = Fir::unpack(x);
        let g = fir_backward(sig, &b, st, SMALL_FRAME, cot)?;
        let mut out = g.grad_x;
        out.extend(g.grad_b.iter().flatten());
        out.extend(g.grad_state);
        Ok(out)
    }
}

/// Point layout: `w[SMALL_LEN] | a[SMALL_FRAMES][2] | y_state[2]`.
struct Allpole;

impl Allpole {
    fn unpack(x: &[f64]) -> (&[f64], Vec<[f64; 2]>, [f64; 2]) {
        let a = (0..SMALL_FRAMES).map(|f| split::<2>(x, SMALL_LEN + 2 * f)).collect();
        (&x[..SMALL_LEN], a, split::<2>(x, SMALL_LEN + 2 * SMALL_FRAMES))
    }
}

impl GradTarget for Allpole {
    fn id(&self) -> &'static str {
        "allpole"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = normals(rng, SMALL_LEN, 1.0);
        for _ in 0..SMALL_FRAMES {
            x.extend(stable_poles(rng));
        }
        x.extend(normals(rng, 2, 1.0));
        x
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (w, a, st) = Allpole::unpack(x);
        Ok(allpole_forward(w, &a, st, SMALL_FRAME)?.y)
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let (w, a, st) = Allpole::unpack(x);
        let g = allpole_backward(&allpole_forward(w, &a, st, SMALL_FRAME)?, cot)?;
        let mut out = g.grad_w;
        out.extend(g.grad_a.iter().flatten());
        out.extend(g.grad_state);
        Ok(out)
    }
}

/// Point layout: `x[16] | [b0, b1, b2, a1, a2] | [x1, x2, y1, y2]`; output
/// is the frame followed by the outgoing state.
struct BiquadFrame;

const BIQUAD_FRAME_LEN: usize = 16;

impl BiquadFrame {
    fn unpack(x: &[f64]) -> (&[f64], [f64; 5], FilterState<f64>) {
        let c = split::<5>(x, BIQUAD_FRAME_LEN);
        let s = split::<4>(x, BIQUAD_FRAME_LEN + 5);
        let state = FilterState {
            x_hist: [s[0], s[1]],
            y_hist: [s[2], s[3]],
        };
        (&x[..BIQUAD_FRAME_LEN], c, state)
    }
}

impl GradTarget for BiquadFrame {
    fn id(&self) -> &'static str {
        "biquad_frame"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = normals(rng, BIQUAD_FRAME_LEN + 3, 1.0);
        x.extend(stable_poles(rng));
        x.extend(normals(rng, 4, 1.0));
        x
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (sig, c, st) = BiquadFrame::unpack(x);
        let (mut y, out) = biquad_frame(sig, &BiquadCoeffs::from_array(c), &st);
        y.extend(out.to_array());
        Ok(y)
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let (sig, c, st) = BiquadFrame::unpack(x);
        let (y, _) = biquad_frame(sig, &BiquadCoeffs::from_array(c), &st);
        let adj = biquad_frame_adjoint(sig, &y, &c, &st, &cot[..BIQUAD_FRAME_LEN], &split::<4>(cot, BIQUAD_FRAME_LEN));
        let mut out = adj.grad_x;
        out.extend(adj.grad_coeffs);
        out.extend(adj.grad_state_in);
        Ok(out)
    }
}

/// `(g, q, f0) -> [b0, b1, b2, a1, a2]` for one filter shape.
struct CoeffMap(BandKind);

impl GradTarget for CoeffMap {
    fn id(&self) -> &'static str {
        match self.0 {
            BandKind::Peak => "coeff_map_peak",
            BandKind::LowShelf => "coeff_map_low_shelf",
            BandKind::HighShelf => "coeff_map_high_shelf",
        }
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let plan = BandPlan::default_plan();
        let bands: Vec<_> = plan.bands.iter().filter(|b| b.kind == self.0).collect();
        let band = bands[rng.random_range(0..bands.len())];
        vec![
            rng.random_range(-19.5..19.5),
            rng.random_range(0.12..1.95),
            rng.random_range(band.f_min..band.f_max),
        ]
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(coeffs_unclamped(self.0, x[0], x[1], x[2], crate::filter::DEFAULT_SAMPLE_RATE).to_array().to_vec())
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let j = training_jacobian(self.0, x[0], x[1], x[2], crate::filter::DEFAULT_SAMPLE_RATE)?;
        Ok(j.pullback(&split::<5>(cot, 0)).to_vec())
    }
}

/// Head logits to flat `[g, q, f0]` for the whole plan.
struct ScaleParams(BandPlan);

impl GradTarget for ScaleParams {
    fn id(&self) -> &'static str {
        "scale_params"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        normals(rng, 3 * self.0.len(), 2.0)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(scale_logits_flat(x, &self.0))
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        Ok(scale_derivative(x, &self.0).iter().zip(cot).map(|(d, c)| d * c).collect())
    }
}

const CONV_SHAPE: Conv1dShape = Conv1dShape {
    in_channels: 2,
    out_channels: 3,
    kernel: 5,
    stride: 2,
    padding: 2,
    in_len: 11,
};

/// Point layout: `x | weight | bias`, batch of one.
struct Conv1d(Conv1dShape);

impl GradTarget for Conv1d {
    fn id(&self) -> &'static str {
        "conv1d"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let s = &self.0;
        normals(rng, s.in_cols() + s.weight_len() + s.out_channels, 1.0)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = &self.0;
        let (inp, rest) = x.split_at(s.in_cols());
        let (w, b) = rest.split_at(s.weight_len());
        Ok(conv1d_forward(&Mat::from_vec(1, inp.len(), inp.to_vec()), w, b, s).data)
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let s = &self.0;
        let (inp, rest) = x.split_at(s.in_cols());
        let (w, _) = rest.split_at(s.weight_len());
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; s.out_channels];
        let gy = Mat::from_vec(1, cot.len(), cot.to_vec());
        let gx = conv1d_backward(&Mat::from_vec(1, inp.len(), inp.to_vec()), w, s, &gy, &mut gw, &mut gb);
        let mut out = gx.data;
        out.extend(gw);
        out.extend(gb);
        Ok(out)
    }
}

const LINEAR_IN: usize = 5;
const LINEAR_OUT: usize = 3;

/// Point layout: `x[5] | weight[3 x 5] | bias[3]`.
struct Linear;

impl GradTarget for Linear {
    fn id(&self) -> &'static str {
        "linear"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        normals(rng, LINEAR_IN + LINEAR_IN * LINEAR_OUT + LINEAR_OUT, 1.0)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (inp, rest) = x.split_at(LINEAR_IN);
        let (w, b) = rest.split_at(LINEAR_IN * LINEAR_OUT);
        Ok(linear_forward(&Mat::from_vec(1, LINEAR_IN, inp.to_vec()), w, b, LINEAR_OUT).data)
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let (inp, rest) = x.split_at(LINEAR_IN);
        let (w, _) = rest.split_at(LINEAR_IN * LINEAR_OUT);
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; LINEAR_OUT];
        let gy = Mat::from_vec(1, LINEAR_OUT, cot.to_vec());
        let gx = linear_backward(&Mat::from_vec(1, LINEAR_IN, inp.to_vec()), w, &gy, &mut gw, &mut gb);
        let mut out = gx.data;
        out.extend(gw);
        out.extend(gb);
        Ok(out)
    }
}

const GRU_IN: usize = 3;
const GRU_HIDDEN: usize = 4;

/// Point layout: `x | h | w_ih | w_hh | b_ih | b_hh`.
struct GruCell;

impl GruCell {
    fn sizes() -> [usize; 6] {
        let g = 3 * GRU_HIDDEN;
        [GRU_IN, GRU_HIDDEN, g * GRU_IN, g * GRU_HIDDEN, g, g]
    }

    fn parts(x: &[f64]) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(6);
        let mut rest = x;
        for n in GruCell::sizes() {
            let (a, b) = rest.split_at(n);
            out.push(a);
            rest = b;
        }
        out
    }
}

impl GradTarget for GruCell {
    fn id(&self) -> &'static str {
        "gru_cell"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        normals(rng, GruCell::sizes().iter().sum(), 0.7)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = GruCell::parts(x);
        let w = GruWeights {
            hidden: GRU_HIDDEN,
            w_ih: p[2],
            w_hh: p[3],
            b_ih: p[4],
            b_hh: p[5],
        };
        let (h, _) = gru_cell_forward(&Mat::from_vec(1, GRU_IN, p[0].to_vec()), &Mat::from_vec(1, GRU_HIDDEN, p[1].to_vec()), &w);
        Ok(h.data)
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let p = GruCell::parts(x);
        let w = GruWeights {
            hidden: GRU_HIDDEN,
            w_ih: p[2],
            w_hh: p[3],
            b_ih: p[4],
            b_hh: p[5],
        };
        let xin = Mat::from_vec(1, GRU_IN, p[0].to_vec());
        let h = Mat::from_vec(1, GRU_HIDDEN, p[1].to_vec());
        let (_, cache) = gru_cell_forward(&xin, &h, &w);
        let [_, _, n_ih, n_hh, n_b, _] = GruCell::sizes();
        let (mut g_ih, mut g_hh, mut g_bi, mut g_bh) = (vec![0.0; n_ih], vec![0.0; n_hh], vec![0.0; n_b], vec![0.0; n_b]);
        let mut grads = GruGrads {
            w_ih: &mut g_ih,
            w_hh: &mut g_hh,
            b_ih: &mut g_bi,
            b_hh: &mut g_bh,
        };
        let (gx, gh) = gru_cell_backward(&xin, &h, &cache, &w, &Mat::from_vec(1, GRU_HIDDEN, cot.to_vec()), &mut grads);
        let mut out = gx.data;
        out.extend(gh.data);
        for g in [g_ih, g_hh, g_bi, g_bh] {
            out.extend(g);
        }
        Ok(out)
    }
}

const CASCADE_FILTERS: usize = 3;

/// Point layout: `audio[SMALL_FRAMES * SMALL_FRAME] | coeffs[frame][filter][5]`.
struct Cascade(&'static str);

impl Cascade {
    fn unpack(x: &[f64]) -> (&[f64], CoeffTrajectory) {
        let len = SMALL_FRAMES * SMALL_FRAME;
        let frames = x[len..]
            .chunks_exact(5 * CASCADE_FILTERS)
            .map(|f| f.chunks_exact(5).map(|c| BiquadCoeffs::from_array(split::<5>(c, 0))).collect())
            .collect();
        let traj = CoeffTrajectory {
            frame_len: SMALL_FRAME,
            sample_rate: crate::filter::DEFAULT_SAMPLE_RATE,
            frames,
        };
        (&x[..len], traj)
    }
}

impl GradTarget for Cascade {
    fn id(&self) -> &'static str {
        match self.0 {
            "serial" => "cascade_serial",
            _ => "cascade_systolic",
        }
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let plan = BandPlan::default_plan();
        let mut x = normals(rng, SMALL_FRAMES * SMALL_FRAME, 1.0);
        for _ in 0..SMALL_FRAMES {
            for _ in 0..CASCADE_FILTERS {
                let band = plan.bands[rng.random_range(0..plan.len())];
                let p = FilterParams {
                    gain_db: rng.random_range(-20.0..20.0),
                    q: rng.random_range(0.1..2.0),
                    f0: rng.random_range(band.f_min..band.f_max),
                };
                let c = crate::filter::params_to_coeffs(&p, band.kind, plan.sample_rate).expect("in-range parameters");
                x.extend(c.to_array());
            }
        }
        x
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (audio, traj) = Cascade::unpack(x);
        Ok(engine::<f64>(self.0)?.run(audio, &traj, false)?.output)
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let (audio, traj) = Cascade::unpack(x);
        let eng = engine::<f64>(self.0)?;
        let run = eng.run(audio, &traj, true)?;
        let g = eng.backward(run.trace.as_ref().expect("recorded"), &traj, cot)?;
        let mut out = g.grad_input;
        out.extend(g.grad_coeffs.iter().flatten().flatten());
        Ok(out)
    }
}

const LOSS_LEN: usize = 128;

/// Loss of an estimate against a fixed target, on small FFT sizes.
struct Loss {
    with_mse: bool,
    loss: SpectralLoss,
    target: Vec<f64>,
}

impl Loss {
    fn new(with_mse: bool) -> Self {
        let cfg = LossConfig {
            fft_sizes: vec![16, 32, 64],
            ..LossConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        Loss {
            with_mse,
            loss: SpectralLoss::new(&cfg).expect("valid loss config"),
            target: normals(&mut rng, LOSS_LEN, 0.1),
        }
    }
}

impl GradTarget for Loss {
    fn id(&self) -> &'static str {
        if self.with_mse {
            "total_loss"
        } else {
            "spectral_loss"
        }
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        normals(rng, LOSS_LEN, 0.1)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = if self.with_mse {
            self.loss.total(x, &self.target)?
        } else {
            self.loss.spectral_loss(x, &self.target)?
        };
        Ok(vec![v])
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let (_, g) = if self.with_mse {
            self.loss.total_with_grad(x, &self.target)?
        } else {
            self.loss.spectral_with_grad(x, &self.target)?
        };
        Ok(g.iter().map(|v| v * cot[0]).collect())
    }
}

pub const PIPELINE_FRAMES: usize = 4;
pub const PIPELINE_COORDS: usize = 20;
const PIPELINE_INIT_NOISE: f64 = 0.5;

/// Total loss of the time-varying chain on one 4-frame mixture, as a
/// function of every backbone weight. Each random point probes 20 of them.
pub struct Pipeline {
    config: BackboneConfig,
    noisy: Mat,
    clean: Mat,
    loss: LossConfig,
}

impl Pipeline {
    pub fn new(seed: u64) -> Result<Self> {
        let config = BackboneConfig::default();
        let len = PIPELINE_FRAMES * config.frame_len;
        let m = synth_pair(&MixtureSpec::new(5.0, seed, len)?)?;
        Ok(Pipeline {
            config,
            noisy: Mat::from_vec(1, len, m.noisy),
            clean: Mat::from_vec(1, len, m.clean),
            loss: LossConfig::default(),
        })
    }

    fn weights(&self, x: &[f64]) -> Result<BackboneWeights> {
        let mut w = BackboneWeights::zeros(self.config.clone())?;
        w.set_flat(x)?;
        Ok(w)
    }
}

impl GradTarget for Pipeline {
    fn id(&self) -> &'static str {
        "pipeline"
    }
    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        BackboneWeights::init(self.config.clone(), rng.random(), PIPELINE_INIT_NOISE)
            .expect("default config")
            .to_flat()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let mut tape = Tape::new(&w);
        let loss = record_pipeline(&mut tape, &TimeVarying, &self.noisy, &self.clean, "systolic", &self.loss, 0)?;
        Ok(vec![tape.value(loss).data[0]])
    }
    fn vjp(&self, x: &[f64], cot: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let mut tape = Tape::new(&w);
        let loss = record_pipeline(&mut tape, &TimeVarying, &self.noisy, &self.clean, "systolic", &self.loss, 0)?;
        Ok(backward_through_chain(&mut tape, loss, cot[0])?.to_flat())
    }
    fn sample_coords(&self, rng: &mut ChaCha8Rng, dim: usize) -> Option<Vec<usize>> {
        Some(rand::seq::index::sample(rng, dim, PIPELINE_COORDS.min(dim)).into_vec())
    }
}
