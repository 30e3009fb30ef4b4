//! A coarse-grained reverse-mode tape over batched matrices.
//!
//! Each recorded op is a whole layer or stage (convolution, GRU cell, the
//! cascade, the loss) with a hand-written adjoint, so the tape stays short
//! and the reverse pass visits each op exactly once in reverse order. Matrix
//! rows are batch items; backbone parameters are referenced by index into
//! the borrowed [`BackboneWeights`].

use super::bundle::GradientBundle;
use super::jacobian::training_jacobian;
use crate::backbone::layers::{
    conv1d_backward, conv1d_forward, gru_cell_backward, gru_cell_forward, linear_backward, linear_forward, Activation,
    GruCache,
};
use crate::backbone::scaling::{scale_derivative, scale_logits_flat};
use crate::backbone::weights::BackboneWeights;
use crate::engine::{engine, CascadeTrace, FilterEngine};
use crate::error::{first_non_finite, Result, TvfError};
use crate::filter::{pad_to_frames, BandPlan, BiquadCoeffs, CoeffTrajectory};
use crate::tensor::Mat;
use crate::training::loss::{LossConfig, SpectralLoss};

pub type ValueId = usize;

enum Op {
    Conv1d { x: ValueId, layer: usize },
    Activation { x: ValueId, act: Activation },
    Linear { x: ValueId, weight: usize, bias: usize },
    Gru { x: ValueId, h: ValueId, layer: usize, cache: GruCache },
    Mean { xs: Vec<ValueId> },
    Scale { logits: ValueId, deriv: Mat },
    CoeffMap { params: ValueId, jac: Vec<[[f64; 3]; 5]> },
    Cascade {
        coeffs: Vec<ValueId>,
        audio: ValueId,
        engine: Box<dyn FilterEngine<f64>>,
        runs: Vec<(CoeffTrajectory, CascadeTrace<f64>)>,
    },
    Loss { y: ValueId, target: ValueId, config: LossConfig },
}

struct Node {
    op: Op,
    out: ValueId,
}

/// Cotangents produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: GradientBundle,
    values: Vec<Option<Mat>>,
}

impl Gradients {
    /// Cotangent of a recorded value, if any gradient reached it.
    pub fn value(&self, id: ValueId) -> Option<&Mat> {
        self.values.get(id).and_then(Option::as_ref)
    }
}

pub struct Tape<'w> {
    weights: &'w BackboneWeights,
    values: Vec<Mat>,
    needs_grad: Vec<bool>,
    nodes: Vec<Node>,
    replayed: bool,
}

impl<'w> Tape<'w> {
    pub fn new(weights: &'w BackboneWeights) -> Self {
        Tape {
            weights,
            values: Vec::new(),
            needs_grad: Vec::new(),
            nodes: Vec::new(),
            replayed: false,
        }
    }

    pub fn weights(&self) -> &'w BackboneWeights {
        self.weights
    }

    pub fn value(&self, id: ValueId) -> &Mat {
        &self.values[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_value(&mut self, m: Mat, needs_grad: bool) -> ValueId {
        self.values.push(m);
        self.needs_grad.push(needs_grad);
        self.values.len() - 1
    }

    fn push(&mut self, op: Op, out: Mat, needs_grad: bool) -> ValueId {
        let id = self.push_value(out, needs_grad);
        self.nodes.push(Node { op, out: id });
        id
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, m: Mat) -> ValueId {
        self.push_value(m, false)
    }

    /// A leaf whose cotangent is reported in [`Gradients::value`].
    pub fn variable(&mut self, m: Mat) -> ValueId {
        self.push_value(m, true)
    }

    /// A constant copy of `x`: gradients stop here.
    pub fn detach(&mut self, x: ValueId) -> ValueId {
        let m = self.values[x].clone();
        self.constant(m)
    }

    fn check_finite(&self, id: ValueId, what: &str) -> Result<()> {
        match first_non_finite(&self.values[id].data) {
            Some(i) => Err(TvfError::non_finite(what.to_string(), i)),
            None => Ok(()),
        }
    }

    pub fn conv1d(&mut self, x: ValueId, layer: usize) -> Result<ValueId> {
        let shape = self.weights.config.conv_shapes()[layer];
        if self.values[x].cols != shape.in_cols() {
            return Err(TvfError::LengthMismatch(format!(
                "conv{layer} expects {} columns, got {}",
                shape.in_cols(),
                self.values[x].cols
            )));
        }
        let (w, b) = self.weights.conv_ids(layer);
        let y = conv1d_forward(&self.values[x], &self.weights.tensors[w].data, &self.weights.tensors[b].data, &shape);
        Ok(self.push(Op::Conv1d { x, layer }, y, true))
    }

    pub fn activation(&mut self, x: ValueId, act: Activation) -> Result<ValueId> {
        let y = act.forward(&self.values[x]);
        let ng = self.needs_grad[x];
        Ok(self.push(Op::Activation { x, act }, y, ng))
    }

    pub fn linear(&mut self, x: ValueId, weight: usize, bias: usize) -> Result<ValueId> {
        let (w, b) = (&self.weights.tensors[weight], &self.weights.tensors[bias]);
        let out = b.data.len();
        if w.data.len() != out * self.values[x].cols {
            return Err(TvfError::LengthMismatch(format!(
                "'{}' does not accept {} inputs",
                w.name,
                self.values[x].cols
            )));
        }
        let y = linear_forward(&self.values[x], &w.data, &b.data, out);
        Ok(self.push(Op::Linear { x, weight, bias }, y, true))
    }

    pub fn gru(&mut self, x: ValueId, h: ValueId, layer: usize) -> Result<ValueId> {
        let gw = self.weights.gru(layer);
        let (xv, hv) = (&self.values[x], &self.values[h]);
        if gw.w_ih.len() != 3 * gw.hidden * xv.cols || hv.cols != gw.hidden || hv.rows != xv.rows {
            return Err(TvfError::LengthMismatch(format!("gru{layer} input shapes")));
        }
        let (y, cache) = gru_cell_forward(xv, hv, &gw);
        Ok(self.push(Op::Gru { x, h, layer, cache }, y, true))
    }

    /// Elementwise mean of equally shaped values.
    pub fn mean(&mut self, xs: &[ValueId]) -> Result<ValueId> {
        let first = xs.first().ok_or_else(|| TvfError::Empty("mean of no values".into()))?;
        let mut acc = Mat::zeros(self.values[*first].rows, self.values[*first].cols);
        for &x in xs {
            if !self.values[x].same_shape(&acc) {
                return Err(TvfError::LengthMismatch("mean over differently shaped values".into()));
            }
            acc.add_assign(&self.values[x]);
        }
        let inv = 1.0 / xs.len() as f64;
        acc.data.iter_mut().for_each(|v| *v *= inv);
        let ng = xs.iter().any(|&x| self.needs_grad[x]);
        Ok(self.push(Op::Mean { xs: xs.to_vec() }, acc, ng))
    }

    /// Sigmoid-to-range scaling of head outputs to flat `[g, q, f0]` rows.
    pub fn scale(&mut self, logits: ValueId, plan: &BandPlan) -> Result<ValueId> {
        let z = &self.values[logits];
        if z.cols != 3 * plan.len() {
            return Err(TvfError::LengthMismatch(format!("{} logits for {} bands", z.cols, plan.len())));
        }
        let mut out = Mat::zeros(z.rows, z.cols);
        let mut deriv = Mat::zeros(z.rows, z.cols);
        for r in 0..z.rows {
            out.row_mut(r).copy_from_slice(&scale_logits_flat(z.row(r), plan));
            deriv.row_mut(r).copy_from_slice(&scale_derivative(z.row(r), plan));
        }
        let ng = self.needs_grad[logits];
        Ok(self.push(Op::Scale { logits, deriv }, out, ng))
    }

    /// Flat `[g, q, f0]` rows to flat `[b0, b1, b2, a1, a2]` rows.
    pub fn coeff_map(&mut self, params: ValueId, plan: &BandPlan) -> Result<ValueId> {
        self.check_finite(params, "filter parameters")?;
        let p = &self.values[params];
        let k = plan.len();
        if p.cols != 3 * k {
            return Err(TvfError::LengthMismatch(format!("{} parameter columns for {k} bands", p.cols)));
        }
        let mut out = Mat::zeros(p.rows, 5 * k);
        let mut jac = Vec::with_capacity(p.rows * k);
        for r in 0..p.rows {
            for (i, band) in plan.bands.iter().enumerate() {
                let v = &p.row(r)[3 * i..3 * i + 3];
                let j = training_jacobian(band.kind, v[0], v[1], v[2], plan.sample_rate)?;
                out.row_mut(r)[5 * i..5 * i + 5].copy_from_slice(&j.coeffs.to_array());
                jac.push(j.d);
            }
        }
        let ng = self.needs_grad[params];
        Ok(self.push(Op::CoeffMap { params, jac }, out, ng))
    }

    /// Runs the cascade with per-frame coefficient rows over each audio row.
    /// `coeffs[n]` holds frame `n` for every batch item.
    pub fn cascade(&mut self, coeffs: &[ValueId], audio: ValueId, engine_name: &str, frame_len: usize) -> Result<ValueId> {
        let eng = engine::<f64>(engine_name)?;
        let a = &self.values[audio];
        let n_frames = coeffs.len();
        if n_frames == 0 {
            return Err(TvfError::Empty("cascade with no coefficient frames".into()));
        }
        let sample_rate = self.weights.config.band_plan.sample_rate;
        let mut out = Mat::zeros(a.rows, a.cols);
        let mut runs = Vec::with_capacity(a.rows);
        for r in 0..a.rows {
            let frames = coeffs
                .iter()
                .map(|&c| {
                    let m = &self.values[c];
                    if m.rows != a.rows || m.cols % 5 != 0 {
                        return Err(TvfError::LengthMismatch("coefficient rows do not match the audio batch".into()));
                    }
                    Ok(m.row(r)
                        .chunks_exact(5)
                        .map(|c| BiquadCoeffs::from_array([c[0], c[1], c[2], c[3], c[4]]))
                        .collect())
                })
                .collect::<Result<Vec<Vec<_>>>>()?;
            let traj = CoeffTrajectory {
                frame_len,
                sample_rate,
                frames,
            };
            traj.validate()?;
            let needed = traj.check_covers(a.cols)?;
            if needed != n_frames {
                return Err(TvfError::LengthMismatch(format!(
                    "{} samples need {needed} frames, {n_frames} given",
                    a.cols
                )));
            }
            let padded = pad_to_frames(a.row(r), frame_len);
            let run = eng.run(&padded, &traj, true)?;
            out.row_mut(r).copy_from_slice(&run.output[..a.cols]);
            runs.push((traj, run.trace.expect("recorded run carries a trace")));
        }
        let ng = self.needs_grad[audio] || coeffs.iter().any(|&c| self.needs_grad[c]);
        let op = Op::Cascade {
            coeffs: coeffs.to_vec(),
            audio,
            engine: eng,
            runs,
        };
        let id = self.push(op, out, ng);
        self.check_finite(id, "cascade output")?;
        Ok(id)
    }

    /// Total loss averaged over batch rows, as a 1x1 value.
    pub fn loss(&mut self, y: ValueId, target: ValueId, config: &LossConfig) -> Result<ValueId> {
        let (yv, tv) = (&self.values[y], &self.values[target]);
        if !yv.same_shape(tv) {
            return Err(TvfError::LengthMismatch("estimate and target batches differ in shape".into()));
        }
        let loss = SpectralLoss::new(config)?;
        let mut total = 0.0;
        for r in 0..yv.rows {
            total += loss.total(yv.row(r), tv.row(r))?;
        }
        let v = Mat::scalar(total / yv.rows as f64);
        let ng = self.needs_grad[y];
        let id = self.push(
            Op::Loss {
                y,
                target,
                config: config.clone(),
            },
            v,
            ng,
        );
        self.check_finite(id, "loss")?;
        Ok(id)
    }

    /// Reverse pass from a scalar value. A tape can be replayed only once.
    pub fn backward(&mut self, loss: ValueId) -> Result<Gradients> {
        self.backward_scaled(loss, 1.0)
    }

    pub fn backward_scaled(&mut self, loss: ValueId, cotangent: f64) -> Result<Gradients> {
        if self.replayed {
            return Err(TvfError::TapeReplayed);
        }
        self.replayed = true;
        let lv = &self.values[loss];
        if lv.rows != 1 || lv.cols != 1 {
            return Err(TvfError::LengthMismatch(format!("backward needs a scalar, got {}x{}", lv.rows, lv.cols)));
        }
        let mut params = GradientBundle::zeros_like(self.weights);
        let mut grads: Vec<Option<Mat>> = vec![None; self.values.len()];
        if self.needs_grad[loss] {
            grads[loss] = Some(Mat::scalar(cotangent));
        }
        let nodes = std::mem::take(&mut self.nodes);
        for node in nodes.iter().rev() {
            let Some(g) = grads[node.out].take() else {
                continue;
            };
            self.node_backward(&node.op, node.out, &g, &mut grads, &mut params)?;
        }
        self.nodes = nodes;
        // only leaves still hold gradients; intermediates were consumed above
        for (i, ng) in self.needs_grad.iter().enumerate() {
            if !ng {
                grads[i] = None;
            }
        }
        params.check_finite()?;
        Ok(Gradients { params, values: grads })
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], id: ValueId, g: Mat) {
        if !self.needs_grad[id] {
            return;
        }
        match &mut grads[id] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn node_backward(
        &self,
        op: &Op,
        out: ValueId,
        g: &Mat,
        grads: &mut [Option<Mat>],
        params: &mut GradientBundle,
    ) -> Result<()> {
        let w = self.weights;
        match op {
            Op::Conv1d { x, layer } => {
                let shape = w.config.conv_shapes()[*layer];
                let (wi, bi) = w.conv_ids(*layer);
                let (gw, gb) = params.pair_mut(wi, bi);
                let gx = conv1d_backward(&self.values[*x], &w.tensors[wi].data, &shape, g, gw, gb);
                self.accumulate(grads, *x, gx);
            }
            Op::Activation { x, act } => {
                let gx = act.backward(&self.values[out], g);
                self.accumulate(grads, *x, gx);
            }
            Op::Linear { x, weight, bias } => {
                let (gw, gb) = params.pair_mut(*weight, *bias);
                let gx = linear_backward(&self.values[*x], &w.tensors[*weight].data, g, gw, gb);
                self.accumulate(grads, *x, gx);
            }
            Op::Gru { x, h, layer, cache } => {
                let mut slots = params.gru_mut(w.gru_ids(*layer));
                let (gx, gh) = gru_cell_backward(&self.values[*x], &self.values[*h], cache, &w.gru(*layer), g, &mut slots);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *h, gh);
            }
            Op::Mean { xs } => {
                let inv = 1.0 / xs.len() as f64;
                for &x in xs {
                    let gx = Mat::from_vec(g.rows, g.cols, g.data.iter().map(|v| v * inv).collect());
                    self.accumulate(grads, x, gx);
                }
            }
            Op::Scale { logits, deriv } => {
                let gx = Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&deriv.data).map(|(a, b)| a * b).collect());
                self.accumulate(grads, *logits, gx);
            }
            Op::CoeffMap { params: p, jac } => {
                let k = g.cols / 5;
                let mut gp = Mat::zeros(g.rows, 3 * k);
                for r in 0..g.rows {
                    for i in 0..k {
                        let d = &jac[r * k + i];
                        let gc = &g.row(r)[5 * i..5 * i + 5];
                        let dst = &mut gp.row_mut(r)[3 * i..3 * i + 3];
                        for (c, row) in d.iter().enumerate() {
                            for j in 0..3 {
                                dst[j] += row[j] * gc[c];
                            }
                        }
                    }
                }
                self.accumulate(grads, *p, gp);
            }
            Op::Cascade {
                coeffs,
                audio,
                engine,
                runs,
            } => {
                let rows = g.rows;
                let mut gc: Vec<Mat> = coeffs.iter().map(|&c| Mat::zeros(rows, self.values[c].cols)).collect();
                let mut ga = Mat::zeros(rows, g.cols);
                for (r, (traj, trace)) in runs.iter().enumerate() {
                    let padded = pad_to_frames(g.row(r), traj.frame_len);
                    let cg = engine.backward(trace, traj, &padded)?;
                    ga.row_mut(r).copy_from_slice(&cg.grad_input[..g.cols]);
                    for (n, frame) in cg.grad_coeffs.iter().enumerate() {
                        let dst = gc[n].row_mut(r);
                        for (k, c) in frame.iter().enumerate() {
                            dst[5 * k..5 * k + 5].copy_from_slice(c);
                        }
                    }
                }
                for (&c, m) in coeffs.iter().zip(gc) {
                    self.accumulate(grads, c, m);
                }
                self.accumulate(grads, *audio, ga);
            }
            Op::Loss { y, target, config } => {
                let loss = SpectralLoss::new(config)?;
                let (yv, tv) = (&self.values[*y], &self.values[*target]);
                let scale = g.data[0] / yv.rows as f64;
                let mut gy = Mat::zeros(yv.rows, yv.cols);
                for r in 0..yv.rows {
                    let (_, row) = loss.total_with_grad(yv.row(r), tv.row(r))?;
                    for (d, s) in gy.row_mut(r).iter_mut().zip(row) {
                        *d = s * scale;
                    }
                }
                self.accumulate(grads, *y, gy);
            }
        }
        Ok(())
    }
}

/// Reverse pass of a recorded forward chain, returning parameter cotangents.
pub fn backward_through_chain(tape: &mut Tape<'_>, loss: ValueId, loss_cotangent: f64) -> Result<GradientBundle> {
    Ok(tape.backward_scaled(loss, loss_cotangent)?.params)
}
