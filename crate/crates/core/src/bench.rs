//! Wall-clock comparison of the filtering paths.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backbone::{init_weights, DEFAULT_INIT_NOISE};
use crate::engine::{engine, FilterEngine};
use crate::error::{Result, TvfError};
use crate::filter::{BandPlan, CoeffTrajectory, FilterParams, ParamTrajectory, FRAME_LEN};
use crate::io::stream::{BackboneController, StreamProcessor};
use crate::sample::Sample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub path: String,
    pub filters: usize,
    pub frames: usize,
    pub precision: String,
    pub wall_ms: f64,
    pub realtime_factor: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub filters: usize,
    pub frames: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            filters: 35,
            frames: 47,
            repeats: 3,
            seed: 0,
        }
    }
}

fn random_trajectory(plan: &BandPlan, frames: usize, rng: &mut ChaCha8Rng) -> ParamTrajectory {
    ParamTrajectory {
        frame_len: FRAME_LEN,
        sample_rate: plan.sample_rate,
        frames: (0..frames)
            .map(|_| {
                plan.bands
                    .iter()
                    .map(|b| FilterParams {
                        gain_db: rng.random_range(-20.0..20.0),
                        q: rng.random_range(0.1..2.0),
                        f0: rng.random_range(b.f_min..b.f_max),
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Best-of-`repeats` wall time in milliseconds and the last result.
fn timed<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        let out = f()?;
        best = best.min(t0.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    Ok((best, last.expect("at least one run")))
}

fn engine_row<F: Sample>(
    eng: &dyn FilterEngine<F>,
    audio: &[f64],
    traj: &CoeffTrajectory,
    repeats: usize,
    duration_s: f64,
) -> Result<(BenchRow, Vec<f64>)> {
    let x: Vec<F> = audio.iter().map(|&v| F::from_f64(v)).collect();
    let (wall_ms, out) = timed(repeats, || eng.run(&x, traj, false))?;
    let row = BenchRow {
        path: eng.name().to_string(),
        filters: traj.num_filters(),
        frames: traj.num_frames(),
        precision: F::NAME.to_string(),
        wall_ms,
        realtime_factor: wall_ms / 1e3 / duration_s,
        steps: out.steps,
    };
    Ok((row, out.output.iter().map(|v| v.to_f64()).collect()))
}

fn inference_row<F: Sample>(audio: &[f64], repeats: usize, duration_s: f64, frames: usize) -> Result<BenchRow> {
    let weights = init_weights(0, DEFAULT_INIT_NOISE)?;
    let k = weights.config.num_bands();
    let (wall_ms, _) = timed(repeats, || {
        let mut proc = StreamProcessor::<_, F>::new(BackboneController::new(&weights), FRAME_LEN);
        let mut checksum = 0.0;
        for frame in audio.chunks(FRAME_LEN) {
            checksum += proc.process_frame(frame)?.iter().sum::<f64>();
        }
        Ok(checksum)
    })?;
    Ok(BenchRow {
        path: "inference".into(),
        filters: k,
        frames,
        precision: F::NAME.to_string(),
        wall_ms,
        realtime_factor: wall_ms / 1e3 / duration_s,
        steps: frames * k,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Times serial and systolic cascades in both precisions and the full
/// streaming inference path (features, backbone, cascade). Fails if the
/// two engines disagree, so a fast wrong answer never gets reported.
pub fn benchmark_paths(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    let full = BandPlan::default_plan();
    if config.filters == 0 || config.filters > full.len() || config.frames == 0 {
        return Err(TvfError::InvalidParameter(format!(
            "bench needs 1..={} filters and at least one frame",
            full.len()
        )));
    }
    let plan = full.truncated(config.filters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let traj = random_trajectory(&plan, config.frames, &mut rng).to_coeffs(&plan)?;
    let len = config.frames * FRAME_LEN;
    let audio: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
    let duration_s = len as f64 / plan.sample_rate;

    let mut rows = Vec::new();
    let (r, serial64) = engine_row(engine::<f64>("serial")?.as_ref(), &audio, &traj, config.repeats, duration_s)?;
    rows.push(r);
    let (r, systolic64) = engine_row(engine::<f64>("systolic")?.as_ref(), &audio, &traj, config.repeats, duration_s)?;
    rows.push(r);
    let (r, serial32) = engine_row(engine::<f32>("serial")?.as_ref(), &audio, &traj, config.repeats, duration_s)?;
    rows.push(r);
    let (r, systolic32) = engine_row(engine::<f32>("systolic")?.as_ref(), &audio, &traj, config.repeats, duration_s)?;
    rows.push(r);

    let d64 = max_abs_diff(&serial64, &systolic64);
    let scale = serial64.iter().map(|v| v.abs()).fold(1e-12, f64::max);
    if d64 > 1e-9 * scale.max(1.0) {
        return Err(TvfError::InvalidParameter(format!("systolic and serial outputs differ by {d64:e} (f64)")));
    }
    let d32 = max_abs_diff(&serial32, &systolic32);
    if d32 > 1e-4 * scale {
        return Err(TvfError::InvalidParameter(format!("systolic and serial outputs differ by {d32:e} (f32)")));
    }

    rows.push(inference_row::<f64>(&audio, config.repeats, duration_s, config.frames)?);
    rows.push(inference_row::<f32>(&audio, config.repeats, duration_s, config.frames)?);
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("path,filters,frames,precision,wall_ms,realtime_factor,steps\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.3},{:.5},{}\n",
            r.path, r.filters, r.frames, r.precision, r.wall_ms, r.realtime_factor, r.steps
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_counts_follow_engine_depths() {
        let rows = benchmark_paths(&BenchConfig {
            filters: 4,
            frames: 6,
            repeats: 1,
            seed: 1,
        })
        .unwrap();
        let steps = |path: &str| rows.iter().find(|r| r.path == path).unwrap().steps;
        assert_eq!(steps("serial"), 24);
        assert_eq!(steps("systolic"), 6 + 4 - 1);
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.wall_ms >= 0.0 && r.realtime_factor.is_finite()));
    }
}
