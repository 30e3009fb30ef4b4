//! How strongly the loss reacts to each filter's gain when the signal is a
//! low tone. Biquad skirts are not band-limited, so bands far above the
//! tone still have a small effect; it must shrink with distance.

use tvf::engine::{engine, process_with};
use tvf::filter::{BandPlan, FilterParams, ParamTrajectory, FRAME_LEN};
use tvf::training::{total_loss, LossConfig};

fn loss_at(gains: &[f64], x: &[f64], target: &[f64]) -> f64 {
    let plan = BandPlan::default_plan();
    let frames = x.len() / FRAME_LEN;
    let params: Vec<FilterParams> = plan
        .bands
        .iter()
        .zip(gains)
        .map(|(b, &g)| FilterParams { gain_db: g, ..FilterParams::neutral(b) })
        .collect();
    let traj = ParamTrajectory { frame_len: FRAME_LEN, sample_rate: plan.sample_rate, frames: vec![params; frames] }
        .to_coeffs(&plan)
        .unwrap();
    let (y, _) = process_with(engine::<f64>("serial").unwrap().as_ref(), x, &traj).unwrap();
    total_loss(&y, target, &LossConfig::default()).unwrap()
}

#[test]
fn gain_gradient_falls_off_above_a_low_tone() {
    let len = 4 * FRAME_LEN;
    let x: Vec<f64> = (0..len).map(|i| 0.5 * (2.0 * std::f64::consts::PI * 100.0 * i as f64 / 48_000.0).sin()).collect();
    let target: Vec<f64> = x.iter().map(|v| 0.7 * v).collect();
    let k = BandPlan::default_plan().len();
    let h = 1e-3;
    let grads: Vec<f64> = (0..k)
        .map(|i| {
            let mut g = vec![0.0; k];
            g[i] = h;
            let up = loss_at(&g, &x, &target);
            g[i] = -h;
            let down = loss_at(&g, &x, &target);
            ((up - down) / (2.0 * h)).abs()
        })
        .collect();
    let largest = grads.iter().cloned().fold(0.0, f64::max);
    let ratio = |i: usize| grads[i] / largest;
    // the tone sits in the second peak band; the top bands are decades away
    assert!(ratio(1) > 0.1);
    assert!(ratio(k - 1) < 1e-2, "high shelf ratio {}", ratio(k - 1));
    assert!(ratio(k - 2) < 1e-2, "top peak ratio {}", ratio(k - 2));
    assert!(ratio(25) > ratio(k - 2));
    assert!(ratio(10) > ratio(25));
}
