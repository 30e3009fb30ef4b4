use proptest::prelude::*;

use tvf::backbone::{init_weights, Checkpoint};
use tvf::engine::engine;
use tvf::filter::{
    frequency_response, log_grid, params_to_coeffs, BandPlan, BiquadCoeffs, CoeffTrajectory, FilterParams,
    ParamTrajectory, FRAME_LEN,
};
use tvf::io::stream::{stream_all, TrajectoryController};
use tvf::io::TrajectoryFile;
use tvf::training::{lsd, si_sdr};

const SHORT_FRAME: usize = 16;

fn plan() -> BandPlan {
    BandPlan::default_plan()
}

/// In-range parameters for every band, drawn from unit-interval fractions.
fn params_strategy(k: usize) -> impl Strategy<Value = Vec<FilterParams>> {
    prop::collection::vec((-20.0f64..=20.0, 0.1f64..=2.0, 0.0f64..=1.0), k).prop_map(move |v| {
        let plan = plan();
        v.into_iter()
            .zip(&plan.bands)
            .map(|((gain_db, q, t), b)| FilterParams {
                gain_db,
                q,
                f0: b.f_min * (b.f_max / b.f_min).powf(t),
            })
            .collect()
    })
}

fn coeff_trajectory(frames: Vec<Vec<FilterParams>>, frame_len: usize) -> CoeffTrajectory {
    let plan = plan();
    let k = frames[0].len();
    ParamTrajectory {
        frame_len,
        sample_rate: plan.sample_rate,
        frames,
    }
    .to_coeffs(&plan.truncated(k).unwrap())
    .unwrap()
}

fn case() -> impl Strategy<Value = (CoeffTrajectory, Vec<f64>)> {
    (1usize..=6, 1usize..=8)
        .prop_flat_map(|(k, n)| {
            (
                prop::collection::vec(params_strategy(k), n),
                prop::collection::vec(-1.0f64..1.0, n * SHORT_FRAME),
            )
        })
        .prop_map(|(frames, x)| (coeff_trajectory(frames, SHORT_FRAME), x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engines_agree_with_exact_step_counts((traj, x) in case()) {
        let a = engine::<f64>("serial").unwrap().run(&x, &traj, false).unwrap();
        let b = engine::<f64>("systolic").unwrap().run(&x, &traj, false).unwrap();
        let (n, k) = (traj.num_frames(), traj.num_filters());
        prop_assert_eq!(a.steps, n * k);
        prop_assert_eq!(b.steps, n + k - 1);
        for (p, q) in a.output.iter().zip(&b.output) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    // With coefficients fixed the cascade is linear in its input, so the
    // reverse pass must be its exact adjoint: <A x, g> = <x, A^T g>.
    #[test]
    fn backward_is_the_adjoint_of_forward(
        (traj, x) in case(),
        gseed in any::<u64>(),
        which in prop::sample::select(vec!["serial", "systolic"]),
    ) {
        let eng = engine::<f64>(which).unwrap();
        let out = eng.run(&x, &traj, true).unwrap();
        let g: Vec<f64> = (0..x.len())
            .map(|i| ((gseed.wrapping_add(i as u64 * 0x9e37_79b9)) % 2001) as f64 / 1000.0 - 1.0)
            .collect();
        let grads = eng.backward(out.trace.as_ref().unwrap(), &traj, &g).unwrap();
        let lhs: f64 = out.output.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&grads.grad_input).map(|(a, b)| a * b).sum();
        let scale = out.output.iter().chain(&x).map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((lhs - rhs).abs() < 1e-9 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn in_range_parameters_give_stable_filters(params in params_strategy(35)) {
        let plan = plan();
        for (p, b) in params.iter().zip(&plan.bands) {
            prop_assert!(p.is_within(b));
            prop_assert!(params_to_coeffs(p, b.kind, plan.sample_rate).unwrap().is_stable());
        }
    }

    #[test]
    fn cascade_response_is_additive_in_db(params in params_strategy(35)) {
        let plan = plan();
        let coeffs: Vec<BiquadCoeffs> = params
            .iter()
            .zip(&plan.bands)
            .map(|(p, b)| params_to_coeffs(p, b.kind, plan.sample_rate).unwrap())
            .collect();
        let freqs = log_grid(20.0, 20_000.0, 64);
        let total = frequency_response(&coeffs, &freqs, plan.sample_rate).unwrap();
        let (head, tail) = coeffs.split_at(17);
        let a = frequency_response(head, &freqs, plan.sample_rate).unwrap();
        let b = frequency_response(tail, &freqs, plan.sample_rate).unwrap();
        for i in 0..freqs.len() {
            prop_assert!((total[i] - a[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_file_round_trips_exactly(frames in prop::collection::vec(params_strategy(35), 1..4)) {
        let plan = plan();
        let traj = ParamTrajectory { frame_len: FRAME_LEN, sample_rate: plan.sample_rate, frames };
        let text = TrajectoryFile::from_trajectory(&traj).to_json();
        let back = TrajectoryFile::from_json(&text).unwrap().to_trajectory(&plan).unwrap();
        prop_assert_eq!(back, traj);
    }

    #[test]
    fn streaming_matches_batch_for_any_length(
        frames in prop::collection::vec(params_strategy(35), 1..4),
        trim in 0usize..SHORT_FRAME,
        seed in any::<u64>(),
    ) {
        let plan = plan();
        let n = frames.len();
        let traj = ParamTrajectory { frame_len: SHORT_FRAME, sample_rate: plan.sample_rate, frames };
        let len = n * SHORT_FRAME - trim;
        let x: Vec<f64> = (0..len).map(|i| (((seed ^ i as u64) % 1000) as f64 / 500.0) - 1.0).collect();
        let streamed = stream_all::<_, f64>(TrajectoryController::new(&traj, &plan).unwrap(), SHORT_FRAME, &x).unwrap();
        let coeffs = traj.to_coeffs(&plan).unwrap();
        let (batch, _) = tvf::engine::process_with(engine::<f64>("serial").unwrap().as_ref(), &x, &coeffs).unwrap();
        prop_assert_eq!(streamed.len(), len);
        for (a, b) in streamed.iter().zip(&batch) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn si_sdr_ignores_the_estimate_scale(
        r in prop::collection::vec(-1.0f64..1.0, 64),
        e in prop::collection::vec(-0.3f64..0.3, 64),
        a in 0.01f64..100.0,
    ) {
        prop_assume!(r.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let y: Vec<f64> = r.iter().zip(&e).map(|(x, n)| x + n).collect();
        let scaled: Vec<f64> = y.iter().map(|v| a * v).collect();
        let s1 = si_sdr(&y, &r).unwrap();
        let s2 = si_sdr(&scaled, &r).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-6, "{} vs {}", s1, s2);
    }

    #[test]
    fn lsd_is_symmetric_and_zero_on_itself(x in prop::collection::vec(-1.0f64..1.0, 512), g in 0.1f64..10.0) {
        let y: Vec<f64> = x.iter().map(|v| g * v).collect();
        prop_assert_eq!(lsd(&x, &x).unwrap(), 0.0);
        prop_assert!((lsd(&x, &y).unwrap() - lsd(&y, &x).unwrap()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoint_storage_is_idempotent(seed in any::<u64>(), noise in 0.0f64..1.0) {
        let ck = Checkpoint { weights: init_weights(seed, noise).unwrap(), mode: "time_varying".into() };
        let once = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        let twice = Checkpoint::from_bytes(&once.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(&once, &twice);
        for (a, b) in ck.weights.to_flat().iter().zip(once.weights.to_flat()) {
            prop_assert!((a - b).abs() <= a.abs() * 1e-7 + 1e-30);
        }
    }
}
