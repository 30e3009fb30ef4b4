use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tvf::filter::{frame_count, AudioBuffer, BandPlan, FilterParams, ParamTrajectory, FRAME_LEN};
use tvf::io::{read_trajectory, read_wav, write_trajectory, write_wav, BitDepth};

fn tvf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tvf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn speechy(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let t = i as f64 / 48_000.0;
            let env = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
            env * (0.3 * (2.0 * std::f64::consts::PI * 220.0 * t).sin() + 0.1 * (2.0 * std::f64::consts::PI * 1900.0 * t).sin())
        })
        .collect()
}

fn write_input(dir: &Path, name: &str, samples: Vec<f64>, rate: f64) -> PathBuf {
    let path = dir.join(name);
    write_wav(&path, &AudioBuffer::new(samples, rate).unwrap(), BitDepth::Float32).unwrap();
    path
}

fn neutral_trajectory(frames: usize) -> ParamTrajectory {
    let plan = BandPlan::default_plan();
    ParamTrajectory {
        frame_len: FRAME_LEN,
        sample_rate: plan.sample_rate,
        frames: vec![plan.bands.iter().map(FilterParams::neutral).collect(); frames],
    }
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn neutral_trajectory_leaves_audio_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let x = speechy(5 * FRAME_LEN + 100);
    let input = write_input(dir.path(), "in.wav", x.clone(), 48_000.0);
    let traj = dir.path().join("t.json");
    write_trajectory(&traj, &neutral_trajectory(frame_count(x.len(), FRAME_LEN))).unwrap();
    let out = dir.path().join("out.wav");
    ok(&["filter", "--input", p(&input), "--output", p(&out), "--trajectory", p(&traj), "--precision", "f64"]);
    let y = read_wav(&out).unwrap().samples;
    assert_eq!(y.len(), x.len());
    assert!(max_rel_diff(&y, &x) < 1e-6);
}

#[test]
fn serial_and_systolic_modes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let x = speechy(8 * FRAME_LEN);
    let input = write_input(dir.path(), "in.wav", x, 48_000.0);
    let ckpt = dir.path().join("m.ckpt");
    ok(&["init", "--out", p(&ckpt), "--seed", "3", "--noise", "0.5"]);
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    ok(&["filter", "--input", p(&input), "--output", p(&a), "--checkpoint", p(&ckpt)]);
    ok(&["filter", "--input", p(&input), "--output", p(&b), "--checkpoint", p(&ckpt), "--mode", "systolic"]);
    let ya = read_wav(&a).unwrap().samples;
    let yb = read_wav(&b).unwrap().samples;
    assert!(max_rel_diff(&yb, &ya) < 1e-4);
}

#[test]
fn static_peq_export_is_constant_over_frames() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.wav", speechy(6 * FRAME_LEN), 48_000.0);
    let ckpt = dir.path().join("m.ckpt");
    ok(&["init", "--out", p(&ckpt), "--noise", "0.5"]);
    let traj = dir.path().join("t.json");
    let out = dir.path().join("o.wav");
    ok(&[
        "filter", "--input", p(&input), "--output", p(&out), "--checkpoint", p(&ckpt), "--static-peq",
        "--export-trajectory", p(&traj),
    ]);
    let t = read_trajectory(&traj, &BandPlan::default_plan()).unwrap();
    assert_eq!(t.frames.len(), 6);
    assert!(t.frames.iter().all(|f| f == &t.frames[0]));
}

#[test]
fn exported_trajectory_reproduces_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.wav", speechy(4 * FRAME_LEN + 7), 48_000.0);
    let ckpt = dir.path().join("m.ckpt");
    ok(&["init", "--out", p(&ckpt), "--seed", "9", "--noise", "0.5"]);
    let traj = dir.path().join("t.json");
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    ok(&["filter", "--input", p(&input), "--output", p(&a), "--checkpoint", p(&ckpt), "--export-trajectory", p(&traj)]);
    ok(&["filter", "--input", p(&input), "--output", p(&b), "--trajectory", p(&traj)]);
    let ya = read_wav(&a).unwrap().samples;
    let yb = read_wav(&b).unwrap().samples;
    assert!(max_rel_diff(&yb, &ya) < 1e-5);
}

#[test]
fn response_of_an_untrained_model_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.wav", speechy(5 * FRAME_LEN), 48_000.0);
    let ckpt = dir.path().join("m.ckpt");
    ok(&["init", "--out", p(&ckpt), "--noise", "0"]);
    let csv = dir.path().join("r.csv");
    ok(&["response", "--checkpoint", p(&ckpt), "--input", p(&input), "--out", p(&csv), "--grid-points", "64"]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 1 + 5);
    assert_eq!(rows[0].split(',').count(), 65);
    for row in &rows[1..] {
        for v in row.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap().abs() < 1e-9);
        }
    }
}

#[test]
fn response_adds_across_sections() {
    // dB responses of cascaded sections add.
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.wav", speechy(2 * FRAME_LEN), 48_000.0);
    let mut one = neutral_trajectory(2);
    one.frames[0][10].gain_db = 6.0;
    one.frames[1][20].gain_db = -4.0;
    let mut both = one.clone();
    both.frames[0][25].gain_db = 3.0;
    let mut only = neutral_trajectory(2);
    only.frames[0][25].gain_db = 3.0;
    let read = |t: &ParamTrajectory, name: &str| -> Vec<Vec<f64>> {
        let tp = dir.path().join(format!("{name}.json"));
        write_trajectory(&tp, t).unwrap();
        let csv = dir.path().join(format!("{name}.csv"));
        ok(&["response", "--trajectory", p(&tp), "--input", p(&input), "--out", p(&csv)]);
        std::fs::read_to_string(&csv)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (a, b, c) = (read(&one, "one"), read(&only, "only"), read(&both, "both"));
    for n in 0..2 {
        for i in 0..a[n].len() {
            assert!((a[n][i] + b[n][i] - c[n][i]).abs() < 1e-9);
        }
    }
}

#[test]
fn eval_of_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.wav", speechy(4096), 48_000.0);
    let out = ok(&["eval", "--ref", p(&input), "--deg", p(&input)]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["lsd_db"].as_f64().unwrap(), 0.0);
    assert_eq!(v["si_sdr_db"].as_f64().unwrap(), 120.0);
    assert_eq!(v["mse"].as_f64().unwrap(), 0.0);
}

#[test]
fn exit_codes_separate_usage_data_and_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.wav", speechy(3 * FRAME_LEN), 48_000.0);
    let out = dir.path().join("o.wav");

    assert_eq!(tvf(&["filter", "--input", p(&input), "--output", p(&out)]).status.code(), Some(1));
    assert_eq!(tvf(&["gradcheck", "--target", "nope"]).status.code(), Some(1));

    let missing = dir.path().join("missing.json");
    assert_eq!(tvf(&["filter", "--input", p(&input), "--output", p(&out), "--trajectory", p(&missing)]).status.code(), Some(2));

    let short = dir.path().join("short.json");
    write_trajectory(&short, &neutral_trajectory(2)).unwrap();
    let r = tvf(&["filter", "--input", p(&input), "--output", p(&out), "--trajectory", p(&short)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("frame-count mismatch"));

    let r = tvf(&["gradcheck", "--target", "fir", "--points", "1", "--tolerance", "0"]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn unsupported_sample_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    // hand-built 16-bit PCM header; the library refuses to write this rate
    let (rate, n) = (44_100u32, 2048u32);
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + 2 * n).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&rate.to_le_bytes());
    bytes.extend_from_slice(&(2 * rate).to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes());
    bytes.extend_from_slice(&16u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(2 * n).to_le_bytes());
    bytes.resize(bytes.len() + 2 * n as usize, 0);
    let input = dir.path().join("in.wav");
    std::fs::write(&input, bytes).unwrap();
    let r = tvf(&["eval", "--ref", p(&input), "--deg", p(&input)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("48000"));
}

#[test]
fn filtering_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "in.wav", speechy(5 * FRAME_LEN), 48_000.0);
    let ckpt = dir.path().join("m.ckpt");
    ok(&["init", "--out", p(&ckpt), "--seed", "4", "--noise", "0.3"]);
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    ok(&["filter", "--input", p(&input), "--output", p(&a), "--checkpoint", p(&ckpt)]);
    ok(&["filter", "--input", p(&input), "--output", p(&b), "--checkpoint", p(&ckpt)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn short_training_run_writes_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, "steps_per_epoch = 2\nvalidate_every = 1\nvalidation_items = 1\nclip_frames = 4\n\n[optimizer]\nbatch_size = 1\nepochs = 1\n").unwrap();
    let ckpt = dir.path().join("m.ckpt");
    ok(&["train", "--config", p(&cfg), "--out", p(&ckpt), "--synthetic", "--quiet"]);
    assert!(ckpt.exists());
    let hist = std::fs::read_to_string(ckpt.with_extension("history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 3);

    std::fs::write(&cfg, "bogus_key = 3\n").unwrap();
    let r = tvf(&["train", "--config", p(&cfg), "--out", p(&ckpt)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("bogus_key"));
}

#[test]
fn bands_lists_every_filter() {
    let out = ok(&["bands"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["bands"].as_array().unwrap().len(), BandPlan::default_plan().len());
}
