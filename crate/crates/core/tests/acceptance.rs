//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.
//!
//! Run alone with `cargo test -p pedtrack-core --test acceptance -- --nocapture`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pedtrack::config::Scenario;
use pedtrack::datamodel::{ImuRun, ImuSample, Trajectory};
use pedtrack::eval::{ablation_run, format_ablation, mean_baseline, Variant};
use pedtrack::lidartrack::{track, window_displacements, TrackConfig};
use pedtrack::nn::{
    attention_forward, gru_cell_step, load_model, model_backward, model_forward, predict, save_model, train_model,
    AttentionParams, GruParams, Mode, ModelConfig, ModelParams, Pooling, Target, TrainConfig,
};
use pedtrack::pdr::{pdr_reconstruct, PdrConfig};
use pedtrack::pipeline::{build_dataset, estimate_scenario_delay, simulate_spike_recording, spike_traces, true_displacement};
use pedtrack::segment::{
    augment_magnitudes, clip_run, split_dataset, window_examples, DatasetSplit, LabeledWindow, WindowConfig,
};
use pedtrack::sync::{estimate_delay, DelayMethod};
use pedtrack::synthworld::{render_lidar, simulate_walk, synthesize_imu, LidarConfig, Room, SensorNoise, WalkConfig};
use pedtrack::Point2;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-scale..scale))
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(-scale..scale))
}

fn random_gru(rng: &mut ChaCha8Rng, d_in: usize, d: usize) -> GruParams {
    GruParams {
        w_ux: uniform(rng, (d, d_in), 1.0),
        w_uh: uniform(rng, (d, d), 1.0),
        b_u: uniform_vec(rng, d, 0.5),
        w_rx: uniform(rng, (d, d_in), 1.0),
        w_rh: uniform(rng, (d, d), 1.0),
        b_r: uniform_vec(rng, d, 0.5),
        w_hx: uniform(rng, (d, d_in), 1.0),
        w_hh: uniform(rng, (d, d), 1.0),
        b_h: uniform_vec(rng, d, 0.5),
    }
}

// 1. Full-stack gradients against central differences.
fn gradient_oracle() -> Outcome {
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for inst in 0..20u64 {
        let cfg = ModelConfig {
            input_dim: 5,
            hidden: 8,
            depth: 2,
            pooling: Pooling::Attention,
            attention_width: 4,
            dense: 6,
            dropout: 0.25,
        };
        let mut params = ModelParams::init(cfg, 100 + inst).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(200 + inst);
        // Non-zero biases so every bias gradient path is exercised.
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let x = uniform(&mut rng, (10, 5), 1.0);
        let mode = Mode::Train { seed: 300 + inst };
        let (_, cache) = model_forward(x.view(), &params, mode).map_err(|e| e.to_string())?;
        let grad = model_backward(&params, &cache, 1.0).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = grad.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
        let mut k = 0;
        let n_tensors = params.tensors().len();
        for ti in 0..n_tensors {
            let len = params.tensors()[ti].1.len();
            for j in 0..len {
                let orig = params.tensors()[ti].1[j];
                params.tensors_mut()[ti][j] = orig + h;
                let plus = model_forward(x.view(), &params, mode).unwrap().0;
                params.tensors_mut()[ti][j] = orig - h;
                let minus = model_forward(x.view(), &params, mode).unwrap().0;
                params.tensors_mut()[ti][j] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                k += 1;
                checked += 1;
            }
        }
    }
    check(worst < 1e-4, format!("max relative error {worst:.2e} over {checked} parameters in 20 instances"))
}

/// Independent transcription of the gate equations, one scalar at a time.
fn scalar_gru(x: &[f64], hp: &[f64], p: &GruParams) -> Vec<f64> {
    let d = hp.len();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let mut u = vec![0.0; d];
    let mut r = vec![0.0; d];
    for i in 0..d {
        let (mut su, mut sr) = (p.b_u[i], p.b_r[i]);
        for j in 0..x.len() {
            su += p.w_ux[[i, j]] * x[j];
            sr += p.w_rx[[i, j]] * x[j];
        }
        for j in 0..d {
            su += p.w_uh[[i, j]] * hp[j];
            sr += p.w_rh[[i, j]] * hp[j];
        }
        u[i] = sig(su);
        r[i] = sig(sr);
    }
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut s = p.b_h[i];
        for j in 0..x.len() {
            s += p.w_hx[[i, j]] * x[j];
        }
        for j in 0..d {
            s += p.w_hh[[i, j]] * (r[j] * hp[j]);
        }
        out[i] = (1.0 - u[i]) * hp[i] + u[i] * s.tanh();
    }
    out
}

// 2.
fn scalar_reference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d_in = rng.random_range(1..12);
        let d = rng.random_range(1..12);
        let p = random_gru(&mut rng, d_in, d);
        let x = uniform_vec(&mut rng, d_in, 2.0);
        let hp = uniform_vec(&mut rng, d, 1.0);
        let (h, _) = gru_cell_step(x.view(), hp.view(), &p).map_err(|e| e.to_string())?;
        let want = scalar_gru(x.as_slice().unwrap(), hp.as_slice().unwrap(), &p);
        for (a, b) in h.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-12, format!("max |vectorized - scalar| = {worst:.2e} over 100 instances"))
}

// 3.
fn attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sum_err, mut min_alpha, mut mean_err) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let t = rng.random_range(1..60);
        let d = rng.random_range(1..10);
        let k = rng.random_range(1..8);
        let hmat = uniform(&mut rng, (t, d), 3.0);
        let p = AttentionParams {
            m: uniform(&mut rng, (k, d), 2.0),
            b: uniform_vec(&mut rng, k, 1.0),
            w: uniform_vec(&mut rng, k, 3.0),
        };
        let (_, cache) = attention_forward(hmat.view(), &p);
        sum_err = sum_err.max((cache.alpha.sum() - 1.0).abs());
        min_alpha = min_alpha.min(cache.alpha.iter().copied().fold(f64::INFINITY, f64::min));

        // M = 0 makes every score w·tanh(b): uniform weights.
        let flat = AttentionParams {
            m: Array2::zeros((k, d)),
            ..p
        };
        let (c, _) = attention_forward(hmat.view(), &flat);
        let mean = hmat.mean_axis(ndarray::Axis(0)).unwrap();
        for (a, b) in c.iter().zip(&mean) {
            mean_err = mean_err.max((a - b).abs());
        }
    }
    check(
        sum_err <= 1e-12 && min_alpha >= 0.0 && mean_err <= 1e-12,
        format!("max |Σα-1| {sum_err:.1e}, min α {min_alpha:.1e}, max |c - row mean| {mean_err:.1e}"),
    )
}

// 4.
fn shape_conformance() -> Outcome {
    let params = ModelParams::init(ModelConfig::default(), 4).map_err(|e| e.to_string())?;
    let x = Array2::from_shape_fn((500, 12), |(i, j)| ((i * 12 + j) as f64 * 0.01).sin());
    let (_, cache) = model_forward(x.view(), &params, Mode::Infer).map_err(|e| e.to_string())?;
    let want: Vec<Vec<usize>> = vec![vec![500, 12], vec![500, 256], vec![500, 256], vec![1, 256], vec![1, 64], vec![1]];
    check(cache.trace == want, format!("trace {:?}", cache.trace))
}

fn small_scenario(seed: u64) -> Scenario {
    let mut s = Scenario::default();
    s.seed = seed;
    s.runs = 3;
    s.test_runs = 1;
    s.walk.duration = 40.0;
    s.spike_recordings = 0;
    s.stride_s = 2.0;
    s
}

// 5.
fn overfit() -> Outcome {
    let ds = build_dataset(&small_scenario(5)).map_err(|e| e.to_string())?;
    let pool: Vec<LabeledWindow> = ds.split.train.iter().chain(&ds.split.val).cloned().collect();
    if pool.len() < 24 {
        return Err(format!("only {} windows available", pool.len()));
    }
    let (train, val) = (&pool[..20], &pool[20..24]);
    let model = ModelConfig {
        hidden: 32,
        ..Default::default()
    };
    let cfg = TrainConfig {
        epochs: 200,
        seed: 5,
        ..Default::default()
    };
    let mut lines = Vec::new();
    let mut ok = true;
    for target in [Target::Dx, Target::Dy] {
        let (_, hist) = train_model(train, val, model, &cfg, target).map_err(|e| e.to_string())?;
        let start = hist.epochs[0].train_mae;
        let (best_epoch, best) = hist.epochs[1..]
            .iter()
            .map(|r| (r.epoch, r.train_mae))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let reduction = 1.0 - best / start;
        ok &= reduction >= 0.8;
        lines.push(format!("{target}: {start:.3} -> {best:.3} m ({:.0}% by epoch {best_epoch})", reduction * 100.0));
    }
    check(ok, lines.join("; "))
}

/// Desk-scale benchmark settings: a 30-minute dataset at a reduced width.
fn benchmark_scenario() -> Scenario {
    let mut s = Scenario::default();
    s.seed = 6;
    s.runs = 6;
    s.test_runs = 1;
    s.walk.duration = 300.0;
    s.noise.clock_offset = 0.00389;
    s.stride_s = 2.0;
    s.model.hidden = 16;
    s.model.attention_width = 16;
    s.train.epochs = 12;
    s.train.seed = 6;
    s
}

// 6.
fn benchmark() -> Outcome {
    let scn = benchmark_scenario();
    let ds = build_dataset(&scn).map_err(|e| e.to_string())?;
    let split = &ds.split;
    let baseline = mean_baseline(&split.train, &split.test, "test").map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = ablation_run(&Variant::ALL, split, scn.model, &scn.train, Some(dir.path())).map_err(|e| e.to_string())?;
    println!(
        "  dataset: {} train / {} val / {} test windows, delay {:.3} ms",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        ds.delay.mean * 1e3
    );
    println!("  baseline (train mean) test MAE: dx {:.4} dy {:.4}", baseline.mae_dx, baseline.mae_dy);
    for line in format_ablation(&rows).lines() {
        println!("  {line}");
    }
    let result = |v: Variant| rows.iter().find(|r| r.variant == v).and_then(|r| r.outcome.as_ref().ok());
    let Some(main) = result(Variant::Gru2Att) else {
        return Err("2gru_att failed to train".into());
    };
    let test = main.test.as_ref().ok_or("no test windows")?;
    let gain_x = 1.0 - test.mae_dx / baseline.mae_dx;
    let gain_y = 1.0 - test.mae_dy / baseline.mae_dy;
    if let Some(plain) = result(Variant::Gru2) {
        let val = |r: &pedtrack::eval::VariantResult| 0.5 * (r.val.mae_dx + r.val.mae_dy);
        println!(
            "  reported only: 2gru_att vs 2gru val MAE {:.4} vs {:.4}, stability {:.4} vs {:.4}",
            val(main),
            val(plain),
            main.stability(),
            plain.stability()
        );
    }
    check(
        gain_x >= 0.3 && gain_y >= 0.3 && rows.iter().all(|r| r.outcome.is_ok()),
        format!(
            "2gru_att test MAE dx {:.4} dy {:.4} vs baseline {:.4} {:.4}: {:.0}% / {:.0}% better",
            test.mae_dx,
            test.mae_dy,
            baseline.mae_dx,
            baseline.mae_dy,
            gain_x * 100.0,
            gain_y * 100.0
        ),
    )
}

// 7.
fn sync_recovery() -> Outcome {
    let mut scn = Scenario::default();
    scn.seed = 7;
    scn.noise.clock_offset = 0.00389;
    scn.spike_recordings = 10;
    let est = estimate_scenario_delay(&scn, DelayMethod::Peak).map_err(|e| e.to_string())?;
    let err = (est.mean - 0.00389).abs();
    let mut shift_err = 0.0f64;
    for i in 0..3 {
        let (imu, lidar) = simulate_spike_recording(&scn, i).map_err(|e| e.to_string())?;
        let (vi, vl) = spike_traces(&imu, &lidar, &scn).map_err(|e| e.to_string())?;
        let base = estimate_delay(&vi, &vl).map_err(|e| e.to_string())?;
        for delta in [-0.05, -0.0123, 0.001, 0.0377, 0.1] {
            let moved = estimate_delay(&vi, &vl.shifted(delta)).map_err(|e| e.to_string())?;
            shift_err = shift_err.max((moved - base - delta).abs());
        }
    }
    check(
        err <= 0.002 && shift_err <= 1e-4,
        format!(
            "mean {:.3} ms (std {:.3} ms) over 10 recordings, error {:.3} ms; shift equivariance error {shift_err:.1e} s",
            est.mean * 1e3,
            est.std * 1e3,
            err * 1e3
        ),
    )
}

// 8.
fn tracking() -> Outcome {
    let walk = WalkConfig {
        duration: 120.0,
        seed: 8,
        ..Default::default()
    };
    let truth = simulate_walk(&walk).map_err(|e| e.to_string())?;
    let room = Room::default();
    let lidar_cfg = LidarConfig::default();

    let clean = render_lidar(&truth, &room, &lidar_cfg, &SensorNoise::none(), 1).map_err(|e| e.to_string())?;
    let tr = track(&clean, &TrackConfig::default()).map_err(|e| e.to_string())?;
    let per_scan = tr
        .points
        .iter()
        .filter_map(|p| truth.position_at(p.t).map(|q| q.dist(p.pos)))
        .fold(0.0f64, f64::max);

    let noisy_noise = SensorNoise {
        lidar_std: 0.03,
        ..SensorNoise::none()
    };
    let noisy = render_lidar(&truth, &room, &lidar_cfg, &noisy_noise, 2).map_err(|e| e.to_string())?;
    let tr = track(&noisy, &TrackConfig::default()).map_err(|e| e.to_string())?;
    let labels = window_displacements(&tr, 2.0);
    let sq: Vec<f64> = labels
        .iter()
        .filter_map(|l| {
            let d = true_displacement(&truth, l.t_start, l.t_end - l.t_start)?;
            Some((Point2::new(l.dx, l.dy) - d).norm_sq())
        })
        .collect();
    let rms = (sq.iter().sum::<f64>() / sq.len().max(1) as f64).sqrt();
    check(
        per_scan <= 0.2 && rms <= 0.1 && sq.len() > 50,
        format!(
            "zero-noise max per-scan error {per_scan:.3} m over {} scans; σ=30 mm label RMS {rms:.4} m over {} windows",
            clean.scans.len(),
            sq.len()
        ),
    )
}

fn straight_walk(duration: f64, speed: f64, heading: f64) -> Trajectory {
    let n = (duration * 200.0).round() as usize + 1;
    let t: Vec<f64> = (0..n).map(|i| i as f64 / 200.0).collect();
    let dir = Point2::from_angle(heading);
    let p: Vec<Point2> = t.iter().map(|&t| dir * (speed * t)).collect();
    Trajectory::from_parts(&t, &p)
}

fn pdr_endpoint_error(traj: &Trajectory, noise: &SensorNoise, heading: f64) -> Result<f64, String> {
    let run = synthesize_imu(traj, 250.0, noise, 1.8, 9).map_err(|e| e.to_string())?;
    let cfg = PdrConfig {
        theta0: heading,
        ..Default::default()
    };
    let path = pdr_reconstruct(&run, &cfg).map_err(|e| e.to_string())?;
    let end = path.points.last().unwrap().pos;
    Ok(end.dist(traj.points.last().unwrap().pos))
}

// 9.
fn pdr_baseline() -> Outcome {
    // 20 m in 30 whole gait cycles.
    let duration = 30.0 / 1.8;
    let walk = straight_walk(duration, 20.0 / duration, FRAC_PI_2);
    let clean_err = pdr_endpoint_error(&walk, &SensorNoise::none(), FRAC_PI_2)?;

    let biased = SensorNoise {
        accel_bias_x: 0.05,
        ..SensorNoise::none()
    };
    let mut drift = Vec::new();
    for secs in [30.0, 60.0, 120.0] {
        let walk = straight_walk(secs, 1.2, 0.0);
        drift.push(pdr_endpoint_error(&walk, &biased, 0.0)?);
    }
    let monotonic = drift.windows(2).all(|w| w[1] > w[0]);
    check(
        clean_err <= 1.0 && monotonic,
        format!(
            "20 m endpoint error {clean_err:.3} m ({:.1}%); biased 30/60/120 s errors {:.3} / {:.3} / {:.3} m",
            clean_err / 20.0 * 100.0,
            drift[0],
            drift[1],
            drift[2]
        ),
    )
}

// 10.
fn determinism_and_persistence() -> Outcome {
    let ds = build_dataset(&small_scenario(10)).map_err(|e| e.to_string())?;
    let again = build_dataset(&small_scenario(10)).map_err(|e| e.to_string())?;
    let same_data = ds.split == again.split;
    let model = ModelConfig {
        hidden: 8,
        attention_width: 8,
        dense: 16,
        ..Default::default()
    };
    let cfg = TrainConfig {
        epochs: 3,
        seed: 10,
        ..Default::default()
    };
    let train = &ds.split.train[..ds.split.train.len().min(30)];
    let (p1, h1) = train_model(train, &ds.split.val, model, &cfg, Target::Dx).map_err(|e| e.to_string())?;
    let (_, h2) = train_model(train, &ds.split.val, model, &cfg, Target::Dx).map_err(|e| e.to_string())?;
    let bits = |h: &pedtrack::nn::History| -> Vec<u64> {
        h.epochs
            .iter()
            .flat_map(|r| [r.train_mae.to_bits(), r.val_mae.to_bits(), r.lr.to_bits()])
            .collect()
    };
    let same_history = bits(&h1) == bits(&h2);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model_path = dir.path().join("m.model");
    save_model(&p1, &model_path).map_err(|e| e.to_string())?;
    let p2 = load_model(&model_path).map_err(|e| e.to_string())?;
    let a = predict(&p1, &ds.split.val).map_err(|e| e.to_string())?;
    let b = predict(&p2, &ds.split.val).map_err(|e| e.to_string())?;
    let model_err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    ds.split.save(&dir.path().join("ds"), Some(&ds.normalizer)).map_err(|e| e.to_string())?;
    let loaded = DatasetSplit::load(&dir.path().join("ds")).map_err(|e| e.to_string())?;
    let c = predict(&p1, &loaded.val).map_err(|e| e.to_string())?;
    let data_err = a.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    check(
        same_data && same_history && model_err <= 1e-12 && data_err <= 1e-12,
        format!(
            "dataset rebuild identical: {same_data}; histories bitwise identical: {same_history}; \
             model round-trip {model_err:.1e}; dataset round-trip {data_err:.1e}"
        ),
    )
}

fn ramp_run(secs: f64, rate: f64) -> ImuRun {
    let n = (secs * rate).round() as usize + 1;
    ImuRun::new(
        rate,
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                ImuSample {
                    t,
                    accel: [t.sin(), t.cos(), 0.1],
                    gyro: [0.0, 0.0, (PI * t).sin()],
                    mag: [22.0, 0.0, -42.0],
                }
            })
            .collect(),
    )
}

// 11.
fn segmentation_arithmetic() -> Outcome {
    let run = ramp_run(12.0, 250.0);
    let channels = augment_magnitudes(&run);
    let cfg = WindowConfig::default();
    let labels: Vec<_> = (0..20)
        .map(|k| pedtrack::lidartrack::DisplacementLabel {
            t_start: k as f64 * 0.5,
            t_end: k as f64 * 0.5 + 2.0,
            dx: 0.0,
            dy: 0.0,
        })
        .collect();
    let windows = window_examples("r", &channels, &labels, &cfg).map_err(|e| e.to_string())?;
    let shapes_ok = !windows.is_empty() && windows.iter().all(|w| w.x.dim() == (500, 12));

    let pool: Vec<LabeledWindow> = (0..100)
        .map(|i| LabeledWindow {
            run_id: format!("run{}", i % 5),
            start_index: i * 500,
            t_start: i as f64 * 2.0,
            x: Array2::zeros((500, 12)),
            dx: 0.0,
            dy: 0.0,
        })
        .collect();
    let split = split_dataset(pool, 0.8, 11, &[]).map_err(|e| e.to_string())?;

    let clipped = clip_run(&ramp_run(600.0, 250.0), 3.0).map_err(|e| e.to_string())?;
    let span = clipped.span();
    check(
        shapes_ok && split.train.len() == 80 && split.val.len() == 20 && (span - 594.0).abs() < 1e-9,
        format!(
            "{} windows of {:?}; split {}/{}; clipped span {span} s",
            windows.len(),
            windows.first().map(|w| w.x.dim()),
            split.train.len(),
            split.val.len()
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient oracle", gradient_oracle),
        ("scalar GRU reference", scalar_reference),
        ("attention invariants", attention_invariants),
        ("shape conformance", shape_conformance),
        ("overfit smoke test", overfit),
        ("synthetic benchmark and ablation", benchmark),
        ("sync recovery", sync_recovery),
        ("centroid tracking", tracking),
        ("PDR baseline", pdr_baseline),
        ("determinism and persistence", determinism_and_persistence),
        ("segmentation arithmetic", segmentation_arithmetic),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
