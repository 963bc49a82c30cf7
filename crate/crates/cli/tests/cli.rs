use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = "\
runs = 3
walk.duration = 20
spike.count = 2
noise.clock_offset = 0.00389
segment.stride = 2
model.hidden = 4
model.attention_width = 4
model.dense = 8
train.epochs = 1
";

fn pedtrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pedtrack"))
        .arg("--config")
        .arg(dir.join("scenario.txt"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pedtrack(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn end_to_end_in_memory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("scenario.txt"), SCENARIO).unwrap();
    let out = dir.join("out");

    let sync = ok(dir, &["sync"]);
    assert!(sync.contains("mean"), "{sync}");
    let rows = fs::read_to_string(out.join("sync.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 + 2);

    ok(dir, &["segment"]);
    for f in ["train.txt", "val.txt", "test.txt", "split.txt", "normalizer.txt"] {
        assert!(out.join("dataset").join(f).exists(), "{f}");
    }
    let ds = out.join("dataset");
    let ds = ds.to_str().unwrap();
    ok(dir, &["train", "--dataset", ds, "--target", "dx"]);
    ok(dir, &["train", "--dataset", ds, "--target", "dy", "--variant", "2gru_att"]);
    let mx = out.join("2gru_att_dx.model");
    let my = out.join("2gru_att_dy.model");
    let (mx, my) = (mx.to_str().unwrap(), my.to_str().unwrap());

    ok(dir, &["predict", "--model", mx, "--dataset", ds, "--set", "val"]);
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert!(preds.starts_with("run,start_index,t_start,prediction,dx,dy"));

    ok(dir, &["eval", "--model-dx", mx, "--model-dy", my, "--dataset", ds]);
    let eval = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(eval.contains("train-mean,test"), "{eval}");

    let rec = ok(dir, &["reconstruct", "--model-dx", mx, "--model-dy", my, "--dataset", ds]);
    assert!(rec.contains("walk002"), "{rec}");
    let svg = fs::read_to_string(out.join("walk002_path.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let hist = out.join("2gru_att_dx_history.csv");
    ok(dir, &["plot", "--kind", "training_curve", "--input", hist.to_str().unwrap(), "--output", "curve.svg"]);
    assert!(out.join("curve.csv").exists());
}

#[test]
fn file_pipeline_and_pdr() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("scenario.txt"), SCENARIO.replace("runs = 3", "runs = 2")).unwrap();
    let out = dir.join("out");
    ok(dir, &["synth"]);
    assert!(out.join("walk001_lidar.txt").exists() && out.join("spike01_imu.txt").exists());

    let lidar = out.join("walk000_lidar.txt");
    ok(dir, &["track", "--lidar", lidar.to_str().unwrap()]);
    assert!(out.join("walk000_labels.txt").exists());

    ok(dir, &["segment", "--data-dir", out.to_str().unwrap(), "--delay", "0.00389"]);
    assert!(out.join("dataset/test.txt").exists());

    let imu = out.join("walk000_imu.txt");
    let pdr = ok(dir, &["pdr", "--imu", imu.to_str().unwrap(), "--threshold", "2.5"]);
    assert!(pdr.contains("points"), "{pdr}");
    assert!(out.join("pdr_trajectory.txt").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("scenario.txt"), SCENARIO).unwrap();
    let code = |args: &[&str]| pedtrack(dir, args).status.code();
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["train", "--dataset", "x", "--target", "dz"]), Some(2));
    assert_eq!(code(&["ablate", "--dataset", "x", "--variants", "bogus"]), Some(2));
    assert_eq!(code(&["pdr", "--imu", "missing.txt"]), Some(1));

    fs::write(dir.join("scenario.txt"), "runs = 2\nbogus.key = 1\n").unwrap();
    assert_eq!(code(&["sync"]), Some(2));
}
