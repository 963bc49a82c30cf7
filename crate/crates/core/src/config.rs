//! Scenario files: `key = value` lines, `#` comments, every key optional.
//!
//! ```text
//! seed = 7
//! runs = 6
//! walk.duration = 300
//! noise.clock_offset = 0.00389
//! model.hidden = 32
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lidartrack::TrackConfig;
use crate::nn::{ModelConfig, TrainConfig};
use crate::segment::{DEFAULT_CLIP_MARGIN, DEFAULT_SPLIT_RATIO, DEFAULT_STRIDE_SECONDS, DEFAULT_WINDOW_SECONDS};
use crate::synthworld::{LidarConfig, SensorNoise, SpikeConfig, WalkConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub imu_rate: f64,
    /// Walking recordings; the last `test_runs` of them are held out.
    pub runs: usize,
    pub test_runs: usize,
    /// Per-run walk settings; seed, start and heading are drawn per run.
    pub walk: WalkConfig,
    pub noise: SensorNoise,
    pub lidar: LidarConfig,
    pub spike: SpikeConfig,
    pub spike_recordings: usize,
    pub clip_margin: f64,
    pub window_s: f64,
    pub stride_s: f64,
    pub split_ratio: f64,
    pub track: TrackConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 0,
            imu_rate: 250.0,
            runs: 6,
            test_runs: 1,
            walk: WalkConfig {
                duration: 300.0,
                ..Default::default()
            },
            noise: SensorNoise::default(),
            lidar: LidarConfig::default(),
            spike: SpikeConfig::default(),
            spike_recordings: 10,
            clip_margin: DEFAULT_CLIP_MARGIN,
            window_s: DEFAULT_WINDOW_SECONDS,
            stride_s: DEFAULT_STRIDE_SECONDS,
            split_ratio: DEFAULT_SPLIT_RATIO,
            track: TrackConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: not a number: {v:?}")))
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: not a non-negative integer: {v:?}")))
}

impl Scenario {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let f = || num(key, v);
        let n = || count(key, v);
        match key {
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("seed: {v:?}")))?,
            "imu.rate" => self.imu_rate = f()?,
            "runs" => self.runs = n()?,
            "test_runs" => self.test_runs = n()?,
            "walk.duration" => self.walk.duration = f()?,
            "walk.mean_speed" => self.walk.mean_speed = f()?,
            "walk.speed_jitter" => self.walk.speed_jitter = f()?,
            "walk.turn_rate_std" => self.walk.turn_rate_std = f()?,
            "walk.cadence" => self.walk.step_cadence = f()?,
            "walk.sample_rate" => self.walk.sample_rate = f()?,
            "room.center_x" => self.walk.room.center.x = f()?,
            "room.center_y" => self.walk.room.center.y = f()?,
            "room.half_x" => self.walk.room.half_extents.x = f()?,
            "room.half_y" => self.walk.room.half_extents.y = f()?,
            "noise.accel_std" => self.noise.accel_std = f()?,
            "noise.gyro_std" => self.noise.gyro_std = f()?,
            "noise.mag_std" => self.noise.mag_std = f()?,
            "noise.lidar_std" => self.noise.lidar_std = f()?,
            "noise.clock_offset" => self.noise.clock_offset = f()?,
            "noise.accel_bias_x" => self.noise.accel_bias_x = f()?,
            "lidar.scan_rate" => self.lidar.scan_rate = f()?,
            "lidar.fov_deg" => self.lidar.fov_deg = f()?,
            "lidar.resolution_deg" => self.lidar.resolution_deg = f()?,
            "lidar.walker_radius" => self.lidar.walker_radius = f()?,
            "spike.count" => self.spike_recordings = n()?,
            "spike.duration" => self.spike.duration = f()?,
            "spike.time" => self.spike.spike_time = f()?,
            "spike.peak_speed" => self.spike.peak_speed = f()?,
            "spike.half_width" => self.spike.half_width = f()?,
            "segment.clip_margin" => self.clip_margin = f()?,
            "segment.window" => self.window_s = f()?,
            "segment.stride" => self.stride_s = f()?,
            "segment.split_ratio" => self.split_ratio = f()?,
            "track.dist_threshold" => self.track.dist_threshold = f()?,
            "track.min_points" => self.track.min_points = n()?,
            "track.cluster_link" => {
                self.track.cluster_link = match f()? {
                    x if x > 0.0 => Some(x),
                    _ => None,
                }
            }
            "model.hidden" => self.model.hidden = n()?,
            "model.attention_width" => self.model.attention_width = n()?,
            "model.dense" => self.model.dense = n()?,
            "model.dropout" => self.model.dropout = f()?,
            "train.epochs" => self.train.epochs = n()?,
            "train.batch" => self.train.batch = n()?,
            "train.lr0" => self.train.lr0 = f()?,
            "train.lr_factor" => self.train.lr_factor = f()?,
            "train.lr_patience" => self.train.lr_patience = n()?,
            "train.min_delta" => self.train.min_delta = f()?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Scenario::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
            s.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.walk.validate()?;
        self.noise.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.imu_rate > 0.0 && self.lidar.scan_rate > 0.0) {
            return Err(Error::Config("sensor rates must be positive".into()));
        }
        if self.test_runs >= self.runs {
            return Err(Error::Config(format!(
                "{} test runs leave no training runs out of {}",
                self.test_runs, self.runs
            )));
        }
        if !(self.clip_margin >= 0.0 && self.window_s > 0.0 && self.stride_s > 0.0) {
            return Err(Error::Config("segment lengths must be positive".into()));
        }
        Ok(())
    }

    /// All settings as a scenario file.
    pub fn to_text(&self) -> String {
        let w = &self.walk;
        let r = &w.room;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("imu.rate", self.imu_rate.to_string());
        kv("runs", self.runs.to_string());
        kv("test_runs", self.test_runs.to_string());
        kv("walk.duration", w.duration.to_string());
        kv("walk.mean_speed", w.mean_speed.to_string());
        kv("walk.speed_jitter", w.speed_jitter.to_string());
        kv("walk.turn_rate_std", w.turn_rate_std.to_string());
        kv("walk.cadence", w.step_cadence.to_string());
        kv("walk.sample_rate", w.sample_rate.to_string());
        kv("room.center_x", r.center.x.to_string());
        kv("room.center_y", r.center.y.to_string());
        kv("room.half_x", r.half_extents.x.to_string());
        kv("room.half_y", r.half_extents.y.to_string());
        let n = &self.noise;
        kv("noise.accel_std", n.accel_std.to_string());
        kv("noise.gyro_std", n.gyro_std.to_string());
        kv("noise.mag_std", n.mag_std.to_string());
        kv("noise.lidar_std", n.lidar_std.to_string());
        kv("noise.clock_offset", n.clock_offset.to_string());
        kv("noise.accel_bias_x", n.accel_bias_x.to_string());
        kv("lidar.scan_rate", self.lidar.scan_rate.to_string());
        kv("lidar.fov_deg", self.lidar.fov_deg.to_string());
        kv("lidar.resolution_deg", self.lidar.resolution_deg.to_string());
        kv("lidar.walker_radius", self.lidar.walker_radius.to_string());
        kv("spike.count", self.spike_recordings.to_string());
        kv("spike.duration", self.spike.duration.to_string());
        kv("spike.time", self.spike.spike_time.to_string());
        kv("spike.peak_speed", self.spike.peak_speed.to_string());
        kv("spike.half_width", self.spike.half_width.to_string());
        kv("segment.clip_margin", self.clip_margin.to_string());
        kv("segment.window", self.window_s.to_string());
        kv("segment.stride", self.stride_s.to_string());
        kv("segment.split_ratio", self.split_ratio.to_string());
        kv("track.dist_threshold", self.track.dist_threshold.to_string());
        kv("track.min_points", self.track.min_points.to_string());
        kv("track.cluster_link", self.track.cluster_link.unwrap_or(0.0).to_string());
        kv("model.hidden", self.model.hidden.to_string());
        kv("model.attention_width", self.model.attention_width.to_string());
        kv("model.dense", self.model.dense.to_string());
        kv("model.dropout", self.model.dropout.to_string());
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.batch", self.train.batch.to_string());
        kv("train.lr0", self.train.lr0.to_string());
        kv("train.lr_factor", self.train.lr_factor.to_string());
        kv("train.lr_patience", self.train.lr_patience.to_string());
        kv("train.min_delta", self.train.min_delta.to_string());
        s
    }
}
