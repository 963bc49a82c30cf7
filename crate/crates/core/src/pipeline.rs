//! End-to-end dataset construction from a [`Scenario`]: simulate spike and
//! walking recordings, estimate the LiDAR delay, track the walker, label and
//! window every run, then split and normalize.
//!
//! LiDAR scans of a walking run are tracked as soon as they are rendered and
//! then dropped, so memory stays proportional to one run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Scenario;
use crate::datamodel::{ImuRun, LidarRun, Trajectory};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::lidartrack::{displacements_at, track, CentroidTrack};
use crate::segment::{
    augment_magnitudes, clip_run, split_dataset, window_examples, window_starts, DatasetSplit, LabeledWindow,
    Normalizer, WindowConfig,
};
use crate::sync::{average_delay, imu_velocity, lidar_velocity, DelayEstimate, DelayMethod, VelocityTrace};
use crate::synthworld::{render_lidar, simulate_spike, simulate_walk, synthesize_imu, LidarConfig, WalkConfig};

/// Independent seed for `(stream, index)` under a scenario seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_WALK: u64 = 1;
const STREAM_IMU: u64 = 2;
const STREAM_LIDAR: u64 = 3;
const STREAM_SPIKE: u64 = 4;

/// One simulated walking recording.
#[derive(Debug, Clone)]
pub struct WalkRecording {
    pub id: String,
    pub truth: Trajectory,
    pub imu: ImuRun,
    pub lidar: LidarRun,
}

pub fn run_id(index: usize) -> String {
    format!("walk{index:03}")
}

/// Walk settings for run `index`: own seed and a random initial heading.
pub fn walk_config(scn: &Scenario, index: usize) -> WalkConfig {
    let seed = derive_seed(scn.seed, STREAM_WALK, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WalkConfig {
        seed,
        initial_heading: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        ..scn.walk.clone()
    }
}

pub fn simulate_recording(scn: &Scenario, index: usize) -> Result<WalkRecording> {
    let truth = simulate_walk(&walk_config(scn, index))?;
    let imu = synthesize_imu(
        &truth,
        scn.imu_rate,
        &scn.noise,
        scn.walk.step_cadence,
        derive_seed(scn.seed, STREAM_IMU, index as u64),
    )?;
    let lidar = render_lidar(
        &truth,
        &scn.walk.room,
        &scn.lidar,
        &scn.noise,
        derive_seed(scn.seed, STREAM_LIDAR, index as u64),
    )?;
    Ok(WalkRecording {
        id: run_id(index),
        truth,
        imu,
        lidar,
    })
}

/// IMU and LiDAR of spike recording `index`, with a random scan phase.
pub fn simulate_spike_recording(scn: &Scenario, index: usize) -> Result<(ImuRun, LidarRun)> {
    let seed = derive_seed(scn.seed, STREAM_SPIKE, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = simulate_spike(&scn.spike);
    let imu = synthesize_imu(&traj, scn.imu_rate, &scn.noise, 0.0, rng.random())?;
    let lidar_cfg = LidarConfig {
        phase: rng.random_range(0.0..1.0 / scn.lidar.scan_rate),
        ..scn.lidar
    };
    let lidar = render_lidar(&traj, &scn.walk.room, &lidar_cfg, &scn.noise, rng.random())?;
    Ok((imu, lidar))
}

/// Velocity traces of one spike recording: IMU speed integrated from the
/// start of the recording, LiDAR centroid speed.
pub fn spike_traces(imu: &ImuRun, lidar: &LidarRun, scn: &Scenario) -> Result<(VelocityTrace, VelocityTrace)> {
    let t0 = imu.samples.first().map_or(0.0, |s| s.t);
    let t1 = imu.samples.last().map_or(0.0, |s| s.t);
    let vi = imu_velocity(imu, t0, t1.min(t0 + crate::sync::MAX_INTEGRATION_WINDOW))?;
    let vl = lidar_velocity(&track(lidar, &scn.track)?)?;
    Ok((vi, vl))
}

pub fn estimate_scenario_delay(scn: &Scenario, method: DelayMethod) -> Result<DelayEstimate> {
    let traces = (0..scn.spike_recordings)
        .map(|i| {
            let (imu, lidar) = simulate_spike_recording(scn, i)?;
            spike_traces(&imu, &lidar, scn)
        })
        .collect::<Result<Vec<_>>>()?;
    average_delay(&traces, method)
}

pub fn window_config(scn: &Scenario) -> WindowConfig {
    WindowConfig {
        rate: scn.imu_rate,
        length_s: scn.window_s,
        stride_s: scn.stride_s,
        label_tolerance: 0.5 / scn.lidar.scan_rate,
    }
}

/// Windows of one run with labels from its LiDAR track after removing
/// `delay`.
pub fn label_windows(
    id: &str,
    imu: &ImuRun,
    centroids: &CentroidTrack,
    delay: f64,
    scn: &Scenario,
) -> Result<Vec<LabeledWindow>> {
    let aligned = crate::sync::shift_track(centroids, delay);
    let clipped = clip_run(imu, scn.clip_margin)?;
    let channels = augment_magnitudes(&clipped);
    let cfg = window_config(scn);
    let starts: Vec<f64> = window_starts(&channels, &cfg)?.into_iter().map(|(_, t)| t).collect();
    let labels: Vec<_> = displacements_at(&aligned, &starts, scn.window_s)
        .into_iter()
        .flatten()
        .collect();
    window_examples(id, &channels, &labels, &cfg)
}

/// Everything produced for one walking run once its scans are discarded.
#[derive(Debug, Clone)]
pub struct ProcessedRun {
    pub id: String,
    pub truth: Trajectory,
    pub imu: ImuRun,
    /// On the IMU clock.
    pub track: CentroidTrack,
    pub n_windows: usize,
}

pub fn process_recording(
    rec: WalkRecording,
    delay: f64,
    scn: &Scenario,
) -> Result<(ProcessedRun, Vec<LabeledWindow>)> {
    let centroids = track(&rec.lidar, &scn.track)?;
    drop(rec.lidar);
    let windows = label_windows(&rec.id, &rec.imu, &centroids, delay, scn)?;
    Ok((
        ProcessedRun {
            id: rec.id,
            truth: rec.truth,
            imu: rec.imu,
            track: crate::sync::shift_track(&centroids, delay),
            n_windows: windows.len(),
        },
        windows,
    ))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub delay: DelayEstimate,
    pub runs: Vec<ProcessedRun>,
    pub split: DatasetSplit,
    pub normalizer: Normalizer,
}

impl Dataset {
    pub fn test_ids(&self) -> Vec<String> {
        self.split
            .test
            .iter()
            .map(|w| w.run_id.clone())
            .fold(Vec::new(), |mut v, id| {
                if !v.contains(&id) {
                    v.push(id);
                }
                v
            })
    }
}

/// Full pipeline. The last `scn.test_runs` walking runs become the test set.
pub fn build_dataset(scn: &Scenario) -> Result<Dataset> {
    scn.validate()?;
    let delay = if scn.spike_recordings > 0 {
        estimate_scenario_delay(scn, DelayMethod::Peak)?
    } else {
        DelayEstimate {
            per_recording: Vec::new(),
            mean: 0.0,
            std: 0.0,
        }
    };
    log::info!("estimated LiDAR delay {:.3} ms", delay.mean * 1e3);
    let mut runs = Vec::with_capacity(scn.runs);
    let mut windows = Vec::new();
    for i in 0..scn.runs {
        let (processed, w) = process_recording(simulate_recording(scn, i)?, delay.mean, scn)?;
        log::info!("{}: {} windows", processed.id, w.len());
        windows.extend(w);
        runs.push(processed);
    }
    let test_ids: Vec<String> = (scn.runs - scn.test_runs..scn.runs).map(run_id).collect();
    let mut split = split_dataset(windows, scn.split_ratio, scn.seed, &test_ids)?;
    if split.test.is_empty() && scn.test_runs > 0 {
        return Err(Error::EmptySplit("held-out runs produced no windows".into()));
    }
    let normalizer = split.normalize();
    Ok(Dataset {
        delay,
        runs,
        split,
        normalizer,
    })
}

/// Ground-truth walker displacement over each window, for checking labels.
pub fn true_displacement(truth: &Trajectory, t_start: f64, period: f64) -> Option<Point2> {
    Some(truth.position_at(t_start + period)? - truth.position_at(t_start)?)
}
