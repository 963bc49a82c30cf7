//! LiDAR-to-IMU clock delay estimation.
//!
//! Short recordings where the sensor is swept once through the scanner's
//! view give one speed spike in each stream: the IMU speed comes from a
//! single integration of the accelerometer (drift is negligible over a few
//! seconds), the LiDAR speed from differencing the subject centroid. The
//! delay is the time between the two spikes. Positive delay means LiDAR
//! timestamps run late.

use crate::datamodel::{ImuRun, LidarRun, LidarScan};
use crate::error::{Error, Result};
use crate::lidartrack::CentroidTrack;

/// Longest window `imu_velocity` will integrate, seconds.
pub const MAX_INTEGRATION_WINDOW: f64 = 5.0;
/// A spike must reach this multiple of the trace's median speed.
pub const SPIKE_DOMINANCE: f64 = 5.0;
/// Lag search range for the cross-correlation estimator, seconds.
pub const XCORR_MAX_LAG: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VelocityTrace {
    pub t: Vec<f64>,
    /// Scalar speed, m/s.
    pub v: Vec<f64>,
}

impl VelocityTrace {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(t.len(), v.len());
        Self { t, v }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            t: self.t.iter().map(|t| t + delta).collect(),
            v: self.v.clone(),
        }
    }

    fn value_at(&self, t: f64) -> f64 {
        if t <= self.t[0] {
            return self.v[0];
        }
        let n = self.t.len();
        if t >= self.t[n - 1] {
            return self.v[n - 1];
        }
        let i = self.t.partition_point(|&s| s <= t);
        let w = (t - self.t[i - 1]) / (self.t[i] - self.t[i - 1]);
        self.v[i - 1] + w * (self.v[i] - self.v[i - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelayMethod {
    /// Spike-to-spike with quadratic peak refinement.
    #[default]
    Peak,
    /// Full cross-correlation; slower, more tolerant of noisy traces.
    CrossCorrelation,
}

impl std::str::FromStr for DelayMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak" => Ok(DelayMethod::Peak),
            "xcorr" => Ok(DelayMethod::CrossCorrelation),
            other => Err(Error::Usage(format!("unknown delay method {other:?} (expected peak or xcorr)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayEstimate {
    pub per_recording: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Speed from integrating accel once from rest at `t0`.
pub fn imu_velocity(run: &ImuRun, t0: f64, t1: f64) -> Result<VelocityTrace> {
    if !(t1 > t0) || t1 - t0 > MAX_INTEGRATION_WINDOW + 1e-12 {
        return Err(Error::Range(format!(
            "integration window [{t0}, {t1}] must be non-empty and at most {MAX_INTEGRATION_WINDOW} s"
        )));
    }
    let (first, last) = match (run.samples.first(), run.samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::Range("empty IMU run".into())),
    };
    if t0 < first - 1e-12 || t1 > last + 1e-12 {
        return Err(Error::Range(format!(
            "window [{t0}, {t1}] outside run [{first}, {last}]"
        )));
    }
    let samples: Vec<_> = run
        .samples
        .iter()
        .filter(|s| s.t >= t0 - 1e-12 && s.t <= t1 + 1e-12)
        .collect();
    let mut vel = [0.0f64; 3];
    let mut t = Vec::with_capacity(samples.len());
    let mut v = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            let prev = samples[i - 1];
            let dt = s.t - prev.t;
            for (k, slot) in vel.iter_mut().enumerate() {
                *slot += 0.5 * (prev.accel[k] + s.accel[k]) * dt;
            }
        }
        t.push(s.t);
        v.push(crate::geom::norm3(vel));
    }
    Ok(VelocityTrace { t, v })
}

/// Centroid speed: central differences inside, one-sided at the ends.
pub fn lidar_velocity(track: &CentroidTrack) -> Result<VelocityTrace> {
    let p = &track.points;
    let n = p.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 centroids, have {n}"
        )));
    }
    let speed = |a: usize, b: usize| -> f64 { (p[b].pos - p[a].pos).norm() / (p[b].t - p[a].t) };
    let v = (0..n)
        .map(|i| match i {
            0 => speed(0, 1),
            i if i == n - 1 => speed(n - 2, n - 1),
            i => speed(i - 1, i + 1),
        })
        .collect();
    Ok(VelocityTrace {
        t: p.iter().map(|q| q.t).collect(),
        v,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn check_spike(trace: &VelocityTrace, name: &str) -> Result<usize> {
    if trace.len() < 3 {
        return Err(Error::NoSpike(format!("{name} trace has fewer than 3 samples")));
    }
    let (imax, vmax) = trace
        .v
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let med = median(&trace.v);
    if !(vmax > 0.0) || vmax < SPIKE_DOMINANCE * med {
        return Err(Error::NoSpike(format!(
            "{name} peak {vmax:.4} below {SPIKE_DOMINANCE}x median {med:.4}"
        )));
    }
    Ok(imax)
}

/// Vertex of the parabola through three points.
fn parabola_vertex(t: [f64; 3], v: [f64; 3]) -> Option<f64> {
    let d1 = (v[1] - v[0]) / (t[1] - t[0]);
    let d2 = (v[2] - v[1]) / (t[2] - t[1]);
    let curv = (d2 - d1) / (t[2] - t[0]);
    if curv >= 0.0 {
        return None;
    }
    // v(t) = v0 + d1 (t - t0) + curv (t - t0)(t - t1)
    Some(0.5 * (t[0] + t[1]) - d1 / (2.0 * curv))
}

/// Time of the trace's dominant peak, refined to sub-sample resolution.
pub fn peak_time(trace: &VelocityTrace) -> Result<f64> {
    let i = check_spike(trace, "trace")?;
    if i == 0 || i == trace.len() - 1 {
        return Ok(trace.t[i]);
    }
    let t = [trace.t[i - 1], trace.t[i], trace.t[i + 1]];
    let v = [trace.v[i - 1], trace.v[i], trace.v[i + 1]];
    Ok(parabola_vertex(t, v)
        .map(|p| p.clamp(t[0], t[2]))
        .unwrap_or(t[1]))
}

/// LiDAR spike time minus IMU spike time.
pub fn estimate_delay(vi: &VelocityTrace, vl: &VelocityTrace) -> Result<f64> {
    estimate_delay_with(vi, vl, DelayMethod::Peak)
}

pub fn estimate_delay_with(
    vi: &VelocityTrace,
    vl: &VelocityTrace,
    method: DelayMethod,
) -> Result<f64> {
    check_spike(vi, "IMU")?;
    check_spike(vl, "LiDAR")?;
    match method {
        DelayMethod::Peak => Ok(peak_time(vl)? - peak_time(vi)?),
        DelayMethod::CrossCorrelation => xcorr_delay(vi, vl),
    }
}

fn xcorr_delay(vi: &VelocityTrace, vl: &VelocityTrace) -> Result<f64> {
    let dts: Vec<f64> = vi.t.windows(2).map(|w| w[1] - w[0]).collect();
    let dt = median(&dts);
    let max_lag = (XCORR_MAX_LAG / dt).ceil() as i64;
    let mean_i = vi.v.iter().sum::<f64>() / vi.len() as f64;
    let mean_l = vl.v.iter().sum::<f64>() / vl.len() as f64;
    let (lo, hi) = (vl.t[0], vl.t[vl.len() - 1]);
    let score = |k: i64| -> f64 {
        let lag = k as f64 * dt;
        vi.t.iter()
            .zip(&vi.v)
            .filter(|(t, _)| **t + lag >= lo && **t + lag <= hi)
            .map(|(t, v)| (v - mean_i) * (vl.value_at(t + lag) - mean_l))
            .sum()
    };
    let scores: Vec<(i64, f64)> = (-max_lag..=max_lag).map(|k| (k, score(k))).collect();
    let best = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::NoSpike("empty correlation".into()))?;
    let lag = scores[best].0 as f64 * dt;
    if best == 0 || best == scores.len() - 1 {
        return Ok(lag);
    }
    let (a, b, c) = (scores[best - 1].1, scores[best].1, scores[best + 1].1);
    let denom = a - 2.0 * b + c;
    let frac = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok(lag + frac * dt)
}

/// Mean and spread of the per-recording delays. Recordings without a
/// usable spike are skipped.
pub fn average_delay(
    recordings: &[(VelocityTrace, VelocityTrace)],
    method: DelayMethod,
) -> Result<DelayEstimate> {
    let per_recording: Vec<f64> = recordings
        .iter()
        .filter_map(|(vi, vl)| match estimate_delay_with(vi, vl, method) {
            Ok(d) => Some(d),
            Err(e) => {
                log::warn!("skipping recording: {e}");
                None
            }
        })
        .collect();
    if per_recording.is_empty() {
        return Err(Error::NoSpike(format!(
            "none of {} recordings has a usable spike",
            recordings.len()
        )));
    }
    let n = per_recording.len() as f64;
    let mean = per_recording.iter().sum::<f64>() / n;
    let var = per_recording.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(DelayEstimate {
        per_recording,
        mean,
        std: var.sqrt(),
    })
}

/// Move every LiDAR timestamp onto the IMU clock.
pub fn apply_delay(run: &LidarRun, delay: f64) -> LidarRun {
    let shift = |s: &LidarScan| LidarScan {
        t: s.t - delay,
        points: s.points.clone(),
    };
    LidarRun {
        reference: shift(&run.reference),
        scans: run.scans.iter().map(shift).collect(),
    }
}

/// The same track with `delay` removed from every timestamp.
pub fn shift_track(track: &CentroidTrack, delay: f64) -> CentroidTrack {
    CentroidTrack {
        points: track
            .points
            .iter()
            .map(|p| crate::datamodel::TrajPoint {
                t: p.t - delay,
                pos: p.pos,
            })
            .collect(),
        dropped: track.dropped.iter().map(|t| t - delay).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{ImuSample, TrajPoint};
    use crate::geom::Point2;
    use proptest::prelude::*;

    fn run_with_accel(f: impl Fn(f64) -> [f64; 3], secs: f64) -> ImuRun {
        let n = (secs * 250.0) as usize + 1;
        ImuRun::new(
            250.0,
            (0..n)
                .map(|i| {
                    let t = i as f64 / 250.0;
                    ImuSample {
                        t,
                        accel: f(t),
                        gyro: [0.0; 3],
                        mag: [0.0; 3],
                    }
                })
                .collect(),
        )
    }

    fn bump(dt: f64, n: usize, center: f64) -> VelocityTrace {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let v = t
            .iter()
            .map(|&s| 0.01 + 2.0 * (-(s - center).powi(2) / 0.02).exp())
            .collect();
        VelocityTrace { t, v }
    }

    #[test]
    fn zero_accel_gives_zero_speed() {
        let run = run_with_accel(|_| [0.0; 3], 3.0);
        let tr = imu_velocity(&run, 0.5, 2.5).unwrap();
        assert!(tr.v.iter().all(|v| *v == 0.0));
        assert_eq!(tr.t.len(), 501);
    }

    #[test]
    fn constant_accel_is_linear_speed() {
        let run = run_with_accel(|_| [0.6, -0.8, 0.0], 3.0);
        let tr = imu_velocity(&run, 1.0, 3.0).unwrap();
        for (t, v) in tr.t.iter().zip(&tr.v) {
            assert!((v - (t - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn reversed_accel_has_same_speed() {
        let f = |t: f64| [t.sin(), (3.0 * t).cos(), 0.2];
        let a = imu_velocity(&run_with_accel(f, 3.0), 0.0, 3.0).unwrap();
        let b = imu_velocity(
            &run_with_accel(|t| f(t).map(|x| -x), 3.0),
            0.0,
            3.0,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_checks() {
        let run = run_with_accel(|_| [0.0; 3], 10.0);
        assert!(matches!(imu_velocity(&run, 2.0, 8.0), Err(Error::Range(_))));
        assert!(matches!(imu_velocity(&run, 8.0, 11.0), Err(Error::Range(_))));
    }

    #[test]
    fn lidar_speed_examples() {
        let still = CentroidTrack::from_points(
            (0..10)
                .map(|i| TrajPoint {
                    t: i as f64 * 0.025,
                    pos: Point2::new(1.0, 2.0),
                })
                .collect(),
        );
        assert!(lidar_velocity(&still).unwrap().v.iter().all(|v| *v == 0.0));
        let moving = CentroidTrack::from_points(
            (0..10)
                .map(|i| {
                    let t = i as f64 * 0.025;
                    TrajPoint {
                        t,
                        pos: Point2::new(0.6 * t, 0.8 * t),
                    }
                })
                .collect(),
        );
        for v in lidar_velocity(&moving).unwrap().v {
            assert!((v - 1.0).abs() < 1e-9);
        }
        let one = CentroidTrack::from_points(vec![TrajPoint {
            t: 0.0,
            pos: Point2::ZERO,
        }]);
        assert!(matches!(lidar_velocity(&one), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn identical_and_shifted_traces() {
        let vi = bump(0.004, 700, 1.3);
        assert_eq!(estimate_delay(&vi, &vi).unwrap(), 0.0);
        let k = 7.0;
        let vl = vi.shifted(k * 0.004);
        assert!((estimate_delay(&vi, &vl).unwrap() - k * 0.004).abs() < 1e-12);
    }

    #[test]
    fn flat_trace_has_no_spike() {
        let flat = VelocityTrace::new(vec![0.0, 0.1, 0.2, 0.3], vec![1.0, 1.1, 1.0, 1.05]);
        let vi = bump(0.004, 700, 1.3);
        assert!(matches!(estimate_delay(&vi, &flat), Err(Error::NoSpike(_))));
        assert!(matches!(
            average_delay(&[(flat.clone(), flat)], DelayMethod::Peak),
            Err(Error::NoSpike(_))
        ));
    }

    #[test]
    fn quadratic_refinement_is_subsample() {
        let vi = bump(0.004, 700, 1.3011);
        let t = peak_time(&vi).unwrap();
        assert!((t - 1.3011).abs() < 2e-4, "{t}");
    }

    #[test]
    fn cross_correlation_matches_peak() {
        let vi = bump(0.004, 700, 1.3);
        let vl = bump(0.025, 112, 1.3039);
        let a = estimate_delay_with(&vi, &vl, DelayMethod::Peak).unwrap();
        let b = estimate_delay_with(&vi, &vl, DelayMethod::CrossCorrelation).unwrap();
        assert!((a - 0.0039).abs() < 1e-3, "{a}");
        assert!((b - 0.0039).abs() < 1e-3, "{b}");
    }

    #[test]
    fn averaging_arithmetic() {
        let vi = bump(0.004, 700, 1.3);
        let recs = vec![(vi.clone(), vi.shifted(0.0038)), (vi.clone(), vi.shifted(0.0040))];
        let est = average_delay(&recs, DelayMethod::Peak).unwrap();
        assert!((est.mean - 0.0039).abs() < 1e-12);
        assert!((est.std - 0.0001).abs() < 1e-12);
        let single = average_delay(&recs[..1], DelayMethod::Peak).unwrap();
        assert!((single.mean - 0.0038).abs() < 1e-12);
        assert_eq!(single.std, 0.0);
    }

    #[test]
    fn apply_delay_preserves_points() {
        let run = LidarRun {
            reference: LidarScan {
                t: -1.0,
                points: vec![Point2::new(1.0, 1.0)],
            },
            scans: (0..5)
                .map(|k| LidarScan {
                    t: k as f64 * 0.025,
                    points: vec![Point2::new(k as f64, 2.0)],
                })
                .collect(),
        };
        let moved = apply_delay(&run, 0.00389);
        for (a, b) in run.scans.iter().zip(&moved.scans) {
            assert_eq!(a.points, b.points);
            assert!((a.t - b.t - 0.00389).abs() < 1e-15);
        }
        assert!(moved.scans.windows(2).all(|w| w[1].t > w[0].t));
    }

    proptest! {
        #[test]
        fn shift_equivariance(delta in -0.2f64..0.2, center in 1.0f64..2.0) {
            let vi = bump(0.004, 800, center);
            let vl = bump(0.025, 128, center + 0.01);
            let base = estimate_delay(&vi, &vl).unwrap();
            let shifted = estimate_delay(&vi, &vl.shifted(delta)).unwrap();
            prop_assert!((shifted - base - delta).abs() < 1e-4);
        }
    }
}
