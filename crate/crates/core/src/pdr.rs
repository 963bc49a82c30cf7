//! Classical pedestrian dead reckoning: threshold step detection, per-step
//! double integration with a zero-velocity reset, and gyro heading.

use crate::datamodel::{ImuRun, ImuSample, Trajectory};
use crate::error::{Error, Result};
use crate::geom::{norm3, wrap_angle, Point2};

pub const DEFAULT_THRESHOLD: f64 = 2.0;
pub const DEFAULT_MIN_GAP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepSegment {
    pub i_start: usize,
    /// Inclusive.
    pub i_end: usize,
}

impl StepSegment {
    pub fn duration(&self, rate: f64) -> f64 {
        (self.i_end - self.i_start) as f64 / rate
    }
}

/// Maps a sample to world-frame horizontal acceleration.
pub type TiltCompensation = fn(&ImuSample) -> Point2;

/// The synthetic accelerometer is already world-frame and gravity-free.
pub fn identity_tilt(s: &ImuSample) -> Point2 {
    Point2::new(s.accel[0], s.accel[1])
}

#[derive(Debug, Clone, Copy)]
pub struct PdrConfig {
    /// Accel magnitude threshold, m/s².
    pub threshold: f64,
    /// Seconds.
    pub min_gap: f64,
    /// Initial heading, radians.
    pub theta0: f64,
    pub start: Point2,
    pub tilt: TiltCompensation,
}

impl Default for PdrConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            min_gap: DEFAULT_MIN_GAP,
            theta0: 0.0,
            start: Point2::ZERO,
            tilt: identity_tilt,
        }
    }
}

/// A step runs from an upward threshold crossing to the next downward one;
/// a step starting less than `min_gap` seconds after the previous one ended
/// is merged into it.
pub fn detect_steps(accel_mag: &[f64], rate: f64, threshold: f64, min_gap: f64) -> Result<Vec<StepSegment>> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("step threshold {threshold} must be positive")));
    }
    let gap = min_gap * rate;
    let mut steps: Vec<StepSegment> = Vec::new();
    let mut open: Option<usize> = None;
    let close = |steps: &mut Vec<StepSegment>, start: usize, end: usize| match steps.last_mut() {
        Some(prev) if ((start - prev.i_end) as f64) < gap => prev.i_end = end,
        _ => steps.push(StepSegment { i_start: start, i_end: end }),
    };
    for (i, &a) in accel_mag.iter().enumerate() {
        match open {
            None if a > threshold => open = Some(i),
            Some(start) if a <= threshold => {
                close(&mut steps, start, i);
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        let end = accel_mag.len() - 1;
        if end > start {
            close(&mut steps, start, end);
        }
    }
    Ok(steps)
}

/// Length of the horizontal displacement over the segment, from rest at its
/// first sample.
pub fn step_displacement(run: &ImuRun, seg: &StepSegment, tilt: TiltCompensation) -> Result<f64> {
    if seg.i_start >= seg.i_end || seg.i_end >= run.len() {
        return Err(Error::Range(format!(
            "step {}..={} outside run of {} samples",
            seg.i_start,
            seg.i_end,
            run.len()
        )));
    }
    let mut v = Point2::ZERO;
    let mut p = Point2::ZERO;
    let s = &run.samples;
    let mut a_prev = tilt(&s[seg.i_start]);
    for i in seg.i_start + 1..=seg.i_end {
        let dt = s[i].t - s[i - 1].t;
        let a = tilt(&s[i]);
        let v_next = v + (a_prev + a) * (0.5 * dt);
        p += (v + v_next) * (0.5 * dt);
        v = v_next;
        a_prev = a;
    }
    Ok(p.norm())
}

/// Trapezoidal integral of yaw rate, wrapped to (−π, π].
pub fn heading_track(gyro_z: &[f64], rate: f64, theta0: f64) -> Vec<f64> {
    let dt = 1.0 / rate;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(gyro_z.len());
    for (i, &w) in gyro_z.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * (gyro_z[i - 1] + w) * dt;
        }
        out.push(wrap_angle(theta0 + acc));
    }
    out
}

/// Start point followed by one point per detected step.
pub fn pdr_reconstruct(run: &ImuRun, cfg: &PdrConfig) -> Result<Trajectory> {
    let t0 = run.samples.first().map_or(0.0, |s| s.t);
    let mut traj = Trajectory::from_parts(&[t0], &[cfg.start]);
    if run.len() < 2 {
        return Ok(traj);
    }
    let mag: Vec<f64> = run.samples.iter().map(|s| norm3(s.accel)).collect();
    let steps = detect_steps(&mag, run.rate, cfg.threshold, cfg.min_gap)?;
    let gz: Vec<f64> = run.samples.iter().map(|s| s.gyro[2]).collect();
    let heading = heading_track(&gz, run.rate, cfg.theta0);
    let mut pos = cfg.start;
    for seg in &steps {
        let d = step_displacement(run, seg, cfg.tilt)?;
        let psi = heading[(seg.i_start + seg.i_end) / 2];
        pos += Point2::from_angle(psi) * d;
        traj.points.push(crate::datamodel::TrajPoint {
            t: run.samples[seg.i_end].t,
            pos,
        });
    }
    Ok(traj)
}
