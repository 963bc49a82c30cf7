//! Foot-mounted IMU synthesis.
//!
//! The foot follows the walker's path under a time warp: during the swing
//! part of every gait cycle it moves with a squared raised-cosine speed profile and
//! during stance it stands still, so on average it keeps pace with the body.
//! With walker position `P(s)` and warp `s = tau(t)` the foot is at
//! `P(tau(t))`, and acceleration, heading and heading rate follow from the
//! spline's exact derivatives.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::spline::{Kinematics, Spline2};
use crate::datamodel::{ImuRun, ImuSample, Trajectory};
use crate::error::{Error, Result};
use crate::geom::Point2;

/// Fraction of each gait cycle the foot spends in swing.
pub const SWING_FRACTION: f64 = 0.4;
/// Horizontal and vertical components of the world magnetic field, µT.
pub const MAG_HORIZONTAL: f64 = 22.0;
pub const MAG_VERTICAL: f64 = -42.0;

const MIN_SPEED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNoise {
    pub accel_std: f64,
    pub gyro_std: f64,
    pub mag_std: f64,
    /// Range noise, meters.
    pub lidar_std: f64,
    /// LiDAR clock minus IMU clock, seconds.
    pub clock_offset: f64,
    /// Constant bias added to world-frame accel x, m/s².
    pub accel_bias_x: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            accel_std: 0.05,
            gyro_std: 0.005,
            mag_std: 0.2,
            lidar_std: 0.03,
            clock_offset: 0.0,
            accel_bias_x: 0.0,
        }
    }
}

impl SensorNoise {
    pub fn none() -> Self {
        Self {
            accel_std: 0.0,
            gyro_std: 0.0,
            mag_std: 0.0,
            lidar_std: 0.0,
            clock_offset: 0.0,
            accel_bias_x: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stds = [self.accel_std, self.gyro_std, self.mag_std, self.lidar_std];
        if stds.iter().all(|s| *s >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config("noise standard deviations must be non-negative".into()))
        }
    }
}

/// Ground-truth foot motion derived from a walker trajectory.
#[derive(Debug, Clone)]
pub struct GaitModel {
    spline: Spline2,
    cadence: f64,
    t0: f64,
    fallback_heading: f64,
}

impl GaitModel {
    /// `cadence <= 0` disables the gait warp: the sensor rides the
    /// trajectory directly (hand-held spike recordings).
    pub fn new(traj: &Trajectory, cadence: f64) -> Result<Self> {
        if traj.is_empty() {
            return Err(Error::TooShort("empty trajectory".into()));
        }
        let t: Vec<f64> = traj.points.iter().map(|p| p.t).collect();
        let p: Vec<Point2> = traj.points.iter().map(|p| p.pos).collect();
        let fallback_heading = traj
            .points
            .windows(2)
            .map(|w| w[1].pos - w[0].pos)
            .find(|d| d.norm() > MIN_SPEED)
            .map(|d| d.y.atan2(d.x))
            .unwrap_or(0.0);
        Ok(Self {
            spline: Spline2::fit(&t, &p),
            cadence,
            t0: t[0],
            fallback_heading,
        })
    }

    pub fn walker(&self, t: f64) -> Kinematics {
        self.spline.eval(t)
    }

    /// Warped walker time and its first two derivatives.
    pub fn warp(&self, t: f64) -> (f64, f64, f64) {
        if self.cadence <= 0.0 {
            return (t, 1.0, 0.0);
        }
        let period = 1.0 / self.cadence;
        let s = SWING_FRACTION;
        let cycles = (t - self.t0) / period;
        let k = cycles.floor();
        let phase = cycles - k;
        let base = self.t0 + k * period;
        if phase < s {
            // d1 = (1 - cos)^2 / (1.5 s): zero with zero slope at both swing
            // ends, so acceleration is continuously differentiable.
            let arg = TAU * phase / s;
            let (sn, cs) = arg.sin_cos();
            let integral = 1.5 * phase - s / PI * sn + s / (8.0 * PI) * (2.0 * arg).sin();
            let tau = base + period * integral / (1.5 * s);
            let d1 = (1.0 - cs).powi(2) / (1.5 * s);
            let d2 = 2.0 * (1.0 - cs) * sn * TAU / (1.5 * s * s * period);
            (tau, d1, d2)
        } else {
            (base + period, 0.0, 0.0)
        }
    }

    pub fn foot(&self, t: f64) -> Kinematics {
        let (tau, d1, d2) = self.warp(t);
        let k = self.spline.eval(tau);
        Kinematics {
            pos: k.pos,
            vel: k.vel * d1,
            acc: k.acc * (d1 * d1) + k.vel * d2,
        }
    }

    /// Sensor heading (x axis along the direction of travel), radians.
    pub fn heading(&self, t: f64) -> f64 {
        let (tau, _, _) = self.warp(t);
        let v = self.spline.eval(tau).vel;
        if v.norm() > MIN_SPEED {
            v.y.atan2(v.x)
        } else {
            self.fallback_heading
        }
    }

    pub fn heading_rate(&self, t: f64) -> f64 {
        let (tau, d1, _) = self.warp(t);
        let k = self.spline.eval(tau);
        let v2 = k.vel.norm_sq();
        if v2 > MIN_SPEED * MIN_SPEED {
            k.vel.cross(k.acc) / v2 * d1
        } else {
            0.0
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        std * rng.sample::<f64, _>(StandardNormal)
    }
}

/// World-frame, gravity-free accelerometer; yaw-rate gyro; magnetometer
/// reading the fixed world field in the sensor frame.
pub fn synthesize_imu(
    traj: &Trajectory,
    rate: f64,
    noise: &SensorNoise,
    cadence: f64,
    seed: u64,
) -> Result<ImuRun> {
    noise.validate()?;
    if !(rate > 0.0) {
        return Err(Error::Config("IMU rate must be positive".into()));
    }
    if traj.len() < 2 {
        return Err(Error::TooShort("trajectory needs at least two points".into()));
    }
    if cadence > 0.0 && traj.span() < 2.0 / cadence {
        return Err(Error::TooShort(format!(
            "trajectory spans {:.3} s, need {:.3} s for two gait cycles",
            traj.span(),
            2.0 / cadence
        )));
    }
    let gait = GaitModel::new(traj, cadence)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = traj.points[0].t;
    let n = (traj.span() * rate + 1e-9).floor() as usize + 1;
    let samples = (0..n)
        .map(|i| {
            let t = t0 + i as f64 / rate;
            let foot = gait.foot(t);
            let psi = gait.heading(t);
            let accel = [
                foot.acc.x + noise.accel_bias_x + gaussian(&mut rng, noise.accel_std),
                foot.acc.y + gaussian(&mut rng, noise.accel_std),
                gaussian(&mut rng, noise.accel_std),
            ];
            let gyro = [
                gaussian(&mut rng, noise.gyro_std),
                gaussian(&mut rng, noise.gyro_std),
                gait.heading_rate(t) + gaussian(&mut rng, noise.gyro_std),
            ];
            let mag = [
                MAG_HORIZONTAL * psi.cos() + gaussian(&mut rng, noise.mag_std),
                -MAG_HORIZONTAL * psi.sin() + gaussian(&mut rng, noise.mag_std),
                MAG_VERTICAL + gaussian(&mut rng, noise.mag_std),
            ];
            ImuSample {
                t,
                accel,
                gyro,
                mag,
            }
        })
        .collect();
    Ok(ImuRun::new(rate, samples))
}
