use std::f64::consts::PI;

use crate::datamodel::{TrajPoint, Trajectory};
use crate::geom::Point2;

/// A short hand-held recording: the sensor rests, is swept once across the
/// scanner's view with a raised-cosine speed bump, and rests again.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeConfig {
    pub duration: f64,
    /// Instant of peak speed, seconds from the start.
    pub spike_time: f64,
    pub peak_speed: f64,
    /// Half the bump's support, seconds.
    pub half_width: f64,
    pub start: Point2,
    /// Direction of the sweep, radians.
    pub direction: f64,
    pub sample_rate: f64,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        Self {
            duration: 3.0,
            spike_time: 1.5,
            peak_speed: 3.0,
            half_width: 0.08,
            start: Point2::new(-0.12, 1.5),
            direction: 0.0,
            sample_rate: 1000.0,
        }
    }
}

impl SpikeConfig {
    pub fn speed_at(&self, t: f64) -> f64 {
        let u = t - self.spike_time;
        if u.abs() >= self.half_width {
            0.0
        } else {
            0.5 * self.peak_speed * (1.0 + (PI * u / self.half_width).cos())
        }
    }

    fn distance_at(&self, t: f64) -> f64 {
        let w = self.half_width;
        let u = (t - self.spike_time).clamp(-w, w);
        0.5 * self.peak_speed * (u + w + w / PI * (PI * u / w).sin())
    }
}

pub fn simulate_spike(cfg: &SpikeConfig) -> Trajectory {
    let n = (cfg.duration * cfg.sample_rate).round() as usize + 1;
    let dir = Point2::from_angle(cfg.direction);
    Trajectory::new(
        (0..n)
            .map(|i| {
                let t = i as f64 / cfg.sample_rate;
                TrajPoint {
                    t,
                    pos: cfg.start + dir * cfg.distance_at(t),
                }
            })
            .collect(),
    )
}
