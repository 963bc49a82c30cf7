use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datamodel::{TrajPoint, Trajectory, LIDAR_MAX_RANGE};
use crate::error::{Error, Result};
use crate::geom::Point2;

/// Distance the walker keeps from every wall.
pub const WALL_MARGIN: f64 = 1.0;
/// Minimum distance in front of the scanner line (y = 0) the walker keeps.
pub const LIDAR_CLEARANCE: f64 = 1.0;
const STEER_RATE: f64 = 1.5;
const LOOKAHEAD: f64 = 2.0;

/// Axis-aligned rectangular room. The LiDAR sits at the world origin
/// looking along +y, so the room must contain the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Room {
    pub center: Point2,
    pub half_extents: Point2,
}

impl Default for Room {
    fn default() -> Self {
        Self {
            center: Point2::new(0.0, 5.5),
            half_extents: Point2::new(8.0, 6.0),
        }
    }
}

impl Room {
    pub fn min(&self) -> Point2 {
        self.center - self.half_extents
    }

    pub fn max(&self) -> Point2 {
        self.center + self.half_extents
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (lo, hi) = (self.min(), self.max());
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
    }

    /// Region the walker is confined to.
    pub fn walk_bounds(&self) -> Room {
        let lo = self.min() + Point2::new(WALL_MARGIN, WALL_MARGIN);
        let lo = Point2::new(lo.x, lo.y.max(LIDAR_CLEARANCE));
        let hi = self.max() - Point2::new(WALL_MARGIN, WALL_MARGIN);
        Room {
            center: (lo + hi) / 2.0,
            half_extents: (hi - lo) / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.min(), self.max());
        if !(self.half_extents.x > 0.0 && self.half_extents.y > 0.0) {
            return Err(Error::Config("room half extents must be positive".into()));
        }
        if !self.contains(Point2::ZERO) {
            return Err(Error::Config("room must contain the LiDAR at the origin".into()));
        }
        let far = [lo, hi, Point2::new(lo.x, hi.y), Point2::new(hi.x, lo.y)]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if far > LIDAR_MAX_RANGE {
            return Err(Error::Config(format!(
                "room corner at {far:.1} m exceeds LiDAR range {LIDAR_MAX_RANGE} m"
            )));
        }
        let b = self.walk_bounds();
        if !(b.half_extents.x > 0.0 && b.half_extents.y > 0.0) {
            return Err(Error::Config("room too small to walk in".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    /// Seconds.
    pub duration: f64,
    /// m/s. Zero means the walker stands still.
    pub mean_speed: f64,
    /// Standard deviation of the per-stride speed target, m/s.
    pub speed_jitter: f64,
    /// Standard deviation of the per-stride turn rate, rad/s.
    pub turn_rate_std: f64,
    /// Gait cycles per second of the instrumented foot.
    pub step_cadence: f64,
    pub room: Room,
    /// Defaults to the center of the walkable region.
    pub start: Option<Point2>,
    pub initial_heading: f64,
    /// Output sampling rate, Hz.
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            duration: 60.0,
            mean_speed: 1.2,
            speed_jitter: 0.1,
            turn_rate_std: 0.4,
            step_cadence: 1.8,
            room: Room::default(),
            start: None,
            initial_heading: std::f64::consts::FRAC_PI_2,
            sample_rate: 200.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if !(self.mean_speed >= 0.0 && self.speed_jitter >= 0.0 && self.turn_rate_std >= 0.0) {
            return Err(Error::Config("speeds and standard deviations must be non-negative".into()));
        }
        if !(self.sample_rate >= 100.0) {
            return Err(Error::Config("trajectory sample rate must be at least 100 Hz".into()));
        }
        self.room.validate()?;
        if let Some(s) = self.start {
            if !self.room.walk_bounds().contains(s) {
                return Err(Error::Config(format!("start {s:?} outside walkable region")));
            }
        }
        Ok(())
    }

    pub fn max_speed(&self) -> f64 {
        self.mean_speed + 4.0 * self.speed_jitter
    }
}

/// A simulated walk together with the generator's own profiles.
#[derive(Debug, Clone)]
pub struct WalkProfile {
    pub trajectory: Trajectory,
    /// Speed used over each interval `i -> i+1`.
    pub speed: Vec<f64>,
    /// Heading at each trajectory point, radians (unwrapped).
    pub heading: Vec<f64>,
}

pub fn simulate_walk(config: &WalkConfig) -> Result<Trajectory> {
    simulate_walk_profile(config).map(|p| p.trajectory)
}

pub fn simulate_walk_profile(config: &WalkConfig) -> Result<WalkProfile> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bounds = config.room.walk_bounds();
    let dt = 1.0 / config.sample_rate;
    let n = (config.duration * config.sample_rate).round() as usize + 1;
    let stride_period = if config.step_cadence > 0.0 {
        1.0 / config.step_cadence
    } else {
        0.5
    };
    let stationary = config.mean_speed == 0.0;
    let draw_speed = |rng: &mut ChaCha8Rng| -> f64 {
        if stationary {
            return 0.0;
        }
        let z: f64 = rng.sample(StandardNormal);
        (config.mean_speed + config.speed_jitter * z).clamp(0.0, config.max_speed())
    };

    let mut pos = config.start.unwrap_or(bounds.center);
    let mut heading = config.initial_heading;
    let mut stride = 0usize;
    let mut speed_from = draw_speed(&mut rng);
    let mut speed_to = draw_speed(&mut rng);
    let mut stride_turn = config.turn_rate_std * rng.sample::<f64, _>(StandardNormal);

    let mut points = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n.saturating_sub(1));
    let mut headings = Vec::with_capacity(n);
    points.push(TrajPoint { t: 0.0, pos });
    headings.push(heading);

    for i in 0..n - 1 {
        let t_mid = (i as f64 + 0.5) * dt;
        let k = (t_mid / stride_period).floor() as usize;
        while stride < k {
            stride += 1;
            speed_from = speed_to;
            speed_to = draw_speed(&mut rng);
            stride_turn = config.turn_rate_std * rng.sample::<f64, _>(StandardNormal);
        }
        let frac = t_mid / stride_period - k as f64;
        let speed = speed_from + (speed_to - speed_from) * frac;

        let ahead = pos + Point2::from_angle(heading) * (LOOKAHEAD + speed);
        let omega = if !stationary && !bounds.contains(ahead) {
            let to_center = bounds.center - pos;
            let side = Point2::from_angle(heading).cross(to_center);
            if side >= 0.0 {
                STEER_RATE
            } else {
                -STEER_RATE
            }
        } else {
            stride_turn
        };

        let mid_heading = heading + 0.5 * omega * dt;
        pos += Point2::from_angle(mid_heading) * (speed * dt);
        heading += omega * dt;
        points.push(TrajPoint {
            t: (i + 1) as f64 * dt,
            pos,
        });
        speeds.push(speed);
        headings.push(heading);
    }

    Ok(WalkProfile {
        trajectory: Trajectory::new(points),
        speed: speeds,
        heading: headings,
    })
}
