//! Planar LiDAR ray casting against the room walls and a disk-shaped walker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::imu::SensorNoise;
use super::spline::Spline2;
use super::walk::Room;
use crate::datamodel::{LidarRun, LidarScan, Trajectory, LIDAR_MAX_RANGE};
use crate::error::{Error, Result};
use crate::geom::Point2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarConfig {
    /// Scans per second.
    pub scan_rate: f64,
    pub fov_deg: f64,
    pub resolution_deg: f64,
    /// Radius of the walker's cross-section at scan height, meters.
    pub walker_radius: f64,
    /// Delay of the first scan after the trajectory start, seconds.
    pub phase: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            scan_rate: 40.0,
            fov_deg: 190.0,
            resolution_deg: 0.25,
            walker_radius: 0.2,
            phase: 0.0,
        }
    }
}

impl LidarConfig {
    /// Unit ray directions, sweeping symmetrically about +y.
    pub fn rays(&self) -> Vec<Point2> {
        let n = (self.fov_deg / self.resolution_deg).round() as usize;
        let start = 90.0 - self.fov_deg / 2.0;
        (0..=n)
            .map(|j| Point2::from_angle((start + j as f64 * self.resolution_deg).to_radians()))
            .collect()
    }

    pub fn in_fov(&self, p: Point2) -> bool {
        let bearing = p.y.atan2(p.x).to_degrees();
        let lo = 90.0 - self.fov_deg / 2.0;
        let hi = 90.0 + self.fov_deg / 2.0;
        let b = if bearing < lo { bearing + 360.0 } else { bearing };
        b >= lo && b <= hi
    }
}

/// Distance along a ray from the origin to the room boundary.
fn wall_range(room: &Room, dir: Point2) -> f64 {
    let (lo, hi) = (room.min(), room.max());
    let tx = if dir.x > 0.0 {
        hi.x / dir.x
    } else if dir.x < 0.0 {
        lo.x / dir.x
    } else {
        f64::INFINITY
    };
    let ty = if dir.y > 0.0 {
        hi.y / dir.y
    } else if dir.y < 0.0 {
        lo.y / dir.y
    } else {
        f64::INFINITY
    };
    tx.min(ty)
}

/// First positive intersection of a ray from the origin with a disk.
pub fn ray_disk(dir: Point2, center: Point2, radius: f64) -> Option<f64> {
    let b = dir.dot(center);
    let c = center.norm_sq() - radius * radius;
    if c <= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Cast one scan. `walker` is the disk center, if present.
pub fn cast_scan(
    room: &Room,
    rays: &[Point2],
    walker: Option<(Point2, f64)>,
    lidar_std: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Point2> {
    rays.iter()
        .map(|&d| {
            let mut r = wall_range(room, d);
            if let Some((c, radius)) = walker {
                if let Some(hit) = ray_disk(d, c, radius) {
                    r = r.min(hit);
                }
            }
            if lidar_std > 0.0 {
                r += lidar_std * rng.sample::<f64, _>(StandardNormal);
            }
            d * r.clamp(0.0, LIDAR_MAX_RANGE)
        })
        .collect()
}

/// Reference frame F0 plus one scan per tick while the trajectory lasts.
/// Scan timestamps are true time plus the noise model's clock offset.
pub fn render_lidar(
    traj: &Trajectory,
    room: &Room,
    config: &LidarConfig,
    noise: &SensorNoise,
    seed: u64,
) -> Result<LidarRun> {
    noise.validate()?;
    room.validate()?;
    if !(config.scan_rate > 0.0) {
        return Err(Error::Config("scan rate must be positive".into()));
    }
    if traj.is_empty() {
        return Err(Error::TooShort("empty trajectory".into()));
    }
    let t: Vec<f64> = traj.points.iter().map(|p| p.t).collect();
    let p: Vec<Point2> = traj.points.iter().map(|p| p.pos).collect();
    let spline = Spline2::fit(&t, &p);
    let rays = config.rays();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = (t[0], *t.last().unwrap());

    let reference = LidarScan {
        t: t0 - 1.0 + noise.clock_offset,
        points: cast_scan(room, &rays, None, noise.lidar_std, &mut rng),
    };
    let mut scans = Vec::new();
    let mut k = 0usize;
    loop {
        let ts = t0 + config.phase + k as f64 / config.scan_rate;
        if ts > t1 + 1e-12 {
            break;
        }
        let center = spline.eval(ts).pos;
        scans.push(LidarScan {
            t: ts + noise.clock_offset,
            points: cast_scan(
                room,
                &rays,
                Some((center, config.walker_radius)),
                noise.lidar_std,
                &mut rng,
            ),
        });
        k += 1;
    }
    Ok(LidarRun { reference, scans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Validate;

    fn still(at: Point2, secs: f64) -> Trajectory {
        let n = (secs * 100.0) as usize + 1;
        Trajectory::from_parts(
            &(0..n).map(|i| i as f64 / 100.0).collect::<Vec<_>>(),
            &vec![at; n],
        )
    }

    #[test]
    fn ray_fan_covers_190_degrees() {
        let rays = LidarConfig::default().rays();
        assert_eq!(rays.len(), 761);
        let first = rays[0].y.atan2(rays[0].x).to_degrees();
        assert!((first + 5.0).abs() < 1e-9);
    }

    #[test]
    fn hits_lie_on_walker_disk() {
        let c = Point2::new(3.0, 4.0);
        let run = render_lidar(
            &still(c, 0.1),
            &Room::default(),
            &LidarConfig::default(),
            &SensorNoise::none(),
            0,
        )
        .unwrap();
        let scan = &run.scans[0];
        let hits: Vec<_> = scan.points.iter().filter(|p| p.dist(c) < 0.5).collect();
        assert!(hits.len() >= 10, "{} hits", hits.len());
        for h in hits {
            assert!((h.dist(c) - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn walker_behind_scanner_is_invisible() {
        let room = Room::default();
        let cfg = LidarConfig::default();
        let behind = Point2::new(0.0, -0.4);
        assert!(!cfg.in_fov(behind));
        let run = render_lidar(&still(behind, 0.1), &room, &cfg, &SensorNoise::none(), 0).unwrap();
        assert_eq!(run.scans[0].points, run.reference.points);
    }

    #[test]
    fn clock_offset_shifts_timestamps() {
        let noise = SensorNoise {
            clock_offset: 0.00389,
            ..SensorNoise::none()
        };
        let run = render_lidar(
            &still(Point2::new(1.0, 3.0), 1.0),
            &Room::default(),
            &LidarConfig::default(),
            &noise,
            0,
        )
        .unwrap();
        assert_eq!(run.scans.len(), 41);
        for (k, s) in run.scans.iter().enumerate() {
            let truth = k as f64 / 40.0;
            assert!((s.t - truth - 0.00389).abs() < 1e-12);
        }
        assert!(run.validate().is_empty());
    }
}
