//! Synthetic stand-in for a recorded walking dataset: ground-truth walks,
//! foot-mounted IMU streams and LiDAR scans of the walker.

mod imu;
mod lidar;
mod spike;
pub mod spline;
mod walk;

pub use imu::{
    synthesize_imu, GaitModel, SensorNoise, MAG_HORIZONTAL, MAG_VERTICAL, SWING_FRACTION,
};
pub use lidar::{cast_scan, ray_disk, render_lidar, LidarConfig};
pub use spike::{simulate_spike, SpikeConfig};
pub use walk::{
    simulate_walk, simulate_walk_profile, Room, WalkConfig, WalkProfile, LIDAR_CLEARANCE,
    WALL_MARGIN,
};
