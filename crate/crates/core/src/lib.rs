//! Pedestrian tracking from a foot-mounted IMU.
//!
//! The crate learns per-window planar displacements `(dx, dy)` with a
//! stacked GRU and feed-forward attention regressor, and carries everything
//! needed to make that meaningful without real hardware:
//!
//! - [`datamodel`]: sensor streams, trajectories and their text formats.
//! - [`synthworld`]: simulated walks with matching IMU and LiDAR streams.
//! - [`lidartrack`]: background subtraction, centroids and displacement labels.
//! - [`sync`]: LiDAR-to-IMU clock delay estimation from velocity spikes.
//! - [`segment`]: clipping, normalization, windowing and dataset splits.
//! - [`nn`]: the recurrent regressor with exact gradients and RMSProp training.
//! - [`pdr`]: a threshold-and-integrate dead reckoning baseline.
//! - [`eval`]: metrics, path reconstruction, ablations and SVG plots.

pub mod config;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod geom;
pub mod lidartrack;
pub mod nn;
pub mod pdr;
pub mod pipeline;
pub mod segment;
pub mod sync;
pub mod synthworld;
mod textio;

pub use error::{Error, Result};
pub use geom::Point2;
