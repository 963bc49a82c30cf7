//! Subject tracking from LiDAR frames and the displacement labels derived
//! from it.
//!
//! Each incoming scan is compared against the empty-room reference; the
//! points with no reference neighbor within `dist_threshold` are the ones
//! that moved, and their centroid is the subject's position for that scan.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::datamodel::{LidarRun, LidarScan, TrajPoint, Trajectory};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::textio::{self, TextTable};

pub const DEFAULT_DIST_THRESHOLD: f64 = 0.1;
pub const DEFAULT_MIN_POINTS: usize = 3;
pub const DEFAULT_PERIOD: f64 = 2.0;
/// Windows spanning a centroid gap longer than this many scan intervals
/// are dropped.
pub const MAX_GAP_SCANS: f64 = 3.0;

/// Subject positions in the LiDAR clock.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CentroidTrack {
    pub points: Vec<TrajPoint>,
    /// Timestamps of scans where no subject was found.
    pub dropped: Vec<f64>,
}

impl CentroidTrack {
    pub fn from_points(points: Vec<TrajPoint>) -> Self {
        Self {
            points,
            dropped: Vec::new(),
        }
    }

    pub fn as_trajectory(&self) -> Trajectory {
        Trajectory::new(self.points.clone())
    }

    /// Median spacing between consecutive centroids.
    pub fn scan_interval(&self) -> Option<f64> {
        let mut dts: Vec<f64> = self.points.windows(2).map(|w| w[1].t - w[0].t).collect();
        if dts.is_empty() {
            return None;
        }
        dts.sort_by(f64::total_cmp);
        Some(dts[dts.len() / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementLabel {
    pub t_start: f64,
    pub t_end: f64,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackConfig {
    pub dist_threshold: f64,
    pub min_points: usize,
    /// When set, only the largest cluster of moved points (single linkage
    /// at this distance) contributes to the centroid.
    pub cluster_link: Option<f64>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            dist_threshold: DEFAULT_DIST_THRESHOLD,
            min_points: DEFAULT_MIN_POINTS,
            cluster_link: Some(0.3),
        }
    }
}

type Cell = (i64, i64);

fn cell_of(p: Point2, size: f64) -> Cell {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
}

fn build_grid(points: &[Point2], size: f64) -> HashMap<Cell, Vec<Point2>> {
    let mut grid: HashMap<Cell, Vec<Point2>> = HashMap::new();
    for &p in points {
        grid.entry(cell_of(p, size)).or_default().push(p);
    }
    grid
}

fn has_neighbor(grid: &HashMap<Cell, Vec<Point2>>, p: Point2, size: f64, radius: f64) -> bool {
    let (cx, cy) = cell_of(p, size);
    let r2 = radius * radius;
    (-1..=1).any(|ox| {
        (-1..=1).any(|oy| {
            grid.get(&(cx + ox, cy + oy))
                .is_some_and(|cell| cell.iter().any(|q| (*q - p).norm_sq() <= r2))
        })
    })
}

/// Points of `fi` farther than `dist_threshold` from every point of `f0`.
pub fn subtract_background(f0: &LidarScan, fi: &LidarScan, dist_threshold: f64) -> Vec<Point2> {
    if f0.points.is_empty() {
        return fi.points.clone();
    }
    if dist_threshold <= 0.0 {
        // Degenerate threshold: anything not sitting exactly on a
        // reference point has moved.
        return fi
            .points
            .iter()
            .copied()
            .filter(|p| f0.points.iter().all(|q| q != p))
            .collect();
    }
    let grid = build_grid(&f0.points, dist_threshold);
    fi.points
        .iter()
        .copied()
        .filter(|&p| !has_neighbor(&grid, p, dist_threshold, dist_threshold))
        .collect()
}

/// Largest single-linkage cluster of `points` at link distance `link`.
pub fn largest_cluster(points: &[Point2], link: f64) -> Vec<Point2> {
    let n = points.len();
    if n <= 1 {
        return points.to_vec();
    }
    let mut label = vec![usize::MAX; n];
    let mut best: Vec<usize> = Vec::new();
    let l2 = link * link;
    for seed in 0..n {
        if label[seed] != usize::MAX {
            continue;
        }
        label[seed] = seed;
        let mut members = vec![seed];
        let mut k = 0;
        while k < members.len() {
            let i = members[k];
            for j in 0..n {
                if label[j] == usize::MAX && (points[i] - points[j]).norm_sq() <= l2 {
                    label[j] = seed;
                    members.push(j);
                }
            }
            k += 1;
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_unstable();
    best.into_iter().map(|i| points[i]).collect()
}

pub fn centroid(points: &[Point2], min_points: usize) -> Result<Point2> {
    if points.len() < min_points.max(1) {
        return Err(Error::NoSubject {
            found: points.len(),
            needed: min_points.max(1),
        });
    }
    let sum = points.iter().fold(Point2::ZERO, |acc, &p| acc + p);
    Ok(sum / points.len() as f64)
}

/// Centroid of the moved points in each scan; scans without a subject
/// are recorded as gaps.
pub fn track(run: &LidarRun, config: &TrackConfig) -> Result<CentroidTrack> {
    let mut out = CentroidTrack::default();
    for scan in &run.scans {
        let mut moved = subtract_background(&run.reference, scan, config.dist_threshold);
        if let Some(link) = config.cluster_link {
            moved = largest_cluster(&moved, link);
        }
        match centroid(&moved, config.min_points) {
            Ok(pos) => out.points.push(TrajPoint { t: scan.t, pos }),
            Err(_) => out.dropped.push(scan.t),
        }
    }
    if out.points.is_empty() {
        return Err(Error::NoSubjectEver {
            scans: run.scans.len(),
        });
    }
    Ok(out)
}

/// Linear interpolation of the track position at `t`, with the index of the
/// first point after `t`. `None` outside the track.
fn interpolate(points: &[TrajPoint], t: f64) -> Option<(usize, Point2)> {
    let first = points.first()?;
    let last = points.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = points.partition_point(|p| p.t <= t);
    if i == points.len() {
        return Some((i - 1, last.pos));
    }
    let (a, b) = (points[i - 1], points[i]);
    let w = (t - a.t) / (b.t - a.t);
    Some((i, a.pos + (b.pos - a.pos) * w))
}

/// Displacement label for each requested window start; `None` where the
/// window leaves the track or spans a gap.
pub fn displacements_at(
    track: &CentroidTrack,
    starts: &[f64],
    period: f64,
) -> Vec<Option<DisplacementLabel>> {
    let pts = &track.points;
    let max_gap = track
        .scan_interval()
        .map(|s| MAX_GAP_SCANS * s)
        .unwrap_or(f64::INFINITY);
    starts
        .iter()
        .map(|&t_start| {
            let t_end = t_start + period;
            let (i0, p0) = interpolate(pts, t_start)?;
            let (i1, p1) = interpolate(pts, t_end)?;
            // Intervals touching the window: (i0-1, i0) .. (i1-1, i1).
            let lo = i0.max(1);
            let hi = i1.min(pts.len() - 1);
            let gap = (lo..=hi).any(|k| pts[k].t - pts[k - 1].t > max_gap + 1e-12);
            if gap {
                return None;
            }
            let d = p1 - p0;
            Some(DisplacementLabel {
                t_start,
                t_end,
                dx: d.x,
                dy: d.y,
            })
        })
        .collect()
}

/// Consecutive non-overlapping windows of `period` seconds starting at the
/// first centroid.
pub fn window_displacements(track: &CentroidTrack, period: f64) -> Vec<DisplacementLabel> {
    let (Some(first), Some(last)) = (track.points.first(), track.points.last()) else {
        return Vec::new();
    };
    let count = ((last.t - first.t) / period + 1e-9).floor() as usize;
    let starts: Vec<f64> = (0..count).map(|k| first.t + k as f64 * period).collect();
    displacements_at(track, &starts, period)
        .into_iter()
        .flatten()
        .collect()
}

pub fn write_labels(labels: &[DisplacementLabel], path: &Path) -> Result<()> {
    let mut w = textio::create(path)?;
    writeln!(w, "t_start,t_end,dx,dy")?;
    for l in labels {
        textio::write_row(&mut w, &[l.t_start, l.t_end, l.dx, l.dy])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<DisplacementLabel>> {
    let table = TextTable::read(path)?;
    table
        .rows
        .iter()
        .map(|(line, raw)| {
            table.floats(*line, raw, 4).map(|v| DisplacementLabel {
                t_start: v[0],
                t_end: v[1],
                dx: v[2],
                dy: v[3],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::{cast_scan, LidarConfig, Room};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scan(points: Vec<Point2>) -> LidarScan {
        LidarScan { t: 0.0, points }
    }

    fn walls(seed: u64, std: f64) -> Vec<Point2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        cast_scan(&Room::default(), &LidarConfig::default().rays(), None, std, &mut rng)
    }

    #[test]
    fn identical_frames_have_no_movers() {
        let f = scan(walls(0, 0.03));
        assert!(subtract_background(&f, &f, 0.1).is_empty());
    }

    #[test]
    fn disk_points_are_exactly_the_movers() {
        let f0 = scan(walls(0, 0.0));
        let c = Point2::new(3.0, 4.0);
        let disk: Vec<Point2> = (0..12)
            .map(|k| c + Point2::from_angle(k as f64 * std::f64::consts::TAU / 12.0) * 0.2)
            .collect();
        let mut pts = f0.points.clone();
        pts.extend(disk.iter().copied());
        let moved = subtract_background(&f0, &scan(pts), 0.1);
        assert_eq!(moved, disk);
    }

    #[test]
    fn zero_threshold_keeps_perturbed_points() {
        let f0 = scan(walls(1, 0.03));
        let fi = scan(walls(2, 0.03));
        let moved = subtract_background(&f0, &fi, 0.0);
        assert!(moved.len() as f64 > 0.99 * fi.points.len() as f64);
    }

    #[test]
    fn centroid_examples() {
        let pts = [Point2::new(1.0, 0.0), Point2::new(-1.0, 0.0), Point2::new(0.0, 3.0)];
        assert_eq!(centroid(&pts, 3).unwrap(), Point2::new(0.0, 1.0));
        assert!(matches!(
            centroid(&pts[..1], 3),
            Err(Error::NoSubject { found: 1, needed: 3 })
        ));
    }

    #[test]
    fn cluster_filter_drops_isolated_points() {
        let mut pts: Vec<Point2> = (0..10).map(|k| Point2::new(2.0 + 0.02 * k as f64, 3.0)).collect();
        pts.push(Point2::new(-6.0, 10.0));
        pts.push(Point2::new(7.0, 1.0));
        let c = largest_cluster(&pts, 0.3);
        assert_eq!(c.len(), 10);
    }

    fn linear_track(v: Point2, secs: f64, rate: f64) -> CentroidTrack {
        let n = (secs * rate) as usize + 1;
        CentroidTrack::from_points(
            (0..n)
                .map(|i| {
                    let t = 100.0 + i as f64 / rate;
                    TrajPoint {
                        t,
                        pos: Point2::new(1.0, 2.0) + v * (t - 100.0),
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn stationary_track_gives_zero_labels() {
        let tr = linear_track(Point2::ZERO, 10.0, 40.0);
        let labels = window_displacements(&tr, 2.0);
        assert_eq!(labels.len(), 5);
        assert!(labels.iter().all(|l| l.dx == 0.0 && l.dy == 0.0));
    }

    #[test]
    fn constant_velocity_labels_are_exact() {
        let tr = linear_track(Point2::new(0.5, -0.25), 11.3, 40.0);
        let labels = window_displacements(&tr, 2.0);
        assert_eq!(labels.len(), 5);
        for l in &labels {
            assert!((l.dx - 1.0).abs() < 1e-9 && (l.dy + 0.5).abs() < 1e-9);
            assert!((l.t_end - l.t_start - 2.0).abs() < 1e-12);
        }
        // Off-grid starts interpolate between scans.
        let off = displacements_at(&tr, &[100.0123, 103.3], 2.0);
        for l in off.into_iter().flatten() {
            assert!((l.dx - 1.0).abs() < 1e-9 && (l.dy + 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn short_track_has_no_windows() {
        let tr = linear_track(Point2::new(1.0, 0.0), 1.5, 40.0);
        assert!(window_displacements(&tr, 2.0).is_empty());
    }

    #[test]
    fn windows_with_long_gaps_are_dropped() {
        let mut tr = linear_track(Point2::new(1.0, 0.0), 10.0, 40.0);
        // Remove 0.2 s (8 scans) inside the second window.
        tr.points.retain(|p| !(p.t > 102.5 && p.t < 102.7));
        let labels = window_displacements(&tr, 2.0);
        assert_eq!(labels.len(), 4);
        assert!(labels.iter().all(|l| !(l.t_start < 102.7 && l.t_end > 102.5)));
        // A gap of exactly three scans is tolerated.
        let mut tr = linear_track(Point2::new(1.0, 0.0), 10.0, 40.0);
        tr.points.retain(|p| !(p.t > 102.51 && p.t < 102.56));
        assert_eq!(window_displacements(&tr, 2.0).len(), 5);
    }

    #[test]
    fn concatenated_tracks_concatenate_windows() {
        let full = linear_track(Point2::new(0.3, 0.1), 12.0, 40.0);
        let cut = 106.0;
        let a = CentroidTrack::from_points(full.points.iter().copied().filter(|p| p.t <= cut).collect());
        let b = CentroidTrack::from_points(full.points.iter().copied().filter(|p| p.t >= cut).collect());
        let mut joined = window_displacements(&a, 2.0);
        joined.extend(window_displacements(&b, 2.0));
        assert_eq!(window_displacements(&full, 2.0), joined);
    }

    #[test]
    fn never_seen_subject_is_an_error() {
        let f0 = scan(walls(0, 0.0));
        let run = LidarRun {
            reference: f0.clone(),
            scans: (0..5)
                .map(|k| LidarScan {
                    t: k as f64 * 0.025,
                    points: f0.points.clone(),
                })
                .collect(),
        };
        assert!(matches!(
            track(&run, &TrackConfig::default()),
            Err(Error::NoSubjectEver { scans: 5 })
        ));
    }

    proptest! {
        #[test]
        fn centroid_is_translation_equivariant(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            vx in -5.0f64..5.0, vy in -5.0f64..5.0,
        ) {
            let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
            let v = Point2::new(vx, vy);
            let moved: Vec<Point2> = pts.iter().map(|&p| p + v).collect();
            let a = centroid(&pts, 3).unwrap() + v;
            let b = centroid(&moved, 3).unwrap();
            prop_assert!((a - b).norm() < 1e-9);
        }

        #[test]
        fn self_subtraction_is_empty(
            pts in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..200),
            tau in 1e-3f64..1.0,
        ) {
            let f = scan(pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect());
            prop_assert!(subtract_background(&f, &f, tau).is_empty());
        }
    }
}
