//! Sensor streams, trajectories, validation, and their text formats.
//!
//! IMU runs are stored one sample per line as
//! `t,ax,ay,az,gx,gy,gz,mx,my,mz` under a `# rate=<Hz>` metadata line.
//! LiDAR runs store one scan per line as `t` followed by `x:y` pairs; the
//! first record is the empty-room reference scan. Trajectories are `t,x,y`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::textio::{self, parse_f64, TextTable};

/// Nominal IMU rate used when a file carries no rate metadata.
pub const DEFAULT_IMU_RATE: f64 = 250.0;
/// Maximum range of the scanner, meters.
pub const LIDAR_MAX_RANGE: f64 = 80.0;

const IMU_HEADER: &str = "t,ax,ay,az,gx,gy,gz,mx,my,mz";
const LIDAR_HEADER: &str = "t,points";
const TRAJ_HEADER: &str = "t,x,y";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Sensor clock, seconds.
    pub t: f64,
    /// m/s², gravity removed.
    pub accel: [f64; 3],
    /// rad/s
    pub gyro: [f64; 3],
    /// microtesla
    pub mag: [f64; 3],
}

impl ImuSample {
    pub fn channels(&self) -> [f64; 9] {
        let [a0, a1, a2] = self.accel;
        let [g0, g1, g2] = self.gyro;
        let [m0, m1, m2] = self.mag;
        [a0, a1, a2, g0, g1, g2, m0, m1, m2]
    }

    fn from_row(v: &[f64]) -> Self {
        Self {
            t: v[0],
            accel: [v[1], v[2], v[3]],
            gyro: [v[4], v[5], v[6]],
            mag: [v[7], v[8], v[9]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuRun {
    pub rate: f64,
    pub samples: Vec<ImuSample>,
}

impl ImuRun {
    pub fn new(rate: f64, samples: Vec<ImuSample>) -> Self {
        Self { rate, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time between first and last sample.
    pub fn span(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub t: f64,
    /// Cartesian hits in the scanner frame, meters.
    pub points: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarRun {
    /// Empty-room reference frame.
    pub reference: LidarScan,
    pub scans: Vec<LidarScan>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub t: f64,
    pub pos: Point2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<TrajPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajPoint>) -> Self {
        Self { points }
    }

    pub fn from_parts(t: &[f64], pos: &[Point2]) -> Self {
        Self {
            points: t
                .iter()
                .zip(pos)
                .map(|(&t, &pos)| TrajPoint { t, pos })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Sum of straight-line distances between consecutive points.
    pub fn path_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1].pos.dist(w[0].pos))
            .sum()
    }

    /// Linear interpolation of the position at `t`, clamped at the ends.
    pub fn position_at(&self, t: f64) -> Option<Point2> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        if t <= first.t {
            return Some(first.pos);
        }
        if t >= last.t {
            return Some(last.pos);
        }
        let i = pts.partition_point(|p| p.t <= t);
        let (a, b) = (pts[i - 1], pts[i]);
        let w = (t - a.t) / (b.t - a.t);
        Some(a.pos + (b.pos - a.pos) * w)
    }
}

/// One broken invariant, with the first index where it fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub index: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (first at index {})", self.invariant, self.index)
    }
}

pub const INV_INCREASING: &str = "timestamps strictly increasing";
pub const INV_FINITE: &str = "finite values";
pub const INV_UNIFORM: &str = "uniform sampling within 10% jitter";
pub const INV_RANGE: &str = "points within max range";

pub trait Validate {
    /// Empty iff every type invariant holds.
    fn validate(&self) -> Vec<Violation>;
}

pub fn validate_run<R: Validate + ?Sized>(run: &R) -> Vec<Violation> {
    run.validate()
}

fn first_non_increasing(times: impl Iterator<Item = f64>) -> Option<usize> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in times.enumerate() {
        if !(t > prev) {
            return Some(i);
        }
        prev = t;
    }
    None
}

impl Validate for ImuRun {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Some(index) = self
            .samples
            .iter()
            .position(|s| !s.t.is_finite() || s.channels().iter().any(|v| !v.is_finite()))
        {
            out.push(Violation {
                invariant: INV_FINITE,
                index,
            });
        }
        if let Some(index) = first_non_increasing(self.samples.iter().map(|s| s.t)) {
            out.push(Violation {
                invariant: INV_INCREASING,
                index,
            });
        }
        // Ordering problems are reported once, above; jitter only looks at
        // forward steps.
        let nominal = 1.0 / self.rate;
        let jitter = self.samples.windows(2).position(|w| {
            let dt = w[1].t - w[0].t;
            dt > 0.0 && (dt - nominal).abs() > 0.1 * nominal
        });
        if let Some(i) = jitter {
            out.push(Violation {
                invariant: INV_UNIFORM,
                index: i + 1,
            });
        }
        out
    }
}

fn scan_range_violation(scan: &LidarScan) -> bool {
    scan.points
        .iter()
        .any(|p| !p.is_finite() || p.norm() > LIDAR_MAX_RANGE + 1e-9)
}

impl Validate for LidarRun {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Some(index) = first_non_increasing(self.scans.iter().map(|s| s.t)) {
            out.push(Violation {
                invariant: INV_INCREASING,
                index,
            });
        }
        // Index 0 is the reference scan, scans follow from 1.
        let all = std::iter::once(&self.reference).chain(&self.scans);
        if let Some(index) = all.clone().position(|s| !s.t.is_finite()) {
            out.push(Violation {
                invariant: INV_FINITE,
                index,
            });
        }
        if let Some(index) = all.clone().position(scan_range_violation) {
            out.push(Violation {
                invariant: INV_RANGE,
                index,
            });
        }
        out
    }
}

impl Validate for Trajectory {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Some(index) = self
            .points
            .iter()
            .position(|p| !p.t.is_finite() || !p.pos.is_finite())
        {
            out.push(Violation {
                invariant: INV_FINITE,
                index,
            });
        }
        if let Some(index) = first_non_increasing(self.points.iter().map(|p| p.t)) {
            out.push(Violation {
                invariant: INV_INCREASING,
                index,
            });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Imu,
    Lidar,
}

impl FromStr for RunKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imu" => Ok(RunKind::Imu),
            "lidar" => Ok(RunKind::Lidar),
            other => Err(Error::Usage(format!(
                "unknown run kind {other:?} (expected imu or lidar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Run {
    Imu(ImuRun),
    Lidar(LidarRun),
}

pub fn read_run(path: &Path, kind: RunKind) -> Result<Run> {
    match kind {
        RunKind::Imu => read_imu(path).map(Run::Imu),
        RunKind::Lidar => read_lidar(path).map(Run::Lidar),
    }
}

pub fn write_run(run: &Run, path: &Path) -> Result<()> {
    match run {
        Run::Imu(r) => write_imu(r, path),
        Run::Lidar(r) => write_lidar(r, path),
    }
}

pub fn read_imu(path: &Path) -> Result<ImuRun> {
    let table = TextTable::read(path)?;
    let rate = table.meta_f64("rate")?.unwrap_or(DEFAULT_IMU_RATE);
    let samples = table
        .rows
        .iter()
        .map(|(line, raw)| {
            table
                .floats(*line, raw, 10)
                .map(|v| ImuSample::from_row(&v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImuRun { rate, samples })
}

pub fn write_imu(run: &ImuRun, path: &Path) -> Result<()> {
    let mut w = textio::create(path)?;
    writeln!(w, "# rate={}", run.rate)?;
    writeln!(w, "{IMU_HEADER}")?;
    for s in &run.samples {
        let mut row = [0.0; 10];
        row[0] = s.t;
        row[1..].copy_from_slice(&s.channels());
        textio::write_row(&mut w, &row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_scan(table: &TextTable, line: usize, raw: &str) -> Result<LidarScan> {
    let mut fields = raw.split(',');
    let t = fields
        .next()
        .ok_or_else(|| table.err(line, "missing timestamp"))
        .and_then(|f| parse_f64(f).map_err(|m| table.err(line, m)))?;
    let points = fields
        .filter(|f| !f.trim().is_empty())
        .map(|f| {
            let (x, y) = f
                .split_once(':')
                .ok_or_else(|| table.err(line, format!("expected x:y pair, found {f:?}")))?;
            let x = parse_f64(x).map_err(|m| table.err(line, m))?;
            let y = parse_f64(y).map_err(|m| table.err(line, m))?;
            Ok(Point2::new(x, y))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LidarScan { t, points })
}

pub fn read_lidar(path: &Path) -> Result<LidarRun> {
    let table = TextTable::read(path)?;
    let mut scans = table
        .rows
        .iter()
        .map(|(line, raw)| parse_scan(&table, *line, raw))
        .collect::<Result<Vec<_>>>()?;
    if scans.is_empty() {
        return Ok(LidarRun {
            reference: LidarScan {
                t: 0.0,
                points: Vec::new(),
            },
            scans,
        });
    }
    let reference = scans.remove(0);
    Ok(LidarRun { reference, scans })
}

fn write_scan<W: Write>(w: &mut W, scan: &LidarScan) -> std::io::Result<()> {
    write!(w, "{}", scan.t)?;
    for p in &scan.points {
        write!(w, ",{}:{}", p.x, p.y)?;
    }
    writeln!(w)
}

pub fn write_lidar(run: &LidarRun, path: &Path) -> Result<()> {
    let mut w = textio::create(path)?;
    writeln!(w, "# first record is the reference scan")?;
    writeln!(w, "{LIDAR_HEADER}")?;
    write_scan(&mut w, &run.reference)?;
    for s in &run.scans {
        write_scan(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let table = TextTable::read(path)?;
    let points = table
        .rows
        .iter()
        .map(|(line, raw)| {
            table.floats(*line, raw, 3).map(|v| TrajPoint {
                t: v[0],
                pos: Point2::new(v[1], v[2]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { points })
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut w = textio::create(path)?;
    writeln!(w, "{TRAJ_HEADER}")?;
    for p in &traj.points {
        textio::write_row(&mut w, &[p.t, p.pos.x, p.pos.y])?;
    }
    w.flush()?;
    Ok(())
}
