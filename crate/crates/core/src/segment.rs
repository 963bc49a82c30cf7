//! From aligned IMU runs and displacement labels to normalized training
//! windows.
//!
//! Labels live in the fixed LiDAR (room) frame, so a model trained on them
//! predicts displacement in room coordinates and its heading estimate is
//! implicit in the `(dx, dy)` pair.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::ImuRun;
use crate::error::{Error, Result};
use crate::geom::norm3;
use crate::lidartrack::DisplacementLabel;
use crate::textio::{self, parse_f64, TextTable};

/// accel xyz, gyro xyz, mag xyz, then |accel|, |gyro|, |mag|.
pub const CHANNELS: usize = 12;
pub const DEFAULT_CLIP_MARGIN: f64 = 3.0;
pub const DEFAULT_WINDOW_SECONDS: f64 = 2.0;
pub const DEFAULT_STRIDE_SECONDS: f64 = 0.5;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;

/// Samples of one run, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub t: Vec<f64>,
    pub data: Array2<f64>,
}

pub fn clip_run(run: &ImuRun, margin: f64) -> Result<ImuRun> {
    if margin == 0.0 {
        return Ok(run.clone());
    }
    if run.span() <= 2.0 * margin {
        return Err(Error::TooShort(format!(
            "run of {:.3} s cannot lose {margin} s at each end",
            run.span()
        )));
    }
    let lo = run.samples[0].t + margin;
    let hi = run.samples[run.len() - 1].t - margin;
    // Tolerate representation error in the bounds.
    let eps = 1e-9;
    Ok(ImuRun::new(
        run.rate,
        run.samples
            .iter()
            .copied()
            .filter(|s| s.t >= lo - eps && s.t <= hi + eps)
            .collect(),
    ))
}

pub fn augment_magnitudes(run: &ImuRun) -> ChannelMatrix {
    let mut data = Array2::zeros((run.len(), CHANNELS));
    for (mut row, s) in data.axis_iter_mut(Axis(0)).zip(&run.samples) {
        for (k, v) in s.channels().iter().enumerate() {
            row[k] = *v;
        }
        row[9] = norm3(s.accel);
        row[10] = norm3(s.gyro);
        row[11] = norm3(s.mag);
    }
    ChannelMatrix {
        t: run.times(),
        data,
    }
}

/// Per-channel min-max scaling onto [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub min: [f64; CHANNELS],
    pub max: [f64; CHANNELS],
}

impl Normalizer {
    pub fn is_constant(&self, c: usize) -> bool {
        !(self.max[c] > self.min[c])
    }

    /// Normalize in place; returns how many entries landed outside [-1, 1].
    pub fn apply(&self, x: &mut Array2<f64>) -> usize {
        let mut overflow = 0;
        for mut row in x.axis_iter_mut(Axis(0)) {
            for c in 0..CHANNELS {
                let v = if self.is_constant(c) {
                    0.0
                } else {
                    2.0 * (row[c] - self.min[c]) / (self.max[c] - self.min[c]) - 1.0
                };
                if !(-1.0..=1.0).contains(&v) {
                    overflow += 1;
                }
                row[c] = v;
            }
        }
        overflow
    }

    /// Inverse of [`apply`](Self::apply) on non-constant channels.
    pub fn invert(&self, x: &mut Array2<f64>) {
        for mut row in x.axis_iter_mut(Axis(0)) {
            for c in 0..CHANNELS {
                row[c] = if self.is_constant(c) {
                    self.min[c]
                } else {
                    (row[c] + 1.0) / 2.0 * (self.max[c] - self.min[c]) + self.min[c]
                };
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = textio::create(path)?;
        writeln!(w, "channel,min,max")?;
        for c in 0..CHANNELS {
            writeln!(w, "{c},{},{}", self.min[c], self.max[c])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let table = TextTable::read(path)?;
        if table.rows.len() != CHANNELS {
            return Err(table.err(
                table.rows.last().map_or(1, |r| r.0),
                format!("expected {CHANNELS} channel rows, found {}", table.rows.len()),
            ));
        }
        let mut n = Normalizer {
            min: [0.0; CHANNELS],
            max: [0.0; CHANNELS],
        };
        for (c, (line, raw)) in table.rows.iter().enumerate() {
            let v = table.floats(*line, raw, 3)?;
            n.min[c] = v[1];
            n.max[c] = v[2];
        }
        Ok(n)
    }
}

pub fn fit_normalizer<'a>(mats: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Normalizer {
    let mut n = Normalizer {
        min: [f64::INFINITY; CHANNELS],
        max: [f64::NEG_INFINITY; CHANNELS],
    };
    for m in mats {
        for row in m.axis_iter(Axis(0)) {
            for c in 0..CHANNELS {
                n.min[c] = n.min[c].min(row[c]);
                n.max[c] = n.max[c].max(row[c]);
            }
        }
    }
    for c in 0..CHANNELS {
        if n.is_constant(c) {
            log::warn!("channel {c} is constant over the fitting set; it will map to 0");
            if !n.min[c].is_finite() {
                n.min[c] = 0.0;
                n.max[c] = 0.0;
            }
        }
    }
    n
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub run_id: String,
    /// Row of the first sample in the source run; with `run_id`, the
    /// window's identity.
    pub start_index: usize,
    pub t_start: f64,
    /// T x C samples.
    pub x: Array2<f64>,
    pub dx: f64,
    pub dy: f64,
}

impl LabeledWindow {
    pub fn id(&self) -> (&str, usize) {
        (&self.run_id, self.start_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub rate: f64,
    pub length_s: f64,
    pub stride_s: f64,
    /// How far a label's interval may sit from the window's, seconds.
    /// Half a LiDAR scan interval by default.
    pub label_tolerance: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            rate: 250.0,
            length_s: DEFAULT_WINDOW_SECONDS,
            stride_s: DEFAULT_STRIDE_SECONDS,
            label_tolerance: 0.5 / 40.0,
        }
    }
}

impl WindowConfig {
    /// Rows per window and rows between window starts.
    pub fn rows_and_step(&self) -> Result<(usize, usize)> {
        let exact = self.rate * self.length_s;
        let rows = exact.round();
        if !(rows >= 1.0) || (exact - rows).abs() > 1e-6 * exact.max(1.0) {
            return Err(Error::Config(format!(
                "{} Hz x {} s = {exact} is not a whole number of rows",
                self.rate, self.length_s
            )));
        }
        let exact = self.rate * self.stride_s;
        let step = exact.round();
        if !(step >= 1.0) || (exact - step).abs() > 1e-6 * exact.max(1.0) {
            return Err(Error::Config(format!(
                "stride {} s at {} Hz is not a whole, positive number of samples",
                self.stride_s, self.rate
            )));
        }
        Ok((rows as usize, step as usize))
    }
}

/// Start row and start time of every full window in `channels`.
pub fn window_starts(channels: &ChannelMatrix, cfg: &WindowConfig) -> Result<Vec<(usize, f64)>> {
    let (rows, step) = cfg.rows_and_step()?;
    let n = channels.t.len();
    if n < rows {
        return Ok(Vec::new());
    }
    Ok((0..=(n - rows) / step)
        .map(|k| (k * step, channels.t[k * step]))
        .collect())
}

/// Cut windows and attach the label whose interval matches each one; windows
/// without a matching label are dropped.
pub fn window_examples(
    run_id: &str,
    channels: &ChannelMatrix,
    labels: &[DisplacementLabel],
    cfg: &WindowConfig,
) -> Result<Vec<LabeledWindow>> {
    let (rows, _) = cfg.rows_and_step()?;
    let mut sorted: Vec<DisplacementLabel> = labels.to_vec();
    sorted.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    let tol = cfg.label_tolerance;
    let mut out = Vec::new();
    for (i0, t0) in window_starts(channels, cfg)? {
        let t1 = t0 + cfg.length_s;
        let k = sorted.partition_point(|l| l.t_start < t0 - tol);
        let hit = sorted[k..]
            .iter()
            .take_while(|l| l.t_start <= t0 + tol)
            .find(|l| (l.t_end - t1).abs() <= tol);
        if let Some(label) = hit {
            out.push(LabeledWindow {
                run_id: run_id.to_string(),
                start_index: i0,
                t_start: t0,
                x: channels.data.slice(s![i0..i0 + rows, ..]).to_owned(),
                dx: label.dx,
                dy: label.dy,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledWindow>,
    pub val: Vec<LabeledWindow>,
    pub test: Vec<LabeledWindow>,
    pub split_ratio: f64,
    pub seed: u64,
    /// Entries outside [-1, 1] after normalization.
    pub overflow_val: usize,
    pub overflow_test: usize,
}

/// Shuffle the non-test windows and cut them into train and validation;
/// windows from `test_runs` form the test set.
pub fn split_dataset(
    windows: Vec<LabeledWindow>,
    ratio: f64,
    seed: u64,
    test_runs: &[String],
) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let held_out: HashSet<&str> = test_runs.iter().map(String::as_str).collect();
    let (test, mut pool): (Vec<_>, Vec<_>) = windows
        .into_iter()
        .partition(|w| held_out.contains(w.run_id.as_str()));
    pool.sort_by(|a, b| a.run_id.cmp(&b.run_id).then(a.start_index.cmp(&b.start_index)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let n_train = (ratio * pool.len() as f64).round() as usize;
    let val = pool.split_off(n_train);
    let train = pool;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySplit(format!(
            "{} train / {} val windows",
            train.len(),
            val.len()
        )));
    }
    let split = DatasetSplit {
        train,
        val,
        test,
        split_ratio: ratio,
        seed,
        overflow_val: 0,
        overflow_test: 0,
    };
    split.audit()?;
    Ok(split)
}

impl DatasetSplit {
    /// Disjointness checks: no window in both train and val, and no test run
    /// contributing to either.
    pub fn audit(&self) -> Result<()> {
        let train: HashSet<_> = self.train.iter().map(LabeledWindow::id).collect();
        if let Some(w) = self.val.iter().find(|w| train.contains(&w.id())) {
            return Err(Error::Config(format!(
                "window {:?} is in both train and val",
                w.id()
            )));
        }
        let test_runs: HashSet<&str> = self.test.iter().map(|w| w.run_id.as_str()).collect();
        if let Some(w) = self
            .train
            .iter()
            .chain(&self.val)
            .find(|w| test_runs.contains(w.run_id.as_str()))
        {
            return Err(Error::Config(format!(
                "test run {} leaked into train/val",
                w.run_id
            )));
        }
        Ok(())
    }

    /// Fit the normalizer on the training windows only and apply it to all
    /// three sets.
    pub fn normalize(&mut self) -> Normalizer {
        let norm = fit_normalizer(self.train.iter().map(|w| w.x.view()));
        for w in &mut self.train {
            norm.apply(&mut w.x);
        }
        self.overflow_val = self.val.iter_mut().map(|w| norm.apply(&mut w.x)).sum();
        self.overflow_test = self.test.iter_mut().map(|w| norm.apply(&mut w.x)).sum();
        if self.overflow_val + self.overflow_test > 0 {
            log::info!(
                "normalization overflow: {} val entries, {} test entries outside [-1, 1]",
                self.overflow_val,
                self.overflow_test
            );
        }
        norm
    }

    pub fn save(&self, dir: &Path, normalizer: Option<&Normalizer>) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_windows(&self.train, &dir.join("train.txt"))?;
        write_windows(&self.val, &dir.join("val.txt"))?;
        write_windows(&self.test, &dir.join("test.txt"))?;
        let mut w = textio::create(&dir.join("split.txt"))?;
        writeln!(w, "key,value")?;
        writeln!(w, "split_ratio,{}", self.split_ratio)?;
        writeln!(w, "seed,{}", self.seed)?;
        writeln!(w, "overflow_val,{}", self.overflow_val)?;
        writeln!(w, "overflow_test,{}", self.overflow_test)?;
        w.flush()?;
        if let Some(n) = normalizer {
            n.write(&dir.join("normalizer.txt"))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let table = TextTable::read(&dir.join("split.txt"))?;
        let get = |key: &str| -> Result<String> {
            table
                .rows
                .iter()
                .find_map(|(_, raw)| raw.strip_prefix(&format!("{key},")).map(str::to_string))
                .ok_or_else(|| table.err(0, format!("missing {key}")))
        };
        let num = |s: String| -> Result<f64> { parse_f64(&s).map_err(Error::Config) };
        Ok(Self {
            split_ratio: num(get("split_ratio")?)?,
            seed: num(get("seed")?)? as u64,
            overflow_val: num(get("overflow_val")?)? as usize,
            overflow_test: num(get("overflow_test")?)? as usize,
            train: read_windows(&dir.join("train.txt"))?,
            val: read_windows(&dir.join("val.txt"))?,
            test: read_windows(&dir.join("test.txt"))?,
        })
    }
}

/// Text container: a `T,C,count` header, then per window one
/// `window,<run>,<start_index>,<t_start>,<dx>,<dy>` line followed by T rows.
pub fn write_windows(windows: &[LabeledWindow], path: &Path) -> Result<()> {
    let (t, c) = windows.first().map_or((0, CHANNELS), |w| w.x.dim());
    let mut w = textio::create(path)?;
    writeln!(w, "# format=pedtrack-windows-1")?;
    writeln!(w, "T,C,count")?;
    writeln!(w, "{t},{c},{}", windows.len())?;
    for win in windows {
        if win.x.dim() != (t, c) {
            return Err(Error::Shape(format!(
                "window {:?} is {:?}, container is {t}x{c}",
                win.id(),
                win.x.dim()
            )));
        }
        if win.run_id.contains(',') {
            return Err(Error::Config(format!("run id {:?} contains a comma", win.run_id)));
        }
        writeln!(
            w,
            "window,{},{},{},{},{}",
            win.run_id, win.start_index, win.t_start, win.dx, win.dy
        )?;
        for row in win.x.axis_iter(Axis(0)) {
            textio::write_row(&mut w, row.as_slice().expect("standard layout"))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_windows(path: &Path) -> Result<Vec<LabeledWindow>> {
    let table = TextTable::read(path)?;
    let mut rows = table.rows.iter();
    let Some((line, raw)) = rows.next() else {
        return Err(table.err(1, "missing T,C,count line"));
    };
    let dims = table.floats(*line, raw, 3)?;
    let (t, c, count) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, raw) = rows
            .next()
            .ok_or_else(|| table.err(0, format!("truncated: expected {count} windows")))?;
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 6 || f[0] != "window" {
            return Err(table.err(*line, "expected window header"));
        }
        let num = |s: &str| parse_f64(s).map_err(|m| table.err(*line, m));
        let start_index = f[2]
            .parse::<usize>()
            .map_err(|_| table.err(*line, "bad start index"))?;
        let (t_start, dx, dy) = (num(f[3])?, num(f[4])?, num(f[5])?);
        let mut x = Array2::zeros((t, c));
        for r in 0..t {
            let (line, raw) = rows
                .next()
                .ok_or_else(|| table.err(0, "truncated window block"))?;
            let vals = table.floats(*line, raw, c)?;
            for (k, v) in vals.into_iter().enumerate() {
                x[[r, k]] = v;
            }
        }
        out.push(LabeledWindow {
            run_id: f[1].to_string(),
            start_index,
            t_start,
            x,
            dx,
            dy,
        });
    }
    if let Some((line, _)) = rows.next() {
        return Err(table.err(*line, "trailing data after last window"));
    }
    Ok(out)
}
