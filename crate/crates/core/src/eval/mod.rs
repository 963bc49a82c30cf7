//! Error metrics, trajectory reconstruction from per-window displacements,
//! and the model-variant comparison.
//!
//! MAE values are meters per 2 s window.

mod plot;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use plot::{emit_plot, read_sidecar, render_svg, sidecar_path, Figure, PlotKind, Series};

use crate::datamodel::{TrajPoint, Trajectory};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::lidartrack::DisplacementLabel;
use crate::nn::{self, History, ModelConfig, Pooling, Target, TrainConfig};
use crate::segment::{DatasetSplit, LabeledWindow};

#[derive(Debug, Clone, PartialEq)]
pub struct MaeReport {
    pub model_name: String,
    pub dataset_name: String,
    pub mae_dx: f64,
    pub mae_dy: f64,
    pub n_windows: usize,
}

impl fmt::Display for MaeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} on {}: dx {:.4} m, dy {:.4} m over {} windows",
            self.model_name, self.dataset_name, self.mae_dx, self.mae_dy, self.n_windows
        )
    }
}

pub fn mae_report(
    pred: &[(f64, f64)],
    truth: &[(f64, f64)],
    model_name: &str,
    dataset_name: &str,
) -> Result<MaeReport> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("no windows to score".into()));
    }
    let n = pred.len() as f64;
    let (sx, sy) = pred
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(sx, sy), (p, t)| {
            (sx + (p.0 - t.0).abs(), sy + (p.1 - t.1).abs())
        });
    Ok(MaeReport {
        model_name: model_name.to_string(),
        dataset_name: dataset_name.to_string(),
        mae_dx: sx / n,
        mae_dy: sy / n,
        n_windows: pred.len(),
    })
}

pub fn truth_of(windows: &[LabeledWindow]) -> Vec<(f64, f64)> {
    windows.iter().map(|w| (w.dx, w.dy)).collect()
}

/// Scores predicting the training-set mean displacement for every window.
pub fn mean_baseline(train: &[LabeledWindow], eval: &[LabeledWindow], dataset_name: &str) -> Result<MaeReport> {
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let n = train.len() as f64;
    let mx = train.iter().map(|w| w.dx).sum::<f64>() / n;
    let my = train.iter().map(|w| w.dy).sum::<f64>() / n;
    mae_report(&vec![(mx, my); eval.len()], &truth_of(eval), "train-mean", dataset_name)
}

/// Windows of `run_id` in start order, greedily skipping any that overlaps
/// the previously kept one.
pub fn non_overlapping<'a>(windows: &'a [LabeledWindow], run_id: &str, length: f64) -> Vec<&'a LabeledWindow> {
    let mut run: Vec<&LabeledWindow> = windows.iter().filter(|w| w.run_id == run_id).collect();
    run.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    let mut kept: Vec<&LabeledWindow> = Vec::new();
    for w in run {
        if kept.last().is_none_or(|k| w.t_start >= k.t_start + length - 1e-9) {
            kept.push(w);
        }
    }
    kept
}

/// Displacements `(dx, dy)` placed on the windows' time intervals.
pub fn window_labels(windows: &[&LabeledWindow], values: &[(f64, f64)], length: f64) -> Result<Vec<DisplacementLabel>> {
    if windows.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: windows.len(),
            right: values.len(),
        });
    }
    Ok(windows
        .iter()
        .zip(values)
        .map(|(w, &(dx, dy))| DisplacementLabel {
            t_start: w.t_start,
            t_end: w.t_start + length,
            dx,
            dy,
        })
        .collect())
}

/// Chain displacements from `start`: one point at the first window's start,
/// then one at every window end.
pub fn reconstruct_trajectory(windows: &[DisplacementLabel], start: Point2) -> Result<Trajectory> {
    let Some(first) = windows.first() else {
        return Ok(Trajectory::default());
    };
    let mut points = vec![TrajPoint {
        t: first.t_start,
        pos: start,
    }];
    let mut pos = start;
    let mut prev_end = f64::NEG_INFINITY;
    for w in windows {
        if w.t_start < prev_end - 1e-9 || !(w.t_end > w.t_start) {
            return Err(Error::Overlap(format!(
                "window [{}, {}] starts before {prev_end}",
                w.t_start, w.t_end
            )));
        }
        pos += Point2::new(w.dx, w.dy);
        points.push(TrajPoint { t: w.t_end, pos });
        prev_end = w.t_end;
    }
    Ok(Trajectory::new(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Gru2Att,
    Gru2,
    Gru,
    Gru3,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Gru2Att, Variant::Gru2, Variant::Gru, Variant::Gru3];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Gru2Att => "2gru_att",
            Variant::Gru2 => "2gru",
            Variant::Gru => "gru",
            Variant::Gru3 => "3gru",
        }
    }

    /// Depth and pooling of this variant over the given widths. Variants
    /// without attention pool the last hidden state.
    pub fn model_config(&self, base: ModelConfig) -> ModelConfig {
        let (depth, pooling) = match self {
            Variant::Gru2Att => (2, Pooling::Attention),
            Variant::Gru2 => (2, Pooling::Last),
            Variant::Gru => (1, Pooling::Last),
            Variant::Gru3 => (3, Pooling::Last),
        };
        ModelConfig {
            depth,
            pooling,
            ..base
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Variant::ALL.iter().map(Variant::name).collect();
                Error::Config(format!("unknown variant {s:?}; known: {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: Variant,
    pub val: MaeReport,
    pub test: Option<MaeReport>,
    pub history_dx: History,
    pub history_dy: History,
}

impl VariantResult {
    /// Mean of the dx and dy stability metrics.
    pub fn stability(&self) -> f64 {
        0.5 * (self.history_dx.stability() + self.history_dy.stability())
    }
}

#[derive(Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub outcome: Result<VariantResult>,
}

/// Train dx and dy models for every variant on the same split with the same
/// seeds. A failing variant is recorded and the others continue. Histories
/// go to `<out_dir>/<variant>_{dx,dy}_history.csv` when `out_dir` is given.
pub fn ablation_run(
    variants: &[Variant],
    split: &DatasetSplit,
    base: ModelConfig,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<AblationRow>> {
    if variants.len() < 2 {
        return Err(Error::Config("an ablation needs at least two variants".into()));
    }
    Ok(variants
        .iter()
        .map(|&variant| {
            log::info!("ablation: training {variant}");
            AblationRow {
                variant,
                outcome: train_variant(variant, split, base, cfg, out_dir),
            }
        })
        .collect())
}

fn train_variant(
    variant: Variant,
    split: &DatasetSplit,
    base: ModelConfig,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<VariantResult> {
    let model = variant.model_config(base);
    let (px, hx) = nn::train_model(&split.train, &split.val, model, cfg, Target::Dx)?;
    let (py, hy) = nn::train_model(&split.train, &split.val, model, cfg, Target::Dy)?;
    if let Some(dir) = out_dir {
        nn::write_history(&hx, &dir.join(format!("{variant}_dx_history.csv")))?;
        nn::write_history(&hy, &dir.join(format!("{variant}_dy_history.csv")))?;
    }
    let score = |set: &[LabeledWindow], name: &str| -> Result<MaeReport> {
        let pred: Vec<(f64, f64)> = nn::predict(&px, set)?
            .into_iter()
            .zip(nn::predict(&py, set)?)
            .collect();
        mae_report(&pred, &truth_of(set), variant.name(), name)
    };
    Ok(VariantResult {
        variant,
        val: score(&split.val, "val")?,
        test: if split.test.is_empty() {
            None
        } else {
            Some(score(&split.test, "test")?)
        },
        history_dx: hx,
        history_dy: hy,
    })
}

/// Plain-text comparison table.
pub fn format_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::from(
        "variant    val_dx   val_dy   test_dx  test_dy  stability\n",
    );
    for row in rows {
        match &row.outcome {
            Ok(r) => {
                let (tx, ty) = r
                    .test
                    .as_ref()
                    .map_or((f64::NAN, f64::NAN), |t| (t.mae_dx, t.mae_dy));
                s.push_str(&format!(
                    "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10.5}\n",
                    row.variant.name(),
                    r.val.mae_dx,
                    r.val.mae_dy,
                    tx,
                    ty,
                    r.stability()
                ));
            }
            Err(e) => s.push_str(&format!("{:<10} failed: {e}\n", row.variant.name())),
        }
    }
    s
}
