use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use pedtrack::config::Scenario;
use pedtrack::datamodel::{read_imu, read_lidar, read_trajectory, write_imu, write_lidar, write_trajectory, Trajectory};
use pedtrack::eval::{
    ablation_run, emit_plot, format_ablation, mae_report, mean_baseline, non_overlapping, reconstruct_trajectory,
    truth_of, window_labels, Figure, MaeReport, PlotKind, Series, Variant,
};
use pedtrack::lidartrack::{track, window_displacements, write_labels};
use pedtrack::nn::{load_model, predict, read_history, save_model, train_model, write_history, Target};
use pedtrack::pdr::{pdr_reconstruct, PdrConfig};
use pedtrack::pipeline::{self, build_dataset, label_windows, run_id, simulate_recording, simulate_spike_recording};
use pedtrack::segment::{split_dataset, DatasetSplit, LabeledWindow};
use pedtrack::sync::{average_delay, DelayMethod};
use pedtrack::Point2;

#[derive(Parser, Debug)]
#[command(name = "pedtrack", version, about = "Foot-mounted IMU displacement learning on simulated walks")]
struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Scenario file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate walking and spike recordings and write their sensor files.
    Synth {
        /// Skip the walking runs.
        #[arg(long)]
        spikes_only: bool,
        /// Skip the spike recordings.
        #[arg(long, conflicts_with = "spikes_only")]
        walks_only: bool,
    },
    /// Track the walker in a LiDAR file and label fixed-period displacements.
    Track {
        #[arg(long)]
        lidar: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        period: f64,
    },
    /// Estimate the LiDAR clock delay from paired spike recordings; simulates
    /// them from the scenario when no files are given.
    Sync {
        #[arg(long, num_args = 1..)]
        imu: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        lidar: Vec<PathBuf>,
        #[arg(long, default_value = "peak")]
        method: DelayMethod,
    },
    /// Build a normalized train/val/test dataset directory.
    Segment {
        /// Directory written by `synth`; simulated in memory when absent.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// LiDAR delay in seconds; estimated from spike files when absent.
        #[arg(long)]
        delay: Option<f64>,
    },
    /// Train one displacement model.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        target: Target,
        #[arg(long, default_value = "2gru_att")]
        variant: Variant,
    },
    /// Predict one displacement component for every window of a set.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        set: SetName,
        #[arg(long, default_value = "predictions.csv")]
        output: String,
    },
    /// Chain predicted displacements of one run into a path.
    Reconstruct {
        #[arg(long)]
        model_dx: PathBuf,
        #[arg(long)]
        model_dy: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Run to reconstruct; defaults to the first test run.
        #[arg(long)]
        run: Option<String>,
    },
    /// MAE of a dx/dy model pair against the train-mean baseline.
    Eval {
        #[arg(long)]
        model_dx: PathBuf,
        #[arg(long)]
        model_dy: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train and compare architecture variants on one dataset.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2gru_att,2gru,gru,3gru")]
        variants: Vec<Variant>,
    },
    /// Render an SVG figure with a CSV sidecar.
    Plot {
        #[arg(long)]
        kind: PlotKind,
        /// Trajectory files (path), history CSVs (training_curve) or one
        /// `name,value` CSV (bar).
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "plot.svg")]
        output: String,
        #[arg(long, default_value = "")]
        title: String,
    },
    /// Threshold-and-integrate dead reckoning on an IMU file.
    Pdr {
        #[arg(long)]
        imu: PathBuf,
        #[arg(long, default_value_t = pedtrack::pdr::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = pedtrack::pdr::DEFAULT_MIN_GAP)]
        min_gap: f64,
        /// Initial heading, radians.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta0: f64,
        #[arg(long, default_value = "pdr_trajectory.txt")]
        output: String,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SetName {
    Train,
    Val,
    Test,
}

fn load_split(dir: &Path) -> anyhow::Result<DatasetSplit> {
    DatasetSplit::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn set_of(split: &DatasetSplit, set: SetName) -> &[LabeledWindow] {
    match set {
        SetName::Train => &split.train,
        SetName::Val => &split.val,
        SetName::Test => &split.test,
    }
}

struct Ctx {
    scn: Scenario,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err
                .chain()
                .any(|e| e.downcast_ref::<pedtrack::Error>().is_some_and(pedtrack::Error::is_usage));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut scn = match &cli.config {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        scn.seed = seed;
    }
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx { scn, out: cli.out_dir };
    match cli.command {
        Command::Synth { spikes_only, walks_only } => synth(&ctx, !spikes_only, !walks_only),
        Command::Track { lidar, period } => track_cmd(&ctx, &lidar, period),
        Command::Sync { imu, lidar, method } => sync_cmd(&ctx, &imu, &lidar, method),
        Command::Segment { data_dir, delay } => segment_cmd(&ctx, data_dir.as_deref(), delay),
        Command::Train { dataset, target, variant } => train_cmd(&ctx, &dataset, target, variant),
        Command::Predict { model, dataset, set, output } => predict_cmd(&ctx, &model, &dataset, set, &output),
        Command::Reconstruct { model_dx, model_dy, dataset, run } => {
            reconstruct_cmd(&ctx, &model_dx, &model_dy, &dataset, run)
        }
        Command::Eval { model_dx, model_dy, dataset } => eval_cmd(&ctx, &model_dx, &model_dy, &dataset),
        Command::Ablate { dataset, variants } => ablate_cmd(&ctx, &dataset, &variants),
        Command::Plot { kind, input, output, title } => plot_cmd(&ctx, kind, &input, &output, &title),
        Command::Pdr { imu, threshold, min_gap, theta0, output } => {
            let run = read_imu(&imu)?;
            let cfg = PdrConfig { threshold, min_gap, theta0, ..Default::default() };
            let traj = pdr_reconstruct(&run, &cfg)?;
            let path = ctx.path(&output);
            write_trajectory(&traj, &path)?;
            println!("{} points, {:.3} m path -> {}", traj.len(), traj.path_length(), path.display());
            Ok(())
        }
    }
}

fn spike_name(i: usize) -> String {
    format!("spike{i:02}")
}

fn synth(ctx: &Ctx, walks: bool, spikes: bool) -> anyhow::Result<()> {
    let scn = &ctx.scn;
    fs::write(ctx.path("scenario.txt"), scn.to_text())?;
    if spikes {
        for i in 0..scn.spike_recordings {
            let (imu, lidar) = simulate_spike_recording(scn, i)?;
            write_imu(&imu, &ctx.path(&format!("{}_imu.txt", spike_name(i))))?;
            write_lidar(&lidar, &ctx.path(&format!("{}_lidar.txt", spike_name(i))))?;
        }
        println!("{} spike recordings", scn.spike_recordings);
    }
    if walks {
        for i in 0..scn.runs {
            let rec = simulate_recording(scn, i)?;
            write_imu(&rec.imu, &ctx.path(&format!("{}_imu.txt", rec.id)))?;
            write_lidar(&rec.lidar, &ctx.path(&format!("{}_lidar.txt", rec.id)))?;
            write_trajectory(&rec.truth, &ctx.path(&format!("{}_truth.txt", rec.id)))?;
            println!("{}: {:.1} s, {:.1} m walked", rec.id, rec.truth.span(), rec.truth.path_length());
        }
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    let s = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    s.strip_suffix("_lidar").map(str::to_string).unwrap_or(s)
}

fn track_cmd(ctx: &Ctx, lidar: &Path, period: f64) -> anyhow::Result<()> {
    let run = read_lidar(lidar)?;
    let tr = track(&run, &ctx.scn.track)?;
    let name = stem(lidar);
    write_trajectory(&tr.as_trajectory(), &ctx.path(&format!("{name}_track.txt")))?;
    let labels = window_displacements(&tr, period);
    write_labels(&labels, &ctx.path(&format!("{name}_labels.txt")))?;
    println!(
        "{} centroids ({} scans without a subject), {} labels",
        tr.points.len(),
        tr.dropped.len(),
        labels.len()
    );
    Ok(())
}

fn sync_cmd(ctx: &Ctx, imu: &[PathBuf], lidar: &[PathBuf], method: DelayMethod) -> anyhow::Result<()> {
    if imu.len() != lidar.len() {
        return Err(pedtrack::Error::Usage(format!(
            "{} IMU files but {} LiDAR files",
            imu.len(),
            lidar.len()
        ))
        .into());
    }
    let mut names = Vec::new();
    let mut traces = Vec::new();
    if imu.is_empty() {
        for i in 0..ctx.scn.spike_recordings {
            let (a, b) = simulate_spike_recording(&ctx.scn, i)?;
            traces.push(pipeline::spike_traces(&a, &b, &ctx.scn)?);
            names.push(spike_name(i));
        }
    } else {
        for (a, b) in imu.iter().zip(lidar) {
            traces.push(pipeline::spike_traces(&read_imu(a)?, &read_lidar(b)?, &ctx.scn)?);
            names.push(stem(b));
        }
    }
    let est = average_delay(&traces, method)?;
    let path = ctx.path("sync.csv");
    let mut f = fs::File::create(&path)?;
    writeln!(f, "recording,delay_s")?;
    for (n, d) in names.iter().zip(&est.per_recording) {
        writeln!(f, "{n},{d}")?;
        println!("{n}: {:.3} ms", d * 1e3);
    }
    writeln!(f, "mean,{}", est.mean)?;
    writeln!(f, "std,{}", est.std)?;
    println!("mean {:.3} ms, std {:.3} ms -> {}", est.mean * 1e3, est.std * 1e3, path.display());
    Ok(())
}

fn segment_cmd(ctx: &Ctx, data_dir: Option<&Path>, delay: Option<f64>) -> anyhow::Result<()> {
    let scn = &ctx.scn;
    let dir = ctx.path("dataset");
    let (split, norm, delay) = match data_dir {
        None => {
            let mut s = scn.clone();
            if delay.is_some() {
                s.spike_recordings = 0;
            }
            let ds = build_dataset(&s)?;
            (ds.split, ds.normalizer, delay.unwrap_or(ds.delay.mean))
        }
        Some(src) => {
            let delay = match delay {
                Some(d) => d,
                None => {
                    let traces = (0..scn.spike_recordings)
                        .map(|i| {
                            let n = spike_name(i);
                            let imu = read_imu(&src.join(format!("{n}_imu.txt")))?;
                            let lidar = read_lidar(&src.join(format!("{n}_lidar.txt")))?;
                            pipeline::spike_traces(&imu, &lidar, scn)
                        })
                        .collect::<pedtrack::Result<Vec<_>>>()?;
                    average_delay(&traces, DelayMethod::Peak)?.mean
                }
            };
            let mut windows = Vec::new();
            for i in 0..scn.runs {
                let id = run_id(i);
                let imu = read_imu(&src.join(format!("{id}_imu.txt")))?;
                let lidar = read_lidar(&src.join(format!("{id}_lidar.txt")))?;
                let centroids = track(&lidar, &scn.track)?;
                drop(lidar);
                windows.extend(label_windows(&id, &imu, &centroids, delay, scn)?);
            }
            let test_ids: Vec<String> = (scn.runs - scn.test_runs..scn.runs).map(run_id).collect();
            let mut split = split_dataset(windows, scn.split_ratio, scn.seed, &test_ids)?;
            let norm = split.normalize();
            (split, norm, delay)
        }
    };
    split.save(&dir, Some(&norm))?;
    println!(
        "delay {:.3} ms; {} train, {} val, {} test windows -> {}",
        delay * 1e3,
        split.train.len(),
        split.val.len(),
        split.test.len(),
        dir.display()
    );
    Ok(())
}

fn train_cmd(ctx: &Ctx, dataset: &Path, target: Target, variant: Variant) -> anyhow::Result<()> {
    let split = load_split(dataset)?;
    let model = variant.model_config(ctx.scn.model);
    let mut cfg = ctx.scn.train;
    cfg.seed = ctx.scn.seed;
    let (params, history) = train_model(&split.train, &split.val, model, &cfg, target)?;
    let model_path = ctx.path(&format!("{variant}_{target}.model"));
    save_model(&params, &model_path)?;
    write_history(&history, &ctx.path(&format!("{variant}_{target}_history.csv")))?;
    let last = history.epochs.last().expect("history has the initial row");
    println!(
        "{variant} {target}: val MAE {:.4} m after {} epochs (best {:.4}) -> {}",
        last.val_mae,
        last.epoch,
        history.best_val(),
        model_path.display()
    );
    Ok(())
}

fn predict_cmd(ctx: &Ctx, model: &Path, dataset: &Path, set: SetName, output: &str) -> anyhow::Result<()> {
    let params = load_model(model)?;
    let split = load_split(dataset)?;
    let windows = set_of(&split, set);
    let pred = predict(&params, windows)?;
    let path = ctx.path(output);
    let mut f = fs::File::create(&path)?;
    writeln!(f, "run,start_index,t_start,prediction,dx,dy")?;
    for (w, p) in windows.iter().zip(&pred) {
        writeln!(f, "{},{},{},{},{},{}", w.run_id, w.start_index, w.t_start, p, w.dx, w.dy)?;
    }
    println!("{} predictions -> {}", pred.len(), path.display());
    Ok(())
}

fn predict_pair(dx: &Path, dy: &Path, windows: &[LabeledWindow]) -> anyhow::Result<Vec<(f64, f64)>> {
    let px = load_model(dx)?;
    let py = load_model(dy)?;
    Ok(predict(&px, windows)?.into_iter().zip(predict(&py, windows)?).collect())
}

fn reconstruct_cmd(
    ctx: &Ctx,
    model_dx: &Path,
    model_dy: &Path,
    dataset: &Path,
    run: Option<String>,
) -> anyhow::Result<()> {
    let split = load_split(dataset)?;
    let all: Vec<LabeledWindow> = split.train.iter().chain(&split.val).chain(&split.test).cloned().collect();
    let run = match run.or_else(|| split.test.first().map(|w| w.run_id.clone())) {
        Some(r) => r,
        None => bail!("dataset has no test windows; pass --run"),
    };
    let length = ctx.scn.window_s;
    let kept = non_overlapping(&all, &run, length);
    if kept.is_empty() {
        return Err(pedtrack::Error::Usage(format!("no windows for run {run:?}")).into());
    }
    let owned: Vec<LabeledWindow> = kept.iter().map(|w| (*w).clone()).collect();
    let pred = predict_pair(model_dx, model_dy, &owned)?;
    let truth = truth_of(&owned);
    let predicted = reconstruct_trajectory(&window_labels(&kept, &pred, length)?, Point2::ZERO)?;
    let actual = reconstruct_trajectory(&window_labels(&kept, &truth, length)?, Point2::ZERO)?;
    write_trajectory(&predicted, &ctx.path(&format!("{run}_predicted.txt")))?;
    write_trajectory(&actual, &ctx.path(&format!("{run}_labels_path.txt")))?;
    let fig = path_figure(&format!("{run}: labels vs predictions"), &[("ground truth", &actual), ("prediction", &predicted)]);
    emit_plot(&fig, &ctx.path(&format!("{run}_path.svg")))?;
    let end_err = predicted.points.last().unwrap().pos.dist(actual.points.last().unwrap().pos);
    println!("{run}: {} windows, endpoint error {:.3} m", kept.len(), end_err);
    Ok(())
}

fn path_figure(title: &str, paths: &[(&str, &Trajectory)]) -> Figure {
    Figure {
        kind: PlotKind::Path,
        title: title.into(),
        x_label: "x (m)".into(),
        y_label: "y (m)".into(),
        categories: Vec::new(),
        series: paths
            .iter()
            .map(|(name, t)| Series {
                name: name.to_string(),
                x: t.points.iter().map(|p| p.pos.x).collect(),
                y: t.points.iter().map(|p| p.pos.y).collect(),
            })
            .collect(),
    }
}

fn write_reports(path: &Path, reports: &[MaeReport]) -> anyhow::Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "model,dataset,mae_dx,mae_dy,windows")?;
    for r in reports {
        writeln!(f, "{},{},{},{},{}", r.model_name, r.dataset_name, r.mae_dx, r.mae_dy, r.n_windows)?;
    }
    Ok(())
}

fn eval_cmd(ctx: &Ctx, model_dx: &Path, model_dy: &Path, dataset: &Path) -> anyhow::Result<()> {
    let split = load_split(dataset)?;
    let mut reports = Vec::new();
    for (name, set) in [("val", &split.val), ("test", &split.test)] {
        if set.is_empty() {
            continue;
        }
        let pred = predict_pair(model_dx, model_dy, set)?;
        reports.push(mae_report(&pred, &truth_of(set), "model", name)?);
        reports.push(mean_baseline(&split.train, set, name)?);
    }
    for r in &reports {
        println!("{r}");
    }
    write_reports(&ctx.path("eval.csv"), &reports)
}

fn ablate_cmd(ctx: &Ctx, dataset: &Path, variants: &[Variant]) -> anyhow::Result<()> {
    let split = load_split(dataset)?;
    let mut cfg = ctx.scn.train;
    cfg.seed = ctx.scn.seed;
    let rows = ablation_run(variants, &split, ctx.scn.model, &cfg, Some(&ctx.out))?;
    let table = format_ablation(&rows);
    print!("{table}");
    fs::write(ctx.path("ablation.txt"), &table)?;
    let mut reports = Vec::new();
    let mut names = Vec::new();
    let (mut vx, mut vy) = (Vec::new(), Vec::new());
    for row in &rows {
        if let Ok(r) = &row.outcome {
            reports.push(r.val.clone());
            reports.extend(r.test.clone());
            names.push(r.variant.name().to_string());
            vx.push(r.val.mae_dx);
            vy.push(r.val.mae_dy);
        }
    }
    write_reports(&ctx.path("ablation.csv"), &reports)?;
    if !names.is_empty() {
        let idx: Vec<f64> = (0..names.len()).map(|i| i as f64).collect();
        let fig = Figure {
            kind: PlotKind::Bar,
            title: "validation MAE by variant".into(),
            x_label: "variant".into(),
            y_label: "MAE (m)".into(),
            categories: names,
            series: vec![
                Series { name: "dx".into(), x: idx.clone(), y: vx },
                Series { name: "dy".into(), x: idx, y: vy },
            ],
        };
        emit_plot(&fig, &ctx.path("ablation.svg"))?;
    }
    if rows.iter().all(|r| r.outcome.is_err()) {
        bail!("every variant failed");
    }
    Ok(())
}

fn plot_cmd(ctx: &Ctx, kind: PlotKind, input: &[PathBuf], output: &str, title: &str) -> anyhow::Result<()> {
    let fig = match kind {
        PlotKind::Path => {
            let trajs = input.iter().map(|p| read_trajectory(p)).collect::<pedtrack::Result<Vec<_>>>()?;
            let names: Vec<String> = input.iter().map(|p| stem(p)).collect();
            let pairs: Vec<(&str, &Trajectory)> = names.iter().map(String::as_str).zip(&trajs).collect();
            path_figure(title, &pairs)
        }
        PlotKind::TrainingCurve => {
            let mut series = Vec::new();
            for p in input {
                let h = read_history(p)?;
                let x: Vec<f64> = h.epochs.iter().map(|e| e.epoch as f64).collect();
                let prefix = if input.len() > 1 { format!("{} ", stem(p)) } else { String::new() };
                series.push(Series { name: format!("{prefix}train"), x: x.clone(), y: h.train_curve() });
                series.push(Series { name: format!("{prefix}val"), x, y: h.val_curve() });
            }
            Figure {
                kind,
                title: title.into(),
                x_label: "epoch".into(),
                y_label: "MAE (m)".into(),
                categories: Vec::new(),
                series,
            }
        }
        PlotKind::Bar => {
            let [file] = input else {
                return Err(pedtrack::Error::Usage("bar plots take one name,value CSV".into()).into());
            };
            let text = fs::read_to_string(file)?;
            let mut categories = Vec::new();
            let mut y = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("name,")) {
                    continue;
                }
                let (name, value) = line
                    .split_once(',')
                    .ok_or_else(|| anyhow::anyhow!("{}:{}: expected name,value", file.display(), i + 1))?;
                categories.push(name.trim().to_string());
                y.push(value.trim().parse::<f64>().with_context(|| format!("{}:{}", file.display(), i + 1))?);
            }
            let x = (0..y.len()).map(|i| i as f64).collect();
            Figure {
                kind,
                title: title.into(),
                x_label: String::new(),
                y_label: String::new(),
                categories,
                series: vec![Series { name: stem(file), x, y }],
            }
        }
    };
    let path = ctx.path(output);
    let csv = emit_plot(&fig, &path)?;
    println!("{} (data: {})", path.display(), csv.display());
    Ok(())
}
