//! Model files and training-history CSVs.
//!
//! A model file is a version line, a config line, a shape table, then each
//! tensor's values row-major, one matrix row per line:
//!
//! ```text
//! pedtrack-model 1
//! config input=12 hidden=256 depth=2 pooling=attention attention=64 dense=64 dropout=0.25
//! tensors 21
//! gru0.w_ux 256 12
//! ...
//! data
//! <rows>
//! end
//! ```

use std::io::Write;
use std::path::Path;

use super::model::{ModelConfig, ModelParams};
use super::train::{EpochRecord, History};
use crate::error::{Error, Result};
use crate::textio::{self, parse_f64, TextTable};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "pedtrack-model";

pub fn save_model(params: &ModelParams, path: &Path) -> Result<()> {
    let c = params.config;
    let mut w = textio::create(path)?;
    writeln!(w, "{MAGIC} {MODEL_FORMAT_VERSION}")?;
    writeln!(
        w,
        "config input={} hidden={} depth={} pooling={} attention={} dense={} dropout={}",
        c.input_dim, c.hidden, c.depth, c.pooling, c.attention_width, c.dense, c.dropout
    )?;
    let tensors = params.tensors();
    let shapes = params.shapes();
    writeln!(w, "tensors {}", tensors.len())?;
    for ((name, _), (r, c)) in tensors.iter().zip(&shapes) {
        writeln!(w, "{name} {r} {c}")?;
    }
    writeln!(w, "data")?;
    for ((_, t), (_, cols)) in tensors.iter().zip(&shapes) {
        for row in t.chunks(*cols) {
            textio::write_row(&mut w, row)?;
        }
    }
    writeln!(w, "end")?;
    w.flush()?;
    Ok(())
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn parse_config(line: &str) -> Result<ModelConfig> {
    let mut c = ModelConfig::default();
    let rest = line
        .strip_prefix("config ")
        .ok_or_else(|| format_err("missing config line"))?;
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad config entry {kv:?}")))?;
        let int = || v.parse::<usize>().map_err(|_| format_err(format!("bad {k}={v}")));
        match k {
            "input" => c.input_dim = int()?,
            "hidden" => c.hidden = int()?,
            "depth" => c.depth = int()?,
            "pooling" => c.pooling = v.parse().map_err(|_| format_err(format!("bad pooling {v}")))?,
            "attention" => c.attention_width = int()?,
            "dense" => c.dense = int()?,
            "dropout" => c.dropout = parse_f64(v).map_err(format_err)?,
            _ => return Err(format_err(format!("unknown config key {k}"))),
        }
    }
    Ok(c)
}

/// Either the whole model or an error; nothing partial is returned.
pub fn load_model(path: &Path) -> Result<ModelParams> {
    let text = crate::textio::read_text(path)?;
    let mut lines = text.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| format_err(format!("truncated before {what}")))
    };
    let head = next("header")?;
    let version = head
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| format_err("not a model file"))?;
    if version != MODEL_FORMAT_VERSION.to_string() {
        return Err(format_err(format!(
            "format version {version}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    let config = parse_config(next("config")?)?;
    let mut params = ModelParams::zeros(config).map_err(|e| format_err(e.to_string()))?;
    let expect_shapes = params.shapes();
    let expect_names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let count: usize = next("tensor count")?
        .strip_prefix("tensors ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| format_err("bad tensor count line"))?;
    if count != expect_shapes.len() {
        return Err(format_err(format!(
            "{count} tensors, config implies {}",
            expect_shapes.len()
        )));
    }
    for (name, shape) in expect_names.iter().zip(&expect_shapes) {
        let line = next("shape table")?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let ok = f.len() == 3
            && f[0] == name
            && f[1].parse::<usize>().ok() == Some(shape.0)
            && f[2].parse::<usize>().ok() == Some(shape.1);
        if !ok {
            return Err(format_err(format!(
                "shape entry {line:?}, expected {name} {} {}",
                shape.0, shape.1
            )));
        }
    }
    if next("data")? != "data" {
        return Err(format_err("missing data marker"));
    }
    for (t, (_, cols)) in params.tensors_mut().into_iter().zip(&expect_shapes) {
        for row in t.chunks_mut(*cols) {
            let line = next("tensor data")?;
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != *cols {
                return Err(format_err(format!(
                    "row has {} values, expected {cols}",
                    vals.len()
                )));
            }
            for (dst, s) in row.iter_mut().zip(vals) {
                *dst = parse_f64(s).map_err(format_err)?;
            }
        }
    }
    if next("end marker")? != "end" {
        return Err(format_err("missing end marker"));
    }
    Ok(params)
}

pub fn write_history(history: &History, path: &Path) -> Result<()> {
    let mut w = textio::create(path)?;
    writeln!(w, "epoch,train_mae,val_mae,lr")?;
    for e in &history.epochs {
        writeln!(w, "{},{},{},{}", e.epoch, e.train_mae, e.val_mae, e.lr)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<History> {
    let table = TextTable::read(path)?;
    let mut epochs = Vec::with_capacity(table.rows.len());
    for (line, raw) in &table.rows {
        let v = table.floats(*line, raw, 4)?;
        epochs.push(EpochRecord {
            epoch: v[0] as usize,
            train_mae: v[1],
            val_mae: v[2],
            lr: v[3],
        });
    }
    Ok(History { epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{model_forward, Mode, Pooling};
    use std::fs;
    use ndarray::Array2;

    fn cfg(pooling: Pooling) -> ModelConfig {
        ModelConfig {
            input_dim: 4,
            hidden: 5,
            depth: 2,
            pooling,
            attention_width: 3,
            dense: 4,
            dropout: 0.25,
        }
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        for pooling in [Pooling::Attention, Pooling::Last] {
            let p = ModelParams::init(cfg(pooling), 3).unwrap();
            let path = dir.path().join("m.txt");
            save_model(&p, &path).unwrap();
            let q = load_model(&path).unwrap();
            assert_eq!(p, q);
            let x = Array2::from_shape_fn((9, 4), |(i, j)| ((i * 4 + j) as f64).sin());
            let a = model_forward(x.view(), &p, Mode::Infer).unwrap().0;
            let b = model_forward(x.view(), &q, Mode::Infer).unwrap().0;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        save_model(&ModelParams::init(cfg(Pooling::Attention), 3).unwrap(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let keep = text.lines().count() - 4;
        let cut: String = text.lines().take(keep).map(|l| format!("{l}\n")).collect();
        fs::write(&path, cut).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        save_model(&ModelParams::init(cfg(Pooling::Last), 3).unwrap(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replacen("pedtrack-model 1", "pedtrack-model 9", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = History {
            epochs: vec![
                EpochRecord { epoch: 0, train_mae: 0.5, val_mae: 0.6, lr: 1e-3 },
                EpochRecord { epoch: 1, train_mae: 0.1 + 0.2, val_mae: 0.4, lr: 2e-4 },
            ],
        };
        let p = dir.path().join("h.csv");
        write_history(&h, &p).unwrap();
        assert_eq!(read_history(&p).unwrap(), h);
    }
}
