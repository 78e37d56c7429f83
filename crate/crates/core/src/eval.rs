//! PPMC scoring and report files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ArticTrajectory, CHANNEL_NAMES, TV_CHANNELS};
use crate::error::{Error, Result};
use crate::fmt::sig6;

/// Pearson correlation of two equally long series. A constant series has
/// no defined correlation; it scores 0 with a warning.
pub fn ppmc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "ppmc",
            left: vec![x.len()],
            right: vec![y.len()],
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidLength {
            op: "ppmc",
            len: x.len(),
            reason: "need at least two samples".into(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        log::warn!("ppmc of a constant series is undefined; scoring 0");
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn row(t: &ArticTrajectory, c: usize) -> Vec<f64> {
    t.channel(c).iter().map(|&v| v as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub item: String,
    pub per_channel: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpmcReport {
    pub channels: Vec<String>,
    /// Mean over items of the per-item PPMC, per channel.
    pub per_channel: Vec<f64>,
    /// Mean of the six tract-variable entries; absent with fewer channels.
    pub avg_6tvs: Option<f64>,
    pub avg_all: f64,
    pub per_item: Vec<ItemScore>,
}

/// Per-item PPMC for every channel, averaged over items.
pub fn ppmc_report(ids: &[String], estimates: &[ArticTrajectory], truths: &[ArticTrajectory]) -> Result<PpmcReport> {
    if estimates.len() != truths.len() || ids.len() != truths.len() {
        return Err(Error::ShapeMismatch {
            op: "ppmc_report",
            left: vec![estimates.len()],
            right: vec![truths.len()],
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyDataset("ppmc_report".into()));
    }
    let channels = truths[0].channels();
    let mut per_item = Vec::with_capacity(truths.len());
    for ((id, e), t) in ids.iter().zip(estimates).zip(truths) {
        if e.channels() != t.channels() || e.frames() != t.frames() || t.channels() != channels {
            return Err(Error::ShapeMismatch {
                op: "ppmc_report item",
                left: vec![e.channels(), e.frames()],
                right: vec![t.channels(), t.frames()],
            });
        }
        let scores = (0..channels).map(|c| ppmc(&row(e, c), &row(t, c))).collect::<Result<_>>()?;
        per_item.push(ItemScore {
            item: id.clone(),
            per_channel: scores,
        });
    }
    let per_channel: Vec<f64> = (0..channels)
        .map(|c| per_item.iter().map(|s| s.per_channel[c]).sum::<f64>() / per_item.len() as f64)
        .collect();
    let avg_6tvs = (channels >= TV_CHANNELS).then(|| per_channel[..TV_CHANNELS].iter().sum::<f64>() / TV_CHANNELS as f64);
    let avg_all = per_channel.iter().sum::<f64>() / channels as f64;
    let names = (0..channels)
        .map(|c| CHANNEL_NAMES.get(c).map_or_else(|| format!("ch{c}"), |s| s.to_string()))
        .collect();
    Ok(PpmcReport {
        channels: names,
        per_channel,
        avg_6tvs,
        avg_all,
        per_item,
    })
}

const TABLE_COLUMNS: [&str; 9] = ["LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD", "Ap", "Per", "Pitch"];

fn table_header() -> String {
    format!("model,{},AVG_6TVs,AVG_all\n", TABLE_COLUMNS.join(","))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), sig6)
}

impl PpmcReport {
    /// One row in the column order of the PPMC table.
    pub fn table_row(&self, model: &str) -> String {
        let mut s = model.to_string();
        for c in 0..TABLE_COLUMNS.len() {
            s.push(',');
            s.push_str(&opt(self.per_channel.get(c).copied()));
        }
        let _ = writeln!(s, ",{},{}", opt(self.avg_6tvs), sig6(self.avg_all));
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let per: serde_json::Map<String, serde_json::Value> = self
            .channels
            .iter()
            .zip(&self.per_channel)
            .map(|(n, v)| (n.clone(), serde_json::json!(v)))
            .collect();
        serde_json::json!({
            "avg_6tvs": self.avg_6tvs,
            "avg_all": self.avg_all,
            "per_channel": per,
        })
    }

    /// Writes `ppmc_table.csv`, `ppmc_items.csv` and `summary.json`.
    pub fn write(&self, dir: &Path, model: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_table(&dir.join("ppmc_table.csv"), &[(model, self)])?;
        let mut items = format!("item,{}\n", self.channels.join(","));
        for s in &self.per_item {
            let vals: Vec<String> = s.per_channel.iter().map(|&v| sig6(v)).collect();
            let _ = writeln!(items, "{},{}", s.item, vals.join(","));
        }
        let p = dir.join("ppmc_items.csv");
        std::fs::write(&p, items).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&self.summary_json())?;
        std::fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))
    }
}

/// Table with one row per model.
pub fn write_table(path: &Path, rows: &[(&str, &PpmcReport)]) -> Result<()> {
    let mut s = table_header();
    for (name, r) in rows {
        s.push_str(&r.table_row(name));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Averages table: one row per model with the 6-TV and all-channel means.
pub fn write_average_table(path: &Path, rows: &[(&str, &PpmcReport)]) -> Result<()> {
    let mut s = String::from("model,AVG_6TVs,AVG_all\n");
    for (name, r) in rows {
        let _ = writeln!(s, "{name},{},{}", opt(r.avg_6tvs), sig6(r.avg_all));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Long-format CSV `frame,channel,truth,estimate` for plotting.
pub fn export_trajectories(estimate: &ArticTrajectory, truth: &ArticTrajectory, path: &Path) -> Result<()> {
    if estimate.channels() != truth.channels() || estimate.frames() != truth.frames() {
        return Err(Error::ShapeMismatch {
            op: "export_trajectories",
            left: vec![estimate.channels(), estimate.frames()],
            right: vec![truth.channels(), truth.frames()],
        });
    }
    let mut s = String::from("frame,channel,truth,estimate\n");
    for c in 0..truth.channels() {
        let name = CHANNEL_NAMES.get(c).map_or_else(|| format!("ch{c}"), |s| s.to_string());
        for t in 0..truth.frames() {
            let _ = writeln!(s, "{t},{name},{},{}", truth.get(c, t), estimate.get(c, t));
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_trajectories`] back as
/// `(truth, estimate)`.
pub fn read_exported(path: &Path) -> Result<(ArticTrajectory, ArticTrajectory)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(usize, String, f32, f32)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::Malformed {
            what: "trajectory export",
            path: path.to_path_buf(),
            reason: format!("line {}", i + 1),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].to_string(),
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
        ));
    }
    let frames = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut names: Vec<&str> = Vec::new();
    for r in &rows {
        if !names.contains(&r.1.as_str()) {
            names.push(&r.1);
        }
    }
    let channels = names.len();
    if channels * frames != rows.len() {
        return Err(Error::Malformed {
            what: "trajectory export",
            path: path.to_path_buf(),
            reason: "incomplete frame/channel grid".into(),
        });
    }
    let mut truth = ArticTrajectory::zeros(channels, frames);
    let mut est = ArticTrajectory::zeros(channels, frames);
    for r in &rows {
        let c = names.iter().position(|n| *n == r.1).unwrap();
        truth.channel_mut(c)[r.0] = r.2;
        est.channel_mut(c)[r.0] = r.3;
    }
    Ok((truth, est))
}
