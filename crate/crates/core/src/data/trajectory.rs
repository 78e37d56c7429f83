use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audfront::PITCH_SCALE_HZ;
use crate::error::{Error, Result};

/// Channel names in storage order.
pub const CHANNEL_NAMES: [&str; 9] = ["LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD", "ap", "per", "pitch_hz"];
pub const TV_CHANNELS: usize = 6;
pub const PITCH_CHANNEL: usize = 8;
pub const PERIODICITY_CHANNEL: usize = 7;
/// Trajectory frames per second.
pub const TRAJ_RATE: f64 = 100.0;
pub const TRAJ_HEADER: &str = "time_s,LA,LP,TBCL,TBCD,TTCL,TTCD,ap,per,pitch_hz";

/// Nominal value range of channel `c` in physical units.
pub fn channel_range(c: usize) -> (f64, f64) {
    match c {
        0..=5 => (-1.0, 1.0),
        6 | 7 => (0.0, 1.0),
        _ => (0.0, PITCH_SCALE_HZ),
    }
}

/// `N × k` articulatory time series at 100 Hz in physical units
/// (TVs in [-1, 1], aperiodicity/periodicity in [0, 1], pitch in Hz).
/// Stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ArticTrajectory {
    channels: usize,
    frames: usize,
    values: Vec<f32>,
}

impl ArticTrajectory {
    pub fn new(channels: usize, frames: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 || channels > CHANNEL_NAMES.len() || frames == 0 || values.len() != channels * frames {
            return Err(Error::ShapeMismatch {
                op: "trajectory",
                left: vec![channels, frames],
                right: vec![values.len()],
            });
        }
        Ok(Self { channels, frames, values })
    }

    pub fn zeros(channels: usize, frames: usize) -> Self {
        Self::new(channels, frames, vec![0.0; channels * frames]).expect("valid shape")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.values[c * self.frames..(c + 1) * self.frames]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.values[c * self.frames..(c + 1) * self.frames]
    }

    pub fn get(&self, c: usize, t: usize) -> f32 {
        self.values[c * self.frames + t]
    }

    /// The first `n` channels.
    pub fn select(&self, n: usize) -> Result<Self> {
        if n > self.channels {
            return Err(Error::ShapeMismatch {
                op: "select channels",
                left: vec![self.channels],
                right: vec![n],
            });
        }
        Self::new(n, self.frames, self.values[..n * self.frames].to_vec())
    }

    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::InvalidLength {
                op: "trajectory crop",
                len: self.frames,
                reason: format!("cannot take {len} frames from {start}"),
            });
        }
        let mut v = Vec::with_capacity(self.channels * len);
        for c in 0..self.channels {
            v.extend_from_slice(&self.channel(c)[start..start + len]);
        }
        Self::new(self.channels, len, v)
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / TRAJ_RATE
    }

    /// Writes the 9-channel CSV format. Values use the shortest
    /// representation that parses back to the same `f32`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.channels != CHANNEL_NAMES.len() {
            return Err(Error::Invalid(format!(
                "trajectory CSV needs {} channels, have {}",
                CHANNEL_NAMES.len(),
                self.channels
            )));
        }
        let mut out = String::with_capacity(self.values.len() * 10);
        out.push_str(TRAJ_HEADER);
        out.push('\n');
        for t in 0..self.frames {
            write!(out, "{}", crate::fmt::sig6(t as f64 / TRAJ_RATE)).unwrap();
            for c in 0..self.channels {
                write!(out, ",{}", self.get(c, t)).unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed {
            what: "trajectory CSV",
            path: path.to_path_buf(),
            reason,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => malformed(e.to_string()),
        })?;
        let header = rdr.headers().map_err(|e| malformed(e.to_string()))?;
        let got: Vec<&str> = header.iter().map(str::trim).collect();
        if got.join(",") != TRAJ_HEADER {
            return Err(malformed(format!("expected header `{TRAJ_HEADER}`, found `{}`", got.join(","))));
        }
        let mut rows: Vec<[f32; 9]> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| malformed(e.to_string()))?;
            if rec.len() != 10 {
                return Err(malformed(format!("row {} has {} columns", i + 1, rec.len())));
            }
            let mut row = [0f32; 9];
            for (c, field) in rec.iter().skip(1).enumerate() {
                row[c] = field
                    .trim()
                    .parse()
                    .map_err(|_| malformed(format!("row {} column {}: `{field}`", i + 1, CHANNEL_NAMES[c])))?;
                if !row[c].is_finite() {
                    return Err(malformed(format!("row {} column {} is not finite", i + 1, CHANNEL_NAMES[c])));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(malformed("no data rows".into()));
        }
        let frames = rows.len();
        let mut values = vec![0.0; 9 * frames];
        for (t, row) in rows.iter().enumerate() {
            for c in 0..9 {
                values[c * frames + t] = row[c];
            }
        }
        Self::new(9, frames, values)
    }
}

/// Per-channel z-score statistics computed on model units (pitch divided
/// by `PITCH_SCALE_HZ`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Lower bound on σ so constant channels normalise to zero.
pub const STD_FLOOR: f64 = 1e-8;

fn unit_scale(c: usize) -> f64 {
    if c == PITCH_CHANNEL {
        PITCH_SCALE_HZ
    } else {
        1.0
    }
}

impl ChannelStats {
    /// Population mean and standard deviation over all frames of all
    /// trajectories.
    pub fn from_trajectories<'a>(trajs: impl IntoIterator<Item = &'a ArticTrajectory>) -> Result<Self> {
        let mut count = 0usize;
        let trajs: Vec<&ArticTrajectory> = trajs.into_iter().collect();
        let n = trajs
            .first()
            .ok_or_else(|| Error::EmptyDataset("no trajectories for channel statistics".into()))?
            .channels();
        // sums are taken relative to the first value so a constant channel
        // gets its value back as the mean exactly
        let first: Vec<f64> = (0..n).map(|c| trajs[0].get(c, 0) as f64 / unit_scale(c)).collect();
        let mut sum = vec![0.0; n];
        for t in &trajs {
            if t.channels() != n {
                return Err(Error::ShapeMismatch {
                    op: "channel stats",
                    left: vec![n],
                    right: vec![t.channels()],
                });
            }
            for c in 0..n {
                let s = unit_scale(c);
                sum[c] += t.channel(c).iter().map(|&v| v as f64 / s - first[c]).sum::<f64>();
            }
            count += t.frames();
        }
        let mean: Vec<f64> = sum.iter().zip(&first).map(|(s, f)| f + s / count as f64).collect();
        let mut var = vec![0.0; n];
        for t in &trajs {
            for c in 0..n {
                let s = unit_scale(c);
                var[c] += t.channel(c).iter().map(|&v| (v as f64 / s - mean[c]).powi(2)).sum::<f64>();
            }
        }
        let std = var.iter().map(|v| (v / count as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    /// Identity statistics (zero mean, unit σ) for `n` channels.
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Channel-major normalised values ready for a model.
    pub fn normalize(&self, traj: &ArticTrajectory) -> Result<Vec<f32>> {
        if traj.channels() != self.channels() {
            return Err(Error::ShapeMismatch {
                op: "normalize",
                left: vec![self.channels()],
                right: vec![traj.channels()],
            });
        }
        let mut out = Vec::with_capacity(traj.values().len());
        for c in 0..self.channels() {
            let s = unit_scale(c);
            out.extend(traj.channel(c).iter().map(|&v| ((v as f64 / s - self.mean[c]) / self.std[c]) as f32));
        }
        Ok(out)
    }

    pub fn denormalize(&self, values: &[f32], frames: usize) -> Result<ArticTrajectory> {
        let n = self.channels();
        if values.len() != n * frames {
            return Err(Error::ShapeMismatch {
                op: "denormalize",
                left: vec![n, frames],
                right: vec![values.len()],
            });
        }
        let mut out = Vec::with_capacity(values.len());
        for c in 0..n {
            let s = unit_scale(c);
            out.extend(
                values[c * frames..(c + 1) * frames]
                    .iter()
                    .map(|&v| ((v as f64 * self.std[c] + self.mean[c]) * s) as f32),
            );
        }
        ArticTrajectory::new(n, frames, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(ch: usize, frames: usize, f: impl Fn(usize, usize) -> f32) -> ArticTrajectory {
        let mut v = Vec::new();
        for c in 0..ch {
            for t in 0..frames {
                v.push(f(c, t));
            }
        }
        ArticTrajectory::new(ch, frames, v).unwrap()
    }

    #[test]
    fn stats_hand_example() {
        let t = traj(1, 2, |_, t| [1.0, 3.0][t]);
        let s = ChannelStats::from_trajectories([&t]).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.std, vec![1.0]);
    }

    #[test]
    fn constant_channel_normalises_to_zero() {
        let t = traj(9, 10, |c, _| c as f32 * 0.1 + 0.05);
        let s = ChannelStats::from_trajectories([&t]).unwrap();
        let z = s.normalize(&t).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalise_round_trip() {
        let t = traj(9, 50, |c, t| {
            if c == 8 {
                120.0 + 40.0 * (t as f32 * 0.3).sin()
            } else {
                ((c * 7 + t * 3) % 11) as f32 / 11.0
            }
        });
        let s = ChannelStats::from_trajectories([&t]).unwrap();
        let back = s.denormalize(&s.normalize(&t).unwrap(), 50).unwrap();
        let max = t
            .values()
            .iter()
            .zip(back.values())
            .enumerate()
            .map(|(i, (a, b))| {
                let scale = if i / 50 == 8 { 400.0 } else { 1.0 };
                ((a - b).abs() / scale) as f64
            })
            .fold(0.0, f64::max);
        assert!(max < 1e-6, "{max}");
    }

    #[test]
    fn csv_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = traj(9, 7, |c, t| (c as f32 + 0.123_456_79) * (t as f32 - 3.3));
        t.write_csv(&p).unwrap();
        assert_eq!(ArticTrajectory::read_csv(&p).unwrap(), t);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(TRAJ_HEADER));
    }

    #[test]
    fn csv_errors_are_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "time_s,LA\n0,1\n").unwrap();
        assert!(matches!(ArticTrajectory::read_csv(&p), Err(Error::Malformed { .. })));
        std::fs::write(&p, format!("{TRAJ_HEADER}\n0,1,2,3,4,5,6,7,8,x\n")).unwrap();
        let e = ArticTrajectory::read_csv(&p).unwrap_err().to_string();
        assert!(e.contains("pitch_hz"), "{e}");
        assert!(matches!(
            ArticTrajectory::read_csv(&dir.path().join("none.csv")),
            Err(Error::Io { .. })
        ));
    }
}
