//! Articulatory-to-acoustic synthesizer: a decoder-shaped TCN mapping
//! z-scored trajectories to auditory spectrograms, and its training loop.

use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::build_decoder;
use crate::audfront::{AuditorySpectrogram, CHANNELS};
use crate::checkpoint::{Checkpoint, CheckpointHeader, FORMAT_VERSION};
use crate::config::{ModelConfig, TrainSynthConfig};
use crate::data::{fixed_crops, ArticTrajectory, ChannelStats, Crop, Item};
use crate::error::{Error, Result};
use crate::nn::{Adam, LrScheduler, Network};
use crate::train::{epoch_batches, mean_item_mse, predict, supervised_grads};

/// Data-budget/batch-size variant of a synthesizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Fully trained: full training split, batch 16.
    Ft,
    /// Lightly trained: small data budget, batch 64.
    Lt,
}

impl Variant {
    pub fn batch_size(self, cfg: &TrainSynthConfig) -> usize {
        match self {
            Variant::Ft => cfg.batch_ft,
            Variant::Lt => cfg.batch_lt,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ft" => Ok(Variant::Ft),
            "lt" => Ok(Variant::Lt),
            _ => Err(Error::Invalid(format!("unknown synthesizer variant `{s}` (expected ft or lt)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthModel {
    pub net: Network<f32>,
    /// Statistics of the input channels (model units).
    pub stats: ChannelStats,
    pub variant: Variant,
    pub config: ModelConfig,
}

impl SynthModel {
    pub fn new(config: &ModelConfig, stats: ChannelStats, variant: Variant, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            net: build_decoder(config, stats.channels(), &mut rng),
            stats,
            variant,
            config: config.clone(),
        }
    }

    pub fn channels(&self) -> usize {
        self.stats.channels()
    }

    /// Spectrograms for already-normalised `[N, k]` inputs.
    pub fn forward_normalized(&self, inputs: &[&[f32]], k: usize) -> Result<Vec<Vec<f32>>> {
        self.check_len(k)?;
        predict(&self.net, inputs, self.channels(), k)
    }

    fn check_len(&self, k: usize) -> Result<()> {
        if k == 0 || k % self.config.up_down[0] != 0 {
            return Err(Error::InvalidLength {
                op: "synth_forward",
                len: k,
                reason: format!("trajectory frames must be divisible by {}", self.config.up_down[0]),
            });
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, config_hash: &str, seed: u64, metrics: serde_json::Value) -> Checkpoint {
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            model_kind: "synth".into(),
            layers: vec![],
            stats: Some(self.stats.clone()),
            model: self.config.clone(),
            channels: self.channels(),
            config_hash: config_hash.into(),
            seed,
            metrics,
            extra: serde_json::json!({ "variant": self.variant }),
        };
        Checkpoint::from_networks(header, &[&self.net])
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.header.model_kind != "synth" {
            return Err(Error::Checkpoint(format!("expected a synth checkpoint, found {}", ck.header.model_kind)));
        }
        let stats = ck
            .header
            .stats
            .clone()
            .ok_or_else(|| Error::Checkpoint("synth checkpoint lacks channel statistics".into()))?;
        let variant = serde_json::from_value(ck.header.extra["variant"].clone()).unwrap_or(Variant::Ft);
        ck.header.model.validate()?;
        let mut m = SynthModel::new(&ck.header.model, stats, variant, 0);
        m.net.load_params(&ck.tensors)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path, config_hash: &str, seed: u64, metrics: serde_json::Value) -> Result<()> {
        self.to_checkpoint(config_hash, seed, metrics).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Renders an `N × k` trajectory (physical units) as a `128 × 5k/4`
/// spectrogram.
pub fn synth_forward(model: &SynthModel, artic: &ArticTrajectory) -> Result<AuditorySpectrogram> {
    let traj = if artic.channels() == model.channels() {
        artic.clone()
    } else if artic.channels() > model.channels() {
        artic.select(model.channels())?
    } else {
        return Err(Error::ShapeMismatch {
            op: "synth_forward",
            left: vec![model.channels()],
            right: vec![artic.channels()],
        });
    };
    let x = model.stats.normalize(&traj)?;
    let out = model.forward_normalized(&[&x], traj.frames())?;
    let frames = out[0].len() / CHANNELS;
    AuditorySpectrogram::new(out.into_iter().next().unwrap(), frames)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SynthTrainReport {
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
    /// Mean per-item training MSE before the first update.
    pub initial_train_mse: f64,
    pub best_dev_mse: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Options beyond the config file.
pub struct SynthTrainOptions<'a> {
    pub variant: Variant,
    /// 9 (TVs + source features) or 6 (TVs only).
    pub channels: usize,
    pub seed: u64,
    /// Trajectory frames per training crop (multiple of 4).
    pub crop_frames: usize,
    /// Called after every update with (step, batch loss). Returning
    /// `false` ends training after the current step.
    pub on_step: Option<&'a mut dyn FnMut(usize, f64) -> bool>,
}

impl Default for SynthTrainOptions<'_> {
    fn default() -> Self {
        Self {
            variant: Variant::Ft,
            channels: 9,
            seed: 0,
            crop_frames: 200,
            on_step: None,
        }
    }
}

struct Prepared {
    inputs: Vec<Vec<f32>>,
    targets: Vec<Vec<f32>>,
}

fn prepare(crops: &[Crop], stats: &ChannelStats) -> Result<Prepared> {
    let mut inputs = Vec::with_capacity(crops.len());
    let mut targets = Vec::with_capacity(crops.len());
    for c in crops {
        let t = c.trajectory.as_ref().ok_or_else(|| Error::MissingTrajectory(c.item.clone()))?;
        inputs.push(stats.normalize(&t.select(stats.channels())?)?);
        targets.push(c.spectrogram.values().to_vec());
    }
    Ok(Prepared { inputs, targets })
}

fn dataset_mse(net: &Network<f32>, p: &Prepared, channels: usize, k: usize) -> Result<f64> {
    let x: Vec<&[f32]> = p.inputs.iter().map(Vec::as_slice).collect();
    let y: Vec<&[f32]> = p.targets.iter().map(Vec::as_slice).collect();
    mean_item_mse(&predict(net, &x, channels, k)?, &y)
}

/// Trains a synthesizer on `train`, selecting the weights with the lowest
/// dev MSE. Every item needs a trajectory and a spectrogram. With an
/// empty dev set the training loss is monitored instead.
pub fn train_synthesizer(
    train: &[Item],
    dev: &[Item],
    model_cfg: &ModelConfig,
    cfg: &TrainSynthConfig,
    mut opts: SynthTrainOptions<'_>,
) -> Result<(SynthModel, SynthTrainReport)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("synthesizer training set".into()));
    }
    for it in train.iter().chain(dev) {
        it.traj()?;
        it.spec()?;
    }
    let k = opts.crop_frames;
    let train_crops = fixed_crops(train, k)?;
    if train_crops.is_empty() {
        return Err(Error::EmptyDataset(format!("no training item is {k} frames long")));
    }
    let dev_crops = fixed_crops(dev, k)?;
    let trajs: Vec<ArticTrajectory> = train_crops
        .iter()
        .map(|c| c.trajectory.as_ref().unwrap().select(opts.channels))
        .collect::<Result<_>>()?;
    let stats = ChannelStats::from_trajectories(&trajs)?;
    let mut model = SynthModel::new(model_cfg, stats, opts.variant, opts.seed);
    let tr = prepare(&train_crops, &model.stats)?;
    let dv = prepare(&dev_crops, &model.stats)?;
    if dv.inputs.is_empty() {
        log::warn!("no dev items; selecting weights by training loss");
    }

    let n = model.channels();
    let batch = opts.variant.batch_size(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_5717);
    let mut adam = Adam::new();
    let mut sched = LrScheduler::new(cfg.lr, cfg.decay, cfg.patience);
    let mut report = SynthTrainReport {
        initial_train_mse: dataset_mse(&model.net, &tr, n, k)?,
        best_dev_mse: f64::INFINITY,
        ..Default::default()
    };
    let mut best = model.net.clone();
    let mut step = 0;
    'epochs: for epoch in 0..cfg.epochs {
        let lr = sched.lr();
        let mut sum = 0.0;
        let mut count = 0;
        let mut stop = false;
        for idx in epoch_batches(tr.inputs.len(), batch, &mut rng) {
            let x: Vec<&[f32]> = idx.iter().map(|&i| tr.inputs[i].as_slice()).collect();
            let y: Vec<&[f32]> = idx.iter().map(|&i| tr.targets[i].as_slice()).collect();
            let loss = supervised_grads(&mut model.net, &x, (n, k), &y)?;
            adam.step(&mut model.net.params_mut(), lr)?;
            step += 1;
            sum += loss * idx.len() as f64;
            count += idx.len();
            if let Some(cb) = opts.on_step.as_mut() {
                if !cb(step, loss) {
                    stop = true;
                    break;
                }
            }
        }
        let train_loss = sum / count as f64;
        let dev_loss = if dv.inputs.is_empty() {
            dataset_mse(&model.net, &tr, n, k)?
        } else {
            dataset_mse(&model.net, &dv, n, k)?
        };
        if !dev_loss.is_finite() {
            return Err(Error::NonFinite(format!("dev loss at epoch {epoch}")));
        }
        if dev_loss < report.best_dev_mse {
            report.best_dev_mse = dev_loss;
            report.best_epoch = epoch;
            best = model.net.clone();
        }
        sched.step(dev_loss);
        log::info!("synth epoch {epoch}: train {train_loss:.5} dev {dev_loss:.5} lr {lr:.2e}");
        report.epochs.push(EpochRecord {
            epoch,
            steps: step,
            train_loss,
            dev_loss,
            lr,
        });
        if stop {
            report.stopped_early = true;
            break 'epochs;
        }
    }
    report.steps = step;
    model.net = best;
    Ok((model, report))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthEvalReport {
    pub mean_mse: f64,
    pub per_item: Vec<(String, f64)>,
}

impl SynthEvalReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("item,mse\n");
        for (id, m) in &self.per_item {
            out.push_str(&format!("{id},{m}\n"));
        }
        out.push_str(&format!("mean,{}\n", self.mean_mse));
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Mean of per-item spectrogram MSEs over whole items. Each item is
/// truncated to the longest prefix the network accepts.
pub fn eval_synthesizer(model: &SynthModel, test: &[Item]) -> Result<SynthEvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("synthesizer test set".into()));
    }
    let mut per_item = Vec::with_capacity(test.len());
    for it in test {
        let traj = it.traj()?;
        let spec = it.spec()?;
        let k = (traj.frames().min(spec.frames() * 4 / 5) / 4) * 4;
        if k == 0 {
            return Err(Error::InvalidLength {
                op: "eval_synthesizer",
                len: traj.frames(),
                reason: format!("item {} is shorter than 4 frames", it.id),
            });
        }
        let pred = synth_forward(model, &traj.crop(0, k)?)?;
        let target = spec.crop(0, k * 5 / 4)?;
        if pred.frames() != target.frames() {
            return Err(Error::ShapeMismatch {
                op: "eval_synthesizer",
                left: vec![CHANNELS, pred.frames()],
                right: vec![CHANNELS, target.frames()],
            });
        }
        per_item.push((it.id.clone(), crate::nn::mse(pred.values(), target.values())?));
    }
    let mean_mse = per_item.iter().map(|p| p.1).sum::<f64>() / per_item.len() as f64;
    Ok(SynthEvalReport { mean_mse, per_item })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn small_cfg() -> ModelConfig {
        ModelConfig::default().scaled(8)
    }

    #[test]
    fn paper_shape() {
        let m = SynthModel::new(&small_cfg(), ChannelStats::identity(9), Variant::Ft, 0);
        let out = synth_forward(&m, &ArticTrajectory::zeros(9, 200)).unwrap();
        assert_eq!(out.frames(), 250);
        assert!(synth_forward(&m, &ArticTrajectory::zeros(9, 202)).is_err());
        assert!(synth_forward(&m, &ArticTrajectory::zeros(5, 200)).is_err());
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut m = SynthModel::new(&small_cfg(), ChannelStats::identity(9), Variant::Ft, 0);
        for l in m.net.layers_mut() {
            l.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        let last = m.net.layers_mut().last().unwrap();
        last.bias.data_mut().iter_mut().enumerate().for_each(|(i, b)| *b = i as f32 * 0.1);
        let mut t = ArticTrajectory::zeros(9, 8);
        t.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f32);
        let out = synth_forward(&m, &t).unwrap();
        for c in 0..CHANNELS {
            for j in 0..out.frames() {
                assert_eq!(out.get(c, j), c as f32 * 0.1);
            }
        }
    }

    #[test]
    fn eval_matches_direct_sum() {
        let items = gen_synthetic(3, 0.4, 2).unwrap();
        let m = SynthModel::new(&small_cfg(), ChannelStats::identity(9), Variant::Ft, 3);
        let r = eval_synthesizer(&m, &items).unwrap();
        let mut total = 0.0;
        for it in &items {
            let p = synth_forward(&m, it.traj().unwrap()).unwrap();
            let t = it.spec().unwrap();
            let s: f64 = p.values().iter().zip(t.values()).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            total += s / t.values().len() as f64;
        }
        assert!((r.mean_mse - total / 3.0).abs() < 1e-9);
    }

    #[test]
    fn training_is_reproducible_and_improves() {
        let items = gen_synthetic(4, 0.4, 5).unwrap();
        let cfg = TrainSynthConfig {
            epochs: 6,
            batch_ft: 2,
            ..Default::default()
        };
        let run = || {
            train_synthesizer(
                &items[..3],
                &items[3..],
                &small_cfg(),
                &cfg,
                SynthTrainOptions {
                    crop_frames: 40,
                    seed: 11,
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra.best_dev_mse, rb.best_dev_mse);
        assert_eq!(a.net.named_params()[0].1, b.net.named_params()[0].1);
        assert!(ra.epochs.last().unwrap().train_loss < ra.initial_train_mse);
    }

    #[test]
    fn checkpoint_round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = SynthModel::new(&small_cfg(), ChannelStats::identity(6), Variant::Lt, 4);
        let p = dir.path().join("s.mnc");
        m.save(&p, "h", 4, serde_json::Value::Null).unwrap();
        let back = SynthModel::load(&p).unwrap();
        assert_eq!(back.variant, Variant::Lt);
        let t = crate::data::random_trajectory(&mut ChaCha8Rng::seed_from_u64(0), 40);
        assert_eq!(synth_forward(&m, &t).unwrap(), synth_forward(&back, &t).unwrap());
    }
}
