use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MirrorNet, Plant};
use crate::audfront::CHANNELS;
use crate::config::{InitConfig, LearnConfig};
use crate::data::{fixed_crops, Crop, Item};
use crate::error::{Error, Result};
use crate::nn::{mse, Adam, Binding, LrScheduler};
use crate::tensor::Tape;
use crate::train::{epoch_batches, predict, stack, supervised_grads};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Init,
    Decoder,
    Encoder,
}

#[derive(Clone, Copy, Debug)]
pub struct PhaseOptions {
    pub seed: u64,
    /// Trajectory frames per training crop (a multiple of 4).
    pub crop_frames: usize,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            crop_frames: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitEpoch {
    pub epoch: usize,
    /// `MSE(l, φ(x))` averaged over the epoch's batches.
    pub e_c_init: f64,
    /// `MSE(x, f(l))` averaged over the epoch's batches.
    pub e_d_init: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InitReport {
    pub epochs: Vec<InitEpoch>,
}

/// Supervised initialization: the encoder regresses normalised
/// ground-truth trajectories, the decoder maps them back to the
/// spectrogram. The two networks have separate optimizers and share no
/// gradients.
pub fn init_phase(model: &mut MirrorNet, supervised: &[Item], cfg: &InitConfig, opts: PhaseOptions) -> Result<InitReport> {
    if supervised.is_empty() {
        return Err(Error::EmptyDataset("initialization set".into()));
    }
    for it in supervised {
        it.traj()?;
    }
    let crops = crops_for(supervised, opts.crop_frames)?;
    let n = model.latent_channels();
    let k = opts.crop_frames;
    let l = k * 5 / 4;
    let specs: Vec<Vec<f32>> = crops.iter().map(|c| c.spectrogram.values().to_vec()).collect();
    let trajs: Vec<Vec<f32>> = crops
        .iter()
        .map(|c| model.stats.normalize(&c.trajectory.as_ref().unwrap().select(n)?))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x1417_0000);
    let mut adam_enc = Adam::new();
    let mut adam_dec = Adam::new();
    let mut report = InitReport::default();
    for epoch in 0..cfg.epochs {
        let (mut sum_c, mut sum_d, mut count) = (0.0, 0.0, 0);
        for idx in epoch_batches(crops.len(), cfg.batch, &mut rng) {
            let x: Vec<&[f32]> = idx.iter().map(|&i| specs[i].as_slice()).collect();
            let t: Vec<&[f32]> = idx.iter().map(|&i| trajs[i].as_slice()).collect();
            let e_c = supervised_grads(&mut model.encoder, &x, (CHANNELS, l), &t)?;
            adam_enc.step(&mut model.encoder.params_mut(), cfg.lr)?;
            let e_d = supervised_grads(&mut model.decoder, &t, (n, k), &x)?;
            adam_dec.step(&mut model.decoder.params_mut(), cfg.lr)?;
            sum_c += e_c * idx.len() as f64;
            sum_d += e_d * idx.len() as f64;
            count += idx.len();
        }
        let rec = InitEpoch {
            epoch,
            e_c_init: sum_c / count as f64,
            e_d_init: sum_d / count as f64,
        };
        log::info!("init epoch {epoch}: e_c {:.5} e_d {:.5}", rec.e_c_init, rec.e_d_init);
        report.epochs.push(rec);
    }
    Ok(report)
}

/// One line of the learning-phase log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub iteration: usize,
    pub stage: Stage,
    pub epoch: usize,
    /// `MSE(x_d, x)` over the epoch.
    pub e_c: f64,
    /// `MSE(x_d, x_s)` over the epoch.
    pub e_d: f64,
    /// Learning rate of the network trained in this stage.
    pub lr: f64,
}

/// Progress notifications passed to [`LearnOptions::observer`].
#[derive(Clone, Debug)]
pub enum StageEvent<'a> {
    Start { iteration: usize, stage: Stage },
    Epoch(&'a StageRecord),
    End { iteration: usize, stage: Stage },
}

pub struct LearnOptions<'a> {
    pub seed: u64,
    pub crop_frames: usize,
    /// Receives one JSON object per stage epoch.
    pub log: Option<&'a mut dyn Write>,
    pub observer: Option<&'a mut dyn FnMut(&StageEvent<'_>, &MirrorNet)>,
}

impl Default for LearnOptions<'_> {
    fn default() -> Self {
        Self {
            seed: 0,
            crop_frames: 200,
            log: None,
            observer: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LearnReport {
    pub records: Vec<StageRecord>,
    /// Whole-set `(e_c, e_d)` before the first stage.
    pub initial: (f64, f64),
    /// Whole-set `(e_c, e_d)` after the last stage.
    pub final_: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
    pub plant_before: String,
    pub plant_after: String,
}

/// Alternating learning phase against a frozen plant.
///
/// Each iteration runs a decoder stage (the decoder learns to imitate the
/// plant on the encoder's current latents, which enter as constants) and
/// then an encoder stage (the encoder minimises the reconstruction error
/// through the decoder, whose parameters are held fixed).
pub fn learning_phase(
    model: &mut MirrorNet,
    audio: &[Item],
    plant: &dyn Plant,
    cfg: &LearnConfig,
    mut opts: LearnOptions<'_>,
) -> Result<LearnReport> {
    if audio.is_empty() {
        return Err(Error::EmptyDataset("learning-phase set".into()));
    }
    let n = model.latent_channels();
    if plant.channels() != n {
        return Err(Error::ShapeMismatch {
            op: "learning_phase plant",
            left: vec![n],
            right: vec![plant.channels()],
        });
    }
    if plant.stats() != &model.stats {
        return Err(Error::Config("model latent statistics differ from the plant's".into()));
    }
    let crops = crops_for(audio, opts.crop_frames)?;
    let k = opts.crop_frames;
    let l = k * 5 / 4;
    let specs: Vec<Vec<f32>> = crops.iter().map(|c| c.spectrogram.values().to_vec()).collect();
    let all: Vec<&[f32]> = specs.iter().map(Vec::as_slice).collect();

    let mut report = LearnReport {
        plant_before: plant.fingerprint(),
        initial: evaluate(model, plant, &all, l)?,
        ..Default::default()
    };
    log::info!(
        "learning phase on {} crops with {}: initial e_c {:.5} e_d {:.5}",
        specs.len(),
        plant.describe(),
        report.initial.0,
        report.initial.1
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x1ea7_0000);
    let mut adam_enc = Adam::new();
    let mut adam_dec = Adam::new();
    let mut sched_enc = LrScheduler::new(cfg.lr_enc, cfg.decay, cfg.patience);
    let mut sched_dec = LrScheduler::new(cfg.lr_dec, cfg.decay, cfg.patience);
    let mut prev: Option<(f64, f64)> = None;

    for iteration in 0..cfg.iterations {
        for stage in [Stage::Decoder, Stage::Encoder] {
            notify(&mut opts, &StageEvent::Start { iteration, stage }, model);
            let epochs = cfg.stage_epochs[if stage == Stage::Decoder { 0 } else { 1 }];
            for epoch in 0..epochs {
                let (mut sum_c, mut sum_d, mut count) = (0.0, 0.0, 0);
                let lr = match stage {
                    Stage::Decoder => sched_dec.lr(),
                    _ => sched_enc.lr(),
                };
                for idx in epoch_batches(specs.len(), cfg.batch, &mut rng) {
                    let x: Vec<&[f32]> = idx.iter().map(|&i| all[i]).collect();
                    let (e_c, e_d) = match stage {
                        Stage::Decoder => {
                            let out = decoder_step(model, plant, &x, l)?;
                            adam_dec.step(&mut model.decoder.params_mut(), lr)?;
                            out
                        }
                        _ => {
                            let out = encoder_step(model, plant, &x, l)?;
                            adam_enc.step(&mut model.encoder.params_mut(), lr)?;
                            out
                        }
                    };
                    sum_c += e_c * idx.len() as f64;
                    sum_d += e_d * idx.len() as f64;
                    count += idx.len();
                }
                let rec = StageRecord {
                    iteration,
                    stage,
                    epoch,
                    e_c: sum_c / count as f64,
                    e_d: sum_d / count as f64,
                    lr,
                };
                match stage {
                    Stage::Decoder => sched_dec.step(rec.e_d),
                    _ => sched_enc.step(rec.e_c),
                };
                log::info!(
                    "iter {iteration} {:?} epoch {epoch}: e_c {:.5} e_d {:.5} lr {lr:.2e}",
                    stage,
                    rec.e_c,
                    rec.e_d
                );
                if let Some(w) = opts.log.as_mut() {
                    let line = serde_json::to_string(&rec)?;
                    writeln!(w, "{line}").map_err(|e| Error::Invalid(format!("learning log: {e}")))?;
                }
                notify(&mut opts, &StageEvent::Epoch(&rec), model);
                report.records.push(rec);
            }
            notify(&mut opts, &StageEvent::End { iteration, stage }, model);
        }
        report.iterations = iteration + 1;
        if cfg.converge_tol > 0.0 {
            let now = last_pair(&report.records);
            if let Some(p) = prev {
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
                if rel(now.0, p.0) < cfg.converge_tol && rel(now.1, p.1) < cfg.converge_tol {
                    log::info!("both losses converged after iteration {iteration}");
                    report.converged = true;
                    break;
                }
            }
            prev = Some(now);
        }
    }
    report.final_ = evaluate(model, plant, &all, l)?;
    report.plant_after = plant.fingerprint();
    if report.plant_before != report.plant_after {
        return Err(Error::Invalid("plant parameters changed during the learning phase".into()));
    }
    Ok(report)
}

fn notify(opts: &mut LearnOptions<'_>, ev: &StageEvent<'_>, model: &MirrorNet) {
    if let Some(cb) = opts.observer.as_mut() {
        cb(ev, model);
    }
}

/// `(e_c, e_d)` of the last encoder-stage and decoder-stage epochs.
fn last_pair(records: &[StageRecord]) -> (f64, f64) {
    let last = |s: Stage| records.iter().rev().find(|r| r.stage == s).map_or((f64::NAN, f64::NAN), |r| (r.e_c, r.e_d));
    (last(Stage::Encoder).0, last(Stage::Decoder).1)
}

fn crops_for(items: &[Item], crop_frames: usize) -> Result<Vec<Crop>> {
    let crops = fixed_crops(items, crop_frames)?;
    if crops.is_empty() {
        return Err(Error::EmptyDataset(format!("no item is {crop_frames} trajectory frames long")));
    }
    Ok(crops)
}

/// Decoder stage step. Returns `(e_c, e_d)` of the batch.
fn decoder_step(model: &mut MirrorNet, plant: &dyn Plant, x: &[&[f32]], l: usize) -> Result<(f64, f64)> {
    let n = model.latent_channels();
    let z = predict(&model.encoder, x, CHANNELS, l)?;
    let k = z[0].len() / n;
    let zr: Vec<&[f32]> = z.iter().map(Vec::as_slice).collect();
    let xs = plant.render_normalized(&zr, k)?;
    let xsr: Vec<&[f32]> = xs.iter().map(Vec::as_slice).collect();

    let tape = Tape::new();
    let params = model.decoder.bind(&tape, Binding::Trainable);
    let zin = tape.input(&[x.len(), n, k], stack(&zr), false)?;
    let out = model.decoder.forward(&params, zin)?;
    let target = tape.input(&out.shape(), stack(&xsr), false)?;
    let loss = out.mse(target)?;
    let e_d = finite(loss.item() as f64, "e_d")?;
    let e_c = mse(&out.to_vec(), &stack(x))?;
    tape.backward(loss)?;
    model.decoder.collect_grads(&params);
    Ok((e_c, e_d))
}

/// Encoder stage step. Returns `(e_c, e_d)` of the batch.
fn encoder_step(model: &mut MirrorNet, plant: &dyn Plant, x: &[&[f32]], l: usize) -> Result<(f64, f64)> {
    let tape = Tape::new();
    let enc = model.encoder.bind(&tape, Binding::Trainable);
    let dec = model.decoder.bind(&tape, Binding::Frozen);
    let xin = tape.input(&[x.len(), CHANNELS, l], stack(x), false)?;
    let z = model.encoder.forward(&enc, xin)?;
    let zv = z.to_vec();
    let k = z.shape()[2];
    let out = model.decoder.forward(&dec, z)?;
    let loss = out.mse(xin)?;
    let e_c = finite(loss.item() as f64, "e_c")?;
    let per = zv.len() / x.len();
    let zr: Vec<&[f32]> = zv.chunks(per).collect();
    let xs = plant.render_normalized(&zr, k)?;
    let e_d = mse(&out.to_vec(), &stack(&xs.iter().map(Vec::as_slice).collect::<Vec<_>>()))?;
    tape.backward(loss)?;
    model.encoder.collect_grads(&enc);
    Ok((e_c, e_d))
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} = {v}")))
    }
}

/// Whole-set `(e_c, e_d)` without updates.
fn evaluate(model: &MirrorNet, plant: &dyn Plant, x: &[&[f32]], l: usize) -> Result<(f64, f64)> {
    let n = model.latent_channels();
    let z = predict(&model.encoder, x, CHANNELS, l)?;
    let k = z[0].len() / n;
    let zr: Vec<&[f32]> = z.iter().map(Vec::as_slice).collect();
    let xd = model.decode_values(&zr, k)?;
    let xs = plant.render_normalized(&zr, k)?;
    let (mut c, mut d) = (0.0, 0.0);
    for i in 0..x.len() {
        c += mse(&xd[i], x[i])?;
        d += mse(&xd[i], &xs[i])?;
    }
    Ok((c / x.len() as f64, d / x.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::data::gen_synthetic;
    use crate::mirrornet::OraclePlant;

    fn toy() -> (MirrorNet, Vec<Item>, OraclePlant) {
        let plant = OraclePlant::default();
        let m = MirrorNet::new(&ModelConfig::default().scaled(16), plant.stats().clone(), 3).unwrap();
        (m, gen_synthetic(4, 0.4, 11).unwrap(), plant)
    }

    fn opts() -> PhaseOptions {
        PhaseOptions { seed: 1, crop_frames: 40 }
    }

    #[test]
    fn init_reduces_both_losses_independently() {
        let (mut m, items, _) = toy();
        let cfg = InitConfig { lr: 1e-3, epochs: 15, batch: 2 };
        let r = init_phase(&mut m, &items, &cfg, opts()).unwrap();
        let (a, b) = (&r.epochs[0], r.epochs.last().unwrap());
        assert!(b.e_c_init < a.e_c_init && b.e_d_init < a.e_d_init, "{a:?} {b:?}");

        // Encoder updates never read decoder weights: an init run with a
        // different decoder yields the same encoder.
        let (mut m2, _, _) = toy();
        for p in m2.decoder.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v *= 0.5);
        }
        init_phase(&mut m2, &items, &cfg, opts()).unwrap();
        assert_eq!(m.encoder_hash(), m2.encoder_hash());
    }

    #[test]
    fn init_needs_trajectories() {
        let (mut m, mut items, _) = toy();
        items[1].trajectory = None;
        let err = init_phase(&mut m, &items, &InitConfig::default(), opts()).unwrap_err();
        assert!(matches!(err, Error::MissingTrajectory(_)), "{err}");
    }

    #[test]
    fn stages_touch_only_their_network() {
        let (mut m, items, plant) = toy();
        let cfg = LearnConfig {
            lr_enc: 1e-3,
            lr_dec: 1e-3,
            stage_epochs: [1, 1],
            iterations: 2,
            batch: 2,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let mut start = (String::new(), String::new());
        let mut obs = |ev: &StageEvent<'_>, m: &MirrorNet| match ev {
            StageEvent::Start { .. } => start = (m.encoder_hash(), m.decoder_hash()),
            StageEvent::End { stage, .. } => {
                let now = (m.encoder_hash(), m.decoder_hash());
                seen.push((*stage, start.0 == now.0, start.1 == now.1));
            }
            StageEvent::Epoch(_) => {}
        };
        let mut log = Vec::new();
        let r = learning_phase(
            &mut m,
            &items,
            &plant,
            &cfg,
            LearnOptions {
                seed: 2,
                crop_frames: 40,
                log: Some(&mut log),
                observer: Some(&mut obs),
            },
        )
        .unwrap();
        assert_eq!(seen.len(), 4);
        for (stage, enc_same, dec_same) in seen {
            match stage {
                Stage::Decoder => assert!(enc_same && !dec_same),
                _ => assert!(!enc_same && dec_same),
            }
        }
        assert_eq!(r.plant_before, r.plant_after);
        let lines: Vec<StageRecord> = String::from_utf8(log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines, r.records);
        assert!(lines.iter().all(|r| r.e_c >= 0.0 && r.e_d >= 0.0));
    }

    #[test]
    fn learning_rejects_mismatched_plant() {
        let (m, items, plant) = toy();
        let mut m = MirrorNet::new(&m.config.with_latent_channels(6), crate::data::ChannelStats::identity(6), 0).unwrap();
        let err = learning_phase(&mut m, &items, &plant, &LearnConfig::default(), LearnOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }
}
