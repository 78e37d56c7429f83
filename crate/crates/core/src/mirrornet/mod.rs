//! The sensorimotor autoencoder: encoder φ (spectrogram → latent
//! trajectory), decoder f (latent → spectrogram), the supervised
//! initialization phase and the alternating learning phase against a
//! frozen plant.
//!
//! Latents live in the plant's normalised input space, so a trained
//! encoder output can be fed to the plant directly and de-normalised
//! into physical units with the plant's statistics.

mod phases;
mod plant;

pub use phases::{
    init_phase, learning_phase, InitEpoch, InitReport, LearnOptions, LearnReport, PhaseOptions, Stage, StageEvent,
    StageRecord,
};
pub use plant::{nominal_oracle_stats, OraclePlant, Plant, ORACLE_STATS_SEED};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_decoder, build_encoder};
use crate::audfront::{auditory_spectrogram, AuditorySpectrogram, CHANNELS, VOICING_THRESHOLD};
use crate::checkpoint::{network_hash, Checkpoint, CheckpointHeader, FORMAT_VERSION};
use crate::config::ModelConfig;
use crate::data::{channel_range, ArticTrajectory, ChannelStats, CHANNEL_NAMES, PERIODICITY_CHANNEL, PITCH_CHANNEL};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::train::predict;

#[derive(Clone, Debug)]
pub struct MirrorNet {
    pub encoder: Network<f32>,
    pub decoder: Network<f32>,
    /// Statistics mapping latents to physical trajectory units.
    pub stats: ChannelStats,
    pub config: ModelConfig,
}

impl MirrorNet {
    /// Randomly initialised model. `stats` fixes the latent space and must
    /// have `config.latent_channels` channels.
    pub fn new(config: &ModelConfig, stats: ChannelStats, seed: u64) -> Result<Self> {
        config.validate()?;
        if stats.channels() != config.latent_channels {
            return Err(Error::Config(format!(
                "latent statistics have {} channels, model expects {}",
                stats.channels(),
                config.latent_channels
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = build_encoder(config, &mut rng);
        let decoder = build_decoder(config, config.latent_channels, &mut rng);
        Ok(Self {
            encoder,
            decoder,
            stats,
            config: config.clone(),
        })
    }

    pub fn latent_channels(&self) -> usize {
        self.config.latent_channels
    }

    pub fn latent_len(&self, spec_frames: usize) -> Result<usize> {
        self.encoder.output_len(spec_frames)
    }

    /// Raw latents for `128 × L` inputs.
    pub fn encode_values(&self, specs: &[&[f32]], frames: usize) -> Result<Vec<Vec<f32>>> {
        self.encoder.output_len(frames)?;
        predict(&self.encoder, specs, CHANNELS, frames)
    }

    /// Spectrograms for raw `N × k` latents.
    pub fn decode_values(&self, latents: &[&[f32]], k: usize) -> Result<Vec<Vec<f32>>> {
        self.decoder.output_len(k)?;
        predict(&self.decoder, latents, self.latent_channels(), k)
    }

    pub fn encoder_hash(&self) -> String {
        network_hash(&[&self.encoder])
    }

    pub fn decoder_hash(&self) -> String {
        network_hash(&[&self.decoder])
    }

    pub fn to_checkpoint(&self, config_hash: &str, seed: u64, metrics: serde_json::Value, extra: serde_json::Value) -> Checkpoint {
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            model_kind: "mirrornet".into(),
            layers: vec![],
            stats: Some(self.stats.clone()),
            model: self.config.clone(),
            channels: self.latent_channels(),
            config_hash: config_hash.into(),
            seed,
            metrics,
            extra,
        };
        Checkpoint::from_networks(header, &[&self.encoder, &self.decoder])
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.header.model_kind != "mirrornet" {
            return Err(Error::Checkpoint(format!(
                "expected a mirrornet checkpoint, found {}",
                ck.header.model_kind
            )));
        }
        let stats = ck
            .header
            .stats
            .clone()
            .ok_or_else(|| Error::Checkpoint("mirrornet checkpoint lacks latent statistics".into()))?;
        let mut m = MirrorNet::new(&ck.header.model, stats, 0)?;
        m.encoder.load_params(&ck.tensors_with_prefix("encoder."))?;
        m.decoder.load_params(&ck.tensors_with_prefix("decoder."))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path, config_hash: &str, seed: u64, metrics: serde_json::Value, extra: serde_json::Value) -> Result<()> {
        self.to_checkpoint(config_hash, seed, metrics, extra).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `l̂ = φ(x)`: raw latent of a `128 × L` spectrogram (L divisible by 5),
/// in the plant's normalised space.
pub fn encode(model: &MirrorNet, x: &AuditorySpectrogram) -> Result<ArticTrajectory> {
    let k = model.latent_len(x.frames())?;
    let z = model.encode_values(&[x.values()], x.frames())?;
    ArticTrajectory::new(model.latent_channels(), k, z.into_iter().next().unwrap())
}

/// `x_d = f(l)` for a raw latent `N × k` (k divisible by 4).
pub fn decode(model: &MirrorNet, l: &ArticTrajectory) -> Result<AuditorySpectrogram> {
    if l.channels() != model.latent_channels() {
        return Err(Error::ShapeMismatch {
            op: "decode",
            left: vec![model.latent_channels()],
            right: vec![l.channels()],
        });
    }
    let y = model.decode_values(&[l.values()], l.frames())?;
    let frames = y[0].len() / CHANNELS;
    AuditorySpectrogram::new(y.into_iter().next().unwrap(), frames)
}

/// Encodes a spectrogram and de-normalises the latent into physical
/// units. Trailing frames beyond a multiple of the pooling window are
/// dropped.
pub fn estimate_trajectory(model: &MirrorNet, x: &AuditorySpectrogram) -> Result<ArticTrajectory> {
    let w = model.config.up_down[1];
    let usable = (x.frames() / w) * w;
    if usable == 0 {
        return Err(Error::InvalidLength {
            op: "estimate_trajectory",
            len: x.frames(),
            reason: format!("need at least {w} spectrogram frames"),
        });
    }
    let x = if usable == x.frames() { x.clone() } else { x.crop(0, usable)? };
    let z = encode(model, &x)?;
    let mut t = model.stats.denormalize(z.values(), z.frames())?;
    project_to_valid(&mut t);
    Ok(t)
}

/// Clamps every channel to its physical range and, for the full 9-channel
/// schema, zeroes pitch wherever periodicity is below the voicing
/// threshold so that pitch is 0 exactly on unvoiced frames.
pub fn project_to_valid(t: &mut ArticTrajectory) {
    for c in 0..t.channels().min(CHANNEL_NAMES.len()) {
        let (lo, hi) = channel_range(c);
        for v in t.channel_mut(c) {
            *v = v.clamp(lo as f32, hi as f32);
        }
    }
    if t.channels() == CHANNEL_NAMES.len() {
        let per = t.channel(PERIODICITY_CHANNEL).to_vec();
        for (p, v) in t.channel_mut(PITCH_CHANNEL).iter_mut().zip(per) {
            if v < VOICING_THRESHOLD as f32 {
                *p = 0.0;
            }
        }
    }
}

/// auditory spectrogram → encoder → physical-unit trajectory.
pub fn infer_articulation(model: &MirrorNet, wav: &[f32], fs: u32) -> Result<ArticTrajectory> {
    estimate_trajectory(model, &auditory_spectrogram(wav, fs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MirrorNet {
        MirrorNet::new(&ModelConfig::default().scaled(8), ChannelStats::identity(9), 1).unwrap()
    }

    #[test]
    fn paper_shapes() {
        let m = model();
        let z = encode(&m, &AuditorySpectrogram::zeros(250)).unwrap();
        assert_eq!((z.channels(), z.frames()), (9, 200));
        assert_eq!(decode(&m, &z).unwrap().frames(), 250);
        assert_eq!(encode(&m, &AuditorySpectrogram::zeros(125)).unwrap().frames(), 100);
        assert!(encode(&m, &AuditorySpectrogram::zeros(126)).is_err());
        assert!(decode(&m, &ArticTrajectory::zeros(9, 6)).is_err());
    }

    #[test]
    fn round_trip_shape_for_many_lengths() {
        let m = model();
        for l in (5..=60).step_by(5) {
            let x = AuditorySpectrogram::zeros(l);
            assert_eq!(decode(&m, &encode(&m, &x).unwrap()).unwrap().frames(), l);
        }
    }

    #[test]
    fn zero_weight_decoder_is_constant() {
        let mut m = model();
        for l in m.decoder.layers_mut() {
            l.weight.data_mut().iter_mut().for_each(|w| *w = 0.0);
            l.bias.data_mut().iter_mut().for_each(|b| *b = 0.25);
        }
        let mut z = ArticTrajectory::zeros(9, 8);
        z.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as f32);
        let y = decode(&m, &z).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = model();
        let p = dir.path().join("m.mnc");
        m.save(&p, "x", 1, serde_json::Value::Null, serde_json::Value::Null).unwrap();
        let back = MirrorNet::load(&p).unwrap();
        let mut x = AuditorySpectrogram::zeros(25).into_values();
        x.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 13) as f32 * 0.3);
        let x = AuditorySpectrogram::new(x, 25).unwrap();
        assert_eq!(encode(&m, &x).unwrap(), encode(&back, &x).unwrap());
        assert_eq!(m.decoder_hash(), back.decoder_hash());
    }

    #[test]
    fn infer_shape() {
        let m = model();
        let wav: Vec<f32> = (0..32000).map(|i| (i as f32 * 0.07).sin() * 0.2).collect();
        let t = infer_articulation(&m, &wav, 16000).unwrap();
        assert_eq!((t.channels(), t.frames()), (9, 200));
    }
}
