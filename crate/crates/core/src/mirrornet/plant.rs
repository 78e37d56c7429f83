use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::checkpoint::network_hash;
use crate::data::{random_trajectory, ArticTrajectory, ChannelStats, Oracle, OracleParams};
use crate::error::Result;
use crate::synth::SynthModel;

/// The frozen articulatory synthesizer `g` in the loop. Inputs are in the
/// plant's normalised space (z-scored with [`Plant::stats`]).
pub trait Plant: Sync {
    fn channels(&self) -> usize;
    fn stats(&self) -> &ChannelStats;
    /// Spectrograms (`128 × 5k/4`, channel-major) for normalised `N × k`
    /// inputs.
    fn render_normalized(&self, latents: &[&[f32]], k: usize) -> Result<Vec<Vec<f32>>>;
    /// Hex SHA-256 identifying the plant's parameters.
    fn fingerprint(&self) -> String;
    fn describe(&self) -> String;
}

/// Seed of the trajectory sample that fixes the oracle plant's nominal
/// normalisation.
pub const ORACLE_STATS_SEED: u64 = 0x0a11_ce5e;
const ORACLE_STATS_ITEMS: usize = 64;

/// Channel statistics of 64 fixed-seed random 2 s trajectories.
pub fn nominal_oracle_stats() -> ChannelStats {
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_STATS_SEED);
    let trajs: Vec<ArticTrajectory> = (0..ORACLE_STATS_ITEMS).map(|_| random_trajectory(&mut rng, 200)).collect();
    ChannelStats::from_trajectories(&trajs).expect("non-empty sample")
}

/// The closed-form oracle as a plant.
pub struct OraclePlant {
    oracle: Oracle,
    stats: ChannelStats,
}

impl OraclePlant {
    pub fn new(params: OracleParams) -> Self {
        Self::with_stats(params, nominal_oracle_stats())
    }

    pub fn with_stats(params: OracleParams, stats: ChannelStats) -> Self {
        Self {
            oracle: Oracle::new(params),
            stats,
        }
    }
}

impl Default for OraclePlant {
    fn default() -> Self {
        Self::new(OracleParams::default())
    }
}

impl Plant for OraclePlant {
    fn channels(&self) -> usize {
        9
    }

    fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    fn render_normalized(&self, latents: &[&[f32]], k: usize) -> Result<Vec<Vec<f32>>> {
        let out: Vec<(Vec<f32>, usize)> = latents
            .par_iter()
            .map(|z| {
                let traj = self.stats.denormalize(z, k)?;
                let (spec, clamped) = self.oracle.synth_counting(&traj)?;
                Ok((spec.into_values(), clamped))
            })
            .collect::<Result<_>>()?;
        let clamped: usize = out.iter().map(|o| o.1).sum();
        if clamped > 0 {
            log::debug!("oracle plant clamped {clamped} values");
        }
        Ok(out.into_iter().map(|o| o.0).collect())
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self.oracle.params()).expect("params serialize"));
        hex::encode(h.finalize())
    }

    fn describe(&self) -> String {
        "oracle".into()
    }
}

impl Plant for SynthModel {
    fn channels(&self) -> usize {
        SynthModel::channels(self)
    }

    fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    fn render_normalized(&self, latents: &[&[f32]], k: usize) -> Result<Vec<Vec<f32>>> {
        self.forward_normalized(latents, k)
    }

    fn fingerprint(&self) -> String {
        network_hash(&[&self.net])
    }

    fn describe(&self) -> String {
        format!("synth-{:?}", self.variant).to_lowercase()
    }
}
