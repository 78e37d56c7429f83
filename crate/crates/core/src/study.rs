//! Desk-scale experiment drivers shared by the CLI, the examples and the
//! acceptance suite.

use serde::{Deserialize, Serialize};

use crate::config::{InitConfig, LearnConfig, ModelConfig};
use crate::data::{gen_synthetic, ArticTrajectory, Item, Split};
use crate::error::Result;
use crate::eval::{ppmc_report, PpmcReport};
use crate::mirrornet::{
    estimate_trajectory, init_phase, learning_phase, InitReport, LearnOptions, LearnReport, MirrorNet, PhaseOptions,
    Plant,
};

/// Synthetic corpus sizes for the init / no-init comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyData {
    pub n_train: usize,
    pub n_init: usize,
    /// Validation items for synthesizer training; unused by MirrorNet.
    pub n_dev: usize,
    pub n_test: usize,
    pub duration_s: f64,
}

impl Default for StudyData {
    fn default() -> Self {
        Self {
            n_train: 64,
            n_init: 8,
            n_dev: 0,
            n_test: 16,
            duration_s: 2.0,
        }
    }
}

impl StudyData {
    /// Generates the corpus and tags the splits: `train` items are used
    /// audio-only, `init` items keep their trajectories for supervision,
    /// `dev` items validate synthesizers and `test` items are held out.
    pub fn generate(&self, seed: u64) -> Result<Vec<Item>> {
        let total = self.n_train + self.n_init + self.n_dev + self.n_test;
        let mut items = gen_synthetic(total, self.duration_s, seed)?;
        let bounds = [
            (self.n_train, Split::Train),
            (self.n_init, Split::Init),
            (self.n_dev, Split::Dev),
            (self.n_test, Split::Test),
        ];
        let mut it = items.iter_mut();
        for (n, split) in bounds {
            for item in it.by_ref().take(n) {
                item.split = split;
            }
        }
        Ok(items)
    }
}

/// Outcome of one MirrorNet training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub init: Option<InitReport>,
    pub learn: LearnReport,
    pub ppmc: PpmcReport,
}

/// Trains a MirrorNet against `plant` (with or without the
/// initialization phase) and scores it on `test`.
#[allow(clippy::too_many_arguments)]
pub fn train_and_score(
    model_cfg: &ModelConfig,
    init_cfg: Option<&InitConfig>,
    learn_cfg: &LearnConfig,
    plant: &dyn Plant,
    train: &[Item],
    supervised: &[Item],
    test: &[Item],
    seed: u64,
    crop_frames: usize,
) -> Result<(MirrorNet, RunOutcome)> {
    let mut model = MirrorNet::new(model_cfg, plant.stats().clone(), seed)?;
    let init = match init_cfg {
        Some(cfg) => Some(init_phase(&mut model, supervised, cfg, PhaseOptions { seed, crop_frames })?),
        None => None,
    };
    let learn = learning_phase(
        &mut model,
        train,
        plant,
        learn_cfg,
        LearnOptions {
            seed,
            crop_frames,
            ..Default::default()
        },
    )?;
    let ppmc = score(&model, test)?;
    Ok((model, RunOutcome { init, learn, ppmc }))
}

/// Encoder estimates for every item with a trajectory, paired with the
/// truth cropped to the estimate's length.
pub fn estimates(model: &MirrorNet, items: &[Item]) -> Result<Vec<(String, ArticTrajectory, ArticTrajectory)>> {
    items
        .iter()
        .map(|it| {
            let truth = it.traj()?;
            let est = estimate_trajectory(model, it.spec()?)?;
            let k = est.frames().min(truth.frames());
            let truth = truth.select(model.latent_channels())?.crop(0, k)?;
            Ok((it.id.clone(), est.crop(0, k)?, truth))
        })
        .collect()
}

pub fn score(model: &MirrorNet, items: &[Item]) -> Result<PpmcReport> {
    let rows = estimates(model, items)?;
    let ids: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    let (est, truth): (Vec<_>, Vec<_>) = rows.into_iter().map(|r| (r.1, r.2)).unzip();
    ppmc_report(&ids, &est, &truth)
}
