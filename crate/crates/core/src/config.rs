//! Run configuration. Every section rejects unknown keys so a typo in a
//! hyperparameter name fails loudly instead of silently using a default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_channels: usize,
    /// Filters of C1, C2, C3 (mirrored by C12, C11, C10).
    pub pre_post_filters: Vec<usize>,
    /// Filters of C4, C5 and C6; the last entry must equal `latent_channels`.
    pub enc_filters: Vec<usize>,
    pub dilations: Vec<usize>,
    pub kernel: usize,
    /// Encoder upsampling factor and pooling window (the decoder swaps them).
    pub up_down: [usize; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_channels: 9,
            pre_post_filters: vec![128, 256, 256],
            enc_filters: vec![256, 128, 9],
            dilations: vec![1, 4, 16],
            kernel: 3,
            up_down: [4, 5],
        }
    }
}

impl ModelConfig {
    /// Same layout with every hidden width divided by `factor`; used for
    /// fast tests. C1/C12 stay at the spectrogram width and C6 at the
    /// latent width.
    pub fn scaled(&self, factor: usize) -> Self {
        let div = |v: &usize| (v / factor).max(1);
        let mut enc: Vec<usize> = self.enc_filters.iter().map(div).collect();
        enc[2] = self.latent_channels;
        let mut pre: Vec<usize> = self.pre_post_filters.iter().map(div).collect();
        pre[0] = self.pre_post_filters[0];
        Self {
            pre_post_filters: pre,
            enc_filters: enc,
            ..self.clone()
        }
    }

    pub fn with_latent_channels(&self, n: usize) -> Self {
        let mut c = self.clone();
        c.latent_channels = n;
        if let Some(last) = c.enc_filters.last_mut() {
            *last = n;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_channels == 0 {
            return bad("model.latent_channels must be positive".into());
        }
        if self.pre_post_filters.len() != 3 || self.pre_post_filters.contains(&0) {
            return bad("model.pre_post_filters needs three positive entries".into());
        }
        if self.enc_filters.len() != 3 || self.enc_filters.contains(&0) {
            return bad("model.enc_filters needs three positive entries".into());
        }
        if self.pre_post_filters[0] != crate::audfront::CHANNELS {
            return bad(format!(
                "model.pre_post_filters[0] must be {} (C1 and C12 span the spectrogram channels)",
                crate::audfront::CHANNELS
            ));
        }
        if self.enc_filters[2] != self.latent_channels {
            return bad(format!(
                "model.enc_filters[2] = {} must equal latent_channels = {}",
                self.enc_filters[2], self.latent_channels
            ));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return bad("model.dilations must be non-empty and positive".into());
        }
        if self.kernel != 1 && self.kernel != 3 {
            return bad("model.kernel must be 1 or 3".into());
        }
        if self.up_down.contains(&0) {
            return bad("model.up_down must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudSpecConfig {
    pub channels: usize,
    pub frame_rate: f64,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for AudSpecConfig {
    fn default() -> Self {
        Self {
            channels: 128,
            frame_rate: 125.0,
            fmin: 180.0,
            fmax: 7000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSynthConfig {
    pub lr: f64,
    /// Batch size of the fully trained variant.
    pub batch_ft: usize,
    /// Batch size of the lightly trained variant.
    pub batch_lt: usize,
    pub decay: f64,
    pub patience: usize,
    pub epochs: usize,
}

impl Default for TrainSynthConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_ft: 16,
            batch_lt: 64,
            decay: 0.5,
            patience: 5,
            epochs: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 200,
            batch: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnConfig {
    pub lr_enc: f64,
    pub lr_dec: f64,
    /// Epochs per decoder stage and per encoder stage.
    pub stage_epochs: [usize; 2],
    pub iterations: usize,
    pub batch: usize,
    pub decay: f64,
    pub patience: usize,
    /// Stop early once both losses change by less than this relative
    /// amount between consecutive iterations. Zero disables the check.
    pub converge_tol: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            lr_enc: 1e-6,
            lr_dec: 1e-6,
            stage_epochs: [5, 5],
            iterations: 4,
            batch: 16,
            decay: 0.5,
            patience: 5,
            converge_tol: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub audspec: AudSpecConfig,
    pub train_synth: TrainSynthConfig,
    pub init: InitConfig,
    pub learn: LearnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            audspec: AudSpecConfig::default(),
            train_synth: TrainSynthConfig::default(),
            init: InitConfig::default(),
            learn: LearnConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let a = &self.audspec;
        if a.channels != 128 {
            return Err(Error::Config("audspec.channels is fixed at 128".into()));
        }
        if !(a.fmin > 0.0 && a.fmax > a.fmin && a.frame_rate > 0.0) {
            return Err(Error::Config("audspec bounds are inconsistent".into()));
        }
        let positive = [
            ("train_synth.lr", self.train_synth.lr),
            ("init.lr", self.init.lr),
            ("learn.lr_enc", self.learn.lr_enc),
            ("learn.lr_dec", self.learn.lr_dec),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let counts = [
            ("train_synth.batch_ft", self.train_synth.batch_ft),
            ("train_synth.batch_lt", self.train_synth.batch_lt),
            ("train_synth.epochs", self.train_synth.epochs),
            ("init.batch", self.init.batch),
            ("learn.batch", self.learn.batch),
            ("learn.iterations", self.learn.iterations),
            ("learn.stage_epochs[0]", self.learn.stage_epochs[0]),
            ("learn.stage_epochs[1]", self.learn.stage_epochs[1]),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
