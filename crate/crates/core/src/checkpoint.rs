//! Portable parameter files.
//!
//! Layout: `MNC1`, u32 LE header length, JSON header, f32 LE payload in
//! header manifest order, u32 LE CRC32 over header and payload.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::nn::Network;

pub const MAGIC: &[u8; 4] = b"MNC1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    /// `synth` or `mirrornet`.
    pub model_kind: String,
    pub layers: Vec<TensorEntry>,
    /// Normalisation statistics of the trajectory/latent channels.
    pub stats: Option<ChannelStats>,
    pub model: ModelConfig,
    /// Trajectory channels consumed (synth) or produced (mirrornet).
    pub channels: usize,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default)]
    pub metrics: serde_json::Value,
    /// Model-specific fields (synth variant, plant description, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    /// Header plus the parameters of `nets` in order.
    pub fn from_networks(mut header: CheckpointHeader, nets: &[&Network<f32>]) -> Self {
        let tensors: Vec<(String, Vec<usize>, Vec<f32>)> = nets
            .iter()
            .flat_map(|n| n.named_params())
            .map(|(name, t)| (name, t.shape().to_vec(), t.data().to_vec()))
            .collect();
        header.layers = tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                dtype: "f32".into(),
            })
            .collect();
        Self { header, tensors }
    }

    /// Tensors whose names start with `prefix`.
    pub fn tensors_with_prefix(&self, prefix: &str) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        self.tensors.iter().filter(|t| t.0.starts_with(prefix)).cloned().collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let payload_len: usize = self.tensors.iter().map(|t| t.2.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + header.len() + payload_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, data) in &self.tensors {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[8..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("missing MNC1 magic"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 12 + hlen {
            return Err(bad("truncated header"));
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[8..body_end]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[8..8 + hlen]).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", header.format_version)));
        }
        let payload = &bytes[8 + hlen..body_end];
        let expect: usize = header.layers.iter().map(|l| l.shape.iter().product::<usize>() * 4).sum();
        if payload.len() != expect {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, manifest needs {expect}",
                payload.len()
            )));
        }
        let mut off = 0;
        let tensors = header
            .layers
            .iter()
            .map(|l| {
                if l.dtype != "f32" {
                    return Err(Error::Checkpoint(format!("tensor {} has dtype {}", l.name, l.dtype)));
                }
                let n: usize = l.shape.iter().product();
                let data = payload[off..off + 4 * n]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                off += 4 * n;
                Ok((l.name.clone(), l.shape.clone(), data))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 over tensor names, shapes and values.
    pub fn param_hash(&self) -> String {
        hash_tensors(self.tensors.iter().map(|(n, s, d)| (n.as_str(), s.as_slice(), d.as_slice())))
    }
}

pub(crate) fn hash_tensors<'a>(tensors: impl Iterator<Item = (&'a str, &'a [usize], &'a [f32])>) -> String {
    let mut h = Sha256::new();
    for (name, shape, data) in tensors {
        h.update(name.as_bytes());
        for s in shape {
            h.update((*s as u64).to_le_bytes());
        }
        for v in data {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Hex SHA-256 of a network's parameters.
pub fn network_hash(nets: &[&Network<f32>]) -> String {
    let params: Vec<(String, &crate::tensor::Tensor<f32>)> = nets.iter().flat_map(|n| n.named_params()).collect();
    hash_tensors(params.iter().map(|(n, t)| (n.as_str(), t.shape(), t.data())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build_decoder;
    use rand::SeedableRng;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::default().scaled(8);
        let net = build_decoder::<f32, _>(&cfg, 9, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let header = CheckpointHeader {
            format_version: FORMAT_VERSION,
            model_kind: "synth".into(),
            layers: vec![],
            stats: Some(ChannelStats::identity(9)),
            model: cfg,
            channels: 9,
            config_hash: "abc".into(),
            seed: 1,
            metrics: serde_json::json!({"dev_mse": 0.5}),
            extra: serde_json::Value::Null,
        };
        Checkpoint::from_networks(header, &[&net])
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.param_hash(), c.param_hash());
    }

    #[test]
    fn corruption_is_a_checksum_error() {
        let mut bytes = sample().to_bytes().unwrap();
        let i = bytes.len() - 100;
        bytes[i] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checksum { .. })));
        let mut bytes = sample().to_bytes().unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checksum { .. })));
        assert!(matches!(Checkpoint::from_bytes(b"XXXX00000000"), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn payload_length_matches_manifest() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n: usize = c.header.layers.iter().map(|l| l.shape.iter().product::<usize>()).sum();
        assert_eq!(bytes.len(), 8 + hlen + 4 * n + 4);
    }
}
