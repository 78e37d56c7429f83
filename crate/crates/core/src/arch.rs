//! The encoder and decoder layouts shared by the autoencoder and the
//! articulatory synthesizer.
//!
//! Encoder: C1, C2, C3 (1×1) → dilated TCN → C4 → upsample → C5 → pool → C6.
//! Decoder: C7 → upsample → C8 → pool → C9 → dilated TCN → C10, C11, C12.
//! Filter counts mirror each other (C1≡C12, C2≡C11, C3≡C10, C4≡C9,
//! C5≡C8, C6≡C7). C6, C7 and C12 are linear, every other layer is ReLU.

use rand::Rng;

use crate::audfront::CHANNELS;
use crate::config::ModelConfig;
use crate::nn::{Activation, Block, Conv1dLayer, Network, TcnStack};
use crate::tensor::Float;

pub fn build_encoder<T: Float, R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Network<T> {
    let [p1, p2, p3] = [cfg.pre_post_filters[0], cfg.pre_post_filters[1], cfg.pre_post_filters[2]];
    let [e4, e5, e6] = [cfg.enc_filters[0], cfg.enc_filters[1], cfg.enc_filters[2]];
    let [up, down] = cfg.up_down;
    let c = |name: &str, i, o, act, rng: &mut R| Block::Conv(Conv1dLayer::new(format!("encoder.{name}"), i, o, 1, 1, act, rng));
    Network::new(vec![
        c("c1", CHANNELS, p1, Activation::Relu, rng),
        c("c2", p1, p2, Activation::Relu, rng),
        c("c3", p2, p3, Activation::Relu, rng),
        Block::Tcn(TcnStack::new("encoder.tcn", p3, cfg.kernel, &cfg.dilations, rng)),
        c("c4", p3, e4, Activation::Relu, rng),
        Block::Upsample(up),
        c("c5", e4, e5, Activation::Relu, rng),
        Block::AvgPool(down),
        c("c6", e5, e6, Activation::Linear, rng),
    ])
}

/// Decoder mapping `in_channels` trajectories to spectrograms. The
/// synthesizer uses the same layout with 9 or 6 input channels.
pub fn build_decoder<T: Float, R: Rng>(cfg: &ModelConfig, in_channels: usize, rng: &mut R) -> Network<T> {
    let [p1, p2, p3] = [cfg.pre_post_filters[0], cfg.pre_post_filters[1], cfg.pre_post_filters[2]];
    let [e4, e5, _] = [cfg.enc_filters[0], cfg.enc_filters[1], cfg.enc_filters[2]];
    let [up, down] = cfg.up_down;
    let c = |name: &str, i, o, act, rng: &mut R| Block::Conv(Conv1dLayer::new(format!("decoder.{name}"), i, o, 1, 1, act, rng));
    Network::new(vec![
        c("c7", in_channels, in_channels, Activation::Linear, rng),
        Block::Upsample(down),
        c("c8", in_channels, e5, Activation::Relu, rng),
        Block::AvgPool(up),
        c("c9", e5, e4, Activation::Relu, rng),
        Block::Tcn(TcnStack::new("decoder.tcn", e4, cfg.kernel, &cfg.dilations, rng)),
        c("c10", e4, p3, Activation::Relu, rng),
        c("c11", p3, p2, Activation::Relu, rng),
        c("c12", p2, p1, Activation::Linear, rng),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::infer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn paper_shapes() {
        let cfg = ModelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = build_encoder::<f32, _>(&cfg, &mut rng);
        let dec = build_decoder::<f32, _>(&cfg, 9, &mut rng);
        assert_eq!(enc.output_len(250).unwrap(), 200);
        assert_eq!(dec.output_len(200).unwrap(), 250);
        assert_eq!(enc.output_len(125).unwrap(), 100);
        assert!(enc.output_len(251).is_err());
        let (shape, _) = infer(&enc, 128, 250, vec![0.1; 128 * 250]).unwrap();
        assert_eq!(shape, vec![9, 200]);
        let (shape, _) = infer(&dec, 9, 200, vec![0.1; 9 * 200]).unwrap();
        assert_eq!(shape, vec![128, 250]);
    }

    #[test]
    fn mirrored_filter_counts() {
        let cfg = ModelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = build_encoder::<f32, _>(&cfg, &mut rng);
        let dec = build_decoder::<f32, _>(&cfg, 9, &mut rng);
        let outs = |n: &Network<f32>| n.layers().map(|l| (l.name.clone(), l.out_channels())).collect::<Vec<_>>();
        let e = outs(&enc);
        let d = outs(&dec);
        let get = |v: &[(String, usize)], name: &str| v.iter().find(|(n, _)| n.ends_with(name)).unwrap().1;
        for (a, b) in [("c1", "c12"), ("c2", "c11"), ("c3", "c10"), ("c4", "c9"), ("c5", "c8"), ("c6", "c7")] {
            assert_eq!(get(&e, a), get(&d, b), "{a} vs {b}");
        }
        assert_eq!(get(&e, "c1"), 128);
        assert_eq!(get(&e, "c2"), 256);
        assert_eq!(get(&e, "c3"), 256);
        assert_eq!(get(&e, "c6"), 9);
    }
}
