use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::manifest::{Item, Split};
use super::oracle::{Oracle, OracleParams};
use super::trajectory::{channel_range, ArticTrajectory, TRAJ_RATE};
use crate::audfront::VOICING_THRESHOLD;
use crate::error::{Error, Result};

/// Largest per-frame step as a fraction of a channel's range.
pub const MAX_STEP_FRACTION: f64 = 0.2;
const TV_CUTOFF_HZ: f64 = 8.0;
const PITCH_CUTOFF_HZ: f64 = 3.0;
const VOICING_CUTOFF_HZ: f64 = 1.5;
const VOICING_SMOOTH_FRAMES: f64 = 4.0;
const TAPS: usize = 41;
const PITCH_MIN: f64 = 80.0;
const PITCH_MAX: f64 = 300.0;
/// Largest pitch step (Hz per frame) inside a voiced span.
const PITCH_SLEW: f64 = 60.0;

/// Hamming-windowed sinc lowpass at `cutoff` Hz for 100 Hz frames,
/// normalised to unit DC gain.
fn lowpass_taps(cutoff: f64) -> Vec<f64> {
    let fc = cutoff / TRAJ_RATE;
    let m = (TAPS - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..TAPS)
        .map(|n| {
            let x = n as f64 - m;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
            };
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (TAPS - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

/// Zero-mean lowpass gaussian noise with unit variance.
fn smooth_noise(rng: &mut ChaCha8Rng, k: usize, cutoff: f64) -> Vec<f64> {
    let h = lowpass_taps(cutoff);
    let white: Vec<f64> = (0..k + TAPS - 1).map(|_| StandardNormal.sample(rng)).collect();
    let gain = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    (0..k)
        .map(|t| h.iter().enumerate().map(|(i, w)| w * white[t + i]).sum::<f64>() / gain)
        .collect()
}

fn slew_limit(x: &mut [f64], max_step: f64) {
    for t in 1..x.len() {
        let d = (x[t] - x[t - 1]).clamp(-max_step, max_step);
        x[t] = x[t - 1] + d;
    }
}

fn gaussian_smooth(x: &[f64], sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r).map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp()).collect();
    (0..x.len() as isize)
        .map(|t| {
            let (mut s, mut ws) = (0.0, 0.0);
            for (j, &wt) in w.iter().enumerate() {
                let i = t + j as isize - r;
                if i >= 0 && (i as usize) < x.len() {
                    s += wt * x[i as usize];
                    ws += wt;
                }
            }
            s / ws
        })
        .collect()
}

/// One random 9-channel trajectory of `k` frames.
pub fn random_trajectory(rng: &mut ChaCha8Rng, k: usize) -> ArticTrajectory {
    let step = |c: usize| {
        let (lo, hi) = channel_range(c);
        MAX_STEP_FRACTION * (hi - lo)
    };
    let mut chans: Vec<Vec<f64>> = Vec::with_capacity(9);
    for c in 0..6 {
        let mut x: Vec<f64> = smooth_noise(rng, k, TV_CUTOFF_HZ).iter().map(|v| 0.45 * v).collect();
        slew_limit(&mut x, step(c));
        chans.push(x.iter().map(|v| v.clamp(-1.0, 1.0)).collect());
    }

    let voicing: Vec<f64> = smooth_noise(rng, k, VOICING_CUTOFF_HZ)
        .iter()
        .map(|&v| if v > -0.4 { 1.0 } else { 0.0 })
        .collect();
    let mut per: Vec<f64> = gaussian_smooth(&voicing, VOICING_SMOOTH_FRAMES).iter().map(|v| 0.95 * v).collect();
    slew_limit(&mut per, step(7));
    let voiced: Vec<bool> = per.iter().map(|&p| p >= VOICING_THRESHOLD).collect();

    let mut ap: Vec<f64> = smooth_noise(rng, k, TV_CUTOFF_HZ)
        .iter()
        .map(|v| (0.75 + 0.25 * v).clamp(0.5, 1.0))
        .collect();
    slew_limit(&mut ap, 0.1);
    let ap: Vec<f64> = ap.iter().zip(&per).map(|(a, p)| (a * (1.0 - p)).clamp(0.0, 1.0 - p)).collect();

    let mut raw: Vec<f64> = smooth_noise(rng, k, PITCH_CUTOFF_HZ)
        .iter()
        .map(|v| (190.0 + 45.0 * v).clamp(PITCH_MIN, PITCH_MAX))
        .collect();
    slew_limit(&mut raw, PITCH_SLEW);
    // distance (in frames) to the nearest unvoiced frame caps the pitch
    // so voicing onsets and offsets start near PITCH_MIN
    let mut dist = vec![usize::MAX / 2; k];
    let mut last: Option<usize> = None;
    for t in 0..k {
        if !voiced[t] {
            last = Some(t);
        }
        if let Some(u) = last {
            dist[t] = t - u;
        }
    }
    last = None;
    for t in (0..k).rev() {
        if !voiced[t] {
            last = Some(t);
        }
        if let Some(u) = last {
            dist[t] = dist[t].min(u - t);
        }
    }
    let pitch: Vec<f64> = (0..k)
        .map(|t| {
            if voiced[t] {
                let cap = PITCH_MIN + PITCH_SLEW * dist[t].saturating_sub(1).min(10) as f64;
                raw[t].min(cap)
            } else {
                0.0
            }
        })
        .collect();

    chans.push(ap);
    chans.push(per);
    chans.push(pitch);
    let values = chans.iter().flat_map(|c| c.iter().map(|&v| v as f32)).collect();
    ArticTrajectory::new(9, k, values).expect("shape")
}

/// Trajectory frames for a duration, rounded to a multiple of 4.
pub fn frames_for_duration(duration_s: f64) -> usize {
    ((duration_s * TRAJ_RATE / 4.0).round() as usize) * 4
}

/// `n_items` smooth random trajectories rendered through the oracle.
/// Every item gets its own speaker id and the `train` split.
pub fn gen_synthetic(n_items: usize, duration_s: f64, seed: u64) -> Result<Vec<Item>> {
    gen_synthetic_with(n_items, duration_s, seed, &OracleParams::default())
}

pub fn gen_synthetic_with(n_items: usize, duration_s: f64, seed: u64, params: &OracleParams) -> Result<Vec<Item>> {
    if n_items == 0 {
        return Err(Error::Invalid("gen_synthetic needs at least one item".into()));
    }
    let k = frames_for_duration(duration_s);
    if !(duration_s.is_finite()) || k == 0 {
        return Err(Error::Invalid(format!("duration {duration_s} s is shorter than 4 trajectory frames")));
    }
    let oracle = Oracle::new(params.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_items)
        .map(|i| {
            let traj = random_trajectory(&mut rng, k);
            let spec = oracle.synth(&traj)?;
            Ok(Item {
                id: format!("syn{i:04}"),
                speaker: format!("spk{i:04}"),
                split: Split::Train,
                spectrogram: Some(spec),
                trajectory: Some(traj),
                wav: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let items = gen_synthetic(8, 2.0, 1).unwrap();
        assert_eq!(items.len(), 8);
        for it in &items {
            let t = it.trajectory.as_ref().unwrap();
            assert_eq!((t.channels(), t.frames()), (9, 200));
            assert_eq!(it.spectrogram.as_ref().unwrap().frames(), 250);
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_synthetic(3, 1.0, 42).unwrap();
        let b = gen_synthetic(3, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(3, 1.0, 43).unwrap());
    }

    #[test]
    fn bounded_steps_and_ranges() {
        for seed in 0..100 {
            let items = gen_synthetic(1, 2.0, seed).unwrap();
            let t = items[0].trajectory.as_ref().unwrap();
            for c in 0..9 {
                let (lo, hi) = channel_range(c);
                let ch = t.channel(c);
                for w in ch.windows(2) {
                    let d = (w[1] - w[0]).abs() as f64;
                    assert!(d <= MAX_STEP_FRACTION * (hi - lo) + 1e-5, "seed {seed} ch {c}: step {d}");
                }
                assert!(ch.iter().all(|&v| v as f64 >= lo && v as f64 <= hi));
            }
        }
    }

    #[test]
    fn voicing_invariants() {
        let mut voiced = 0;
        let mut total = 0;
        for seed in 0..20 {
            let items = gen_synthetic(1, 2.0, seed).unwrap();
            let t = items[0].trajectory.as_ref().unwrap();
            for i in 0..t.frames() {
                let (ap, per, p) = (t.get(6, i) as f64, t.get(7, i) as f64, t.get(8, i) as f64);
                assert!(ap + per <= 1.0 + 1e-6);
                if per >= VOICING_THRESHOLD {
                    assert!((PITCH_MIN..=PITCH_MAX).contains(&p), "{p}");
                    voiced += 1;
                } else {
                    assert_eq!(p, 0.0);
                }
                total += 1;
            }
        }
        let frac = voiced as f64 / total as f64;
        assert!(frac > 0.3 && frac < 0.95, "voiced fraction {frac}");
    }

    #[test]
    fn rejects_empty() {
        assert!(gen_synthetic(0, 2.0, 0).is_err());
        assert!(gen_synthetic(1, 0.01, 0).is_err());
    }
}
