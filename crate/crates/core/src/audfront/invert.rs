use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

use super::spectrogram::{bin_weights, channel_energies, Stft, N_BINS};
use super::{decompress, AuditorySpectrogram, CHANNELS, HOP};

const NNLS_ITERS: usize = 200;

/// Result of [`invert_spectrogram`].
#[derive(Clone, Debug)]
pub struct Inversion {
    pub wav: Vec<f32>,
    /// `‖|STFT x_n| − M‖ / ‖M‖` after each iteration, where `M` is the
    /// target STFT magnitude derived from the spectrogram. Non-increasing.
    pub consistency: Vec<f64>,
    /// Relative error between the channel energies of the re-analyzed
    /// `x_n` and those of the input (before compression).
    pub reanalysis: Vec<f64>,
}

/// Spreads channel energies back onto STFT bins by multiplicative
/// nonnegative least squares on `H·M ≈ E`.
fn estimate_magnitudes(weights: &[Vec<(usize, f64)>], energies: &[f64]) -> Vec<f64> {
    let mut col_sum = vec![0.0; N_BINS];
    for w in weights {
        for &(k, wt) in w {
            col_sum[k] += wt;
        }
    }
    // Hᵀ E normalized by column sums is the smooth starting point
    let mut m = vec![0.0; N_BINS];
    for (w, &e) in weights.iter().zip(energies) {
        for &(k, wt) in w {
            m[k] += wt * e;
        }
    }
    for (v, &s) in m.iter_mut().zip(&col_sum) {
        if s > 0.0 {
            *v /= s;
        }
    }
    let mut hte = vec![0.0; N_BINS];
    for (w, &e) in weights.iter().zip(energies) {
        for &(k, wt) in w {
            hte[k] += wt * e;
        }
    }
    for _ in 0..NNLS_ITERS {
        let hm = channel_energies(weights, &m);
        let mut hthm = vec![0.0; N_BINS];
        for (w, &e) in weights.iter().zip(&hm) {
            for &(k, wt) in w {
                hthm[k] += wt * e;
            }
        }
        for k in 0..N_BINS {
            if hthm[k] > 1e-300 {
                m[k] *= hte[k] / hthm[k];
            }
        }
    }
    m
}

/// Two-sided spectral energy weight of each positive-frequency bin.
fn bin_mult(k: usize) -> f64 {
    if k == 0 || k == N_BINS - 1 {
        1.0
    } else {
        2.0
    }
}

/// Recovers a 16 kHz waveform whose auditory spectrogram approximates
/// `spec`. Magnitudes come from a nonnegative least-squares fit to the
/// channel energies; phase is found by Griffin-Lim iterations starting
/// from a seeded random phase.
pub fn invert_spectrogram(spec: &AuditorySpectrogram, iters: usize, seed: u64) -> Inversion {
    let iters = iters.max(1);
    let frames = spec.frames();
    let n = frames * HOP;
    let weights = bin_weights();
    let target: Vec<Vec<f64>> = (0..frames)
        .map(|t| {
            let e: Vec<f64> = (0..CHANNELS).map(|c| decompress(spec.get(c, t) as f64)).collect();
            estimate_magnitudes(&weights, &e)
        })
        .collect();
    let m_norm = target
        .iter()
        .flat_map(|f| f.iter().enumerate().map(|(k, v)| bin_mult(k) * v * v))
        .sum::<f64>()
        .sqrt();
    let spec_norm = spec.values().iter().map(|&v| decompress(v as f64).powi(2)).sum::<f64>().sqrt();

    let stft = Stft::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs: Vec<Vec<Complex<f64>>> = target
        .iter()
        .map(|mags| {
            mags.iter()
                .enumerate()
                .map(|(k, &m)| {
                    let ph = rng.gen_range(0.0..std::f64::consts::TAU);
                    if k == 0 || k == N_BINS - 1 {
                        Complex::new(if ph < std::f64::consts::PI { m } else { -m }, 0.0)
                    } else {
                        Complex::from_polar(m, ph)
                    }
                })
                .collect()
        })
        .collect();

    let mut x = stft.synthesize(&coeffs, n);
    let mut consistency = Vec::with_capacity(iters);
    let mut reanalysis = Vec::with_capacity(iters);
    for _ in 0..iters {
        let analyzed = stft.analyze(&x, frames);
        let mut err = 0.0;
        let mut aud_err = 0.0;
        for (t, (frame, mags)) in analyzed.iter().zip(&target).enumerate() {
            let abs: Vec<f64> = frame.iter().map(|c| c.norm()).collect();
            for k in 0..N_BINS {
                err += bin_mult(k) * (abs[k] - mags[k]).powi(2);
            }
            for (c, e) in channel_energies(&weights, &abs).into_iter().enumerate() {
                aud_err += (e - decompress(spec.get(c, t) as f64)).powi(2);
            }
            for k in 0..N_BINS {
                coeffs[t][k] = if abs[k] > 0.0 {
                    frame[k] * (mags[k] / abs[k])
                } else {
                    Complex::new(mags[k], 0.0)
                };
            }
        }
        consistency.push(if m_norm > 0.0 { err.sqrt() / m_norm } else { 0.0 });
        reanalysis.push(if spec_norm > 0.0 { aud_err.sqrt() / spec_norm } else { 0.0 });
        x = stft.synthesize(&coeffs, n);
    }
    Inversion {
        wav: x.iter().map(|&v| v as f32).collect(),
        consistency,
        reanalysis,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audfront::auditory_spectrogram;

    fn tone(f: f64, secs: f64) -> Vec<f32> {
        let n = (secs * 16000.0) as usize;
        (0..n)
            .map(|i| (0.3 * (std::f64::consts::TAU * f * i as f64 / 16000.0).sin()) as f32)
            .collect()
    }

    #[test]
    fn silence_inverts_to_silence() {
        let spec = AuditorySpectrogram::zeros(50);
        let inv = invert_spectrogram(&spec, 5, 0);
        let rms = (inv.wav.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / inv.wav.len() as f64).sqrt();
        assert!(rms < 1e-4);
    }

    #[test]
    fn tone_consistency_decreases() {
        let spec = auditory_spectrogram(&tone(1000.0, 0.5), 16000).unwrap();
        let inv = invert_spectrogram(&spec, 100, 3);
        for w in inv.consistency.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
        }
        assert!(inv.consistency[99] < 0.1 * inv.consistency[0]);
        assert!(inv.reanalysis[99] < 0.1 * inv.reanalysis[0]);
    }

    #[test]
    fn deterministic() {
        let spec = auditory_spectrogram(&tone(440.0, 0.2), 16000).unwrap();
        let a = invert_spectrogram(&spec, 4, 9);
        let b = invert_spectrogram(&spec, 4, 9);
        assert_eq!(a.wav, b.wav);
    }
}
