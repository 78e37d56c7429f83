use super::SAMPLE_RATE;
use crate::error::{Error, Result};

/// Pitch is divided by this before entering a model.
pub const PITCH_SCALE_HZ: f64 = 400.0;
/// Frames with periodicity below this are unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.45;

const FRAME_HOP: usize = 160;
const WINDOW: usize = 400;
/// Lags covering 400 Hz down to 60 Hz.
const MIN_LAG: usize = 40;
const MAX_LAG: usize = 267;
const SILENCE_RMS: f64 = 1e-5;

/// Per-frame glottal source descriptors at 100 frames per second.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceFeatures {
    pub aperiodicity: Vec<f64>,
    pub periodicity: Vec<f64>,
    pub pitch_hz: Vec<f64>,
}

impl SourceFeatures {
    pub fn len(&self) -> usize {
        self.pitch_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitch_hz.is_empty()
    }
}

fn ncc(x: &[f64], start: isize, lag: usize) -> f64 {
    let at = |i: isize| if i >= 0 && (i as usize) < x.len() { x[i as usize] } else { 0.0 };
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for n in 0..WINDOW as isize {
        let a = at(start + n);
        let b = at(start + n + lag as isize);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let d = (xx * yy).sqrt();
    if d > 0.0 {
        xy / d
    } else {
        0.0
    }
}

/// Normalized autocorrelation pitch tracker. Each 10 ms frame takes the
/// first strong peak of the correlation in the 60–400 Hz lag band.
pub fn estimate_source_features(wav: &[f32], fs: u32) -> Result<SourceFeatures> {
    if fs != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(fs));
    }
    let x: Vec<f64> = wav.iter().map(|&v| v as f64).collect();
    let frames = (x.len() as f64 / FRAME_HOP as f64).round() as usize;
    let mut out = SourceFeatures {
        aperiodicity: Vec::with_capacity(frames),
        periodicity: Vec::with_capacity(frames),
        pitch_hz: Vec::with_capacity(frames),
    };
    for t in 0..frames {
        let centre = (t * FRAME_HOP + FRAME_HOP / 2) as isize;
        let start = centre - ((WINDOW + MAX_LAG) / 2) as isize;
        let energy: f64 = (0..WINDOW as isize)
            .map(|n| start + n)
            .filter(|&i| i >= 0 && (i as usize) < x.len())
            .map(|i| x[i as usize].powi(2))
            .sum();
        let (per, pitch) = if (energy / WINDOW as f64).sqrt() < SILENCE_RMS {
            (0.0, 0.0)
        } else {
            let r: Vec<f64> = (MIN_LAG - 1..=MAX_LAG + 1).map(|lag| ncc(&x, start, lag)).collect();
            // r[i] is the correlation at lag MIN_LAG - 1 + i
            let peaks: Vec<usize> = (1..r.len() - 1).filter(|&i| r[i] >= r[i - 1] && r[i] > r[i + 1]).collect();
            let best = peaks.iter().map(|&i| r[i]).fold(f64::NEG_INFINITY, f64::max);
            match peaks.into_iter().find(|&i| r[i] >= 0.85 * best && r[i] > 0.0) {
                None => (0.0, 0.0),
                Some(i) => {
                    let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
                    let den = a - 2.0 * b + c;
                    let shift = if den.abs() > 1e-12 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
                    let lag = (MIN_LAG - 1 + i) as f64 + shift;
                    (b.clamp(0.0, 1.0), fs as f64 / lag)
                }
            }
        };
        let voiced = per >= VOICING_THRESHOLD;
        out.periodicity.push(per);
        out.aperiodicity.push((1.0 - per).clamp(0.0, 1.0));
        out.pitch_hz.push(if voiced { pitch } else { 0.0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn sine(f: f64, secs: f64) -> Vec<f32> {
        (0..(secs * 16000.0) as usize)
            .map(|i| (0.5 * (std::f64::consts::TAU * f * i as f64 / 16000.0).sin()) as f32)
            .collect()
    }

    #[test]
    fn sine_pitch() {
        let sf = estimate_source_features(&sine(200.0, 1.0), 16000).unwrap();
        assert_eq!(sf.len(), 100);
        // skip edge frames whose window runs off the signal
        for t in 3..97 {
            assert!((sf.pitch_hz[t] - 200.0).abs() <= 5.0, "frame {t}: {}", sf.pitch_hz[t]);
            assert!(sf.periodicity[t] > 0.9);
        }
    }

    #[test]
    fn noise_is_aperiodic() {
        for seed in 0..5 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, 0.3).unwrap();
            let x: Vec<f32> = (0..16000).map(|_| n.sample(&mut rng) as f32).collect();
            let sf = estimate_source_features(&x, 16000).unwrap();
            let low = sf.periodicity.iter().filter(|&&p| p < 0.5).count();
            assert!(low as f64 >= 0.9 * sf.len() as f64, "seed {seed}: {low}/{}", sf.len());
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let sf = estimate_source_features(&vec![0.0; 8000], 16000).unwrap();
        assert!(sf.pitch_hz.iter().all(|&p| p == 0.0));
        assert!(sf.periodicity.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn invariants_hold() {
        let mut x = sine(150.0, 0.5);
        x.extend(vec![0.0; 4000]);
        let sf = estimate_source_features(&x, 16000).unwrap();
        for t in 0..sf.len() {
            assert!(sf.periodicity[t] + sf.aperiodicity[t] <= 1.0 + 1e-6);
            if sf.periodicity[t] < VOICING_THRESHOLD {
                assert_eq!(sf.pitch_hz[t], 0.0);
            }
        }
        assert!(estimate_source_features(&x, 44100).is_err());
    }
}
